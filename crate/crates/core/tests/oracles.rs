//! Property tests of the identities every evaluation must satisfy, on
//! random piecewise-constant potentials.

use halfcrystal::adiabatic::{dos_integral, pruefer_angle};
use halfcrystal::band::{sin_k, BandStructure, SpectralPoint};
use halfcrystal::config::RunConfig;
use halfcrystal::contour::Rect;
use halfcrystal::hill::{fundamental_at, monodromy};
use halfcrystal::perturbed::Impurity;
use halfcrystal::potential::{fourier_p, fourier_q, l1_norm, PiecewisePotential};
use halfcrystal::states::{complex_resonances, StateOptions};
use halfcrystal::C64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn periodic() -> impl Strategy<Value = PiecewisePotential> {
    prop::collection::vec(-15.0..15.0f64, 1..10).prop_map(|v| PiecewisePotential::periodic(v).unwrap())
}

/// Amplitudes for which every gap edge lies inside its fixed momentum window.
fn moderate() -> impl Strategy<Value = PiecewisePotential> {
    prop::collection::vec(-4.0..4.0f64, 1..10).prop_map(|v| PiecewisePotential::periodic(v).unwrap())
}

fn compact() -> impl Strategy<Value = PiecewisePotential> {
    (prop::collection::vec(-10.0..10.0f64, 1..8), 0.2..2.5f64)
        .prop_map(|(v, t)| PiecewisePotential::compact(v, t).unwrap())
}

fn point() -> impl Strategy<Value = C64> {
    (-25.0..25.0f64, -4.0..4.0f64).prop_map(|(a, b)| C64::new(a, b))
}

fn circle_mean(f: impl Fn(C64) -> C64, z0: C64, r: f64, m: usize) -> C64 {
    (0..m).map(|j| f(z0 + C64::from_polar(r, 2.0 * PI * j as f64 / m as f64))).sum::<C64>() / m as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fourier_coefficients_match_cellwise_integrals(p in periodic(), n in 1u64..30) {
        let d = fourier_p(&p, n).unwrap();
        let k = 2.0 * PI * n as f64;
        let h = p.mesh();
        let (mut c, mut s) = (0.0, 0.0);
        for (i, &v) in p.values().iter().enumerate() {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            c += v * ((k * b).sin() - (k * a).sin()) / k;
            s += v * ((k * a).cos() - (k * b).cos()) / k;
        }
        let scale = p.values().iter().map(|v| v.abs()).sum::<f64>() * h;
        prop_assert!((d.p_cn - c).abs() <= 1e-12 * scale.max(1.0));
        prop_assert!((d.p_sn - s).abs() <= 1e-12 * scale.max(1.0));
        prop_assert!((d.p_n - C64::new(d.p_cn, -d.p_sn)).norm() == 0.0);
    }

    #[test]
    fn q_hat_is_linear_and_entire(q in compact(), z in point(), c in -3.0..3.0f64) {
        let base = fourier_q(&q, z);
        prop_assert!((fourier_q(&q.scaled(c), z) - base * c).norm() <= 1e-13 * base.norm().max(1.0));
        let mean = circle_mean(|w| fourier_q(&q, w), z, 0.3, 96);
        prop_assert!((mean - base).norm() <= 1e-10 * base.norm().max(1e-3));
    }

    #[test]
    fn monodromy_identities(p in periodic(), z in point()) {
        let m = monodromy(&p, z).unwrap();
        let scale = (m.theta1.v * m.phi1p.v).norm() + (m.theta1p.v * m.phi1.v).norm();
        prop_assert!((m.wronskian() - 1.0).norm() <= 1e-10 * scale.max(1.0));
        let d2 = m.delta.v.norm_sqr() + m.beta.v.norm_sqr() + 1.0;
        prop_assert!(m.discriminant_residual().norm() <= 1e-10 * d2.max(scale));
    }

    #[test]
    fn fundamental_solution_obeys_growth_bound(p in periodic(), z in point(), x in 0.0..1.0f64) {
        let f = fundamental_at(&p, z, x).unwrap();
        let bound = (z.im.abs() * x + l1_norm(&[&p], 0.0, x)).exp();
        prop_assert!(f.phi.v.norm() * z.norm().max(1.0) <= bound * (1.0 + 1e-12));
        prop_assert!(f.theta.v.norm() <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn delta_is_entire_and_derivative_is_exact(p in periodic(), z in point()) {
        let m = monodromy(&p, z).unwrap();
        let d = |w: C64| monodromy(&p, w).unwrap().delta.v;
        let mean = circle_mean(d, z, 0.25, 128);
        let scale = m.delta.v.norm().max(1.0) * (0.25f64).exp();
        prop_assert!((mean - m.delta.v).norm() <= 1e-9 * scale);
        let h = 1e-5;
        let fd = (d(z + h) - d(z - h)) / (2.0 * h);
        prop_assert!((fd - m.delta.d).norm() <= 1e-6 * m.delta.d.norm().max(m.delta.v.norm()).max(1.0));
    }

    #[test]
    fn sin_k_identity_and_conjugation(p in periodic(), a in -25.0..25.0f64, b in 0.05..4.0f64) {
        let z = C64::new(a, b);
        let up = sin_k(&p, SpectralPoint::physical(z)).unwrap();
        let down = sin_k(&p, SpectralPoint::physical(z.conj())).unwrap();
        let d = monodromy(&p, z).unwrap().delta.v;
        prop_assert!((up.value * up.value + d * d - 1.0).norm() <= 1e-10 * (1.0 + d.norm_sqr()));
        prop_assert!(up.multiplier.norm() <= 1.0 + 1e-12);
        prop_assert!((down.value - up.value.conj()).norm() <= 1e-10 * up.value.norm().max(1.0));
    }

    #[test]
    fn f_factorizes_and_is_symmetric(p in periodic(), q in compact(), z in point()) {
        let imp = Impurity::new(&p, &q).unwrap();
        let pv = imp.values(z).unwrap();
        let f = pv.entire_f().v;
        let (ap, am) = pv.jost_numerators();
        let scale = pv.f_term_scale() * pv.mono.phi1.v.norm() + ap.norm() * am.norm();
        prop_assert!((ap * am - pv.mono.phi1.v * f).norm() <= 1e-9 * scale.max(1e-300));
        let fs = pv.f_term_scale();
        let conj = imp.values(z.conj()).unwrap();
        prop_assert!((conj.entire_f().v - f.conj()).norm() <= 1e-11 * fs.max(1.0));
        prop_assert!((imp.values(-z).unwrap().entire_f().v - f).norm() <= 1e-11 * fs.max(1.0));
        // Ψ⁻(z) = conj Ψ⁺(z̄) off the real axis
        if z.im.abs() > 0.05 {
            let (cp, _) = conj.jost_numerators();
            prop_assert!((am - cp.conj()).norm() <= 1e-10 * (ap.norm() + am.norm()).max(1.0));
        }
    }

    #[test]
    fn jost_solution_solves_its_integral_equation(p in periodic(), q in compact(), a in 0.5..25.0f64, b in -2.5..2.5f64) {
        let imp = Impurity::new(&p, &q).unwrap();
        let z = C64::new(a, b);
        if imp.values(z).unwrap().mono.phi1.v.norm() < 1e-3 {
            return Ok(());
        }
        let (lhs, rhs) = imp.jost_integral_identity(z).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-9 * (1.0 + lhs.norm()), "{lhs} vs {rhs}");
    }

    #[test]
    fn f_switches_cleanly_to_factored_form(p in periodic(), q in compact(), x in 2.0..20.0f64, y in -12.0..-2.0f64) {
        let imp = Impurity::new(&p, &q).unwrap();
        let z = C64::new(x, y);
        let (Ok((f, ef)), Ok((g, eg))) = (imp.f_with_error(z), imp.f_factored_with_error(z)) else { return Ok(()) };
        // each form within its own rounding budget
        prop_assert!((f.v - g.v).norm() <= 100.0 * (ef + eg), "{} vs {}", f.v, g.v);
    }

    #[test]
    fn pruefer_angle_is_monotone(p in periodic(), q in compact(), l in -20.0..200.0f64, dl in 0.0..30.0f64) {
        let lo = pruefer_angle(&p, &q, 2.0, l, 6.0).unwrap().theta;
        let hi = pruefer_angle(&p, &q, 2.0, l + dl, 6.0).unwrap().theta;
        prop_assert!(hi >= lo - 1e-12);
    }

    #[test]
    fn config_hash_is_deterministic(n_max in 1u64..60, a in -5.0..5.0f64) {
        let text = format!(
            "n_max = {n_max}\n[p]\nterms = [{{ kind = \"cos\", a = {a:?}, k = 1 }}]\n[q]\nsupport = 1.0\nterms = [{{ kind = \"const\", a = 1.0 }}]\n"
        );
        let h1 = RunConfig::from_toml(&text).unwrap().hash();
        let h2 = RunConfig::from_toml(&text).unwrap().hash();
        prop_assert_eq!(&h1, &h2);
        let other = text.replace(&format!("n_max = {n_max}"), &format!("n_max = {}", n_max + 1));
        prop_assert_ne!(h1, RunConfig::from_toml(&other).unwrap().hash());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ids_is_monotone_with_integer_plateaus(p in moderate()) {
        let bs = BandStructure::compute(&p, 6).unwrap();
        let top = bs.gaps.last().unwrap().e_plus.powi(2);
        let lo = bs.e0_plus - 5.0;
        let mut last = 0.0;
        for i in 0..=2000 {
            let l = (lo + (top - lo) * i as f64 / 2000.0).min(top);
            let r = bs.ids(l).unwrap();
            prop_assert!(r >= last - 1e-12, "ρ decreases at {l}");
            last = r;
        }
        for g in bs.gaps.iter().filter(|g| !g.closed) {
            let mid = 0.5 * (g.e_minus.powi(2) + g.e_plus.powi(2));
            let r = bs.ids(mid).unwrap();
            prop_assert!((r - g.n as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn jost_functions_do_not_vanish_on_bands(p in moderate(), q in compact()) {
        let bs = BandStructure::compute(&p, 6).unwrap();
        let imp = Impurity::new(&p, &q).unwrap();
        let mut lo = bs.e0_plus.max(0.0).sqrt();
        for g in &bs.gaps {
            let hi = g.e_minus;
            for i in 1..40 {
                let x = lo + (hi - lo) * i as f64 / 40.0;
                let pv = imp.values(C64::new(x, 0.0)).unwrap();
                let (ap, am) = pv.jost_numerators();
                prop_assert!(ap.norm() > 1e-10 && am.norm() > 1e-10, "A± vanishes at {x}");
            }
            lo = g.e_plus;
        }
    }

    #[test]
    fn dirichlet_eigenvalues_interlace(p in moderate()) {
        let bs = BandStructure::compute(&p, 8).unwrap();
        for g in &bs.gaps {
            let slack = 4.0 * g.edge_err + 1e-12;
            prop_assert!(g.e_minus - slack <= g.mu_n && g.mu_n <= g.e_plus + slack, "gap {}", g.n);
        }
    }

    #[test]
    fn dos_integral_grows_with_the_window(p in moderate(), q in compact(), a in 0.0..0.4f64, b in 0.6..1.0f64, grow in 0.0..0.1f64) {
        let bs = BandStructure::compute(&p, 3).unwrap();
        let Some(g) = bs.gaps.iter().find(|g| !g.closed && g.energy_width() > 1e-6) else { return Ok(()) };
        let (em, ep) = (g.e_minus.powi(2), g.e_plus.powi(2));
        let at = |s: f64| em + s * (ep - em);
        let inner = dos_integral(&bs, &q, at(a), at(b)).unwrap();
        let outer = dos_integral(&bs, &q, at((a - grow).max(0.0)), at((b + grow).min(1.0))).unwrap();
        prop_assert!(outer >= inner - 1e-12);
    }
}

#[test]
fn resonances_are_symmetric_under_reflection() {
    let p = PiecewisePotential::sample_periodic(|x| 2.0 * (2.0 * PI * x).cos() + (2.0 * PI * x).sin(), 128).unwrap();
    let q = PiecewisePotential::compact(vec![1.0, -2.0, 3.0], 1.5).unwrap();
    let imp = Impurity::new(&p, &q).unwrap();
    let opts = StateOptions::default();
    let right = complex_resonances(&imp, Rect::new(1.0, 14.0, -3.0, -0.05).unwrap(), &opts).unwrap();
    let left = complex_resonances(&imp, Rect::new(-14.0, -1.0, -3.0, -0.05).unwrap(), &opts).unwrap();
    assert!(!right.is_empty());
    assert_eq!(right.len(), left.len());
    for r in &right {
        let mirror = -r.z.conj();
        assert!(left.iter().any(|l| (l.z - mirror).norm() < 1e-8 * r.z.norm()), "{} has no mirror", r.z);
    }
}

#[test]
fn strong_potential_reports_the_bracket() {
    let p = PiecewisePotential::periodic(vec![0.0, -12.7]).unwrap();
    let err = BandStructure::compute(&p, 3).unwrap_err();
    assert!(matches!(err, halfcrystal::SpectralError::Bracket { .. }), "{err:?}");
}

#[test]
fn monodromy_converges_at_second_order_in_the_mesh() {
    let z = C64::new(4.3, 0.0);
    let delta = |cells| {
        let p =
            PiecewisePotential::sample_periodic(|x| 3.0 * (2.0 * PI * x).cos() + (4.0 * PI * x).sin(), cells).unwrap();
        monodromy(&p, z).unwrap().delta.v.re
    };
    let (a, b, c) = (delta(64), delta(128), delta(256));
    let rate = ((a - b) / (b - c)).abs().log2();
    assert!((rate - 2.0).abs() < 0.2, "rate {rate}");
}

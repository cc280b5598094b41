//! Perturbed fundamental system, the Dirichlet solution `Φ`, the Jost
//! functions `Ψ₀±` and the entire function `F = φ(1,·)Ψ₀⁺Ψ₀⁻`.

use crate::band::{sin_k_from, Sheet, SpectralPoint};
use crate::error::{Result, SpectralError};
use crate::hill::{guard, propagate, shifted_monodromy, Fundamental, MonodromyValues};
use crate::jet::{cell_transfer, Jet, Transfer, C64};
use crate::potential::{l1_norm, n_t, profile, PiecewisePotential, PotentialKind, Segment};
use crate::quad::gauss_legendre;

/// `|φ(1,z)|` below which `m±` is treated as a pole.
pub const POLE_TOL: f64 = 1e-12;

/// Relative rounding of the quadratic form of `F`, in units of machine
/// precision, beyond which the factored form is tried.
pub const CANCELLATION_LIMIT: f64 = 1e3;

/// Relative size of `φ(1)` and `sin k` below which the factored form is refused.
const FACTORED_TOL: f64 = 1e-6;

const I: C64 = C64 { re: 0.0, im: 1.0 };

fn support(q: &PiecewisePotential) -> Result<f64> {
    match q.kind() {
        PotentialKind::Compact { support } => Ok(support),
        PotentialKind::Periodic => {
            Err(SpectralError::InvalidPotential("the impurity must have compact support".into()))
        }
    }
}

/// Exact transfer matrix of `-y'' + (p + q) y = z² y` over `[a, b]`.
pub fn transfer_pq(p: &PiecewisePotential, q: &PiecewisePotential, z: C64, a: f64, b: f64) -> Result<Transfer> {
    guard(z, b - a, l1_norm(&[p, q], a, b))?;
    Ok(propagate(&profile(&[p, q], a, b), z))
}

/// Perturbed data at `z`, all with `z`-derivatives.
#[derive(Clone, Copy, Debug)]
pub struct PerturbedValues {
    pub z: C64,
    pub t: f64,
    pub n_t: u64,
    /// `θ̃(0,z)`, `θ̃'(0,z)`
    pub theta_t0: Jet,
    pub theta_t0p: Jet,
    /// `φ̃(0,z)`, `φ̃'(0,z)`
    pub phi_t0: Jet,
    pub phi_t0p: Jet,
    /// Solutions of the perturbed equation with `y₁(t)=y₂'(t)=1`, `y₁'(t)=y₂(t)=0`.
    pub y1_0: Jet,
    pub y1p_0: Jet,
    pub y2_0: Jet,
    pub y2p_0: Jet,
    /// `Φ(n_t,z)`, `Φ'(n_t,z)` with `Φ(0)=0`, `Φ'(0)=1`.
    pub phi_nt: Jet,
    pub phip_nt: Jet,
    pub mono: MonodromyValues,
    /// Largest size reached while forming `θ̃₀` and `φ̃₀`.
    pub theta_env: f64,
    pub phi_env: f64,
}

impl PerturbedValues {
    pub fn wronskian(&self) -> C64 {
        self.theta_t0.v * self.phi_t0p.v - self.theta_t0p.v * self.phi_t0.v
    }

    /// `A = φ(1)θ̃₀ + (β + i sin k)φ̃₀ = φ(1)Ψ₀` on the given sheet; entire
    /// except for the branch of `sin k`.
    pub fn jost_numerator(&self, sheet: Sheet) -> C64 {
        let m = &self.mono;
        let s = sin_k_from(m, sheet).value;
        m.phi1.v * self.theta_t0.v + (m.beta.v + I * s) * self.phi_t0.v
    }

    /// Both sign choices `A± = φ(1)θ̃₀ + (β ± i sin k)φ̃₀` with the physical
    /// `sin k`.
    pub fn jost_numerators(&self) -> (C64, C64) {
        (self.jost_numerator(Sheet::Physical), self.jost_numerator(Sheet::Nonphysical))
    }

    pub fn weyl(&self, sheet: Sheet) -> Result<C64> {
        let m = &self.mono;
        let phi1 = m.phi1.v;
        if phi1.norm() < POLE_TOL {
            return Err(SpectralError::PoleProximity { z: self.z, phi1: phi1.norm() });
        }
        Ok((m.beta.v + I * sin_k_from(m, sheet).value) / phi1)
    }

    pub fn jost(&self, sheet: Sheet) -> Result<C64> {
        Ok(self.theta_t0.v + self.weyl(sheet)? * self.phi_t0.v)
    }

    /// Size of the largest term of [`PerturbedValues::entire_f`].
    pub fn f_term_scale(&self) -> f64 {
        let m = &self.mono;
        let (a, b) = (self.theta_t0.v.norm(), self.phi_t0.v.norm());
        m.phi1.v.norm() * a * a + 2.0 * m.beta.v.norm() * a * b + m.theta1p.v.norm() * b * b
    }

    /// Rounding estimate for [`PerturbedValues::entire_f`].
    pub fn f_rounding(&self) -> f64 {
        let m = &self.mono;
        let (a, b) = (self.theta_t0.v.norm(), self.phi_t0.v.norm());
        let (ea, eb) = (self.theta_env, self.phi_env);
        let spread = m.phi1.v.norm() * a * ea + m.beta.v.norm() * (a * eb + b * ea) + m.theta1p.v.norm() * b * eb;
        4.0 * f64::EPSILON * (self.f_term_scale() + 2.0 * spread)
    }

    /// `F = φ₁θ̃₀² + 2βθ̃₀φ̃₀ − θ₁'φ̃₀²` with its derivative.
    pub fn entire_f(&self) -> Jet {
        let m = &self.mono;
        let (a, b) = (self.theta_t0, self.phi_t0);
        m.phi1 * a.sqr() + (m.beta * a * b).scale(C64::new(2.0, 0.0)) - m.theta1p * b.sqr()
    }
}

/// Precomputed cell profiles of a `(p, q)` pair for repeated evaluation.
#[derive(Clone, Debug)]
pub struct Impurity {
    pub p: PiecewisePotential,
    pub q: PiecewisePotential,
    pub t: f64,
    pub n_t: u64,
    period: Vec<Segment>,
    partial: Vec<Segment>,
    periods: u64,
    inner: Vec<Segment>,
    tail: Vec<Segment>,
    l1_period: f64,
    l1_inner: f64,
    l1_tail: f64,
}

fn l1(segs: &[Segment]) -> f64 {
    segs.iter().map(|s| s.value.abs() * s.len).sum()
}

impl Impurity {
    pub fn new(p: &PiecewisePotential, q: &PiecewisePotential) -> Result<Self> {
        if !p.is_periodic() {
            return Err(SpectralError::InvalidPotential("expected a periodic potential".into()));
        }
        let t = support(q)?;
        let nt = n_t(t);
        let periods = t.floor();
        let period = profile(&[p], 0.0, 1.0);
        let partial = profile(&[p], 0.0, t - periods);
        let inner = profile(&[p, q], 0.0, t);
        let tail = profile(&[p, q], t, nt as f64);
        Ok(Impurity {
            p: p.clone(),
            q: q.clone(),
            t,
            n_t: nt,
            l1_period: l1(&period),
            l1_inner: l1(&inner),
            l1_tail: l1(&tail),
            period,
            partial,
            periods: periods as u64,
            inner,
            tail,
        })
    }

    /// Impurity stretched to `q(·/τ)`.
    pub fn dilated(&self, tau: f64) -> Result<Self> {
        Impurity::new(&self.p, &self.q.dilated(tau)?)
    }

    fn monodromy_transfer(&self, z: C64) -> Result<Transfer> {
        guard(z, 1.0, self.l1_period)?;
        Ok(propagate(&self.period, z))
    }

    pub fn values(&self, z: C64) -> Result<PerturbedValues> {
        let mono_t = self.monodromy_transfer(z)?;
        let mono = MonodromyValues::from_transfer(z, &mono_t);
        guard(z, self.t, self.l1_period * self.periods as f64 + l1(&self.partial))?;
        let at_t = propagate(&self.partial, z).after(&mono_t.pow(self.periods));
        let f = Fundamental::from_transfer(&at_t);
        guard(z, self.t, self.l1_inner)?;
        let tr = propagate(&self.inner, z);
        // inverse of the unimodular transfer matrix carries data at t back to 0
        let (y1_0, y1p_0) = (tr.m[1][1], -tr.m[1][0]);
        let (y2_0, y2p_0) = (-tr.m[0][1], tr.m[0][0]);

        let theta_t0 = f.theta * y1_0 + f.theta_p * y2_0;
        let theta_t0p = f.theta * y1p_0 + f.theta_p * y2p_0;
        let phi_t0 = f.phi * y1_0 + f.phi_p * y2_0;
        let phi_t0p = f.phi * y1p_0 + f.phi_p * y2p_0;
        let kappa = z.norm().max(1.0);
        let m = |i: usize, j: usize| tr.m[i][j].v.norm();
        let back_norm = (m(1, 1) + m(1, 0) / kappa).max(m(0, 1) * kappa + m(0, 0));
        let theta_env = (f.theta.v.norm() + f.theta_p.v.norm() / kappa) * back_norm;
        let phi_env = (f.phi.v.norm() + f.phi_p.v.norm() / kappa) * back_norm;

        guard(z, self.n_t as f64 - self.t, self.l1_tail)?;
        let (phi_nt, phip_nt) = propagate(&self.tail, z).apply(tr.m[0][1], tr.m[1][1]);

        Ok(PerturbedValues {
            z,
            t: self.t,
            n_t: self.n_t,
            theta_t0,
            theta_t0p,
            phi_t0,
            phi_t0p,
            y1_0,
            y1p_0,
            y2_0,
            y2p_0,
            phi_nt,
            phip_nt,
            mono,
            theta_env,
            phi_env,
        })
    }

    /// `F(z)` with `F'(z)`. Falls back to [`Impurity::f_factored`] where the
    /// quadratic form loses more than `CANCELLATION_LIMIT` ulps and the
    /// factored form has the smaller rounding estimate.
    pub fn f(&self, z: C64) -> Result<Jet> {
        self.f_with_error(z).map(|(f, _)| f)
    }

    /// [`Impurity::f`] with the rounding estimate of the form chosen.
    pub fn f_with_error(&self, z: C64) -> Result<(Jet, f64)> {
        let pv = self.values(z)?;
        let f = pv.entire_f();
        let rounding = pv.f_rounding();
        if rounding > CANCELLATION_LIMIT * f64::EPSILON * f.v.norm() {
            if let Ok((g, err)) = self.f_factored_with_error(z) {
                if err < rounding {
                    return Ok((g, err));
                }
            }
        }
        Ok((f, rounding))
    }

    /// `F = A₊A₋/φ(1)` with each Jost numerator obtained by carrying the
    /// Floquet solution back from `t` cell by cell as a single vector. The
    /// factors `ξ±^⌊t⌋` cancel in the product and are never formed.
    pub fn f_factored(&self, z: C64) -> Result<Jet> {
        self.f_factored_with_error(z).map(|(f, _)| f)
    }

    /// [`Impurity::f_factored`] with a rounding estimate for `|F|`: machine
    /// precision times the largest size the carried vectors can reach.
    pub fn f_factored_with_error(&self, z: C64) -> Result<(Jet, f64)> {
        let mono = MonodromyValues::from_transfer(z, &self.monodromy_transfer(z)?);
        let scale = 1.0 + mono.theta1.v.norm() + mono.phi1p.v.norm();
        if mono.phi1.v.norm() < FACTORED_TOL * scale {
            return Err(SpectralError::PoleProximity { z, phi1: mono.phi1.v.norm() });
        }
        let sk = sin_k_from(&mono, Sheet::Physical).value;
        if sk.norm() < FACTORED_TOL * (1.0 + mono.delta.v.norm()) {
            return Err(SpectralError::BranchPoint(z));
        }
        // s² = 1 − Δ²
        let s = Jet::new(sk, -mono.delta.v * mono.delta.d / sk).scale(I);
        guard(z, self.t, self.l1_inner)?;
        let frac = propagate(&self.partial, z);
        // derivatives weighted by 1/κ so both components share a unit
        let kappa = z.norm().max(1.0);
        let back = |c: Jet| {
            let mut y = mono.phi1 * frac.m[0][0] + c * frac.m[0][1];
            let mut yp = mono.phi1 * frac.m[1][0] + c * frac.m[1][1];
            let mut env = y.v.norm() + yp.v.norm() / kappa;
            for seg in self.inner.iter().rev() {
                let tr = cell_transfer(seg.value, -seg.len, z);
                let m = |i: usize, j: usize| tr.m[i][j].v.norm();
                env *= (m(0, 0) + m(1, 0) / kappa).max(m(0, 1) * kappa + m(1, 1));
                (y, yp) = tr.apply(y, yp);
            }
            (y, 4.0 * f64::EPSILON * env)
        };
        let (ap, ep) = back(mono.beta + s);
        let (am, em) = back(mono.beta - s);
        let err = (ep * am.v.norm() + em * ap.v.norm() + ep * em) / mono.phi1.v.norm();
        Ok((ap * am / mono.phi1, err))
    }
}

impl Impurity {
    /// Both sides of `Ψ⁺(0) = 1 + ∫₀ᵗ φ q Ψ⁺`, where `φ` is the unperturbed
    /// Dirichlet solution and `Ψ⁺` the perturbed Jost solution. The integral
    /// uses Gauss–Legendre on sub-pieces of each cell. `Ψ⁺` is carried in
    /// the direction in which it grows.
    pub fn jost_integral_identity(&self, z: C64) -> Result<(C64, C64)> {
        let pv = self.values(z)?;
        let m = pv.weyl(Sheet::Physical)?;
        let lhs = pv.theta_t0.v + m * pv.phi_t0.v;
        let zero = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);

        // (cell value, value of p, length) of every piece
        let mut pieces = Vec::new();
        let mut x = 0.0;
        for seg in &self.inner {
            let vp = self.p.value_at(x + 0.5 * seg.len);
            let w = (z * z - seg.value).sqrt().norm().max((z * z - vp).sqrt().norm()).max(1.0);
            let count = (seg.len * w / 0.5).ceil().max(1.0) as usize;
            pieces.extend(std::iter::repeat((seg.value, vp, seg.len / count as f64)).take(count));
            x += seg.len;
        }

        let mut phi = Vec::with_capacity(pieces.len());
        let mut state = (Jet::constant(zero), Jet::constant(one));
        for &(_, vp, h) in &pieces {
            phi.push(state);
            state = cell_transfer(vp, h, z).apply(state.0, state.1);
        }

        let mut psi = Vec::with_capacity(pieces.len());
        if z.im <= 0.0 {
            let mut state = (Jet::constant(lhs), Jet::constant(pv.theta_t0p.v + m * pv.phi_t0p.v));
            for &(v, _, h) in &pieces {
                psi.push(state);
                state = cell_transfer(v, h, z).apply(state.0, state.1);
            }
        } else {
            let xi = sin_k_from(&pv.mono, Sheet::Physical).multiplier.powu(self.periods as u32);
            let frac = propagate(&self.partial, z);
            let mut state = (
                Jet::constant(xi * (frac.m[0][0].v + m * frac.m[0][1].v)),
                Jet::constant(xi * (frac.m[1][0].v + m * frac.m[1][1].v)),
            );
            for &(v, _, h) in pieces.iter().rev() {
                state = cell_transfer(v, -h, z).apply(state.0, state.1);
                psi.push(state);
            }
            psi.reverse();
        }

        let mut integral = zero;
        for (i, &(v, vp, h)) in pieces.iter().enumerate() {
            let q = v - vp;
            if q == 0.0 {
                continue;
            }
            for (dx, weight) in gauss_legendre(h) {
                let (u, _) = cell_transfer(v, dx, z).apply(psi[i].0, psi[i].1);
                let (y, _) = cell_transfer(vp, dx, z).apply(phi[i].0, phi[i].1);
                integral += u.v * y.v * (q * weight);
            }
        }
        Ok((lhs, one + integral))
    }
}

pub fn perturbed_values(p: &PiecewisePotential, q: &PiecewisePotential, z: C64) -> Result<PerturbedValues> {
    Impurity::new(p, q)?.values(z)
}

/// `(Φ(x,z), Φ'(x,z))` for the Dirichlet solution of the perturbed equation.
pub fn big_phi(p: &PiecewisePotential, q: &PiecewisePotential, z: C64, x: f64) -> Result<(Jet, Jet)> {
    support(q)?;
    if x < 0.0 || !x.is_finite() {
        return Err(SpectralError::InvalidArgument(format!("x = {x} must be ≥ 0")));
    }
    let tr = transfer_pq(p, q, z, 0.0, x)?;
    Ok((tr.m[0][1], tr.m[1][1]))
}

/// `Ψ₀` on the sheet of `pt`; fails near poles of `m±`.
pub fn jost(p: &PiecewisePotential, q: &PiecewisePotential, pt: SpectralPoint) -> Result<C64> {
    perturbed_values(p, q, pt.z)?.jost(pt.sheet)
}

/// `F(z)` and `F'(z)`.
#[allow(non_snake_case)]
pub fn entire_F(p: &PiecewisePotential, q: &PiecewisePotential, z: C64) -> Result<Jet> {
    Ok(perturbed_values(p, q, z)?.entire_f())
}

/// `F` assembled from the monodromy of the shifted equation:
/// `F = φ(1,z,t)y₁(0)² + φ̇(1,z,t)y₁(0)y₂(0) − θ'(1,z,t)y₂(0)²`.
#[allow(non_snake_case)]
pub fn entire_F_shifted(p: &PiecewisePotential, q: &PiecewisePotential, z: C64) -> Result<Jet> {
    let t = support(q)?;
    let tr = transfer_pq(p, q, z, 0.0, t)?;
    let (y1, y2) = (tr.m[1][1], -tr.m[0][1]);
    let s = shifted_monodromy(p, z, t)?;
    let dot = s.phi1p - s.theta1;
    Ok(s.phi1 * y1.sqr() + dot * y1 * y2 - s.theta1p * y2.sqr())
}

/// Scattering coefficient `conj(D)/D` at an energy inside a band.
pub fn smatrix(p: &PiecewisePotential, q: &PiecewisePotential, lambda: f64) -> Result<C64> {
    let z = C64::new(lambda, 0.0).sqrt();
    let pv = perturbed_values(p, q, z)?;
    let d = pv.mono.delta.v;
    if !(d.re.abs() < 1.0) {
        return Err(SpectralError::InvalidArgument(format!("λ = {lambda} is not inside a band (Δ = {})", d.re)));
    }
    let jost = if pv.mono.phi1.v.norm() < POLE_TOL {
        // m₊ = −θ₁'/(β − i sin k) stays finite where φ(1) vanishes
        let m = &pv.mono;
        let s = sin_k_from(m, Sheet::Physical).value;
        pv.theta_t0.v - m.theta1p.v / (m.beta.v - I * s) * pv.phi_t0.v
    } else {
        pv.jost(Sheet::Physical)?
    };
    Ok(jost.conj() / jost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hill::fundamental_at;
    use std::f64::consts::PI;

    fn mathieu(cells: usize) -> PiecewisePotential {
        PiecewisePotential::sample_periodic(|x| 2.0 * (2.0 * PI * x).cos(), cells).unwrap()
    }

    fn step() -> PiecewisePotential {
        PiecewisePotential::periodic(vec![2.0, 0.0, -1.0, 0.5, 0.0]).unwrap()
    }

    fn free_w(z: C64, c: f64) -> C64 {
        (z * z - c).sqrt()
    }

    fn sinc_w(w: C64, t: f64) -> C64 {
        if w.norm() < 1e-12 {
            C64::new(t, 0.0)
        } else {
            (w * t).sin() / w
        }
    }

    #[test]
    fn deep_f_matches_closed_form() {
        let p = PiecewisePotential::zero_periodic();
        for &(c, t) in &[(1.0, 6.0), (-2.0, 3.5)] {
            let q = PiecewisePotential::constant_compact(c, t).unwrap();
            let imp = Impurity::new(&p, &q).unwrap();
            for &z in &[C64::new(18.0, -13.6), C64::new(9.5, -7.0), C64::new(2.0, -4.0)] {
                let w = free_w(z, c);
                let expect = z.sin() / z * ((w * t).cos().powi(2) + z * z * sinc_w(w, t).powi(2));
                let got = imp.f(z).unwrap().v;
                assert!((got - expect).norm() < 1e-8 * expect.norm(), "{z}: {got} vs {expect}");
            }
        }
    }

    #[test]
    fn factored_f_agrees_with_direct() {
        let q = PiecewisePotential::compact(vec![1.5, -0.5, 2.0, 0.3, -1.0, 0.7, 0.0], 2.3).unwrap();
        let imp = Impurity::new(&mathieu(64), &q).unwrap();
        for &z in &[C64::new(3.1, -0.4), C64::new(5.3, 0.6), C64::new(11.0, -1.5)] {
            let a = imp.values(z).unwrap().entire_f();
            let b = imp.f_factored(z).unwrap();
            assert!((a.v - b.v).norm() < 1e-9 * a.v.norm().max(1.0));
            assert!((a.d - b.d).norm() < 1e-8 * a.d.norm().max(1.0));
        }
    }

    #[test]
    fn jost_solves_its_integral_equation() {
        let q = PiecewisePotential::compact(vec![1.5, -0.5, 2.0, 0.3, -1.0, 0.7, 0.0], 2.3).unwrap();
        let imp = Impurity::new(&mathieu(64), &q).unwrap();
        for &z in &[C64::new(3.1, -0.4), C64::new(5.3, 0.6), C64::new(0.7, 1.1)] {
            let (lhs, rhs) = imp.jost_integral_identity(z).unwrap();
            assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0), "{z}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn zero_impurity_is_transparent() {
        let p = mathieu(64);
        let q = PiecewisePotential::constant_compact(0.0, 1.3).unwrap();
        let z = C64::new(2.4, -0.7);
        let pv = perturbed_values(&p, &q, z).unwrap();
        assert!((pv.theta_t0.v - 1.0).norm() < 1e-11);
        assert!(pv.phi_t0.v.norm() < 1e-11);
        assert!((pv.entire_f().v - pv.mono.phi1.v).norm() < 1e-11);
        assert!((pv.jost(Sheet::Physical).unwrap() - 1.0).norm() < 1e-10);
        let (phi, _) = big_phi(&p, &q, z, 2.0).unwrap();
        assert!((phi.v - fundamental_at(&p, z, 2.0).unwrap().phi.v).norm() < 1e-12);
    }

    #[test]
    fn constant_impurity_closed_forms() {
        let p = PiecewisePotential::zero_periodic();
        for &(c, t) in &[(1.0, 1.0), (-1.0, 1.0), (4.0, 0.75)] {
            let q = PiecewisePotential::constant_compact(c, t).unwrap();
            for &z in &[C64::new(3.1, -0.4), C64::new(0.8, 0.2), C64::new(7.0, -2.0)] {
                let w = free_w(z, c);
                let pv = perturbed_values(&p, &q, z).unwrap();
                let phi0 = (w * t).cos() * (z * t).sin() / z - sinc_w(w, t) * (z * t).cos();
                assert!((pv.phi_t0.v - phi0).norm() < 1e-11 * phi0.norm().max(1.0));
                let jost = (I * z * t).exp() * ((w * t).cos() - I * z * sinc_w(w, t));
                let got = pv.jost(Sheet::Physical).unwrap();
                assert!((got - jost).norm() < 1e-10 * jost.norm().max(1.0), "{got} vs {jost}");
                assert!((pv.wronskian() - 1.0).norm() < 1e-10);
            }
        }
        let q = PiecewisePotential::constant_compact(2.5, 1.0).unwrap();
        let z = C64::new(1.3, 0.4);
        let (phi, _) = big_phi(&p, &q, z, 1.0).unwrap();
        assert!((phi.v - sinc_w(free_w(z, 2.5), 1.0)).norm() < 1e-13);
    }

    #[test]
    fn factorization_and_shifted_route() {
        let p = step();
        let q = PiecewisePotential::compact(vec![1.0, -2.0, 0.5], 1.5).unwrap();
        for &z in &[C64::new(2.2, 0.6), C64::new(5.3, -1.1), C64::new(0.4, -0.3), C64::new(9.9, 0.05)] {
            let pv = perturbed_values(&p, &q, z).unwrap();
            let f = pv.entire_f();
            let prod = pv.mono.phi1.v * pv.jost(Sheet::Physical).unwrap() * pv.jost(Sheet::Nonphysical).unwrap();
            assert!((f.v - prod).norm() < 1e-9 * f.v.norm().max(1.0));
            let alt = entire_F_shifted(&p, &q, z).unwrap();
            assert!((f.v - alt.v).norm() < 1e-9 * f.v.norm().max(1.0));
            assert!((f.d - alt.d).norm() < 1e-8 * f.d.norm().max(1.0));
        }
    }

    #[test]
    fn f_is_real_and_even() {
        let p = step();
        let q = PiecewisePotential::compact(vec![1.0, -2.0], 0.7).unwrap();
        for &x in &[0.3, 2.0, 6.5] {
            let f = entire_F(&p, &q, C64::new(x, 0.0)).unwrap().v;
            assert!(f.im.abs() < 1e-12 * f.norm().max(1.0));
            let g = entire_F(&p, &q, C64::new(0.0, x)).unwrap().v;
            assert!(g.im.abs() < 1e-12 * g.norm().max(1.0));
        }
        let z = C64::new(3.3, -0.8);
        let a = entire_F(&p, &q, z).unwrap().v;
        for w in [-z, z.conj(), -z.conj()] {
            let b = entire_F(&p, &q, w).unwrap().v;
            let expect = if w == -z { a } else { a.conj() };
            assert!((b - expect).norm() < 1e-10 * a.norm().max(1.0));
        }
    }

    #[test]
    fn derivative_matches_differences() {
        let p = step();
        let q = PiecewisePotential::compact(vec![3.0, -1.0], 1.2).unwrap();
        let z = C64::new(4.1, -0.9);
        let h = 1e-5;
        let f = entire_F(&p, &q, z).unwrap();
        let fd = (entire_F(&p, &q, z + h).unwrap().v - entire_F(&p, &q, z - h).unwrap().v) / (2.0 * h);
        assert!((f.d - fd).norm() < 1e-6 * fd.norm().max(1.0));
    }

    #[test]
    fn wronskian_with_phi_reproduces_jost() {
        let p = step();
        let q = PiecewisePotential::compact(vec![1.5, 0.0, -0.5], 1.4).unwrap();
        let z = C64::new(3.7, 0.3);
        let pv = perturbed_values(&p, &q, z).unwrap();
        assert_eq!(pv.n_t, 2);
        for sheet in [Sheet::Physical, Sheet::Nonphysical] {
            let m = pv.weyl(sheet).unwrap();
            let f = fundamental_at(&p, z, 2.0).unwrap();
            let psi = f.theta.v + m * f.phi.v;
            let psip = f.theta_p.v + m * f.phi_p.v;
            let w = psi * pv.phip_nt.v - psip * pv.phi_nt.v;
            let jost = pv.jost(sheet).unwrap();
            assert!((w - jost).norm() < 1e-10 * jost.norm().max(1.0));
        }
    }

    #[test]
    fn jost_conjugation_symmetry() {
        let p = mathieu(64);
        let q = PiecewisePotential::compact(vec![1.0, 0.5], 1.0).unwrap();
        let z = C64::new(2.7, 0.45);
        let plus = jost(&p, &q, SpectralPoint::physical(z.conj())).unwrap();
        let minus = jost(&p, &q, SpectralPoint::nonphysical(z)).unwrap();
        assert!((minus - plus.conj()).norm() < 1e-10 * plus.norm().max(1.0));
    }

    #[test]
    fn pole_is_reported() {
        let p = PiecewisePotential::zero_periodic();
        let q = PiecewisePotential::constant_compact(1.0, 1.0).unwrap();
        let r = jost(&p, &q, SpectralPoint::physical(C64::new(PI, 0.0)));
        assert!(matches!(r, Err(SpectralError::PoleProximity { .. })));
    }

    #[test]
    fn smatrix_is_unimodular() {
        let p = mathieu(64);
        let q = PiecewisePotential::compact(vec![1.0, -0.5, 2.0], 1.0).unwrap();
        for &lam in &[3.0, 20.0, 55.0, 130.0] {
            let s = smatrix(&p, &q, lam).unwrap();
            assert!((s.norm() - 1.0).abs() < 1e-10);
        }
        let free = PiecewisePotential::constant_compact(0.0, 1.0).unwrap();
        assert!((smatrix(&p, &free, 20.0).unwrap() - 1.0).norm() < 1e-10);
    }
}

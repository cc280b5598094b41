//! Band edges, Dirichlet eigenvalues, the sheet structure of `sin k`, the
//! quasimomentum and the integrated density of states.
//!
//! Momentum `z = √λ` is the working coordinate. Gap `n` is the momentum
//! interval `(e_n⁻, e_n⁺)` around `πn`; its upper rim belongs to the physical
//! sheet and its lower rim to the nonphysical one.

use crate::error::{Result, SpectralError};
use crate::hill::{monodromy, MonodromyValues};
use crate::jet::C64;
use crate::potential::PiecewisePotential;
use crate::roots::{bisect, bracketed};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

/// Samples per gap window when locating the extremum of `Δ`.
const WINDOW_SAMPLES: usize = 96;

/// Kind of the unique state of the unperturbed operator in gap `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum UnperturbedState {
    Bound,
    Antibound,
    /// `μ_n = e_n⁻`
    VirtualLeft,
    /// `μ_n = e_n⁺`
    VirtualRight,
    /// Closed gap: no state.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Sheet {
    Physical,
    Nonphysical,
}

/// Point of the momentum Riemann surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralPoint {
    pub z: C64,
    pub sheet: Sheet,
}

impl SpectralPoint {
    pub fn physical(z: C64) -> Self {
        SpectralPoint { z, sheet: Sheet::Physical }
    }

    pub fn nonphysical(z: C64) -> Self {
        SpectralPoint { z, sheet: Sheet::Nonphysical }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapRecord {
    pub n: u64,
    pub e_minus: f64,
    pub e_plus: f64,
    /// Extremal point of `Δ` in the gap closure (`Δ'(e_n) = 0`).
    pub e_ext: f64,
    pub mu_n: f64,
    pub h_n: f64,
    /// Uncertainty on `h_n` where `Δ` is too flat for a sharp extremum.
    pub h_n_err: Option<f64>,
    pub h_sn: f64,
    pub closed: bool,
    pub h0_state: UnperturbedState,
    /// Rounding uncertainty of the edges: noise in `Δ` over `|Δ'|` there.
    pub edge_err: f64,
}

impl GapRecord {
    pub fn width(&self) -> f64 {
        self.e_plus - self.e_minus
    }

    /// Energy gap length `E_n⁺ − E_n⁻`.
    pub fn energy_width(&self) -> f64 {
        self.e_plus * self.e_plus - self.e_minus * self.e_minus
    }

    pub fn contains(&self, z: f64) -> bool {
        z >= self.e_minus && z <= self.e_plus
    }

    /// Distance from an edge below which a point counts as sitting on it.
    pub fn virtual_tol(&self) -> f64 {
        virtual_tolerance(self.n).max(4.0 * self.edge_err)
    }
}

fn parity(n: u64) -> f64 {
    if n % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn delta_real(p: &PiecewisePotential, z: f64) -> Result<(f64, f64)> {
    let m = monodromy(p, C64::new(z, 0.0))?;
    Ok((m.delta.v.re, m.delta.d.re))
}

/// Closed-gap threshold `e⁺ − e⁻ < 10⁻⁹ n`.
pub fn closed_gap_tolerance(n: u64) -> f64 {
    1e-9 * n as f64
}

/// Gap edges of gap `n`: roots of `Δ − (−1)ⁿ` in the window
/// `((n−½)π − 1, (n+½)π + 1)`.
pub fn gap_edges(p: &PiecewisePotential, n: u64) -> Result<GapRecord> {
    if n == 0 {
        return Err(SpectralError::InvalidArgument("gap index starts at 1".into()));
    }
    let sign = parity(n);
    let lo = ((n as f64 - 0.5) * PI - 1.0).max(1e-6);
    let hi = (n as f64 + 0.5) * PI + 1.0;
    let g = |z: f64| -> Result<f64> { Ok(sign * delta_real(p, z)?.0 - 1.0) };

    let xs: Vec<f64> = (0..=WINDOW_SAMPLES).map(|i| lo + (hi - lo) * i as f64 / WINDOW_SAMPLES as f64).collect();
    let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect::<Result<_>>()?;
    let imax = gs.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).map(|(i, _)| i).unwrap();
    if imax == 0 || imax == WINDOW_SAMPLES {
        return Err(SpectralError::Bracket { what: format!("extremum of Δ for gap {n}"), lo, hi });
    }

    // e_n: zero of (−1)ⁿΔ' between the neighbours of the sampled maximum
    let dd = |z: f64| sign * delta_real(p, z).map(|v| v.1).unwrap_or(f64::NAN);
    let (a, b) = (xs[imax - 1], xs[imax + 1]);
    let (da, db) = (dd(a), dd(b));
    let e_ext = if da > 0.0 && db < 0.0 { bracketed(dd, a, b, da, db, 1e-15 * b) } else { xs[imax] };
    let gmax = g(e_ext)?;

    let (e_minus, e_plus) = if gmax <= 0.0 {
        (e_ext, e_ext)
    } else {
        let left = (0..imax).rev().find(|&i| gs[i] < 0.0);
        let right = (imax + 1..=WINDOW_SAMPLES).find(|&i| gs[i] < 0.0);
        let (Some(il), Some(ir)) = (left, right) else {
            return Err(SpectralError::Bracket { what: format!("edges of gap {n}"), lo, hi });
        };
        let gf = |z: f64| g(z).unwrap_or(f64::NAN);
        let em = bracketed(gf, xs[il], e_ext, gs[il], gmax, 1e-15 * hi);
        let ep = bracketed(gf, e_ext, xs[ir], gmax, gs[ir], 1e-15 * hi);
        (em, ep)
    };
    let closed = e_plus - e_minus < closed_gap_tolerance(n);
    let edge_err = if closed {
        0.0
    } else {
        let mut err: f64 = 0.0;
        for e in [e_minus, e_plus] {
            err = err.max(edge_uncertainty(p, e)?);
        }
        err
    };
    let cosh_h = (gmax + 1.0).max(1.0);
    let h_n = cosh_h.acosh();
    let h_n_err = if h_n < 1e-6 { Some((2.0 * f64::EPSILON * cosh_h).sqrt()) } else { None };
    Ok(GapRecord {
        n,
        e_minus,
        e_plus,
        e_ext,
        mu_n: f64::NAN,
        h_n,
        h_n_err,
        h_sn: 0.0,
        closed,
        h0_state: UnperturbedState::None,
        edge_err,
    })
}

/// Noise in `Δ` at `e`, read off the defect of `Δ² − 1 = β² + φ₁θ₁'`,
/// divided by the slope `|Δ'(e)|`.
fn edge_uncertainty(p: &PiecewisePotential, e: f64) -> Result<f64> {
    let m = monodromy(p, C64::new(e, 0.0))?;
    let (d, b) = (m.delta.v, m.beta.v);
    let defect = (d * d - 1.0 - b * b - m.phi1.v * m.theta1p.v).norm();
    let noise = 0.5 * defect + 16.0 * f64::EPSILON;
    Ok(noise / m.delta.d.norm().max(f64::MIN_POSITIVE))
}

/// Edges and slit heights of gaps `1..=n_max`.
pub fn band_edges(p: &PiecewisePotential, n_max: u64) -> Result<Vec<GapRecord>> {
    if n_max == 0 {
        return Err(SpectralError::InvalidArgument("n_max must be ≥ 1".into()));
    }
    (1..=n_max).into_par_iter().map(|n| gap_edges(p, n)).collect()
}

/// `μ_n`: the zero of `φ(1,·)` in `[e_n⁻, e_n⁺]`.
pub fn dirichlet_eig(p: &PiecewisePotential, gap: &GapRecord) -> Result<f64> {
    if gap.closed {
        return Ok(gap.e_ext);
    }
    let phi = |z: f64| -> Result<(f64, f64)> {
        let m = monodromy(p, C64::new(z, 0.0))?;
        Ok((m.phi1.v.re, m.phi1.d.re))
    };
    let (a, b) = (gap.e_minus, gap.e_plus);
    let (fa, da) = phi(a)?;
    let (fb, db) = phi(b)?;
    if fa * fb < 0.0 {
        let f = |z: f64| phi(z).map(|v| v.0).unwrap_or(f64::NAN);
        return Ok(bracketed(f, a, b, fa, fb, 1e-15 * b));
    }
    // μ_n sits on an edge (even-type potentials) up to rounding
    let (start, f0, d0) = if (fa / da).abs() < (fb / db).abs() { (a, fa, da) } else { (b, fb, db) };
    let mut z = start - f0 / d0;
    for _ in 0..8 {
        let (f, d) = phi(z)?;
        let step = f / d;
        z -= step;
        if step.abs() < 1e-16 * z {
            break;
        }
    }
    let slack = (1e-9 * gap.n as f64).max(gap.virtual_tol());
    if z < a - slack || z > b + slack {
        return Err(SpectralError::Structural(format!("no zero of φ(1,·) in gap {} = [{a}, {b}]", gap.n)));
    }
    Ok(z.clamp(a, b))
}

pub fn dirichlet_eigs(p: &PiecewisePotential, gaps: &[GapRecord]) -> Result<Vec<f64>> {
    gaps.par_iter().map(|g| dirichlet_eig(p, g)).collect()
}

/// `sin k` on one sheet, with the Floquet multiplier `ξ = e^{ik}`.
#[derive(Clone, Copy, Debug)]
pub struct SinK {
    pub value: C64,
    pub multiplier: C64,
    pub branch_point: bool,
}

/// Tolerance on `|Δ² − 1|` for branch-point detection.
const BRANCH_TOL: f64 = 1e-14;

/// Branch of `sin k` from monodromy data.
///
/// The physical branch is the one analytic on the cut plane with
/// `±Im k > 0` in `ℂ±`: the root `ξ` of `ξ² − 2Δξ + 1 = 0` with `|ξ| ≤ 1` in
/// the upper half plane and `|ξ| ≥ 1` in the lower one. On the real axis it
/// is the limit from above. On band interiors `sin k` is real with the sign
/// of `−dΔ/dλ`, and both sheets coincide; elsewhere the nonphysical branch is
/// the negative of the physical one.
pub fn sin_k_from(m: &MonodromyValues, sheet: Sheet) -> SinK {
    let z = m.z;
    let d = m.delta.v;
    let disc = d * d - 1.0;
    let branch_point = disc.norm() < BRANCH_TOL;

    let real_lambda = z.im == 0.0 || z.re == 0.0;
    if real_lambda && d.im.abs() <= 1e-12 * d.norm().max(1.0) && d.re.abs() <= 1.0 {
        let s = (1.0 - d.re * d.re).max(0.0).sqrt();
        // dΔ/dλ = Δ'(z)/(2z)
        let slope = if z.norm() == 0.0 { 0.0 } else { (m.delta.d / z).re };
        let s = if slope > 0.0 { -s } else { s };
        return SinK { value: C64::new(s, 0.0), multiplier: C64::new(d.re, s), branch_point };
    }
    let small = if z.im == 0.0 {
        // real multiplier of modulus < 1
        let dr = d.re;
        C64::new(1.0 / (dr + dr.signum() * (dr * dr - 1.0).max(0.0).sqrt()), 0.0)
    } else {
        // the larger root has no cancellation; ξ₁ξ₂ = 1 gives the other
        let root = disc.sqrt();
        let (x1, x2) = (d - root, d + root);
        if x1.norm() <= x2.norm() {
            x2.inv()
        } else {
            x1.inv()
        }
    };
    let physical = if z.im < 0.0 { small.inv() } else { small };
    let xi = match sheet {
        Sheet::Physical => physical,
        Sheet::Nonphysical => physical.inv(),
    };
    SinK { value: (xi - xi.inv()) / C64::new(0.0, 2.0), multiplier: xi, branch_point }
}

pub fn sin_k(p: &PiecewisePotential, pt: SpectralPoint) -> Result<SinK> {
    let m = monodromy(p, pt.z)?;
    Ok(sin_k_from(&m, pt.sheet))
}

/// Quasimomentum `k` with `e^{ik} = ξ` on the chosen sheet, normalised so
/// that `k(z) = z + O(1/z)`.
pub fn quasimomentum_from(m: &MonodromyValues, sheet: Sheet) -> C64 {
    let s = sin_k_from(m, sheet);
    let k0 = -C64::new(0.0, 1.0) * s.multiplier.ln();
    let shift = ((m.z.re - k0.re) / (2.0 * PI)).round();
    k0 + 2.0 * PI * shift
}

pub fn quasimomentum(p: &PiecewisePotential, pt: SpectralPoint) -> Result<C64> {
    let m = monodromy(p, pt.z)?;
    let s = sin_k_from(&m, pt.sheet);
    if s.branch_point {
        return Err(SpectralError::BranchPoint(pt.z));
    }
    Ok(quasimomentum_from(&m, pt.sheet))
}

/// Full band picture of a periodic potential up to gap `n_max`.
#[derive(Clone, Debug)]
pub struct BandStructure {
    pub p: PiecewisePotential,
    /// Bottom of the spectrum `E₀⁺` (energy).
    pub e0_plus: f64,
    pub gaps: Vec<GapRecord>,
}

/// `|μ_n − e_n^±|` below which the unperturbed state is virtual.
pub fn virtual_tolerance(n: u64) -> f64 {
    1e-12 * n as f64
}

impl BandStructure {
    pub fn compute(p: &PiecewisePotential, n_max: u64) -> Result<Self> {
        let mut gaps = band_edges(p, n_max)?;
        let mus = dirichlet_eigs(p, &gaps)?;
        for (g, mu) in gaps.iter_mut().zip(mus) {
            g.mu_n = mu;
            if g.closed {
                g.h0_state = UnperturbedState::None;
                continue;
            }
            let m = monodromy(p, C64::new(mu, 0.0))?;
            g.h_sn = (-parity(g.n) * m.beta.v.re).asinh();
            let tol = g.virtual_tol();
            g.h0_state = if (mu - g.e_minus).abs() < tol {
                UnperturbedState::VirtualLeft
            } else if (g.e_plus - mu).abs() < tol {
                UnperturbedState::VirtualRight
            } else if g.h_sn > 0.0 {
                UnperturbedState::Bound
            } else {
                UnperturbedState::Antibound
            };
        }
        for w in gaps.windows(2) {
            if !(w[0].e_plus < w[1].e_minus) {
                return Err(SpectralError::Structural(format!("gap edges not interlaced at n = {}", w[1].n)));
            }
        }
        let e0_plus = bottom_of_spectrum(p, gaps.first().map(|g| g.e_minus).unwrap_or(PI))?;
        Ok(BandStructure { p: p.clone(), e0_plus, gaps })
    }

    pub fn gap(&self, n: u64) -> Option<&GapRecord> {
        if n == 0 {
            return None;
        }
        self.gaps.get(n as usize - 1)
    }

    pub fn n_max(&self) -> u64 {
        self.gaps.len() as u64
    }

    /// Gap containing the real momentum `z` in its closure, if any.
    pub fn gap_containing(&self, z: f64) -> Option<&GapRecord> {
        self.gaps.iter().find(|g| !g.closed && g.contains(z.abs()))
    }

    /// Integrated density of states `ρ(λ)`.
    pub fn ids(&self, lambda: f64) -> Result<f64> {
        if lambda <= self.e0_plus {
            return Ok(0.0);
        }
        let mut lower = self.e0_plus;
        for g in &self.gaps {
            let em = g.e_minus * g.e_minus;
            let ep = g.e_plus * g.e_plus;
            let n = g.n as f64;
            if lambda < em {
                return self.band_ids(lambda, g.n - 1, lower, em);
            }
            if lambda <= ep {
                return Ok(n);
            }
            lower = ep;
        }
        Err(SpectralError::InvalidArgument(format!(
            "λ = {lambda} lies above the computed gaps (n_max = {})",
            self.n_max()
        )))
    }

    /// `ρ = n + arccos((−1)ⁿ Δ)/π` on band `[E_n⁺, E_{n+1}⁻]`.
    fn band_ids(&self, lambda: f64, n: u64, lo: f64, hi: f64) -> Result<f64> {
        if lambda <= lo {
            return Ok(n as f64);
        }
        if lambda >= hi {
            return Ok(n as f64 + 1.0);
        }
        let z = C64::new(lambda, 0.0).sqrt();
        let m = monodromy(&self.p, z)?;
        let c = (parity(n) * m.delta.v.re).clamp(-1.0, 1.0);
        Ok(n as f64 + c.acos() / PI)
    }
}

/// `E₀⁺`: the largest `λ` with `Δ(√λ) ≥ 1` below the first band.
fn bottom_of_spectrum(p: &PiecewisePotential, e1_minus: f64) -> Result<f64> {
    let lo = p.min_value() - 1.0;
    let hi = e1_minus * e1_minus;
    let f =
        |lam: f64| -> f64 { monodromy(p, C64::new(lam, 0.0).sqrt()).map(|m| m.delta.v.re - 1.0).unwrap_or(f64::NAN) };
    let steps = 400;
    let mut prev = lo;
    for i in 1..=steps {
        let lam = lo + (hi - lo) * i as f64 / steps as f64;
        if f(lam) < 0.0 {
            return Ok(bisect(f, prev, lam, 1e-14 * lam.abs().max(1.0)));
        }
        prev = lam;
    }
    Err(SpectralError::Bracket { what: "bottom of the spectrum".into(), lo, hi })
}

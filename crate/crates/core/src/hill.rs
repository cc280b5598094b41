//! Canonical fundamental system, monodromy and the Lyapunov function of the
//! periodic equation `-y'' + p y = z² y`, evaluated by exact cell products.

use crate::error::{Result, SpectralError};
use crate::jet::{cell_transfer, Jet, Transfer, C64};
use crate::potential::{l1_norm, profile, PiecewisePotential, Segment};

/// Largest admissible growth exponent (natural-log units).
pub const OVERFLOW_EXPONENT: f64 = 700.0;

/// Product of the exact cell propagators along `segments`, left to right.
pub fn propagate(segments: &[Segment], z: C64) -> Transfer {
    segments.iter().fold(Transfer::identity(), |acc, s| cell_transfer(s.value, s.len, z).after(&acc))
}

pub(crate) fn guard(z: C64, length: f64, l1: f64) -> Result<()> {
    let exponent = z.im.abs() * length + l1;
    if exponent > OVERFLOW_EXPONENT {
        Err(SpectralError::Range { z, exponent })
    } else {
        Ok(())
    }
}

/// `(θ, θ', φ, φ')` at one point, each with its `z`-derivative.
#[derive(Clone, Copy, Debug)]
pub struct Fundamental {
    pub theta: Jet,
    pub theta_p: Jet,
    pub phi: Jet,
    pub phi_p: Jet,
}

impl Fundamental {
    pub(crate) fn from_transfer(t: &Transfer) -> Self {
        Fundamental { theta: t.m[0][0], theta_p: t.m[1][0], phi: t.m[0][1], phi_p: t.m[1][1] }
    }

    pub fn wronskian(&self) -> C64 {
        self.theta.v * self.phi_p.v - self.theta_p.v * self.phi.v
    }
}

fn require_periodic(p: &PiecewisePotential) -> Result<()> {
    if p.is_periodic() {
        Ok(())
    } else {
        Err(SpectralError::InvalidPotential("expected a periodic potential".into()))
    }
}

/// Transfer matrix of the periodic equation over `[0, x]`, `x ≥ 0`.
///
/// Whole periods are folded into a power of the monodromy matrix.
pub fn transfer_to(p: &PiecewisePotential, z: C64, x: f64) -> Result<Transfer> {
    require_periodic(p)?;
    if x < 0.0 || !x.is_finite() {
        return Err(SpectralError::InvalidArgument(format!("x = {x} must be ≥ 0")));
    }
    let periods = x.floor();
    let frac = x - periods;
    let l1 = periods * l1_norm(&[p], 0.0, 1.0) + l1_norm(&[p], 0.0, frac);
    guard(z, x, l1)?;
    let partial = propagate(&profile(&[p], 0.0, frac), z);
    if periods == 0.0 {
        return Ok(partial);
    }
    let mono = propagate(&profile(&[p], 0.0, 1.0), z);
    Ok(partial.after(&mono.pow(periods as u64)))
}

/// `θ(x,z), θ'(x,z), φ(x,z), φ'(x,z)` for the canonical system
/// `θ(0)=φ'(0)=1, θ'(0)=φ(0)=0`.
///
/// The potential is piecewise constant, so `x` need not be a cell boundary:
/// the partial cell is propagated exactly.
pub fn fundamental_at(p: &PiecewisePotential, z: C64, x: f64) -> Result<Fundamental> {
    Ok(Fundamental::from_transfer(&transfer_to(p, z, x)?))
}

/// Monodromy data at one `z`; every field carries its `z`-derivative.
#[derive(Clone, Copy, Debug)]
pub struct MonodromyValues {
    pub z: C64,
    pub theta1: Jet,
    pub theta1p: Jet,
    pub phi1: Jet,
    pub phi1p: Jet,
    /// `Δ = (φ'(1) + θ(1))/2`
    pub delta: Jet,
    /// `β = (φ'(1) − θ(1))/2`
    pub beta: Jet,
}

impl MonodromyValues {
    pub(crate) fn from_transfer(z: C64, t: &Transfer) -> Self {
        let f = Fundamental::from_transfer(t);
        MonodromyValues {
            z,
            theta1: f.theta,
            theta1p: f.theta_p,
            phi1: f.phi,
            phi1p: f.phi_p,
            delta: (f.phi_p + f.theta).scale(C64::new(0.5, 0.0)),
            beta: (f.phi_p - f.theta).scale(C64::new(0.5, 0.0)),
        }
    }

    pub fn wronskian(&self) -> C64 {
        self.theta1.v * self.phi1p.v - self.theta1p.v * self.phi1.v
    }

    /// `β² + 1 − Δ² + φ(1)θ'(1)`, which vanishes identically.
    pub fn discriminant_residual(&self) -> C64 {
        let b = self.beta.v;
        let d = self.delta.v;
        b * b + 1.0 - d * d + self.phi1.v * self.theta1p.v
    }
}

pub fn monodromy(p: &PiecewisePotential, z: C64) -> Result<MonodromyValues> {
    require_periodic(p)?;
    guard(z, 1.0, l1_norm(&[p], 0.0, 1.0))?;
    let t = propagate(&profile(&[p], 0.0, 1.0), z);
    Ok(MonodromyValues::from_transfer(z, &t))
}

/// Monodromy of the shifted equation `-y'' + p(x+τ) y = z² y`.
pub fn shifted_monodromy(p: &PiecewisePotential, z: C64, tau: f64) -> Result<MonodromyValues> {
    require_periodic(p)?;
    let shift = tau - tau.floor();
    guard(z, 1.0, l1_norm(&[p], 0.0, 1.0))?;
    let t = propagate(&profile(&[p], shift, shift + 1.0), z);
    Ok(MonodromyValues::from_transfer(z, &t))
}

/// `φ(1,z,τ)`, `θ'(1,z,τ)` and `∂_τ φ(1,z,τ) = φ'(1,z,τ) − θ(1,z,τ)`.
#[derive(Clone, Copy, Debug)]
pub struct ShiftedPhi {
    pub phi1: Jet,
    pub theta1p: Jet,
    pub dtau_phi1: Jet,
}

pub fn shifted_phi1(p: &PiecewisePotential, z: C64, tau: f64) -> Result<ShiftedPhi> {
    let m = shifted_monodromy(p, z, tau)?;
    Ok(ShiftedPhi { phi1: m.phi1, theta1p: m.theta1p, dtau_phi1: m.phi1p - m.theta1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn mathieu(cells: usize) -> PiecewisePotential {
        PiecewisePotential::sample_periodic(|x| 2.0 * (2.0 * PI * x).cos(), cells).unwrap()
    }

    #[test]
    fn free_equation_is_exact() {
        let p = PiecewisePotential::periodic(vec![0.0; 8]).unwrap();
        for &z in &[C64::new(0.0, 0.0), C64::new(3.7, 0.0), C64::new(2.0, -1.5), C64::new(0.0, 4.0)] {
            for &x in &[0.0, 0.3, 1.0, 2.75] {
                let f = fundamental_at(&p, z, x).unwrap();
                let phi = if z.norm() == 0.0 { C64::new(x, 0.0) } else { (z * x).sin() / z };
                assert!((f.theta.v - (z * x).cos()).norm() < 1e-12 * (1.0 + f.theta.v.norm()));
                assert!((f.phi.v - phi).norm() < 1e-12 * (1.0 + phi.norm()));
            }
            let m = monodromy(&p, z).unwrap();
            assert!((m.delta.v - z.cos()).norm() < 1e-12 * (1.0 + z.cos().norm()));
            assert!(m.beta.v.norm() < 1e-12 * (1.0 + z.cos().norm()));
        }
    }

    #[test]
    fn constant_four_at_zero() {
        let p = PiecewisePotential::periodic(vec![4.0]).unwrap();
        let f = fundamental_at(&p, C64::new(0.0, 0.0), 1.0).unwrap();
        assert!((f.theta.v.re - 2.0f64.cosh()).abs() < 1e-12);
        assert!((f.phi.v.re - 2.0f64.sinh() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn free_band_edges_have_unit_discriminant() {
        let p = PiecewisePotential::zero_periodic();
        for n in 1..6 {
            let m = monodromy(&p, C64::new(PI * n as f64, 0.0)).unwrap();
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert!((m.delta.v.re - sign).abs() < 1e-13);
        }
    }

    #[test]
    fn growth_bound_holds() {
        let p = mathieu(64);
        let z = C64::new(5.0, 3.0);
        for &x in &[0.25, 0.5, 1.0] {
            let f = fundamental_at(&p, z, x).unwrap();
            let bound = (z.im.abs() * x + l1_norm(&[&p], 0.0, x)).exp();
            assert!(f.phi.v.norm() * z.norm().max(1.0) <= bound);
            assert!(f.theta.v.norm() <= bound);
        }
    }

    #[test]
    fn identities_and_derivatives() {
        let p = mathieu(128);
        let z = C64::new(4.2, -0.8);
        let m = monodromy(&p, z).unwrap();
        assert!((m.wronskian() - 1.0).norm() < 1e-12);
        assert!(m.discriminant_residual().norm() < 1e-11);
        let h = 1e-5;
        let mp = monodromy(&p, z + h).unwrap();
        let mm = monodromy(&p, z - h).unwrap();
        let fd = (mp.delta.v - mm.delta.v) / (2.0 * h);
        assert!((fd - m.delta.d).norm() < 1e-6 * fd.norm().max(1.0));
    }

    #[test]
    fn overflow_is_reported() {
        let p = mathieu(16);
        assert!(matches!(monodromy(&p, C64::new(1.0, 800.0)), Err(SpectralError::Range { .. })));
    }

    #[test]
    fn shift_zero_reduces_to_monodromy() {
        let p = mathieu(32);
        let z = C64::new(2.2, 0.3);
        let s = shifted_phi1(&p, z, 0.0).unwrap();
        let m = monodromy(&p, z).unwrap();
        assert_eq!(s.phi1.v, m.phi1.v);
        assert_eq!(s.theta1p.v, m.theta1p.v);
        let free = shifted_phi1(&PiecewisePotential::zero_periodic(), z, 0.37).unwrap();
        assert!((free.phi1.v - z.sin() / z).norm() < 1e-13);
    }

    #[test]
    fn half_period_shift_swaps_step_cells() {
        let p = PiecewisePotential::periodic(vec![1.5, -0.5]).unwrap();
        let z = C64::new(1.7, 0.2);
        let s = shifted_phi1(&p, z, 0.5).unwrap();
        let swapped = PiecewisePotential::periodic(vec![-0.5, 1.5]).unwrap();
        let expect = cell_transfer(1.5, 0.5, z).after(&cell_transfer(-0.5, 0.5, z));
        assert!((s.phi1.v - expect.m[0][1].v).norm() < 1e-14);
        let m = monodromy(&swapped, z).unwrap();
        assert!((s.phi1.v - m.phi1.v).norm() < 1e-14);
    }

    #[test]
    fn floquet_shift_identity() {
        // φ(1,z,τ) = −θ'(1)φ(τ)² + φ(1)θ(τ)² + 2βφ(τ)θ(τ)
        let p = mathieu(64);
        let z = C64::new(3.3, -0.4);
        let tau = 0.375;
        let m = monodromy(&p, z).unwrap();
        let f = fundamental_at(&p, z, tau).unwrap();
        let rhs =
            -m.theta1p.v * f.phi.v * f.phi.v + m.phi1.v * f.theta.v * f.theta.v + m.beta.v * f.phi.v * f.theta.v * 2.0;
        let s = shifted_phi1(&p, z, tau).unwrap();
        assert!((s.phi1.v - rhs).norm() < 1e-9 * rhs.norm().max(1.0));
    }
}

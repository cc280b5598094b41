//! Piecewise-constant potentials on uniform meshes.
//!
//! The periodic background has period 1; the impurity is supported on
//! `[0, t]`. Cell data are the only representation downstream code sees, so
//! every integral here is done in closed form cell by cell.

use crate::error::{Result, SpectralError};
use crate::jet::C64;
use std::f64::consts::PI;

/// Default number of cells per unit length when sampling smooth inputs.
pub const DEFAULT_CELLS_PER_UNIT: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PotentialKind {
    /// Period-1 potential.
    Periodic,
    /// Supported on `[0, support]`.
    Compact { support: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PiecewisePotential {
    values: Vec<f64>,
    mesh: f64,
    kind: PotentialKind,
}

impl PiecewisePotential {
    pub fn periodic(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(SpectralError::InvalidPotential("no cells".into()));
        }
        check_finite(&values)?;
        let mesh = 1.0 / values.len() as f64;
        Ok(PiecewisePotential { values, mesh, kind: PotentialKind::Periodic })
    }

    pub fn compact(values: Vec<f64>, support: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(SpectralError::InvalidPotential("no cells".into()));
        }
        if !(support > 0.0 && support.is_finite()) {
            return Err(SpectralError::InvalidPotential(format!("support endpoint must be positive, got {support}")));
        }
        check_finite(&values)?;
        let mesh = support / values.len() as f64;
        Ok(PiecewisePotential { values, mesh, kind: PotentialKind::Compact { support } })
    }

    /// Midpoint sampling of `f` on `cells` cells of `[0,1]`.
    pub fn sample_periodic(f: impl Fn(f64) -> f64, cells: usize) -> Result<Self> {
        let h = 1.0 / cells as f64;
        Self::periodic((0..cells).map(|i| f((i as f64 + 0.5) * h)).collect())
    }

    /// Midpoint sampling of `f` on `cells` cells of `[0,support]`.
    pub fn sample_compact(f: impl Fn(f64) -> f64, support: f64, cells: usize) -> Result<Self> {
        let h = support / cells as f64;
        Self::compact((0..cells).map(|i| f((i as f64 + 0.5) * h)).collect(), support)
    }

    pub fn zero_periodic() -> Self {
        PiecewisePotential { values: vec![0.0], mesh: 1.0, kind: PotentialKind::Periodic }
    }

    pub fn constant_compact(c: f64, support: f64) -> Result<Self> {
        Self::compact(vec![c], support)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.kind, PotentialKind::Periodic)
    }

    /// Support endpoint `t` of a compact potential, `1` for a periodic one.
    pub fn length(&self) -> f64 {
        match self.kind {
            PotentialKind::Periodic => 1.0,
            PotentialKind::Compact { support } => support,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value at `x`; periodic extension, or zero off the support.
    pub fn value_at(&self, x: f64) -> f64 {
        let n = self.values.len();
        match self.kind {
            PotentialKind::Periodic => {
                let frac = x - x.floor();
                let idx = ((frac / self.mesh) as usize).min(n - 1);
                self.values[idx]
            }
            PotentialKind::Compact { support } => {
                if x < 0.0 || x >= support {
                    0.0
                } else {
                    let idx = ((x / self.mesh) as usize).min(n - 1);
                    self.values[idx]
                }
            }
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        PiecewisePotential { values: self.values.iter().map(|v| v * c).collect(), mesh: self.mesh, kind: self.kind }
    }

    /// `x ↦ q(x/τ)`: the same cells stretched by `τ`.
    pub fn dilated(&self, tau: f64) -> Result<Self> {
        match self.kind {
            PotentialKind::Compact { support } => Self::compact(self.values.clone(), support * tau),
            PotentialKind::Periodic => {
                Err(SpectralError::InvalidPotential("dilation is defined for compact potentials only".into()))
            }
        }
    }

    /// Mean over one period, or `∫ q` for a compact potential.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.mesh
    }

    /// Cell breakpoints lying in `[a, b]`.
    fn breakpoints(&self, a: f64, b: f64, out: &mut Vec<f64>) {
        let n = self.values.len() as i64;
        match self.kind {
            PotentialKind::Periodic => {
                let lo = (a * n as f64 - 1e-9).ceil() as i64;
                let hi = (b * n as f64 + 1e-9).floor() as i64;
                for k in lo..=hi {
                    let x = k as f64 / n as f64;
                    if x >= a && x <= b {
                        out.push(x);
                    }
                }
            }
            PotentialKind::Compact { support } => {
                for j in 0..=n {
                    let x = support * j as f64 / n as f64;
                    if x >= a && x <= b {
                        out.push(x);
                    }
                }
            }
        }
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(SpectralError::InvalidPotential(format!("non-finite cell value {v}")));
    }
    Ok(())
}

/// Smallest integer `≥ t`.
pub fn n_t(t: f64) -> u64 {
    let c = (t - 1e-12).ceil();
    c.max(1.0) as u64
}

/// Constant-value segment of a profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub value: f64,
    pub len: f64,
}

/// Piecewise-constant profile of `Σ potentials` restricted to `[a, b]`, with
/// adjacent equal cells merged.
pub fn profile(potentials: &[&PiecewisePotential], a: f64, b: f64) -> Vec<Segment> {
    if b <= a {
        return Vec::new();
    }
    let mut pts = vec![a, b];
    for p in potentials {
        p.breakpoints(a, b, &mut pts);
    }
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let tol = 1e-12 * b.abs().max(1.0);
    pts.dedup_by(|x, y| (*x - *y).abs() < tol);
    // keep the exact endpoints after dedup
    if let Some(last) = pts.last_mut() {
        *last = b;
    }
    pts[0] = a;

    let mut out: Vec<Segment> = Vec::with_capacity(pts.len());
    for w in pts.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let value: f64 = potentials.iter().map(|p| p.value_at(mid)).sum();
        match out.last_mut() {
            Some(last) if last.value == value => last.len += len,
            _ => out.push(Segment { value, len }),
        }
    }
    out
}

/// `∫_a^b |Σ potentials|` in closed form.
pub fn l1_norm(potentials: &[&PiecewisePotential], a: f64, b: f64) -> f64 {
    profile(potentials, a, b).iter().map(|s| s.value.abs() * s.len).sum()
}

/// Fourier data of the periodic background at index `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourierData {
    pub n: u64,
    /// `∫₀¹ p cos 2πnx`
    pub p_cn: f64,
    /// `∫₀¹ p sin 2πnx`
    pub p_sn: f64,
    /// `∫₀¹ p e^{-2πinx} = p_cn − i p_sn`
    pub p_n: C64,
}

/// Exact cell-wise Fourier coefficients of a periodic potential.
pub fn fourier_p(p: &PiecewisePotential, n: u64) -> Result<FourierData> {
    if !p.is_periodic() {
        return Err(SpectralError::InvalidPotential("fourier_p needs a periodic potential".into()));
    }
    let mut p_n = C64::new(0.0, 0.0);
    let h = p.mesh();
    if n == 0 {
        p_n = C64::new(p.integral(), 0.0);
    } else {
        let k = 2.0 * PI * n as f64;
        for (i, &v) in p.values().iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let a = i as f64 * h;
            let b = a + h;
            // ∫_a^b e^{-ikx} dx = (e^{-ika} - e^{-ikb}) / (ik)
            let ea = C64::from_polar(1.0, -k * a);
            let eb = C64::from_polar(1.0, -k * b);
            p_n += (ea - eb) / C64::new(0.0, k) * v;
        }
    }
    Ok(FourierData { n, p_cn: p_n.re, p_sn: -p_n.im, p_n })
}

/// `(e^u − 1)/u`, entire.
fn expm1_over(u: C64) -> C64 {
    if u.norm() < 1e-3 {
        let mut term = C64::new(1.0, 0.0);
        let mut sum = C64::new(1.0, 0.0);
        for k in 2..9 {
            term *= u / k as f64;
            sum += term;
        }
        sum
    } else {
        (u.exp() - 1.0) / u
    }
}

/// `q̂(z) = ∫₀ᵗ q(x) e^{2izx} dx`, exact per cell.
pub fn fourier_q(q: &PiecewisePotential, z: C64) -> C64 {
    let h = q.mesh();
    let mut acc = C64::new(0.0, 0.0);
    let step = C64::new(0.0, 2.0) * z * h;
    let ratio = expm1_over(step) * h;
    for (i, &v) in q.values().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let a = i as f64 * h;
        acc += (C64::new(0.0, 2.0) * z * a).exp() * ratio * v;
    }
    acc
}

/// `q̂_cn = Re q̂(πn)`.
pub fn q_cn(q: &PiecewisePotential, n: u64) -> f64 {
    fourier_q(q, C64::new(PI * n as f64, 0.0)).re
}

/// `C_F = 3(‖p‖₁ + ‖p+q‖_t) e^{2‖p+q‖_t + ‖p‖₁}` with `‖f‖_s = ∫₀ˢ|f|`.
pub fn cf_constant(p: &PiecewisePotential, q: &PiecewisePotential) -> f64 {
    let t = q.length();
    let np = l1_norm(&[p], 0.0, 1.0);
    let npq = l1_norm(&[p, q], 0.0, t);
    3.0 * (np + npq) * (2.0 * npq + np).exp()
}

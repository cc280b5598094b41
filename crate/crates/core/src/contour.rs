//! Zeros of an analytic function inside rectangles: argument principle along
//! the boundary, recursive quadrisection, Newton finish.

use crate::error::{Result, SpectralError};
use crate::jet::{Jet, C64};
use crate::roots::newton;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Rect {
    pub re0: f64,
    pub re1: f64,
    pub im0: f64,
    pub im1: f64,
}

impl Rect {
    pub fn new(re0: f64, re1: f64, im0: f64, im1: f64) -> Result<Self> {
        if !(re0 < re1 && im0 < im1) {
            return Err(SpectralError::InvalidArgument(format!(
                "degenerate rectangle [{re0}, {re1}] × [{im0}, {im1}]"
            )));
        }
        Ok(Rect { re0, re1, im0, im1 })
    }

    pub fn center(&self) -> C64 {
        C64::new(0.5 * (self.re0 + self.re1), 0.5 * (self.im0 + self.im1))
    }

    pub fn width(&self) -> f64 {
        self.re1 - self.re0
    }

    pub fn height(&self) -> f64 {
        self.im1 - self.im0
    }

    pub fn contains(&self, z: C64, slack: f64) -> bool {
        z.re >= self.re0 - slack && z.re <= self.re1 + slack && z.im >= self.im0 - slack && z.im <= self.im1 + slack
    }

    fn corners(&self) -> [C64; 4] {
        [
            C64::new(self.re0, self.im0),
            C64::new(self.re1, self.im0),
            C64::new(self.re1, self.im1),
            C64::new(self.re0, self.im1),
        ]
    }

    /// Four children split at `(xm, ym)`.
    fn split(&self, xm: f64, ym: f64) -> [Rect; 4] {
        [
            Rect { re0: self.re0, re1: xm, im0: self.im0, im1: ym },
            Rect { re0: xm, re1: self.re1, im0: self.im0, im1: ym },
            Rect { re0: self.re0, re1: xm, im0: ym, im1: self.im1 },
            Rect { re0: xm, re1: self.re1, im0: ym, im1: self.im1 },
        ]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ContourOptions {
    /// Allowed distance of a winding number from the nearest integer.
    pub integrality_tol: f64,
    /// Perturbations of a split line before giving up.
    pub max_shifts: usize,
    /// Boxes smaller than this (diagonal) are reported as clusters.
    pub min_box: f64,
    pub newton_tol: f64,
}

impl Default for ContourOptions {
    fn default() -> Self {
        ContourOptions { integrality_tol: 1e-2, max_shifts: 5, min_box: 1e-9, newton_tol: 1e-14 }
    }
}

/// Located zero of an analytic function.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Zero {
    #[serde(skip)]
    pub z: C64,
    pub multiplicity: u32,
    /// `|F(z)|/|F'(z)|` after the final Newton step.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

fn eval<F>(f: &F, z: C64) -> Result<Jet>
where
    F: Fn(C64) -> Result<Jet>,
{
    let v = f(z)?;
    if v.v.norm() == 0.0 || !v.v.norm().is_finite() {
        return Err(SpectralError::Contour(format!("F vanishes or overflows on the contour at {z}")));
    }
    Ok(v)
}

/// Phase change of `f` along the segment `[a, b]`.
fn edge_phase<F>(f: &F, a: C64, b: C64, fa: Jet) -> Result<(f64, Jet)>
where
    F: Fn(C64) -> Result<Jet>,
{
    let len = (b - a).norm();
    let dir = (b - a) / len;
    let hmax = (0.25 * len).min(0.5);
    let hmin = (1e-9 * len.max(1.0)).min(hmax);
    let mut acc = Kahan::default();
    let mut s = 0.0;
    let mut cur = fa;
    while s < len {
        let logd = (cur.d / cur.v).norm();
        let mut h = (0.2 / logd.max(1e-12)).clamp(hmin, hmax).min(len - s);
        loop {
            let s1 = if s + h >= len * (1.0 - 1e-15) { len } else { s + h };
            let z1 = if s1 == len { b } else { a + dir * s1 };
            let next = eval(f, z1)?;
            let darg = (next.v / cur.v).arg();
            let dz = dir * (s1 - s);
            // trapezoid estimate of Im ∫ F'/F guards against skipped windings
            let est = (0.5 * (cur.d / cur.v + next.d / next.v) * dz).im;
            if darg.abs() < 0.5 && (darg - est).abs() < 0.05 {
                acc.add(darg);
                s = s1;
                cur = next;
                break;
            }
            if h <= hmin {
                return Err(SpectralError::Contour(format!("step underflow near {z1}: contour passes through a zero")));
            }
            h = (0.5 * h).max(hmin);
        }
    }
    Ok((acc.sum, cur))
}

/// Winding number of `f` around the rectangle boundary (not rounded).
pub fn winding_number<F>(f: &F, rect: &Rect) -> Result<f64>
where
    F: Fn(C64) -> Result<Jet>,
{
    let c = rect.corners();
    let mut total = Kahan::default();
    let mut cur = eval(f, c[0])?;
    for i in 0..4 {
        let (phase, next) = edge_phase(f, c[i], c[(i + 1) % 4], cur)?;
        total.add(phase);
        cur = next;
    }
    Ok(total.sum / (2.0 * PI))
}

fn integer_winding<F>(f: &F, rect: &Rect, opts: &ContourOptions) -> Result<u32>
where
    F: Fn(C64) -> Result<Jet>,
{
    let w = winding_number(f, rect)?;
    let n = w.round();
    if (w - n).abs() > opts.integrality_tol || n < 0.0 {
        return Err(SpectralError::Contour(format!(
            "winding number {w:.4} around {rect:?} is not a non-negative integer"
        )));
    }
    Ok(n as u32)
}

/// Fallback Newton tolerances for a box known to hold one simple zero.
const LOOSE_NEWTON_TOLS: [f64; 3] = [1e-12, 1e-10, 1e-8];

/// Offsets (fractions of the box size) tried for split lines.
const SHIFTS: [f64; 6] = [0.0, 0.0137, -0.0291, 0.0419, -0.0573, 0.0661];

fn subdivide<F>(f: &F, rect: &Rect, count: u32, opts: &ContourOptions) -> Result<Vec<(Rect, u32)>>
where
    F: Fn(C64) -> Result<Jet> + Sync,
{
    let c = rect.center();
    let mut last_err = None;
    for &s in SHIFTS.iter().take(opts.max_shifts + 1) {
        let kids = rect.split(c.re + s * rect.width(), c.im - 0.7 * s * rect.height());
        let counts: Vec<Result<u32>> = kids.par_iter().map(|k| integer_winding(f, k, opts)).collect();
        match counts.into_iter().collect::<Result<Vec<u32>>>() {
            Ok(v) if v.iter().sum::<u32>() == count => {
                return Ok(kids.into_iter().zip(v).collect());
            }
            Ok(v) => {
                last_err = Some(SpectralError::Contour(format!(
                    "children of {rect:?} hold {} zeros, parent {count}",
                    v.iter().sum::<u32>()
                )))
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap())
}

fn resolve<F>(f: &F, rect: Rect, count: u32, opts: &ContourOptions) -> Result<Vec<Zero>>
where
    F: Fn(C64) -> Result<Jet> + Sync,
{
    if count == 0 {
        return Ok(Vec::new());
    }
    let diag = rect.width().hypot(rect.height());
    if count == 1 || diag < opts.min_box {
        let g = |z: C64| f(z).ok().map(|j| (j.v, j.d));
        let inside = |z: C64| rect.contains(z, 1e-12 * z.norm().max(1.0));
        let mut res = newton(g, rect.center(), opts.newton_tol, 60);
        // deep below the axis rounding in F caps the attainable accuracy
        for tol in LOOSE_NEWTON_TOLS {
            if count != 1 || res.converged || tol <= opts.newton_tol {
                break;
            }
            res = newton(g, rect.center(), tol, 60);
        }
        if res.converged && inside(res.z) || diag < opts.min_box {
            let residual = f(res.z).map(|j| (j.v / j.d).norm()).unwrap_or(f64::NAN);
            return Ok(vec![Zero {
                z: if res.converged { res.z } else { rect.center() },
                multiplicity: count,
                residual,
                iterations: res.iterations,
                converged: res.converged,
            }]);
        }
    }
    let kids = subdivide(f, &rect, count, opts)?;
    let found: Vec<Result<Vec<Zero>>> = kids.into_par_iter().map(|(k, c)| resolve(f, k, c, opts)).collect();
    let mut out = Vec::new();
    for r in found {
        out.extend(r?);
    }
    Ok(out)
}

/// All zeros of `f` inside `rect`, sorted by `(Re z, Im z)`.
pub fn zeros_in_rect<F>(f: &F, rect: Rect, opts: &ContourOptions) -> Result<Vec<Zero>>
where
    F: Fn(C64) -> Result<Jet> + Sync,
{
    let count = integer_winding(f, &rect, opts)?;
    let mut z = resolve(f, rect, count, opts)?;
    sort_zeros(&mut z);
    Ok(z)
}

pub fn sort_zeros(z: &mut [Zero]) {
    z.sort_by(|a, b| a.z.re.partial_cmp(&b.z.re).unwrap().then(a.z.im.partial_cmp(&b.z.im).unwrap()));
}

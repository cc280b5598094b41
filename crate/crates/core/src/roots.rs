//! Scalar root finders shared by the band and state solvers.

use crate::jet::C64;

/// Bracketed root of a real function by Illinois-modified regula falsi with
/// bisection fallback. `fa`, `fb` are the values at the ends and must have
/// opposite signs (or one of them be zero).
pub fn bracketed<F>(mut f: F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, xtol: f64) -> f64
where
    F: FnMut(f64) -> f64,
{
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    debug_assert!(fa.signum() != fb.signum());
    let mut side = 0i8;
    for it in 0..200 {
        let mid = 0.5 * (a + b);
        if (b - a).abs() <= xtol || mid == a || mid == b {
            break;
        }
        // alternate a secant step with plain bisection every fourth pass
        let mut x = if it % 4 == 3 { 0.5 * (a + b) } else { (a * fb - b * fa) / (fb - fa) };
        if !(x > a.min(b) && x < a.max(b)) {
            x = 0.5 * (a + b);
        }
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx.signum() == fb.signum() {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    if fa.abs() < fb.abs() {
        a
    } else {
        b
    }
}

/// Plain bisection; robust when `f` is only trustworthy in sign.
pub fn bisect<F>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> f64
where
    F: FnMut(f64) -> f64,
{
    let mut fa = f(a);
    for _ in 0..200 {
        if (b - a).abs() <= xtol {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Outcome of a complex Newton iteration.
#[derive(Clone, Copy, Debug)]
pub struct NewtonResult {
    pub z: C64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Newton iteration on an analytic function given as `z ↦ (f, f')`.
pub fn newton<F>(mut f: F, z0: C64, tol: f64, max_iter: usize) -> NewtonResult
where
    F: FnMut(C64) -> Option<(C64, C64)>,
{
    let mut z = z0;
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        let Some((v, d)) = f(z) else {
            return NewtonResult { z, residual, iterations: it, converged: false };
        };
        residual = v.norm();
        if d.norm() == 0.0 || !d.norm().is_finite() {
            return NewtonResult { z, residual, iterations: it, converged: false };
        }
        let step = v / d;
        z -= step;
        if step.norm() <= tol * z.norm().max(1.0) {
            let residual = f(z).map(|(v, _)| v.norm()).unwrap_or(residual);
            return NewtonResult { z, residual, iterations: it + 1, converged: true };
        }
    }
    NewtonResult { z, residual, iterations: max_iter, converged: false }
}

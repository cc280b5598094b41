//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

/// Eigenvalues of the Hill operator with `p(x) = Σ c_j e^{2πijx}` in the
/// basis `e^{iπmx}`, `|m| ≤ modes`, `m` of the given parity (even:
/// periodic, odd: antiperiodic). `fourier(j)` returns `c_j` for `j ≥ 0`;
/// `p` is real and even so `c_{−j} = c_j`.
pub fn hill_eigenvalues(fourier: impl Fn(i64) -> f64, modes: i64, odd: bool) -> Vec<f64> {
    let ms: Vec<i64> = (-modes..=modes).filter(|m| (m.rem_euclid(2) == 1) == odd).collect();
    let n = ms.len();
    let h = DMatrix::from_fn(n, n, |i, j| {
        let d = ms[i] - ms[j];
        let diag = if i == j { (PI * ms[i] as f64).powi(2) } else { 0.0 };
        diag + if d % 2 == 0 { fourier((d / 2).abs()) } else { 0.0 }
    });
    let mut ev: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Energy edges `(E_n⁻, E_n⁺)` of gaps `1..=n_max` from the Hill matrices.
pub fn hill_gap_edges(fourier: impl Fn(i64) -> f64 + Copy, modes: i64, n_max: usize) -> Vec<(f64, f64)> {
    let per = hill_eigenvalues(fourier, modes, false);
    let anti = hill_eigenvalues(fourier, modes, true);
    (1..=n_max)
        .map(|n| {
            let ev = if n % 2 == 0 { &per } else { &anti };
            (ev[n - 1], ev[n])
        })
        .collect()
}

/// `cos w − i z sin w / w`, `w² = z² − c`: vanishes exactly where the
/// outgoing solution of `−y'' + c·1_[0,1] y = z²y` meets the Dirichlet
/// condition.
pub fn free_jost(c: f64, z: C64) -> C64 {
    let w = (z * z - c).sqrt();
    let sinc = if w.norm() < 1e-8 { C64::new(1.0, 0.0) - w * w / 6.0 } else { w.sin() / w };
    w.cos() - C64::i() * z * sinc
}

/// Zeros of [`free_jost`] with `Re z > 0`, `Im z < 0` and `|z| ≤ r`.
/// Seeds come from iterating `w = (Log((z+w)/(z−w)) + 2πik)/(2i)`.
pub fn free_resonances(c: f64, r: f64) -> Vec<C64> {
    let mut out: Vec<C64> = Vec::new();
    for k in 1..=((r / PI).ceil() as i64 + 2) {
        let mut z = C64::new(PI * k as f64, -1.0);
        for _ in 0..200 {
            let w = (z * z - c).sqrt();
            let w1 = (((z + w) / (z - w)).ln() + C64::new(0.0, 2.0 * PI * k as f64)) / C64::new(0.0, 2.0);
            let z1 = (w1 * w1 + c).sqrt();
            if (z1 - z).norm() < 1e-13 {
                z = z1;
                break;
            }
            z = z1;
        }
        for _ in 0..50 {
            let h = 1e-6 * z.norm().max(1.0);
            let d = (free_jost(c, z + h) - free_jost(c, z - h)) / (2.0 * h);
            let step = free_jost(c, z) / d;
            z -= step;
            if step.norm() < 1e-15 * z.norm() {
                break;
            }
        }
        if z.re > 0.0
            && z.im < 0.0
            && z.norm() <= r
            && free_jost(c, z).norm() < 1e-9
            && !out.iter().any(|o| (o - z).norm() < 1e-6)
        {
            out.push(z);
        }
    }
    out.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
    out
}

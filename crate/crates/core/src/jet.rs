//! First-order jets in the momentum variable and exact transfer matrices for
//! constant-coefficient cells.
//!
//! Every quantity the solver produces is an entire function of `z`; carrying
//! `(value, d/dz)` pairs through the propagator products gives `F'` and `Δ'`
//! without extra solves.

use num_complex::Complex64;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub type C64 = Complex64;

/// Value and first derivative with respect to the spectral variable `z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: C64,
    pub d: C64,
}

impl Jet {
    pub const ZERO: Jet = Jet { v: C64::new(0.0, 0.0), d: C64::new(0.0, 0.0) };
    pub const ONE: Jet = Jet { v: C64::new(1.0, 0.0), d: C64::new(0.0, 0.0) };

    pub fn new(v: C64, d: C64) -> Self {
        Jet { v, d }
    }

    pub fn constant(v: C64) -> Self {
        Jet { v, d: C64::new(0.0, 0.0) }
    }

    /// The independent variable itself.
    pub fn var(z: C64) -> Self {
        Jet { v: z, d: C64::new(1.0, 0.0) }
    }

    pub fn scale(self, s: C64) -> Self {
        Jet { v: self.v * s, d: self.d * s }
    }

    pub fn sqr(self) -> Self {
        self * self
    }

    pub fn recip(self) -> Self {
        let inv = self.v.inv();
        Jet { v: inv, d: -self.d * inv * inv }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet { v: self.v + o.v, d: self.d + o.d }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet { v: self.v - o.v, d: self.d - o.d }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet { v: self.v * o.v, d: self.d * o.v + self.v * o.d }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet { v: -self.v, d: -self.d }
    }
}

/// 2×2 transfer matrix acting on `(y, y')`, entries carried as jets.
///
/// Column 0 is the solution with data `(1, 0)` at the left end, column 1 the
/// one with data `(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transfer {
    pub m: [[Jet; 2]; 2],
}

impl Transfer {
    pub fn identity() -> Self {
        Transfer { m: [[Jet::ONE, Jet::ZERO], [Jet::ZERO, Jet::ONE]] }
    }

    /// `self ∘ first`: propagate through `first`, then through `self`.
    pub fn after(&self, first: &Transfer) -> Transfer {
        let a = &self.m;
        let b = &first.m;
        let mut out = [[Jet::ZERO; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Transfer { m: out }
    }

    /// Inverse of a unimodular matrix.
    pub fn inverse_unimodular(&self) -> Transfer {
        let m = &self.m;
        Transfer { m: [[m[1][1], -m[0][1]], [-m[1][0], m[0][0]]] }
    }

    pub fn det(&self) -> Jet {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn apply(&self, y: Jet, yp: Jet) -> (Jet, Jet) {
        (self.m[0][0] * y + self.m[0][1] * yp, self.m[1][0] * y + self.m[1][1] * yp)
    }

    /// Repeated squaring; `n = 0` gives the identity.
    pub fn pow(&self, mut n: u64) -> Transfer {
        let mut acc = Transfer::identity();
        let mut base = *self;
        while n > 0 {
            if n & 1 == 1 {
                acc = base.after(&acc);
            }
            base = base.after(&base);
            n >>= 1;
        }
        acc
    }
}

/// `|w ℓ|` below which the cell entries switch to their Taylor series.
const SERIES_CUTOFF: f64 = 1e-3;

/// Scalar cell functions of `a = w²` for a cell of width `len`:
/// `c = cos(wℓ)`, `s = sin(wℓ)/w` and their `a`-derivatives.
fn cell_functions(a: C64, len: f64) -> (C64, C64, C64, C64) {
    let l2 = len * len;
    if (a * l2).norm() < SERIES_CUTOFF * SERIES_CUTOFF {
        // c  = Σ (-a ℓ²)^k / (2k)!,  s = ℓ Σ (-a ℓ²)^k / (2k+1)!
        let u = -a * l2;
        let mut c = C64::new(0.0, 0.0);
        let mut s = C64::new(0.0, 0.0);
        let mut dc = C64::new(0.0, 0.0);
        let mut ds = C64::new(0.0, 0.0);
        let mut upow = C64::new(1.0, 0.0);
        let mut upow_prev = C64::new(0.0, 0.0);
        let mut fact_even = 1.0_f64; // (2k)!
        let mut fact_odd = 1.0_f64; // (2k+1)!
        for k in 0..6 {
            if k > 0 {
                fact_even *= (2 * k - 1) as f64 * (2 * k) as f64;
                fact_odd *= (2 * k) as f64 * (2 * k + 1) as f64;
            }
            c += upow / fact_even;
            s += upow * len / fact_odd;
            if k > 0 {
                // d/da (u^k) = k u^{k-1} (-ℓ²)
                let du = upow_prev * (k as f64) * (-l2);
                dc += du / fact_even;
                ds += du * len / fact_odd;
            }
            upow_prev = upow;
            upow *= u;
        }
        (c, s, dc, ds)
    } else {
        let w = a.sqrt();
        let wl = w * len;
        let c = wl.cos();
        let s = wl.sin() / w;
        let dc = -s * (len / 2.0);
        let ds = (c * len - s) / (a * 2.0);
        (c, s, dc, ds)
    }
}

/// Exact propagator across a cell of width `len` carrying potential `value`,
/// for `-y'' + value·y = z² y`.
pub fn cell_transfer(value: f64, len: f64, z: C64) -> Transfer {
    let a = z * z - value;
    let da_dz = z * 2.0;
    let (c, s, dc, ds) = cell_functions(a, len);
    let cj = Jet::new(c, dc * da_dz);
    let sj = Jet::new(s, ds * da_dz);
    // -a s, derivative -(s + a ds/da) da/dz
    let lower = Jet::new(-a * s, -(s + a * ds) * da_dz);
    Transfer { m: [[cj, sj], [lower, cj]] }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_and_closed_form_agree_at_cutoff() {
        let len = 0.01;
        for &a in &[C64::new(0.0099, 0.0), C64::new(0.0, 0.0101), C64::new(-0.0101, 0.0)] {
            let a_lo = a * (0.999 * SERIES_CUTOFF / len).powi(2) / a.norm();
            let a_hi = a * (1.001 * SERIES_CUTOFF / len).powi(2) / a.norm();
            let lo = cell_functions(a_lo, len);
            let hi = cell_functions(a_hi, len);
            assert!((lo.0 - hi.0).norm() < 1e-8);
            assert!((lo.1 - hi.1).norm() < 1e-10);
            assert!((lo.3 - hi.3).norm() < 1e-9);
        }
    }

    #[test]
    fn cell_is_unimodular_and_derivative_matches_differences() {
        let z = C64::new(2.3, -0.7);
        let t = cell_transfer(1.5, 0.3, z);
        assert!((t.det().v - 1.0).norm() < 1e-13);
        let h = 1e-6;
        let tp = cell_transfer(1.5, 0.3, z + h);
        let tm = cell_transfer(1.5, 0.3, z - h);
        for i in 0..2 {
            for j in 0..2 {
                let fd = (tp.m[i][j].v - tm.m[i][j].v) / (2.0 * h);
                assert!((fd - t.m[i][j].d).norm() < 1e-7 * (1.0 + fd.norm()));
            }
        }
    }

    #[test]
    fn pow_matches_repeated_product() {
        let t = cell_transfer(-0.4, 0.7, C64::new(1.1, 0.2));
        let mut acc = Transfer::identity();
        for _ in 0..5 {
            acc = t.after(&acc);
        }
        let p = t.pow(5);
        for i in 0..2 {
            for j in 0..2 {
                assert!((acc.m[i][j].v - p.m[i][j].v).norm() < 1e-12);
                assert!((acc.m[i][j].d - p.m[i][j].d).norm() < 1e-10);
            }
        }
    }
}

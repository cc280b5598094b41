//! Named potential pairs used by the self-test and the test suites.

use crate::error::Result;
use crate::potential::PiecewisePotential;
use std::f64::consts::PI;

/// Cells per period for step backgrounds.
pub const STEP_CELLS: usize = 256;
/// Cells per period for sampled trigonometric backgrounds.
pub const SMOOTH_CELLS: usize = 2048;

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: String,
    pub p: PiecewisePotential,
    pub q: PiecewisePotential,
}

impl Fixture {
    pub fn new(name: impl Into<String>, p: PiecewisePotential, q: PiecewisePotential) -> Self {
        Fixture { name: name.into(), p, q }
    }
}

/// `a·cos 2πx` sampled at cell midpoints.
pub fn cosine(a: f64, cells: usize) -> Result<PiecewisePotential> {
    PiecewisePotential::sample_periodic(|x| a * (2.0 * PI * x).cos(), cells)
}

/// `a·sin 2πx` sampled at cell midpoints.
pub fn sine(a: f64, cells: usize) -> Result<PiecewisePotential> {
    PiecewisePotential::sample_periodic(|x| a * (2.0 * PI * x).sin(), cells)
}

/// Height `a` on cells `[lo, hi)` of a `STEP_CELLS` mesh, zero elsewhere.
pub fn step(a: f64, lo: usize, hi: usize) -> Result<PiecewisePotential> {
    let v = (0..STEP_CELLS).map(|i| if (lo..hi).contains(&i) { a } else { 0.0 }).collect();
    PiecewisePotential::periodic(v)
}

/// Step of height `a` on `[0, 5/16)`: no reflection symmetry, `p_sn ≠ 0`
/// for every `n` not divisible by 16.
pub fn asymmetric_step(a: f64) -> Result<PiecewisePotential> {
    step(a, 0, 80)
}

/// Step of height `a` on `[11/32, 21/32)`, even about `x = 1/2`.
pub fn even_step(a: f64) -> Result<PiecewisePotential> {
    step(a, 88, 168)
}

pub fn free(c: f64, t: f64) -> Result<Fixture> {
    Ok(Fixture::new(
        format!("free/q={c}"),
        PiecewisePotential::zero_periodic(),
        PiecewisePotential::constant_compact(c, t)?,
    ))
}

/// Five backgrounds and impurities of differing strength and support.
pub fn odd_count_set() -> Result<Vec<Fixture>> {
    let four = PiecewisePotential::periodic(vec![6.0, 0.0, 0.0, -2.0])?;
    Ok(vec![
        Fixture::new("cos/q=1", cosine(2.0, STEP_CELLS)?, PiecewisePotential::constant_compact(1.0, 1.0)?),
        Fixture::new("four-cell/q=-30", four.clone(), PiecewisePotential::constant_compact(-30.0, 2.0)?),
        Fixture::new("four-cell/q=25", four, PiecewisePotential::constant_compact(25.0, 1.5)?),
        Fixture::new("step/q-mixed", asymmetric_step(20.0)?, PiecewisePotential::compact(vec![1.5, -0.5, 2.0], 1.3)?),
        Fixture::new("weak-step/q=0.05", asymmetric_step(0.5)?, PiecewisePotential::constant_compact(0.05, 0.5)?),
    ])
}

/// An impurity whose own band overlaps the first gap of the background, so
/// that gap holds several eigenvalues.
pub fn multi_bound() -> Result<Fixture> {
    Ok(Fixture::new("step/q=8 on [0,6]", asymmetric_step(20.0)?, PiecewisePotential::constant_compact(8.0, 6.0)?))
}

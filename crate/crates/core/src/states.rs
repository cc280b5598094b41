//! Location and classification of states: real zeros of `F` in gap
//! closures and on the imaginary axis, complex zeros in the lower half
//! plane, counting functions and structural checks.

use crate::band::{quasimomentum_from, sin_k_from, BandStructure, GapRecord, Sheet, UnperturbedState};
use crate::contour::{zeros_in_rect, ContourOptions, Rect, Zero};
use crate::error::{Result, SpectralError};
use crate::jet::{cell_transfer, Jet, C64};
use crate::perturbed::{Impurity, PerturbedValues};
use crate::potential::{cf_constant, profile, Segment};
use crate::quad::gauss_legendre;
use crate::roots::bracketed;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StateKind {
    Bound,
    Antibound,
    Virtual,
    Resonance,
    /// Both Jost numerators are small and no coincidence rule applies.
    Unclassified,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StateSheet {
    Physical,
    Nonphysical,
    BranchPoint,
}

#[derive(Clone, Debug, Serialize)]
pub struct StateRecord {
    #[serde(skip)]
    pub z: C64,
    pub sheet: StateSheet,
    pub kind: StateKind,
    pub multiplicity: u32,
    pub gap_index: Option<u64>,
    pub f_residual: f64,
    /// `|A|` with the physical and the nonphysical `sin k`.
    pub jost_physical: f64,
    pub jost_nonphysical: f64,
    pub iterations: usize,
    pub converged: bool,
    pub note: Option<String>,
}

impl StateRecord {
    pub fn lambda(&self) -> C64 {
        self.z * self.z
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StateOptions {
    /// Grid points per gap for the sign scan.
    pub samples: usize,
    /// Ratio below which one Jost numerator counts as vanishing.
    pub ratio_tol: f64,
    /// `|Φ(n_t)|/|Φ'(n_t)|` below which `Φ(n_t, μ_n) = 0`.
    pub coincidence_tol: f64,
    pub contour: ContourOptions,
}

impl Default for StateOptions {
    fn default() -> Self {
        StateOptions { samples: 256, ratio_tol: 1e-4, coincidence_tol: 1e-8, contour: ContourOptions::default() }
    }
}

/// Real zeros of a real-valued function on `[a, b]`, with multiplicity
/// 1 (sign change) or 2 (touching minimum of `|g|`).
fn scan_real_zeros<G>(g: G, a: f64, b: f64, samples: usize) -> Result<Vec<(f64, u32)>>
where
    G: Fn(f64) -> Result<(f64, f64)> + Sync,
{
    let xs: Vec<f64> = (0..=samples).map(|i| a + (b - a) * i as f64 / samples as f64).collect();
    let vals: Vec<(f64, f64)> = xs.par_iter().map(|&x| g(x)).collect::<Result<_>>()?;
    let scale = vals.iter().map(|v| v.0.abs()).fold(0.0, f64::max);
    // run brackets down to adjacent floats: near a band edge the sheet test
    // amplifies location errors through the square root
    let xtol = 0.0;
    let gv = |x: f64| g(x).map(|v| v.0).unwrap_or(f64::NAN);
    let gd = |x: f64| g(x).map(|v| v.1).unwrap_or(f64::NAN);
    let mut out = Vec::new();
    for i in 0..=samples {
        if vals[i].0 == 0.0 {
            // exact node zero: touching if both neighbours share a sign
            let l = if i > 0 { vals[i - 1].0 } else { -vals[i + 1].0 };
            let r = if i < samples { vals[i + 1].0 } else { -l };
            out.push((xs[i], if l.signum() == r.signum() { 2 } else { 1 }));
        }
    }
    for i in 0..samples {
        let (f0, f1) = (vals[i].0, vals[i + 1].0);
        if f0 != 0.0 && f1 != 0.0 && f0.signum() != f1.signum() {
            out.push((bracketed(gv, xs[i], xs[i + 1], f0, f1, xtol), 1));
        }
    }
    // touching zeros or close pairs hidden between samples
    for i in 1..samples {
        let (fl, fm, fr) = (vals[i - 1].0, vals[i].0, vals[i + 1].0);
        if fm == 0.0 || !(fm.abs() < fl.abs() && fm.abs() <= fr.abs()) {
            continue;
        }
        if fl.signum() != fm.signum() || fr.signum() != fm.signum() {
            continue;
        }
        let (dl, dr) = (vals[i - 1].1, vals[i + 1].1);
        if dl.signum() == dr.signum() {
            continue;
        }
        let xm = bracketed(gd, xs[i - 1], xs[i + 1], dl, dr, xtol);
        let fx = gv(xm);
        if fx.signum() != fm.signum() {
            out.push((bracketed(gv, xs[i - 1], xm, fl, fx, xtol), 1));
            out.push((bracketed(gv, xm, xs[i + 1], fx, fr, xtol), 1));
        } else if fx.abs() <= 1e-10 * scale {
            out.push((xm, 2));
        }
    }
    out.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    Ok(out)
}

fn real_f(imp: &Impurity, x: f64) -> Result<(f64, f64)> {
    let f = imp.f(C64::new(x, 0.0))?;
    Ok((f.v.re, f.d.re))
}

/// `F(iy)` and `dF(iy)/dy`, both real.
fn imag_f(imp: &Impurity, y: f64) -> Result<(f64, f64)> {
    let f = imp.f(C64::new(0.0, y))?;
    Ok((f.v.re, (C64::new(0.0, 1.0) * f.d).re))
}

fn numerators(pv: &PerturbedValues) -> (f64, f64) {
    let (a, b) = pv.jost_numerators();
    (a.norm(), b.norm())
}

fn record(
    z: C64,
    sheet: StateSheet,
    kind: StateKind,
    mult: u32,
    gap: Option<u64>,
    pv: &PerturbedValues,
) -> StateRecord {
    let (jp, jn) = numerators(pv);
    let f = pv.entire_f();
    StateRecord {
        z,
        sheet,
        kind,
        multiplicity: mult,
        gap_index: gap,
        f_residual: (f.v / f.d).norm(),
        jost_physical: jp,
        jost_nonphysical: jn,
        iterations: 0,
        converged: true,
        note: None,
    }
}

/// Ratio test on the Jost numerators.
fn ratio_kind(pv: &PerturbedValues, tol: f64) -> Option<Sheet> {
    let (jp, jn) = numerators(pv);
    if jp <= tol * jn {
        Some(Sheet::Physical)
    } else if jn <= tol * jp {
        Some(Sheet::Nonphysical)
    } else {
        None
    }
}

/// Fallback when the ratio test is indecisive near a band edge: `sin²k` is
/// computed from a near-cancelling `1 − Δ²`, and the spread between that and
/// `−(β² + φ₁θ₁')` measures the noise it carries into `A±`. The smaller
/// numerator wins if it sits at the noise floor and the larger one is far
/// above it.
fn noise_kind(pv: &PerturbedValues) -> Option<Sheet> {
    let m = &pv.mono;
    let (d, b) = (m.delta.v, m.beta.v);
    let s2 = 1.0 - d * d;
    let ds2 = (s2 + b * b + m.phi1.v * m.theta1p.v).norm() + f64::EPSILON * (1.0 + d.norm_sqr());
    let s = sin_k_from(m, Sheet::Physical).value;
    if s.norm_sqr() <= 4.0 * ds2 {
        return None;
    }
    let ds = ds2 / (2.0 * s.norm());
    let phi0 = pv.phi_t0.v.norm();
    let terms = (m.phi1.v * pv.theta_t0.v).norm() + (b.norm() + s.norm()) * phi0;
    let noise = phi0 * ds + 8.0 * f64::EPSILON * terms;
    let (jp, jn) = numerators(pv);
    let (lo, hi, sheet) = if jp <= jn { (jp, jn, Sheet::Physical) } else { (jn, jp, Sheet::Nonphysical) };
    (lo <= 10.0 * noise && hi >= 100.0 * noise).then_some(sheet)
}

fn classify_gap_zero(imp: &Impurity, gap: &GapRecord, x: f64, mult: u32, opts: &StateOptions) -> Result<StateRecord> {
    let n = gap.n;
    let pv = imp.values(C64::new(x, 0.0))?;
    let tolv = gap.virtual_tol();
    for edge in [gap.e_minus, gap.e_plus] {
        if (x - edge).abs() <= tolv {
            return Ok(record(C64::new(x, 0.0), StateSheet::BranchPoint, StateKind::Virtual, mult, Some(n), &pv));
        }
    }
    let mu_at_edge = matches!(gap.h0_state, UnperturbedState::VirtualLeft | UnperturbedState::VirtualRight);
    if !mu_at_edge && (x - gap.mu_n).abs() <= 1e-10 * n as f64 {
        // pole of one Weyl function: decide via Φ(n_t, μ_n) = 0
        let at_mu = imp.values(C64::new(gap.mu_n, 0.0))?;
        let dirichlet = at_mu.phi_nt.v.norm() <= opts.coincidence_tol * at_mu.phip_nt.v.norm();
        let unperturbed = match gap.h0_state {
            UnperturbedState::Bound => StateKind::Bound,
            UnperturbedState::Antibound => StateKind::Antibound,
            _ => StateKind::Unclassified,
        };
        let kind = match (dirichlet, unperturbed) {
            (_, StateKind::Unclassified) => StateKind::Unclassified,
            (true, k) => k,
            (false, StateKind::Bound) => StateKind::Antibound,
            (false, _) => StateKind::Bound,
        };
        let sheet = if kind == StateKind::Bound { StateSheet::Physical } else { StateSheet::Nonphysical };
        let mut r = record(C64::new(x, 0.0), sheet, kind, mult, Some(n), &pv);
        r.note = Some(format!("at μ_n; Φ(n_t, μ_n) = 0: {dirichlet}"));
        return Ok(r);
    }
    let by_noise = || {
        let sheet = noise_kind(&pv)?;
        let (jp, jn) = numerators(&pv);
        Some((sheet, format!("noise-floor decision: |A+| = {jp:.3e}, |A-| = {jn:.3e}")))
    };
    let decided = match ratio_kind(&pv, opts.ratio_tol) {
        Some(sheet) => Some((sheet, None)),
        None => by_noise().map(|(sheet, note)| (sheet, Some(note))),
    };
    Ok(match decided {
        Some((Sheet::Physical, note)) => {
            let mut r = record(C64::new(x, 0.0), StateSheet::Physical, StateKind::Bound, mult, Some(n), &pv);
            r.note = note;
            r
        }
        Some((Sheet::Nonphysical, note)) => {
            let mut r = record(C64::new(x, 0.0), StateSheet::Nonphysical, StateKind::Antibound, mult, Some(n), &pv);
            r.note = note;
            r
        }
        None => {
            let (jp, jn) = numerators(&pv);
            let sheet = if jp <= jn { StateSheet::Physical } else { StateSheet::Nonphysical };
            let mut r = record(C64::new(x, 0.0), sheet, StateKind::Unclassified, mult, Some(n), &pv);
            r.note = Some(format!("ambiguous: |A+| = {jp:.3e}, |A-| = {jn:.3e}"));
            r
        }
    })
}

/// All states in the closure of the open gap `n`.
pub fn real_gap_states(imp: &Impurity, bands: &BandStructure, n: u64, opts: &StateOptions) -> Result<Vec<StateRecord>> {
    let gap = bands.gap(n).ok_or_else(|| SpectralError::InvalidArgument(format!("gap {n} not computed")))?;
    if gap.closed {
        return Err(SpectralError::InvalidArgument(format!("gap {n} is closed")));
    }
    // a zero within the edge uncertainty may land just outside the computed gap
    let eta = (1e-3 * gap.width()).max(2.0 * gap.edge_err);
    let zeros = scan_real_zeros(|x| real_f(imp, x), gap.e_minus - eta, gap.e_plus + eta, opts.samples)?;
    let tolv = gap.virtual_tol();
    let mut out = Vec::new();
    for (x, mult) in zeros {
        if x < gap.e_minus - tolv || x > gap.e_plus + tolv {
            return Err(SpectralError::Structural(format!("F vanishes at {x} on a band next to gap {n}")));
        }
        out.push(classify_gap_zero(imp, gap, x, mult, opts)?);
    }
    Ok(out)
}

/// Zeros of `F` on the positive real axis below the first band
/// (`0 < z ≤ √E₀⁺`, only when `E₀⁺ > 0`).
pub fn bottom_gap_states(imp: &Impurity, bands: &BandStructure, opts: &StateOptions) -> Result<Vec<StateRecord>> {
    if bands.e0_plus <= 0.0 {
        return Ok(Vec::new());
    }
    let e0 = bands.e0_plus.sqrt();
    let first = bands.gaps.first().map(|g| g.e_minus).unwrap_or(2.0 * e0);
    let hi = e0 + 1e-3 * (first - e0);
    let zeros = scan_real_zeros(|x| real_f(imp, x), 1e-9 * e0, hi, opts.samples)?;
    let mut out = Vec::new();
    for (x, mult) in zeros {
        let pv = imp.values(C64::new(x, 0.0))?;
        if (x - e0).abs() <= 1e-8 {
            out.push(record(C64::new(x, 0.0), StateSheet::BranchPoint, StateKind::Virtual, mult, Some(0), &pv));
            continue;
        }
        let r = match ratio_kind(&pv, opts.ratio_tol) {
            Some(Sheet::Physical) => {
                record(C64::new(x, 0.0), StateSheet::Physical, StateKind::Bound, mult, Some(0), &pv)
            }
            Some(Sheet::Nonphysical) => {
                record(C64::new(x, 0.0), StateSheet::Nonphysical, StateKind::Antibound, mult, Some(0), &pv)
            }
            None => record(C64::new(x, 0.0), StateSheet::Physical, StateKind::Unclassified, mult, Some(0), &pv),
        };
        out.push(r);
    }
    Ok(out)
}

/// Zeros of `F(iy)`, `0 < y ≤ y_max`. A zero of `Ψ₀⁺(iy)` is a bound state
/// at `iy`; a zero of `Ψ₀⁻(iy)` is an antibound state, reported at `−iy`.
pub fn imaginary_axis_states(imp: &Impurity, y_max: f64, opts: &StateOptions) -> Result<Vec<StateRecord>> {
    let samples = opts.samples.max((40.0 * y_max).ceil() as usize);
    let zeros = scan_real_zeros(|y| imag_f(imp, y), 1e-6, y_max, samples)?;
    let mut out = Vec::new();
    for (y, mult) in zeros {
        let pv = imp.values(C64::new(0.0, y))?;
        let r = match ratio_kind(&pv, opts.ratio_tol) {
            Some(Sheet::Physical) => {
                record(C64::new(0.0, y), StateSheet::Physical, StateKind::Bound, mult, Some(0), &pv)
            }
            Some(Sheet::Nonphysical) => {
                record(C64::new(0.0, -y), StateSheet::Nonphysical, StateKind::Antibound, mult, Some(0), &pv)
            }
            None => {
                let mut r = record(C64::new(0.0, y), StateSheet::Physical, StateKind::Unclassified, mult, Some(0), &pv);
                r.note = Some("ambiguous Jost numerators on the imaginary axis".into());
                r
            }
        };
        out.push(r);
    }
    Ok(out)
}

/// Margin kept between resonance boxes and the axes.
pub const AXIS_MARGIN: f64 = 1e-3;

/// Depth of the resonance scan below the real axis at radius `r`.
pub fn resonance_depth(t: f64, r: f64) -> f64 {
    3.0 + 2.0 / t * r.max(std::f64::consts::E).ln()
}

/// Complex zeros of `F` in a rectangle of the open lower half plane.
pub fn complex_resonances(imp: &Impurity, rect: Rect, opts: &StateOptions) -> Result<Vec<StateRecord>> {
    if rect.im1 > -AXIS_MARGIN {
        return Err(SpectralError::InvalidArgument(format!("rectangle must stay {AXIS_MARGIN} below the real axis")));
    }
    let f = |z: C64| imp.f(z);
    let zeros = zeros_in_rect(&f, rect, &opts.contour)?;
    zeros.iter().map(|z| resonance_record(imp, z, opts)).collect()
}

fn resonance_record(imp: &Impurity, zero: &Zero, opts: &StateOptions) -> Result<StateRecord> {
    let pv = imp.values(zero.z)?;
    let on_axis = zero.z.re.abs() < 1e-9 * zero.z.norm().max(1.0);
    let conj_bound = on_axis && matches!(ratio_kind(&pv, opts.ratio_tol), Some(Sheet::Nonphysical));
    let kind = if conj_bound { StateKind::Bound } else { StateKind::Resonance };
    let z = if conj_bound { zero.z.conj() } else { zero.z };
    let sheet = if conj_bound { StateSheet::Physical } else { StateSheet::Nonphysical };
    let mut r = record(z, sheet, kind, zero.multiplicity, None, &pv);
    r.f_residual = zero.residual;
    r.iterations = zero.iterations;
    r.converged = zero.converged;
    Ok(r)
}

/// Complex zeros in `0 < Re z ≤ r`, `−depth ≤ Im z < 0`, tiled along the
/// real axis. A zero on a tile boundary makes the winding undefined; the
/// tiling is then moved and the scan repeated.
pub fn lower_quadrant_zeros(imp: &Impurity, r: f64, opts: &StateOptions) -> Result<Vec<StateRecord>> {
    let mut last = None;
    for attempt in 0..TILING_ATTEMPTS {
        match tiled_scan(imp, r, attempt, opts) {
            Err(e @ SpectralError::Contour(_)) => last = Some(e),
            other => return other,
        }
    }
    Err(last.unwrap())
}

const TILING_ATTEMPTS: usize = 4;

fn tiled_scan(imp: &Impurity, r: f64, attempt: usize, opts: &StateOptions) -> Result<Vec<StateRecord>> {
    let k = attempt as f64;
    let depth = resonance_depth(imp.t, r) * (1.0 + 0.0173 * k);
    let shift = 0.0123 + 0.0291 * k;
    let tiles = (r / PI).ceil().max(1.0) as usize;
    let edges: Vec<f64> = (0..=tiles)
        .map(|i| {
            AXIS_MARGIN + (r - AXIS_MARGIN) * i as f64 / tiles as f64 + if i > 0 && i < tiles { shift } else { 0.0 }
        })
        .collect();
    let found: Vec<Result<Vec<StateRecord>>> = (0..tiles)
        .into_par_iter()
        .map(|i| {
            let rect = Rect::new(edges[i], edges[i + 1], -depth, -AXIS_MARGIN)?;
            complex_resonances(imp, rect, opts)
        })
        .collect();
    let mut out = Vec::new();
    for f in found {
        out.extend(f?);
    }
    Ok(out)
}

/// Every zero of `F` with `|z| ≤ r` in the closed right half plane,
/// grouped by where it lives.
#[derive(Clone, Debug, Default)]
pub struct StateSet {
    pub r: f64,
    pub bottom: Vec<StateRecord>,
    pub gaps: Vec<StateRecord>,
    /// Points of closed gaps, each a simple zero of `F`.
    pub closed_gap_zeros: Vec<f64>,
    pub imaginary: Vec<StateRecord>,
    /// Zeros with `Re z > 0`, `Im z < 0` off the axes.
    pub lower: Vec<StateRecord>,
}

impl StateSet {
    pub fn bound_states(&self) -> impl Iterator<Item = &StateRecord> {
        self.bottom.iter().chain(&self.gaps).chain(&self.imaginary).filter(|s| s.kind == StateKind::Bound)
    }

    pub fn resonances(&self) -> impl Iterator<Item = &StateRecord> {
        self.lower.iter().filter(|s| s.kind == StateKind::Resonance)
    }

    pub fn in_gap(&self, n: u64) -> Vec<&StateRecord> {
        self.gaps.iter().filter(|s| s.gap_index == Some(n)).collect()
    }

    /// Zeros of `F` in `|z| ≤ r` over the whole plane.
    pub fn count_total(&self, r: f64) -> u64 {
        let within = |s: &&StateRecord| s.z.norm() <= r;
        let m = |s: &StateRecord| s.multiplicity as u64;
        let real: u64 = self.bottom.iter().chain(&self.gaps).filter(within).map(m).sum::<u64>()
            + self.closed_gap_zeros.iter().filter(|&&x| x <= r).count() as u64;
        let imag: u64 = self.imaginary.iter().filter(within).map(m).sum();
        let quad: u64 = self.lower.iter().filter(within).map(m).sum();
        2 * real + 2 * imag + 4 * quad
    }

    /// Zeros of `F` in the open lower half plane off the imaginary axis.
    pub fn count_lower(&self, r: f64) -> u64 {
        2 * self.lower.iter().filter(|s| s.z.norm() <= r).map(|s| s.multiplicity as u64).sum::<u64>()
    }
}

fn closed_gap_zero(imp: &Impurity, gap: &GapRecord) -> Result<f64> {
    let h = 1e-6 * gap.n as f64;
    let (a, b) = (gap.e_ext - h, gap.e_ext + h);
    let (fa, fb) = (real_f(imp, a)?.0, real_f(imp, b)?.0);
    if fa.signum() == fb.signum() {
        return Err(SpectralError::Structural(format!("no sign change of F across closed gap {}", gap.n)));
    }
    Ok(bracketed(|x| real_f(imp, x).map(|v| v.0).unwrap_or(f64::NAN), a, b, fa, fb, 1e-15 * b))
}

/// Locate every zero of `F` with `|z| ≤ r`.
pub fn scan_states(imp: &Impurity, bands: &BandStructure, r: f64, opts: &StateOptions) -> Result<StateSet> {
    let mut set = real_states(imp, bands, r, opts)?;
    let y_max = resonance_depth(imp.t, r).min(r);
    set.imaginary = imaginary_axis_states(imp, y_max, opts)?;
    set.lower = lower_quadrant_zeros(imp, r, opts)?.into_iter().filter(|s| s.z.norm() <= r).collect();
    Ok(set)
}

/// The real-axis part of [`scan_states`]: bottom gap, open gaps and closed
/// gap points with `|z| ≤ r`.
pub fn real_states(imp: &Impurity, bands: &BandStructure, r: f64, opts: &StateOptions) -> Result<StateSet> {
    let last = bands.gaps.last().map(|g| g.e_plus).unwrap_or(0.0);
    if last < r {
        return Err(SpectralError::InvalidArgument(format!("band data reach only {last:.3}, below r = {r}")));
    }
    let mut set = StateSet { r, ..Default::default() };
    set.bottom = bottom_gap_states(imp, bands, opts)?.into_iter().filter(|s| s.z.norm() <= r).collect();
    let within: Vec<&GapRecord> = bands.gaps.iter().filter(|g| g.e_minus <= r).collect();
    let per_gap: Vec<Result<(Vec<StateRecord>, Option<f64>)>> = within
        .par_iter()
        .map(|g| {
            if g.closed {
                Ok((Vec::new(), Some(closed_gap_zero(imp, g)?)))
            } else {
                Ok((real_gap_states(imp, bands, g.n, opts)?, None))
            }
        })
        .collect();
    for res in per_gap {
        let (states, closed) = res?;
        set.gaps.extend(states.into_iter().filter(|s| s.z.norm() <= r));
        set.closed_gap_zeros.extend(closed.filter(|&x| x <= r));
    }
    Ok(set)
}

/// Least-squares slope of `N(r)` against `r`.
pub fn slope(rs: &[f64], ns: &[f64]) -> f64 {
    let m = rs.len() as f64;
    let mr = rs.iter().sum::<f64>() / m;
    let mn = ns.iter().sum::<f64>() / m;
    let num: f64 = rs.iter().zip(ns).map(|(r, n)| (r - mr) * (n - mn)).sum();
    let den: f64 = rs.iter().map(|r| (r - mr).powi(2)).sum();
    num / den
}

#[derive(Clone, Debug, Serialize)]
pub struct CountReport {
    pub r: Vec<f64>,
    pub total: Vec<u64>,
    pub lower: Vec<u64>,
    pub slope_total: f64,
    pub slope_lower: f64,
    pub expected_total: f64,
    pub expected_lower: f64,
}

impl CountReport {
    pub fn relative_error_total(&self) -> f64 {
        (self.slope_total - self.expected_total).abs() / self.expected_total
    }

    pub fn relative_error_lower(&self) -> f64 {
        (self.slope_lower - self.expected_lower).abs() / self.expected_lower
    }
}

/// Counting functions on `r ∈ [r_lo, r_hi]` with unit spacing and their
/// slopes against `2(1+2t)/π` and `2t/π`.
pub fn counting(set: &StateSet, t: f64, r_lo: f64, r_hi: f64) -> Result<CountReport> {
    if r_hi > set.r || r_lo >= r_hi {
        return Err(SpectralError::InvalidArgument(format!(
            "count range [{r_lo}, {r_hi}] not covered by the scan radius {}",
            set.r
        )));
    }
    let steps = (r_hi - r_lo).ceil() as usize;
    let r: Vec<f64> = (0..=steps).map(|i| r_lo + (r_hi - r_lo) * i as f64 / steps as f64).collect();
    let total: Vec<u64> = r.iter().map(|&x| set.count_total(x)).collect();
    let lower: Vec<u64> = r.iter().map(|&x| set.count_lower(x)).collect();
    let tf: Vec<f64> = total.iter().map(|&v| v as f64).collect();
    let lf: Vec<f64> = lower.iter().map(|&v| v as f64).collect();
    Ok(CountReport {
        slope_total: slope(&r, &tf),
        slope_lower: slope(&r, &lf),
        expected_total: 2.0 * (1.0 + 2.0 * t) / PI,
        expected_lower: 2.0 * t / PI,
        r,
        total,
        lower,
    })
}

/// Gap index from which `F` has exactly one simple real zero per gap.
pub fn simple_zero_threshold(imp: &Impurity) -> f64 {
    1.0 + 4.0 * cf_constant(&imp.p, &imp.q) * (imp.t * PI / 2.0).exp()
}

/// Whether `z` lies in the zero-free domain `4C_F e^{2|Im z|} < |z|`.
pub fn in_forbidden_domain(cf: f64, z: C64) -> bool {
    4.0 * cf * (2.0 * z.im.abs()).exp() < z.norm()
}

/// `|z sin z| ≤ C_F e^{(2t+1)|Im z|}`.
pub fn satisfies_log_law(cf: f64, t: f64, z: C64) -> bool {
    (z * z.sin()).norm() <= cf * ((2.0 * t + 1.0) * z.im.abs()).exp()
}

/// Norming constant `(−1)ⁿ F'(z) sinh h / (z A₋²)` of a bound state.
pub fn norming_constant(imp: &Impurity, state: &StateRecord) -> Result<f64> {
    let pv = imp.values(state.z)?;
    let n = state.gap_index.unwrap_or(0);
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let h = quasimomentum_from(&pv.mono, Sheet::Physical).im;
    let a_minus = pv.jost_numerator(Sheet::Nonphysical);
    let c = sign * pv.entire_f().d * h.sinh() / (state.z * a_minus * a_minus);
    Ok(c.re)
}

/// `∫ y²` over `segs`, given `(y, y')` at the right end; values inside each
/// piece come from inverse propagation, which is stable for solutions
/// decaying to the right. Returns the integral and the state at the left end.
fn integrate_backward(segs: &[Segment], right: (C64, C64), z: C64) -> (C64, (C64, C64)) {
    let mut y = Jet::constant(right.0);
    let mut yp = Jet::constant(right.1);
    let mut total = C64::new(0.0, 0.0);
    for seg in segs.iter().rev() {
        let w = (z * z - seg.value).sqrt().norm().max(1.0);
        let pieces = (seg.len * w / 0.5).ceil().max(1.0) as usize;
        let h = seg.len / pieces as f64;
        for _ in 0..pieces {
            let mut acc = C64::new(0.0, 0.0);
            for (back, weight) in gauss_legendre(h) {
                let (u, _) = cell_transfer(seg.value, -back, z).apply(y, yp);
                acc += u.v * u.v * weight;
            }
            total += acc;
            let prev = cell_transfer(seg.value, -h, z).apply(y, yp);
            y = prev.0;
            yp = prev.1;
        }
    }
    (total, (y.v, yp.v))
}

/// `∫₀^∞ Ψ⁺(x)²dx` at a bound state by Gauss–Legendre quadrature on
/// `[0, n_t]` and over one period, with the geometric Floquet tail.
pub fn norming_quadrature(imp: &Impurity, state: &StateRecord) -> Result<f64> {
    let z = state.z;
    let pv = imp.values(z)?;
    let m = pv.weyl(Sheet::Physical)?;
    let xi = sin_k_from(&pv.mono, Sheet::Physical).multiplier;
    let nt = imp.n_t as f64;
    // Ψ⁺(x + 1) = ξ Ψ⁺(x) beyond the support, with Ψ⁺(0) = 1, Ψ⁺'(0) = m
    let (period, _) = integrate_backward(&profile(&[&imp.p], 0.0, 1.0), (xi, xi * m), z);
    let scale = xi.powf(nt);
    let tail = scale * scale * period / (1.0 - xi * xi);
    let (head, _) = integrate_backward(&profile(&[&imp.p, &imp.q], 0.0, nt), (scale, scale * m), z);
    Ok((head + tail).re)
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub id: String,
    pub gap: Option<u64>,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct StructuralReport {
    pub checks: Vec<Check>,
}

impl StructuralReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, id: &str, gap: Option<u64>, passed: bool, detail: String) {
        self.checks.push(Check { id: id.into(), gap, passed, detail });
    }
}

/// Odd counts per gap, the bound/antibound exclusion, odd antibound counts
/// between consecutive eigenvalues, and norming-constant positivity.
pub fn structural_checks(
    imp: &Impurity,
    bands: &BandStructure,
    set: &StateSet,
    n_lo: u64,
    n_hi: u64,
) -> Result<StructuralReport> {
    let mut rep = StructuralReport::default();
    let threshold = simple_zero_threshold(imp);
    for g in bands.gaps.iter().filter(|g| !g.closed && g.n >= n_lo && g.n <= n_hi) {
        let states = set.in_gap(g.n);
        let total: u32 = states.iter().map(|s| s.multiplicity).sum();
        rep.push("odd-count", Some(g.n), total % 2 == 1, format!("{total} zeros of F"));
        if g.n as f64 >= threshold {
            let simple = total == 1 && states[0].multiplicity == 1;
            rep.push("single-simple-zero", Some(g.n), simple, format!("{total} zeros"));
        }
        let unclassified = states.iter().filter(|s| s.kind == StateKind::Unclassified).count();
        rep.push("classified", Some(g.n), unclassified == 0, format!("{unclassified} ambiguous"));

        let bound: Vec<f64> = states.iter().filter(|s| s.kind == StateKind::Bound).map(|s| s.z.re).collect();
        let anti: Vec<(f64, u32)> =
            states.iter().filter(|s| s.kind == StateKind::Antibound).map(|s| (s.z.re, s.multiplicity)).collect();
        let coincide = bound.iter().any(|b| anti.iter().any(|(a, _)| (a - b).abs() <= 1e-10 * b.abs().max(1.0)));
        rep.push("no-bound-antibound-coincidence", Some(g.n), !coincide, String::new());
        for w in bound.windows(2) {
            let between: u32 = anti.iter().filter(|(a, _)| *a > w[0] && *a < w[1]).map(|(_, m)| m).sum();
            rep.push(
                "odd-antibound-between-eigenvalues",
                Some(g.n),
                between % 2 == 1,
                format!("{between} antibound states in ({}, {})", w[0], w[1]),
            );
        }
    }
    for s in set.bound_states().filter(|s| s.multiplicity == 1) {
        let n = s.gap_index.unwrap_or(0);
        let pv = imp.values(s.z)?;
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let ratio = (sign * pv.entire_f().d / s.z).re;
        rep.push("derivative-sign", Some(n), ratio > 0.0, format!("(−1)ⁿF'/z = {ratio:.4e}"));
        let c = norming_constant(imp, s)?;
        rep.push("norming-positive", Some(n), c > 0.0, format!("C = {c:.6e} at z = {}", s.z));
        if pv.mono.phi1.v.norm() > 1e-8 {
            let quad = norming_quadrature(imp, s)?;
            let rel = (c - quad).abs() / quad.abs();
            rep.push("norming-quadrature", Some(n), rel < 1e-4, format!("formula {c:.8e}, quadrature {quad:.8e}"));
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PiecewisePotential;

    fn step_p() -> PiecewisePotential {
        PiecewisePotential::periodic(vec![3.0, 0.0, 0.0, -1.0]).unwrap()
    }

    #[test]
    fn unperturbed_states_sit_at_dirichlet_points() {
        let p = step_p();
        let q = PiecewisePotential::constant_compact(0.0, 1.0).unwrap();
        let imp = Impurity::new(&p, &q).unwrap();
        let bands = BandStructure::compute(&p, 6).unwrap();
        for g in bands.gaps.iter().filter(|g| !g.closed) {
            let s = real_gap_states(&imp, &bands, g.n, &StateOptions::default()).unwrap();
            assert_eq!(s.len(), 1, "gap {}", g.n);
            assert!((s[0].z.re - g.mu_n).abs() < 1e-10);
            let expect = match g.h0_state {
                UnperturbedState::Bound => StateKind::Bound,
                UnperturbedState::Antibound => StateKind::Antibound,
                _ => StateKind::Virtual,
            };
            assert_eq!(s[0].kind, expect, "gap {}", g.n);
        }
    }

    #[test]
    fn scan_finds_double_and_close_roots() {
        let g = |x: f64| Ok(((x - 0.5).powi(2) * (x - 0.8), 2.0 * (x - 0.5) * (x - 0.8) + (x - 0.5).powi(2)));
        let z = scan_real_zeros(g, 0.0, 1.0, 20).unwrap();
        let total: u32 = z.iter().map(|v| v.1).sum();
        assert_eq!(total, 3);
        let h = |x: f64| Ok(((x - 0.501) * (x - 0.503), 2.0 * x - 1.004));
        let z = scan_real_zeros(h, 0.0, 1.0, 10).unwrap();
        assert_eq!(z.len(), 2);
    }

    #[test]
    fn free_case_has_no_resonances() {
        let p = PiecewisePotential::zero_periodic();
        let q = PiecewisePotential::constant_compact(0.0, 1.0).unwrap();
        let imp = Impurity::new(&p, &q).unwrap();
        let rect = Rect::new(0.5, 20.0, -5.0, -0.01).unwrap();
        assert!(complex_resonances(&imp, rect, &StateOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn bound_state_of_a_deep_well() {
        // p = 0, q = −10 on [0,1]: eigenvalue where tan w = −w/κ
        let p = PiecewisePotential::zero_periodic();
        let q = PiecewisePotential::constant_compact(-10.0, 1.0).unwrap();
        let imp = Impurity::new(&p, &q).unwrap();
        let s = imaginary_axis_states(&imp, 4.0, &StateOptions::default()).unwrap();
        let bound: Vec<_> = s.iter().filter(|s| s.kind == StateKind::Bound).collect();
        assert_eq!(bound.len(), 1);
        let kappa = bound[0].z.im;
        let w = (10.0 - kappa * kappa).sqrt();
        assert!((w / w.tan() + kappa).abs() < 1e-9);
    }
}

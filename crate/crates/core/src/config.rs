//! Run configuration: TOML in, validated potentials and options out.
//!
//! ```toml
//! mesh = 256
//! n_max = 40
//! r_max = 60.0
//!
//! [p]
//! terms = [{ kind = "cos", a = 2.0, k = 1 }]
//!
//! [q]
//! support = 1.0
//! terms = [{ kind = "const", a = -1.0 }]
//! ```

use crate::contour::Rect;
use crate::error::{Result, SpectralError};
use crate::potential::PiecewisePotential;
use crate::states::StateOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

/// One summand of a potential, evaluated at `x` in the cell.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Term {
    Const {
        a: f64,
    },
    /// `a·cos 2πkx`
    Cos {
        a: f64,
        k: u32,
    },
    /// `a·sin 2πkx`
    Sin {
        a: f64,
        k: u32,
    },
    /// `a` on `[from, to)`
    Step {
        a: f64,
        from: f64,
        to: f64,
    },
}

impl Term {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Term::Const { a } => a,
            Term::Cos { a, k } => a * (2.0 * PI * k as f64 * x).cos(),
            Term::Sin { a, k } => a * (2.0 * PI * k as f64 * x).sin(),
            Term::Step { a, from, to } => {
                if x >= from && x < to {
                    a
                } else {
                    0.0
                }
            }
        }
    }
}

/// Either explicit cell values or a sum of terms sampled at cell midpoints.
#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    /// Length of the support; the period (1) for `p`.
    pub support: Option<f64>,
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub terms: Vec<Term>,
    /// Cell count; defaults to `mesh · support`.
    pub cells: Option<usize>,
}

impl PotentialSpec {
    fn build(&self, what: &str, periodic: bool, mesh: usize) -> Result<PiecewisePotential> {
        let bad = |m: String| SpectralError::InvalidArgument(format!("[{what}] {m}"));
        let len = match (periodic, self.support) {
            (true, None) => 1.0,
            (true, Some(_)) => return Err(bad("the periodic background has period 1; drop `support`".into())),
            (false, Some(t)) if t > 0.0 && t.is_finite() => t,
            (false, _) => return Err(bad("`support` must be a positive length".into())),
        };
        let values = match (&self.values, self.terms.is_empty()) {
            (Some(_), false) => return Err(bad("give either `values` or `terms`, not both".into())),
            (Some(v), true) => {
                if self.cells.is_some_and(|c| c != v.len()) {
                    return Err(bad("`cells` disagrees with the length of `values`".into()));
                }
                v.clone()
            }
            (None, _) => {
                let cells = self.cells.unwrap_or(((mesh as f64) * len).ceil() as usize).max(1);
                let h = len / cells as f64;
                (0..cells)
                    .map(|i| {
                        let x = (i as f64 + 0.5) * h;
                        self.terms.iter().map(|t| t.eval(x)).sum()
                    })
                    .collect()
            }
        };
        if periodic {
            PiecewisePotential::periodic(values)
        } else {
            PiecewisePotential::compact(values, len)
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RectSpec {
    pub re: [f64; 2],
    pub im: [f64; 2],
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Jost-numerator ratio below which a numerator counts as zero.
    pub ratio: f64,
    pub coincidence: f64,
    /// Allowed distance between fitted and nominal decay orders.
    pub order: f64,
    /// Relative error allowed on counting slopes.
    pub count_slope: f64,
    /// Identity residuals in the self-test.
    pub identity: f64,
    pub factorization: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            ratio: 1e-4,
            coincidence: 1e-8,
            order: 0.5,
            count_slope: 0.1,
            identity: 1e-10,
            factorization: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub n_lo: u64,
    pub n_hi: u64,
    pub alpha: f64,
    pub max_first_n: u64,
    /// Radii for the counting slopes; `r_hi` defaults to `r_max`.
    pub r_lo: Option<f64>,
    pub r_hi: Option<f64>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            n_lo: 10,
            n_hi: 40,
            alpha: crate::asymptotics::DEFAULT_ALPHA,
            max_first_n: 20,
            r_lo: None,
            r_hi: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DosSpec {
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub points: Option<usize>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SmatrixSpec {
    pub bands: u64,
    pub points_per_band: usize,
}

impl Default for SmatrixSpec {
    fn default() -> Self {
        SmatrixSpec { bands: 5, points_per_band: 64 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AdiabaticSpec {
    pub gap: u64,
    /// Window as fractions of the energy gap.
    pub window: [f64; 2],
    pub taus: Vec<f64>,
    pub state_taus: Vec<f64>,
}

impl Default for AdiabaticSpec {
    fn default() -> Self {
        AdiabaticSpec { gap: 1, window: [0.25, 0.75], taus: vec![5.0, 10.0, 20.0, 40.0], state_taus: vec![5.0, 10.0] }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub p: PotentialSpec,
    pub q: PotentialSpec,
    /// Cells per unit length for sampled terms.
    #[serde(default = "default_mesh")]
    pub mesh: usize,
    #[serde(default = "default_n_max")]
    pub n_max: u64,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    #[serde(default)]
    pub rect: Vec<RectSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub dos: DosSpec,
    #[serde(default)]
    pub smatrix: SmatrixSpec,
    #[serde(default)]
    pub adiabatic: AdiabaticSpec,
}

fn default_mesh() -> usize {
    crate::potential::DEFAULT_CELLS_PER_UNIT
}

fn default_n_max() -> u64 {
    40
}

fn default_r_max() -> f64 {
    60.0
}

/// Potentials and options derived from a validated config.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub p: PiecewisePotential,
    pub q: PiecewisePotential,
    pub rects: Vec<Rect>,
    pub state_options: StateOptions,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| SpectralError::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SpectralError::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SpectralError::InvalidArgument(m.into()));
        if self.mesh == 0 {
            return bad("mesh must be positive");
        }
        if self.n_max == 0 {
            return bad("n_max must be positive");
        }
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return bad("r_max must be positive");
        }
        let t = &self.tolerances;
        let tols = [t.ratio, t.coincidence, t.order, t.count_slope, t.identity, t.factorization];
        if tols.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return bad("all tolerances must be positive");
        }
        let v = &self.verify;
        if v.n_lo == 0 || v.n_lo > v.n_hi {
            return bad("verify needs 1 ≤ n_lo ≤ n_hi");
        }
        if !(v.alpha > 0.0 && v.alpha < 1.0) {
            return bad("verify.alpha must lie in (0, 1)");
        }
        let a = &self.adiabatic;
        if !(0.0 <= a.window[0] && a.window[0] < a.window[1] && a.window[1] <= 1.0) {
            return bad("adiabatic.window must be increasing fractions in [0, 1]");
        }
        if a.taus.iter().chain(&a.state_taus).any(|&x| !(x > 0.0)) {
            return bad("adiabatic τ values must be positive");
        }
        if self.smatrix.points_per_band == 0 {
            return bad("smatrix.points_per_band must be positive");
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let p = self.p.build("p", true, self.mesh)?;
        let q = self.q.build("q", false, self.mesh)?;
        let rects = self.rect.iter().map(|r| Rect::new(r.re[0], r.re[1], r.im[0], r.im[1])).collect::<Result<_>>()?;
        let state_options = StateOptions {
            ratio_tol: self.tolerances.ratio,
            coincidence_tol: self.tolerances.coincidence,
            ..StateOptions::default()
        };
        Ok(Resolved { p, q, rects, state_options })
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

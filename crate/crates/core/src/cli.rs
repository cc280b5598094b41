//! Command-line front end. Each subcommand writes `<out>/<subcommand>.csv`
//! with the config hash in the first column of every row.

use crate::adiabatic::{adiabatic_check, AdiabaticReport};
use crate::asymptotics::{
    verify_d_and_f_bounds, verify_dirichlet, verify_edges, verify_even_case, verify_exponent, verify_side_prediction,
    verify_state_asymptotics, AsymptoticReport, PredictionReport, Verdict,
};
use crate::band::{BandStructure, Sheet};
use crate::config::{Resolved, RunConfig};
use crate::error::SpectralError;
use crate::fixtures;
use crate::hill::monodromy;
use crate::jet::C64;
use crate::perturbed::{smatrix, Impurity};
use crate::potential::{cf_constant, PiecewisePotential};
use crate::states::{
    complex_resonances, counting, imaginary_axis_states, in_forbidden_domain, lower_quadrant_zeros, real_states,
    resonance_depth, satisfies_log_law, scan_states, structural_checks, StateKind, StateRecord,
};
use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "halfcrystal", version, about = "Spectral picture of a half-line crystal with an impurity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Cells per unit length for sampled potentials.
    #[arg(long, global = true)]
    pub mesh: Option<usize>,
    #[arg(long, global = true)]
    pub nmax: Option<u64>,
    #[arg(long, global = true)]
    pub rmax: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Gap edges, Dirichlet eigenvalues and unperturbed states.
    Bands,
    /// Bound, antibound and virtual states on the real axis.
    States,
    /// Complex zeros of F below the real axis.
    Resonances,
    /// Integrated density of states.
    Dos,
    /// Scattering coefficient along the bands.
    Smatrix,
    /// Asymptotic, counting and structural checks.
    Verify,
    /// Prüfer counts for a dilated impurity.
    Adiabatic,
    /// Identity checks on built-in potentials.
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Bands => "bands",
            Command::States => "states",
            Command::Resonances => "resonances",
            Command::Dos => "dos",
            Command::Smatrix => "smatrix",
            Command::Verify => "verify",
            Command::Adiabatic => "adiabatic",
            Command::Selftest => "selftest",
        }
    }
}

/// Failed check: `module/check-id: detail`.
#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub module: &'static str,
    pub check: String,
    pub detail: String,
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}: {}", self.module, self.check, self.detail)
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric { module: &'static str, check: &'static str, detail: String },
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Numeric { check: "structural", .. } => 1,
            CliError::Numeric { .. } => 3,
        }
    }

    fn from_spectral(module: &'static str, e: SpectralError) -> Self {
        let check = match &e {
            SpectralError::InvalidPotential(_) | SpectralError::InvalidArgument(_) => {
                return CliError::Usage(format!("{module}: {e}"))
            }
            SpectralError::Range { .. } => "overflow",
            SpectralError::Bracket { .. } => "bracketing",
            SpectralError::PoleProximity { .. } => "pole-proximity",
            SpectralError::BranchPoint(_) => "branch-point",
            SpectralError::Structural(_) => "structural",
            SpectralError::Contour(_) => "contour",
        };
        CliError::Numeric { module, check, detail: e.to_string() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Io(m) => write!(f, "io: {m}"),
            CliError::Numeric { module, check, detail } => write!(f, "{module}/{check}: {detail}"),
        }
    }
}

/// Outcome of a completed subcommand.
#[derive(Debug)]
pub struct Outcome {
    pub artifact: PathBuf,
    pub rows: usize,
    pub summary: Vec<String>,
    pub failures: Vec<Failure>,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        u8::from(!self.failures.is_empty())
    }
}

/// Parse `args` (including the program name), run, print and map to an exit code.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(out) => {
            for line in &out.summary {
                println!("{line}");
            }
            for f in &out.failures {
                eprintln!("FAIL {f}");
            }
            println!("wrote {} rows to {}", out.rows, out.artifact.display());
            ExitCode::from(out.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

struct Ctx {
    cfg: Option<RunConfig>,
    hash: String,
    out: PathBuf,
}

impl Ctx {
    fn config(&self) -> std::result::Result<&RunConfig, CliError> {
        self.cfg.as_ref().ok_or_else(|| CliError::Usage("this subcommand needs --config".into()))
    }

    fn write<R: Serialize>(&self, cmd: Command, rows: &[R]) -> std::result::Result<PathBuf, CliError> {
        let io = |e: &dyn std::fmt::Display| CliError::Io(e.to_string());
        std::fs::create_dir_all(&self.out).map_err(|e| io(&e))?;
        let path = self.out.join(format!("{}.csv", cmd.name()));
        let mut w = csv::Writer::from_path(&path).map_err(|e| io(&e))?;
        for r in rows {
            w.serialize(r).map_err(|e| io(&e))?;
        }
        w.flush().map_err(|e| io(&e))?;
        Ok(path)
    }
}

pub fn run(cli: &Cli) -> std::result::Result<Outcome, CliError> {
    let cfg = match &cli.config {
        Some(path) => {
            let mut c = RunConfig::load(path).map_err(|e| CliError::Usage(e.to_string()))?;
            if let Some(m) = cli.mesh {
                c.mesh = m;
            }
            if let Some(n) = cli.nmax {
                c.n_max = n;
            }
            if let Some(r) = cli.rmax {
                c.r_max = r;
            }
            c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            Some(c)
        }
        None if cli.command == Command::Selftest => None,
        None => return Err(CliError::Usage(format!("{} needs --config", cli.command.name()))),
    };
    let hash = match &cfg {
        Some(c) => c.hash(),
        None => Sha256::digest(b"builtin").iter().take(8).map(|b| format!("{b:02x}")).collect(),
    };
    let out =
        cli.out.clone().or_else(|| cfg.as_ref().and_then(|c| c.out.clone())).unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Ctx { cfg, hash, out };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| dispatch(cli.command, &ctx))
}

fn dispatch(cmd: Command, ctx: &Ctx) -> std::result::Result<Outcome, CliError> {
    let m = cmd.name();
    let wrap = |e: SpectralError| CliError::from_spectral(m, e);
    let (rows, summary, failures) = match cmd {
        Command::Selftest => selftest(ctx).map_err(wrap)?,
        _ => {
            let cfg = ctx.config()?;
            let res = cfg.resolve().map_err(wrap)?;
            match cmd {
                Command::Bands => bands(ctx, cfg, &res).map_err(wrap)?,
                Command::States => states(ctx, cfg, &res).map_err(wrap)?,
                Command::Resonances => resonances(ctx, cfg, &res).map_err(wrap)?,
                Command::Dos => dos(ctx, cfg, &res).map_err(wrap)?,
                Command::Smatrix => scattering(ctx, cfg, &res).map_err(wrap)?,
                Command::Verify => verify(ctx, cfg, &res).map_err(wrap)?,
                Command::Adiabatic => adiabatic(ctx, cfg, &res).map_err(wrap)?,
                Command::Selftest => unreachable!(),
            }
        }
    };
    let artifact = match &rows {
        Rows::Bands(r) => ctx.write(cmd, r),
        Rows::States(r) => ctx.write(cmd, r),
        Rows::Dos(r) => ctx.write(cmd, r),
        Rows::Smatrix(r) => ctx.write(cmd, r),
        Rows::Verify(r) => ctx.write(cmd, r),
        Rows::Adiabatic(r) => ctx.write(cmd, r),
        Rows::Selftest(r) => ctx.write(cmd, r),
    }?;
    Ok(Outcome { artifact, rows: rows.len(), summary, failures })
}

enum Rows {
    Bands(Vec<BandRow>),
    States(Vec<StateRow>),
    Dos(Vec<DosRow>),
    Smatrix(Vec<SmatrixRow>),
    Verify(Vec<VerifyRow>),
    Adiabatic(Vec<AdiabaticRow>),
    Selftest(Vec<SelftestRow>),
}

impl Rows {
    fn len(&self) -> usize {
        match self {
            Rows::Bands(r) => r.len(),
            Rows::States(r) => r.len(),
            Rows::Dos(r) => r.len(),
            Rows::Smatrix(r) => r.len(),
            Rows::Verify(r) => r.len(),
            Rows::Adiabatic(r) => r.len(),
            Rows::Selftest(r) => r.len(),
        }
    }
}

type Produced = (Rows, Vec<String>, Vec<Failure>);

fn fail(module: &'static str, check: impl Into<String>, detail: impl Into<String>) -> Failure {
    Failure { module, check: check.into(), detail: detail.into() }
}

#[derive(Serialize)]
struct BandRow {
    hash: String,
    n: u64,
    e_minus: Option<f64>,
    e_plus: f64,
    energy_minus: Option<f64>,
    energy_plus: f64,
    e_ext: Option<f64>,
    mu_n: Option<f64>,
    h_n: Option<f64>,
    h_sn: Option<f64>,
    closed: bool,
    h0_state: String,
    edge_err: f64,
}

fn bands(ctx: &Ctx, cfg: &RunConfig, res: &Resolved) -> crate::Result<Produced> {
    let bs = BandStructure::compute(&res.p, cfg.n_max)?;
    let mut rows = vec![BandRow {
        hash: ctx.hash.clone(),
        n: 0,
        e_minus: None,
        e_plus: bs.e0_plus.max(0.0).sqrt(),
        energy_minus: None,
        energy_plus: bs.e0_plus,
        e_ext: None,
        mu_n: None,
        h_n: None,
        h_sn: None,
        closed: false,
        h0_state: String::new(),
        edge_err: 0.0,
    }];
    let mut failures = Vec::new();
    for g in &bs.gaps {
        let slack = g.edge_err + 1e-12 * g.e_plus;
        if g.mu_n < g.e_minus - slack || g.mu_n > g.e_plus + slack {
            failures.push(fail(
                "bands",
                "mu-interlacing",
                format!("μ_{} = {} outside [{}, {}]", g.n, g.mu_n, g.e_minus, g.e_plus),
            ));
        }
        rows.push(BandRow {
            hash: ctx.hash.clone(),
            n: g.n,
            e_minus: Some(g.e_minus),
            e_plus: g.e_plus,
            energy_minus: Some(g.e_minus * g.e_minus),
            energy_plus: g.e_plus * g.e_plus,
            e_ext: Some(g.e_ext),
            mu_n: Some(g.mu_n),
            h_n: Some(g.h_n),
            h_sn: Some(g.h_sn),
            closed: g.closed,
            h0_state: format!("{:?}", g.h0_state),
            edge_err: g.edge_err,
        });
    }
    let open = bs.gaps.iter().filter(|g| !g.closed).count();
    let summary = vec![format!("bands: E0+ = {}, {} gaps ({open} open)", bs.e0_plus, bs.gaps.len())];
    Ok((Rows::Bands(rows), summary, failures))
}

#[derive(Serialize)]
struct StateRow {
    hash: String,
    gap: Option<u64>,
    re: f64,
    im: f64,
    lambda_re: f64,
    lambda_im: f64,
    kind: String,
    sheet: String,
    multiplicity: u32,
    f_residual: f64,
    jost_physical: f64,
    jost_nonphysical: f64,
    converged: bool,
    note: String,
}

impl StateRow {
    fn new(hash: &str, s: &StateRecord) -> Self {
        let l = s.lambda();
        StateRow {
            hash: hash.into(),
            gap: s.gap_index,
            re: s.z.re,
            im: s.z.im,
            lambda_re: l.re,
            lambda_im: l.im,
            kind: format!("{:?}", s.kind),
            sheet: format!("{:?}", s.sheet),
            multiplicity: s.multiplicity,
            f_residual: s.f_residual,
            jost_physical: s.jost_physical,
            jost_nonphysical: s.jost_nonphysical,
            converged: s.converged,
            note: s.note.clone().unwrap_or_default(),
        }
    }
}

fn reach(bs: &BandStructure, r: f64) -> f64 {
    r.min(bs.gaps.last().map(|g| g.e_plus).unwrap_or(0.0))
}

fn states(ctx: &Ctx, cfg: &RunConfig, res: &Resolved) -> crate::Result<Produced> {
    let bs = BandStructure::compute(&res.p, cfg.n_max)?;
    let imp = Impurity::new(&res.p, &res.q)?;
    let r = reach(&bs, cfg.r_max);
    let set = real_states(&imp, &bs, r, &res.state_options)?;
    let mut rows: Vec<StateRow> = set.bottom.iter().chain(&set.gaps).map(|s| StateRow::new(&ctx.hash, s)).collect();
    for &x in &set.closed_gap_zeros {
        rows.push(StateRow {
            hash: ctx.hash.clone(),
            gap: bs
                .gaps
                .iter()
                .filter(|g| g.closed)
                .min_by(|a, b| (a.e_ext - x).abs().total_cmp(&(b.e_ext - x).abs()))
                .map(|g| g.n),
            re: x,
            im: 0.0,
            lambda_re: x * x,
            lambda_im: 0.0,
            kind: "ClosedGap".into(),
            sheet: String::new(),
            multiplicity: 1,
            f_residual: 0.0,
            jost_physical: f64::NAN,
            jost_nonphysical: f64::NAN,
            converged: true,
            note: String::new(),
        });
    }
    rows.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
    let n_hi = bs.gaps.iter().take_while(|g| g.e_plus <= r).map(|g| g.n).last().unwrap_or(0);
    let checks = structural_checks(&imp, &bs, &set, 1, n_hi)?;
    let failures =
        checks.failures().map(|c| fail("states", c.id.clone(), format!("gap {:?}: {}", c.gap, c.detail))).collect();
    let count = |k: StateKind| set.bottom.iter().chain(&set.gaps).filter(|s| s.kind == k).count();
    let summary = vec![format!(
        "states: |z| ≤ {r}: {} bound, {} antibound, {} virtual, {} unclassified; {} structural checks",
        count(StateKind::Bound),
        count(StateKind::Antibound),
        count(StateKind::Virtual),
        count(StateKind::Unclassified),
        checks.checks.len()
    )];
    Ok((Rows::States(rows), summary, failures))
}

fn resonances(ctx: &Ctx, cfg: &RunConfig, res: &Resolved) -> crate::Result<Produced> {
    let imp = Impurity::new(&res.p, &res.q)?;
    let opts = &res.state_options;
    let mut found = Vec::new();
    if res.rects.is_empty() {
        let depth = resonance_depth(imp.t, cfg.r_max).min(cfg.r_max);
        found.extend(imaginary_axis_states(&imp, depth, opts)?);
        found.extend(lower_quadrant_zeros(&imp, cfg.r_max, opts)?.into_iter().filter(|s| s.z.norm() <= cfg.r_max));
    } else {
        for rect in &res.rects {
            found.extend(complex_resonances(&imp, *rect, opts)?);
        }
    }
    let cf = cf_constant(&imp.p, &imp.q);
    let mut failures = Vec::new();
    for s in found.iter().filter(|s| s.kind == StateKind::Resonance) {
        if !s.converged {
            failures.push(fail("resonances", "newton-converged", format!("z = {}", s.z)));
        }
        if in_forbidden_domain(cf, s.z) {
            failures.push(fail("resonances", "zero-free-domain", format!("z = {}", s.z)));
        }
        if !satisfies_log_law(cf, imp.t, s.z) {
            failures.push(fail("resonances", "log-law", format!("z = {}", s.z)));
        }
    }
    let rows: Vec<StateRow> = found.iter().map(|s| StateRow::new(&ctx.hash, s)).collect();
    let n_res = found.iter().filter(|s| s.kind == StateKind::Resonance).count();
    let summary = vec![format!("resonances: {n_res} resonances, {} states on iℝ", found.len() - n_res)];
    Ok((Rows::States(rows), summary, failures))
}

#[derive(Serialize)]
struct DosRow {
    hash: String,
    lambda: f64,
    rho: f64,
}

fn dos(ctx: &Ctx, cfg: &RunConfig, res: &Resolved) -> crate::Result<Produced> {
    let bs = BandStructure::compute(&res.p, cfg.n_max)?;
    let top = bs.gaps.last().map(|g| g.e_plus * g.e_plus).unwrap_or(0.0);
    let lo = cfg.dos.lambda_min.unwrap_or(0.0f64.min(bs.e0_plus));
    let hi = cfg.dos.lambda_max.unwrap_or(top);
    let points = cfg.dos.points.unwrap_or(1001).max(2);
    if !(lo < hi) {
        return Err(SpectralError::InvalidArgument(format!("dos range [{lo}, {hi}] is empty")));
    }
    let rows: Vec<DosRow> = (0..points)
        .map(|i| {
            let lambda = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            Ok(DosRow { hash: ctx.hash.clone(), lambda, rho: bs.ids(lambda)? })
        })
        .collect::<crate::Result<_>>()?;
    let failures = rows
        .windows(2)
        .filter(|w| w[1].rho < w[0].rho)
        .map(|w| fail("dos", "monotone", format!("ρ decreases between λ = {} and {}", w[0].lambda, w[1].lambda)))
        .collect();
    let summary = vec![format!("dos: ρ({hi}) = {}", rows.last().unwrap().rho)];
    Ok((Rows::Dos(rows), summary, failures))
}

#[derive(Serialize)]
struct SmatrixRow {
    hash: String,
    band: u64,
    lambda: f64,
    re: f64,
    im: f64,
    modulus: f64,
    phase: f64,
    /// Phase made continuous along the band.
    unwrapped: f64,
}

fn scattering(ctx: &Ctx, cfg: &RunConfig, res: &Resolved) -> crate::Result<Produced> {
    let bs = BandStructure::compute(&res.p, cfg.n_max.max(cfg.smatrix.bands))?;
    let m = cfg.smatrix.points_per_band;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for j in 0..cfg.smatrix.bands {
        let lo = if j == 0 { bs.e0_plus } else { bs.gaps[j as usize - 1].e_plus.powi(2) };
        let hi = bs.gaps[j as usize].e_minus.powi(2);
        let lambdas: Vec<f64> =
            (0..m).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / m as f64).filter(|&l| l > 0.0).collect();
        let mut prev: Option<f64> = None;
        for lambda in lambdas {
            let s = smatrix(&res.p, &res.q, lambda)?;
            let phase = s.arg();
            let unwrapped = match prev {
                None => phase,
                Some(u) => {
                    u + (phase - u + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI
                }
            };
            prev = Some(unwrapped);
            if (s.norm() - 1.0).abs() > 1e-8 {
                failures.push(fail("smatrix", "unitarity", format!("|S| = {} at λ = {lambda}", s.norm())));
            }
            rows.push(SmatrixRow {
                hash: ctx.hash.clone(),
                band: j,
                lambda,
                re: s.re,
                im: s.im,
                modulus: s.norm(),
                phase,
                unwrapped,
            });
        }
    }
    let summary = vec![format!("smatrix: {} points on {} bands", rows.len(), cfg.smatrix.bands)];
    Ok((Rows::Smatrix(rows), summary, failures))
}

#[derive(Serialize)]
struct VerifyRow {
    hash: String,
    check: String,
    n: Option<u64>,
    value: Option<f64>,
    nominal: Option<f64>,
    fitted: Option<f64>,
    tolerance: Option<f64>,
    verdict: String,
    note: String,
}

impl VerifyRow {
    fn blank(hash: &str, check: &str) -> Self {
        VerifyRow {
            hash: hash.into(),
            check: check.into(),
            n: None,
            value: None,
            nominal: None,
            fitted: None,
            tolerance: None,
            verdict: String::new(),
            note: String::new(),
        }
    }
}

struct VerifyLog<'a> {
    hash: &'a str,
    rows: Vec<VerifyRow>,
    summary: Vec<String>,
    failures: Vec<Failure>,
}

impl VerifyLog<'_> {
    fn report(&mut self, rep: &AsymptoticReport, value: Option<f64>) {
        let mut head = VerifyRow::blank(self.hash, &rep.id);
        head.value = value;
        head.nominal = rep.nominal_order;
        head.fitted = rep.fitted_order;
        head.tolerance = Some(rep.tolerance);
        head.verdict = format!("{:?}", rep.verdict);
        head.note = rep.notes.join("; ");
        head.n = rep.first_n;
        self.rows.push(head);
        for (&n, &r) in rep.ns.iter().zip(&rep.residuals) {
            let mut row = VerifyRow::blank(self.hash, &format!("{}/residual", rep.id));
            row.n = Some(n);
            row.value = Some(r);
            self.rows.push(row);
        }
        self.summary.push(rep.summary());
        if rep.verdict == Verdict::Fail {
            self.failures.push(fail("verify", rep.id.clone(), rep.summary()));
        }
    }

    fn table(&mut self, t: &PredictionReport) {
        self.report(&t.report, None);
        for r in &t.rows {
            let mut row = VerifyRow::blank(self.hash, &format!("{}/row", t.report.id));
            row.n = Some(r.n);
            row.value = Some(r.shift);
            row.verdict = if r.holds { "holds".into() } else { "violated".into() };
            row.note = format!(
                "b_n = {:.6e}; unperturbed {:?}; found {:?}; predicted {:?}",
                r.b_n, r.unperturbed, r.kind, r.predicted_kind
            );
            self.rows.push(row);
        }
    }

    fn check(&mut self, id: &str, passed: bool, value: Option<f64>, detail: String) {
        let mut row = VerifyRow::blank(self.hash, id);
        row.value = value;
        row.verdict = if passed { "Pass".into() } else { "Fail".into() };
        row.note = detail.clone();
        self.rows.push(row);
        self.summary.push(format!("{id} {} {detail}", if passed { "Pass" } else { "Fail" }));
        if !passed {
            self.failures.push(fail("verify", id, detail));
        }
    }
}

fn verify(ctx: &Ctx, cfg: &RunConfig, res: &Resolved) -> crate::Result<Produced> {
    let v = &cfg.verify;
    let tol = cfg.tolerances.order;
    let opts = &res.state_options;
    let bs = BandStructure::compute(&res.p, cfg.n_max.max(v.n_hi))?;
    let imp = Impurity::new(&res.p, &res.q)?;
    let mut log = VerifyLog { hash: &ctx.hash, rows: Vec::new(), summary: Vec::new(), failures: Vec::new() };

    log.report(&verify_dirichlet(&bs, v.n_lo, v.n_hi, tol)?, None);
    log.report(&verify_edges(&bs, v.n_lo, v.n_hi, tol)?, None);
    log.report(&verify_exponent(&bs, v.n_lo, v.n_hi, tol)?, None);
    let st = verify_state_asymptotics(&imp, &bs, v.n_lo, v.n_hi, tol, opts)?;
    log.report(&st.report, st.leading_error);
    if !st.sign_mismatches.is_empty() {
        log.check("state-shift-sign", false, None, format!("sign differs at n = {:?}", st.sign_mismatches));
    }
    log.table(&verify_side_prediction(&imp, &bs, v.n_lo, v.n_hi, v.alpha, v.max_first_n, opts)?);
    let even = verify_even_case(&imp, &bs, v.n_lo, v.n_hi, v.alpha, v.max_first_n, tol, opts)?;
    log.table(&even.table);
    log.report(&even.expansion, None);

    let r = reach(&bs, cfg.r_max);
    let set = scan_states(&imp, &bs, r, opts)?;
    let covered = bs.gaps.iter().take_while(|g| g.e_plus <= r).map(|g| g.n).last().unwrap_or(0);
    let checks = structural_checks(&imp, &bs, &set, 1, covered)?;
    for c in &checks.checks {
        if !c.passed {
            log.check(&c.id, false, None, format!("gap {:?}: {}", c.gap, c.detail));
        }
    }
    log.check(
        "structural",
        checks.passed(),
        Some(checks.checks.len() as f64),
        format!("{} checks", checks.checks.len()),
    );

    let r_hi = v.r_hi.unwrap_or(r).min(r);
    let r_lo = v.r_lo.unwrap_or(0.25 * r_hi);
    let cnt = counting(&set, imp.t, r_lo, r_hi)?;
    let st_tol = cfg.tolerances.count_slope;
    log.check(
        "count-total",
        cnt.relative_error_total() <= st_tol,
        Some(cnt.slope_total),
        format!("slope {:.4} vs {:.4} over r ∈ [{r_lo}, {r_hi}]", cnt.slope_total, cnt.expected_total),
    );
    log.check(
        "count-lower",
        cnt.relative_error_lower() <= st_tol,
        Some(cnt.slope_lower),
        format!("slope {:.4} vs {:.4} over r ∈ [{r_lo}, {r_hi}]", cnt.slope_lower, cnt.expected_lower),
    );

    let cf = cf_constant(&imp.p, &imp.q);
    let res_z: Vec<C64> = set.resonances().map(|s| s.z).collect();
    let forbidden = res_z.iter().filter(|&&z| in_forbidden_domain(cf, z)).count();
    log.check("zero-free-domain", forbidden == 0, Some(forbidden as f64), format!("{} resonances tested", res_z.len()));
    let bounds = verify_d_and_f_bounds(&imp, 20.0, 200.0, &res_z, 41)?;
    log.check(
        "log-law",
        bounds.log_law_violations.is_empty(),
        Some(bounds.log_law_violations.len() as f64),
        format!("{} resonances tested", res_z.len()),
    );
    log.check("d-expansion", bounds.d_bounded, None, format!("{:?}", bounds.d_scaled));
    log.check(
        "f-bound",
        bounds.f_violations == 0,
        Some(bounds.f_violations as f64),
        format!("{} grid points", bounds.f_grid_points),
    );
    Ok((Rows::Verify(log.rows), log.summary, log.failures))
}

#[derive(Serialize)]
struct AdiabaticRow {
    hash: String,
    tau: f64,
    bound_count: i64,
    predicted: f64,
    halfline_bound: Option<i64>,
    antibound: Option<i64>,
    gap: u64,
    lambda_lo: f64,
    lambda_hi: f64,
    integral: f64,
}

fn adiabatic(ctx: &Ctx, cfg: &RunConfig, res: &Resolved) -> crate::Result<Produced> {
    let a = &cfg.adiabatic;
    let bs = BandStructure::compute(&res.p, cfg.n_max.max(a.gap))?;
    let g = bs
        .gap(a.gap)
        .filter(|g| !g.closed)
        .ok_or_else(|| SpectralError::InvalidArgument(format!("gap {} is closed or absent", a.gap)))?;
    let (l0, l1) = (g.e_minus * g.e_minus, g.e_plus * g.e_plus);
    let e1 = l0 + a.window[0] * (l1 - l0);
    let e2 = l0 + a.window[1] * (l1 - l0);
    let rep = adiabatic_check(&bs, &res.q, e1, e2, &a.taus, &a.state_taus, &res.state_options)?;
    let rows = rep
        .rows
        .iter()
        .map(|r| AdiabaticRow {
            hash: ctx.hash.clone(),
            tau: r.tau,
            bound_count: r.bound_count,
            predicted: r.predicted,
            halfline_bound: r.halfline_bound,
            antibound: r.antibound,
            gap: rep.gap,
            lambda_lo: e1,
            lambda_hi: e2,
            integral: rep.integral,
        })
        .collect();
    let (summary, failures) = judge_adiabatic(&rep);
    Ok((Rows::Adiabatic(rows), summary, failures))
}

fn judge_adiabatic(rep: &AdiabaticReport) -> (Vec<String>, Vec<Failure>) {
    let mut failures = Vec::new();
    let mut summary = vec![format!(
        "adiabatic: gap {}, window [{}, {}], ∫ = {:.6}, slope error {:?}",
        rep.gap, rep.window.0, rep.window.1, rep.integral, rep.slope_error
    )];
    summary.extend(rep.notes.iter().cloned());
    if !rep.slope_ok {
        failures.push(fail("adiabatic", "count-slope", format!("relative error {:?}", rep.slope_error)));
    }
    if rep.inequality_ok == Some(false) {
        failures.push(fail("adiabatic", "antibound-exceeds-bound", "antibound < 1 + bound at some τ"));
    }
    if rep.interlacing_ok == Some(false) {
        failures.push(fail("adiabatic", "interlacing", "antibound < bound − 1 at some τ"));
    }
    if rep.count_slack_ok == Some(false) {
        failures.push(fail("adiabatic", "dirichlet-vs-halfline", "counts differ beyond the slack"));
    }
    (summary, failures)
}

#[derive(Serialize)]
struct SelftestRow {
    hash: String,
    case: String,
    check: String,
    samples: usize,
    max_error: f64,
    tolerance: f64,
    passed: bool,
}

struct Selftest<'a> {
    hash: &'a str,
    rows: Vec<SelftestRow>,
}

impl Selftest<'_> {
    fn push(&mut self, case: &str, check: &str, errs: &[f64], tolerance: f64) {
        let max_error = errs.iter().fold(0.0f64, |m, &e| if e.is_nan() { f64::INFINITY } else { m.max(e) });
        self.rows.push(SelftestRow {
            hash: self.hash.into(),
            case: case.into(),
            check: check.into(),
            samples: errs.len(),
            max_error,
            tolerance,
            passed: max_error <= tolerance && !errs.is_empty(),
        });
    }
}

fn selftest(ctx: &Ctx) -> crate::Result<Produced> {
    let (seed, tol_id, tol_fac) = match &ctx.cfg {
        Some(c) => (c.seed, c.tolerances.identity, c.tolerances.factorization),
        None => (0, 1e-10, 1e-9),
    };
    let mut st = Selftest { hash: &ctx.hash, rows: Vec::new() };
    free_case(&mut st)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases: Vec<(String, PiecewisePotential, PiecewisePotential)> = vec![
        ("cos".into(), fixtures::cosine(2.0, fixtures::STEP_CELLS)?, PiecewisePotential::constant_compact(1.0, 1.0)?),
        (
            "four-cell".into(),
            PiecewisePotential::periodic(vec![6.0, 0.0, 0.0, -2.0])?,
            PiecewisePotential::constant_compact(-30.0, 2.0)?,
        ),
    ];
    for i in 0..3 {
        let cells = rng.gen_range(1..=8);
        let p = (0..cells).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let t = rng.gen_range(0.2..3.0);
        let q = (0..rng.gen_range(1..=6)).map(|_| rng.gen_range(-10.0..10.0)).collect();
        cases.push((format!("random-{i}"), PiecewisePotential::periodic(p)?, PiecewisePotential::compact(q, t)?));
    }
    if let Some(c) = &ctx.cfg {
        let r = c.resolve()?;
        cases.push(("config".into(), r.p, r.q));
    }
    for (name, p, q) in &cases {
        identity_case(&mut st, name, p, q, &mut rng, tol_id, tol_fac)?;
    }
    let failures = st
        .rows
        .iter()
        .filter(|r| !r.passed)
        .map(|r| {
            fail(
                "selftest",
                r.check.clone(),
                format!("{}: max error {:.3e} > {:.1e}", r.case, r.max_error, r.tolerance),
            )
        })
        .collect();
    let summary = st
        .rows
        .iter()
        .map(|r| format!("{} {}/{} max {:.3e}", if r.passed { "PASS" } else { "FAIL" }, r.case, r.check, r.max_error))
        .collect();
    Ok((Rows::Selftest(st.rows), summary, failures))
}

/// `p = q = 0`: `Δ = cos z`, `F = sin z/z`, `D = 1`, `ρ(λ) = √λ/π`.
fn free_case(st: &mut Selftest) -> crate::Result<()> {
    let p = PiecewisePotential::zero_periodic();
    let q = PiecewisePotential::constant_compact(0.0, 1.0)?;
    let imp = Impurity::new(&p, &q)?;
    let grid: Vec<C64> = (0..2000)
        .flat_map(|i| {
            let x = 0.05 + 50.0 * i as f64 / 2000.0;
            [C64::new(x, 0.0), C64::new(x, -1.0), C64::new(x, 1.5)]
        })
        .collect();
    let (mut delta, mut f, mut d) = (Vec::new(), Vec::new(), Vec::new());
    for &z in &grid {
        let pv = imp.values(z)?;
        let scale = (z.im.abs()).exp();
        delta.push((pv.mono.delta.v - z.cos()).norm() / scale);
        f.push((pv.entire_f().v - z.sin() / z).norm() / scale);
        if z.im == 0.0 && pv.mono.phi1.v.norm() > 1e-6 {
            d.push((pv.jost(Sheet::Physical)? - 1.0).norm());
        }
    }
    st.push("free", "delta-cos", &delta, 1e-10);
    st.push("free", "f-sinc", &f, 1e-10);
    st.push("free", "jost-one", &d, 1e-10);
    let bs = BandStructure::compute(&p, 20)?;
    let rho: Vec<f64> = (1..=1000)
        .map(|i| {
            let l = 3000.0 * i as f64 / 1000.0;
            Ok((bs.ids(l)? - l.sqrt() / std::f64::consts::PI).abs())
        })
        .collect::<crate::Result<_>>()?;
    st.push("free", "ids-sqrt", &rho, 1e-10);
    Ok(())
}

fn identity_case(
    st: &mut Selftest,
    name: &str,
    p: &PiecewisePotential,
    q: &PiecewisePotential,
    rng: &mut ChaCha8Rng,
    tol_id: f64,
    tol_fac: f64,
) -> crate::Result<()> {
    let imp = Impurity::new(p, q)?;
    let (mut wr, mut disc, mut wr_t, mut fac) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut integral = Vec::new();
    for i in 0..2000 {
        let z = C64::new(rng.gen_range(0.1..40.0), rng.gen_range(-3.0..3.0));
        let m = monodromy(p, z)?;
        let scale = 1.0 + (m.theta1.v * m.phi1p.v).norm() + (m.theta1p.v * m.phi1.v).norm();
        wr.push((m.wronskian() - 1.0).norm() / scale);
        let terms = 1.0 + m.beta.v.norm_sqr() + m.delta.v.norm_sqr() + (m.phi1.v * m.theta1p.v).norm();
        disc.push(m.discriminant_residual().norm() / terms);
        let pv = imp.values(z)?;
        let s = 1.0 + (pv.theta_t0.v * pv.phi_t0p.v).norm() + (pv.theta_t0p.v * pv.phi_t0.v).norm();
        wr_t.push((pv.wronskian() - 1.0).norm() / s);
        if m.phi1.v.norm() > 1e-3 {
            let f = pv.entire_f().v;
            let prod = m.phi1.v * pv.jost(Sheet::Physical)? * pv.jost(Sheet::Nonphysical)?;
            let (a, b) = (pv.theta_t0.v.norm(), pv.phi_t0.v.norm());
            let terms = m.phi1.v.norm() * a * a + 2.0 * m.beta.v.norm() * a * b + m.theta1p.v.norm() * b * b;
            fac.push((f - prod).norm() / terms.max(prod.norm()));
            if i % 20 == 0 {
                let (lhs, rhs) = imp.jost_integral_identity(z)?;
                integral.push((lhs - rhs).norm() / (1.0 + lhs.norm()));
            }
        }
    }
    st.push(name, "wronskian", &wr, tol_id);
    st.push(name, "discriminant", &disc, tol_id);
    st.push(name, "wronskian-shifted", &wr_t, tol_id);
    st.push(name, "factorization", &fac, tol_fac);
    st.push(name, "jost-integral", &integral, tol_fac);
    Ok(())
}

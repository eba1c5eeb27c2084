//! Command-line front end.
//!
//! Every setting can come from a TOML file (`--config`) or a flag; flags win.
//! Machine-readable JSON goes to stdout, a short human summary to stderr, and
//! with `--out DIR` the artifacts are also written as files.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::SourceDistribution;
use crate::error::Error;
use crate::nonsensing::{self, DeviationGrid, GameInstance, NonSensingEquilibrium};
use crate::reactive::{
    self, GdaOptions, PgaCcpOptions, ReactivePoint, SolveOutcome, StepSchedule, Termination,
};
use crate::sim::{self, JamMode, PolicyBundle, SimResult, TransmitRule};

pub const SCHEMA_VERSION: u32 = 1;

/// Draws recorded in the optional per-event CSV.
pub const EVENT_TRACE_DRAWS: usize = 10_000;

#[derive(Debug, Parser)]
#[command(name = "jamgame", version, about = "Remote estimation against a jammer: equilibria, solvers and simulation")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Saddle point against a jammer that cannot sense the channel.
    SolveNonsensing(Settings),
    /// First-order equilibrium against a reactive jammer.
    SolveReactive(Settings),
    /// Monte Carlo evaluation of a policy.
    Simulate(Settings),
    /// Figure data over a parameter grid.
    Sweep(Settings),
    /// PGA-CCP and GDA from the same start.
    Compare(Settings),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistKind {
    Gaussian,
    Laplace,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    PgaCcp,
    Gda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Constant,
    InverseSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    Fig2,
    Fig4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransmitKind {
    Never,
    Always,
    Band,
    BestResponse,
}

/// All settings. Unset fields fall back to the config file, then defaults.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[arg(long, value_enum)]
    pub dist: Option<DistKind>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Laplace scale `b` (alternative to --sigma2).
    #[arg(long)]
    pub scale: Option<f64>,
    /// Two-column `x,density` table for --dist custom.
    #[arg(long)]
    pub pdf_csv: Option<PathBuf>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for output files.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Run the grid saddle check after solving.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub verify_saddle: Option<bool>,

    #[arg(long, value_enum)]
    pub solver: Option<SolverKind>,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleKind>,
    /// PGA step size.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lambda_ga: Option<f64>,
    #[arg(long)]
    pub lambda_gd: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long, num_args = 2, allow_negative_numbers = true, value_names = ["XHAT0", "XHAT1"])]
    pub init_xhat: Option<Vec<f64>>,
    #[arg(long, num_args = 2, value_names = ["ALPHA", "BETA"])]
    pub init_theta: Option<Vec<f64>>,
    /// Additional random starts.
    #[arg(long)]
    pub multistart: Option<usize>,

    #[arg(long, value_enum)]
    pub mode: Option<SweepMode>,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    pub c_range: Option<Vec<f64>>,
    #[arg(long)]
    pub c_points: Option<usize>,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    pub d_range: Option<Vec<f64>>,
    #[arg(long)]
    pub d_points: Option<usize>,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    pub sigma2_range: Option<Vec<f64>>,
    #[arg(long)]
    pub sigma2_points: Option<usize>,

    /// Number of simulated draws.
    #[arg(long)]
    pub n: Option<usize>,
    /// Policy JSON written by a solve command, or a policy bundle.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub transmit: Option<TransmitKind>,
    /// Band half-width for --transmit band.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub xhat0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub xhat1: Option<f64>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),* $(,)?) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f; } )*
    };
}

impl Settings {
    /// Fills unset fields from `base`.
    pub fn or(mut self, base: Settings) -> Settings {
        overlay!(self, base;
            dist, sigma2, scale, pdf_csv, c, d, eps, seed, out, verify_saddle,
            solver, schedule, lambda, lambda_ga, lambda_gd, max_iters, init_xhat, init_theta,
            multistart, mode, c_range, c_points, d_range, d_points, sigma2_range, sigma2_points,
            n, policy, transmit, threshold, phi, alpha, beta, xhat0, xhat1,
        );
        self
    }
}

/// Config file sections and the keys each may hold.
const SECTIONS: &[(&str, &[&str])] = &[
    ("distribution", &["dist", "sigma2", "scale", "pdf_csv"]),
    ("game", &["c", "d"]),
    (
        "solver",
        &[
            "solver", "schedule", "lambda", "lambda_ga", "lambda_gd", "eps", "max_iters",
            "init_xhat", "init_theta", "multistart", "verify_saddle",
        ],
    ),
    (
        "sweep",
        &["mode", "c_range", "c_points", "d_range", "d_points", "sigma2_range", "sigma2_points"],
    ),
    (
        "simulate",
        &["n", "policy", "transmit", "threshold", "phi", "alpha", "beta", "xhat0", "xhat1"],
    ),
    ("output", &["out"]),
];

/// Parses a sectioned TOML config. `seed` may sit at the top level. Relative
/// paths resolve against the file's directory.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<Settings, CliError> {
    let table: toml::Table =
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
    let mut flat = toml::Table::new();
    for (key, value) in table {
        if key == "seed" {
            flat.insert(key, value);
            continue;
        }
        let Some((_, allowed)) = SECTIONS.iter().find(|(s, _)| *s == key) else {
            return Err(CliError::Config(format!("config: unknown section [{key}]")));
        };
        let toml::Value::Table(inner) = value else {
            return Err(CliError::Config(format!("config: [{key}] must be a table")));
        };
        for (k, v) in inner {
            if !allowed.contains(&k.as_str()) {
                return Err(CliError::Config(format!("config: unknown key {key}.{k}")));
            }
            flat.insert(k, v);
        }
    }
    let mut s: Settings = serde_path_to_error::deserialize(toml::Value::Table(flat))
        .map_err(|e| CliError::Config(format!("config: at {}: {}", e.path(), e.inner())))?;
    for p in [&mut s.pdf_csv, &mut s.policy, &mut s.out].into_iter().flatten() {
        if p.is_relative() {
            *p = base_dir.join(&*p);
        }
    }
    Ok(s)
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    NotCertified(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::NotCertified(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::NotCertified(m) => write!(f, "not certified: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::InvalidDistribution(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

/// Source and costs as echoed in every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceInfo {
    pub family: String,
    pub variance: f64,
    pub scale: f64,
    pub c: f64,
    pub d: f64,
}

impl InstanceInfo {
    fn of(inst: &GameInstance) -> Self {
        Self {
            family: format!("{:?}", inst.dist.family()).to_lowercase(),
            variance: inst.dist.variance(),
            scale: inst.dist.scale(),
            c: inst.c,
            d: inst.d,
        }
    }
}

/// Everything a command produced. `files` are written under `--out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub json: serde_json::Value,
    pub summary: String,
    pub files: Vec<(String, Vec<u8>)>,
    /// Set when a solver stopped without certifying; artifacts are still
    /// emitted.
    pub uncertified: Option<String>,
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn distribution(s: &Settings, default_sigma2: f64) -> Result<SourceDistribution, CliError> {
    let kind = s.dist.unwrap_or(DistKind::Gaussian);
    let d = match kind {
        DistKind::Gaussian => {
            if s.scale.is_some() {
                return Err(CliError::Config("--scale applies to laplace; use --sigma2".into()));
            }
            SourceDistribution::gaussian(positive("sigma2", s.sigma2.unwrap_or(default_sigma2))?)?
        }
        DistKind::Laplace => match (s.sigma2, s.scale) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give --sigma2 or --scale, not both".into()))
            }
            (_, Some(b)) => SourceDistribution::laplace(positive("scale", b)?)?,
            (v, None) => SourceDistribution::laplace_with_variance(positive(
                "sigma2",
                v.unwrap_or(default_sigma2),
            )?)?,
        },
        DistKind::Custom => {
            let path = s
                .pdf_csv
                .as_ref()
                .ok_or_else(|| CliError::Config("--dist custom needs --pdf-csv".into()))?;
            if !path.exists() {
                return Err(io_err(path, "no such file"));
            }
            SourceDistribution::from_csv_path(path)?
        }
    };
    Ok(d)
}

fn instance(s: &Settings, default_sigma2: f64) -> Result<GameInstance, CliError> {
    Ok(GameInstance::new(
        distribution(s, default_sigma2)?,
        s.c.unwrap_or(1.0),
        s.d.unwrap_or(1.0),
    )?)
}

fn epsilon(s: &Settings) -> Result<f64, CliError> {
    positive("eps", s.eps.unwrap_or(1e-5))
}

fn pair(name: &str, v: &Option<Vec<f64>>) -> Result<Option<[f64; 2]>, CliError> {
    match v {
        None => Ok(None),
        Some(v) if v.len() == 2 && v.iter().all(|x| x.is_finite()) => Ok(Some([v[0], v[1]])),
        Some(v) => Err(CliError::Config(format!("{name} needs two finite numbers, got {v:?}"))),
    }
}

fn init_point(s: &Settings, inst: &GameInstance) -> Result<ReactivePoint, CliError> {
    let def = reactive::default_init(inst);
    let xhat = pair("init_xhat", &s.init_xhat)?.unwrap_or(def.xhat());
    let theta = pair("init_theta", &s.init_theta)?.unwrap_or(def.theta());
    Ok(ReactivePoint::new(xhat, theta)?)
}

fn pga_options(s: &Settings) -> Result<PgaCcpOptions, CliError> {
    let lambda = positive("lambda", s.lambda.unwrap_or(0.1))?;
    Ok(PgaCcpOptions {
        schedule: match s.schedule.unwrap_or(ScheduleKind::Constant) {
            ScheduleKind::Constant => StepSchedule::Constant(lambda),
            ScheduleKind::InverseSqrt => StepSchedule::InverseSqrt(lambda),
        },
        epsilon: epsilon(s)?,
        max_iters: s.max_iters.unwrap_or(100_000),
    })
}

fn gda_options(s: &Settings) -> Result<GdaOptions, CliError> {
    Ok(GdaOptions {
        lambda_ga: positive("lambda_ga", s.lambda_ga.unwrap_or(0.1))?,
        lambda_gd: positive("lambda_gd", s.lambda_gd.unwrap_or(0.01))?,
        epsilon: epsilon(s)?,
        max_iters: s.max_iters.unwrap_or(100_000),
    })
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable")
}

fn pretty(v: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonSensingOutput {
    pub schema_version: u32,
    pub kind: String,
    pub instance: InstanceInfo,
    pub equilibrium: NonSensingEquilibrium,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub saddle: Option<nonsensing::SaddleReport>,
}

pub fn cmd_solve_nonsensing(s: &Settings) -> Result<Report, CliError> {
    let inst = instance(s, 1.0)?;
    let report = inst.dist.check_symmetric_unimodal();
    if !report.is_admissible() {
        return Err(CliError::Config(format!(
            "source must be symmetric and unimodal:\n{report}"
        )));
    }
    let eq = nonsensing::solve_admissible(&inst)?;
    let saddle = if s.verify_saddle.unwrap_or(false) {
        Some(nonsensing::verify_saddle(&inst, &eq, &DeviationGrid::default())?)
    } else {
        None
    };
    let mut summary = format!(
        "regime {:?}\nphi* = {:.6}\nthreshold = {:.6}\nvalue = {:.6}\n",
        eq.regime, eq.phi_star, eq.threshold, eq.value
    );
    if let Some(r) = &saddle {
        summary += &format!(
            "saddle check: {} (jammer gain {:.3e}, coordinator gain {:.3e})\n",
            if r.is_saddle() { "pass" } else { "FAIL" },
            r.jammer_worst_excess,
            r.coordinator_worst_excess
        );
    }
    let out = NonSensingOutput {
        schema_version: SCHEMA_VERSION,
        kind: "nonsensing_equilibrium".into(),
        instance: InstanceInfo::of(&inst),
        equilibrium: eq,
        saddle,
    };
    let json = to_json(&out);
    Ok(Report {
        files: vec![("nonsensing.json".into(), pretty(&json))],
        json,
        summary,
        uncertified: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub init: ReactivePoint,
    pub point: ReactivePoint,
    pub certificate: reactive::FneCertificate,
    pub terminated_by: Termination,
    pub iterations: usize,
}

impl RunSummary {
    fn of(init: &ReactivePoint, o: &SolveOutcome) -> Self {
        Self {
            init: *init,
            point: o.point,
            certificate: o.certificate,
            terminated_by: o.trace.terminated_by,
            iterations: o.trace.steps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactiveOutput {
    pub schema_version: u32,
    pub kind: String,
    pub instance: InstanceInfo,
    pub solver: SolverKind,
    pub point: ReactivePoint,
    pub certificate: reactive::FneCertificate,
    pub terminated_by: Termination,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub multistart: Vec<RunSummary>,
}

fn solve(
    s: &Settings,
    inst: &GameInstance,
    init: &ReactivePoint,
    kind: SolverKind,
) -> Result<SolveOutcome, CliError> {
    Ok(match kind {
        SolverKind::PgaCcp => reactive::solve_pga_ccp(inst, init, &pga_options(s)?)?,
        SolverKind::Gda => reactive::solve_gda(inst, init, &gda_options(s)?)?,
    })
}

fn trace_csv(o: &SolveOutcome) -> Vec<u8> {
    let mut buf = Vec::new();
    o.trace.write_csv(&mut buf).expect("in-memory write");
    buf
}

pub fn cmd_solve_reactive(s: &Settings) -> Result<Report, CliError> {
    let inst = instance(s, 1.0)?;
    let kind = s.solver.unwrap_or(SolverKind::PgaCcp);
    let init = init_point(s, &inst)?;
    let o = solve(s, &inst, &init, kind)?;

    let starts = reactive::random_inits(&inst, s.multistart.unwrap_or(0), s.seed.unwrap_or(0));
    let multistart = starts
        .par_iter()
        .map(|p| solve(s, &inst, p, kind).map(|o| RunSummary::of(p, &o)))
        .collect::<Result<Vec<_>, _>>()?;

    let c = &o.certificate;
    let mut summary = format!(
        "{:?} after {} iterations ({:?})\nalpha = {:.4}  beta = {:.4}  xhat0 = {:.4}  xhat1 = {:.4}\n\
         |grad_xhat| = {:.3e}  lp_gap = {:.3e}  certified at eps = {:e}: {}\n",
        kind,
        o.trace.steps(),
        o.trace.terminated_by,
        o.point.alpha,
        o.point.beta,
        o.point.xhat0,
        o.point.xhat1,
        c.grad_norm,
        c.lp_gap,
        c.epsilon,
        c.certified
    );
    for (i, m) in multistart.iter().enumerate() {
        summary += &format!(
            "start {i}: ({:.4}, {:.4}, {:.4}, {:.4}) certified {}\n",
            m.point.alpha, m.point.beta, m.point.xhat0, m.point.xhat1, m.certificate.certified
        );
    }
    let out = ReactiveOutput {
        schema_version: SCHEMA_VERSION,
        kind: "reactive_point".into(),
        instance: InstanceInfo::of(&inst),
        solver: kind,
        point: o.point,
        certificate: o.certificate,
        terminated_by: o.trace.terminated_by,
        iterations: o.trace.steps(),
        multistart,
    };
    let json = to_json(&out);
    Ok(Report {
        files: vec![
            ("reactive.json".into(), pretty(&json)),
            ("trace.csv".into(), trace_csv(&o)),
        ],
        json,
        summary,
        uncertified: (!c.certified).then(|| format!("terminated by {:?}", o.trace.terminated_by)),
    })
}

#[derive(Deserialize)]
struct NonSensingPolicy {
    schema_version: u32,
    equilibrium: NonSensingEquilibrium,
}

#[derive(Deserialize)]
struct ReactivePolicy {
    schema_version: u32,
    point: ReactivePoint,
}

#[derive(Deserialize)]
struct BundlePolicy {
    schema_version: u32,
    bundle: PolicyBundle,
}

/// Reads a policy for `simulate`: the JSON from either solve command
/// (`kind` = `nonsensing_equilibrium` or `reactive_point`), or an explicit
/// bundle (`kind` = `policy_bundle`).
pub fn read_policy(path: &Path, inst: &GameInstance) -> Result<PolicyBundle, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let fail = |at: String, why: String| CliError::Config(format!("{}: at {at}: {why}", path.display()));
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| fail(".".into(), e.to_string()))?;
    fn typed<T: serde::de::DeserializeOwned>(
        v: serde_json::Value,
    ) -> Result<T, serde_path_to_error::Error<serde_json::Error>> {
        serde_path_to_error::deserialize(v)
    }
    let kind = value.get("kind").and_then(|k| k.as_str()).unwrap_or_default().to_string();
    let path_err = |e: serde_path_to_error::Error<serde_json::Error>| {
        fail(e.path().to_string(), e.inner().to_string())
    };
    let (version, bundle) = match kind.as_str() {
        "nonsensing_equilibrium" => {
            let f: NonSensingPolicy = typed(value).map_err(path_err)?;
            (f.schema_version, sim::bundle_from_nonsensing(&f.equilibrium))
        }
        "reactive_point" => {
            let f: ReactivePolicy = typed(value).map_err(path_err)?;
            f.point.validate()?;
            (f.schema_version, sim::bundle_from_reactive(&f.point, inst))
        }
        "policy_bundle" => {
            let f: BundlePolicy = typed(value).map_err(path_err)?;
            (f.schema_version, f.bundle)
        }
        other => {
            return Err(fail(
                "kind".into(),
                format!(
                    "expected nonsensing_equilibrium, reactive_point or policy_bundle, got {other:?}"
                ),
            ))
        }
    };
    if version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "{}: schema_version {version} is not supported (expected {SCHEMA_VERSION})",
            path.display()
        )));
    }
    bundle.validate()?;
    Ok(bundle)
}

fn inline_policy(s: &Settings, inst: &GameInstance) -> Result<PolicyBundle, CliError> {
    let xhat0 = s.xhat0.unwrap_or(0.0);
    let xhat1 = s.xhat1.unwrap_or(0.0);
    let reactive = s.alpha.is_some() || s.beta.is_some();
    if reactive && s.phi.is_some() {
        return Err(CliError::Config("give --phi or --alpha/--beta, not both".into()));
    }
    let jam = if reactive {
        JamMode::Reactive {
            alpha: s.alpha.unwrap_or(0.0),
            beta: s.beta.unwrap_or(0.0),
        }
    } else {
        JamMode::NonSensing {
            phi: s.phi.unwrap_or(0.0),
        }
    };
    let transmit = match s.transmit.unwrap_or(TransmitKind::BestResponse) {
        TransmitKind::Never => TransmitRule::Never,
        TransmitKind::Always => TransmitRule::Always,
        TransmitKind::Band => TransmitRule::Band {
            center: xhat0,
            radius: s
                .threshold
                .ok_or_else(|| CliError::Config("--transmit band needs --threshold".into()))?,
        },
        TransmitKind::BestResponse => match jam {
            JamMode::NonSensing { phi } => {
                match nonsensing::threshold_policy(inst.c, phi, xhat0)? {
                    nonsensing::ThresholdPolicy::Band { center, radius } => {
                        TransmitRule::Band { center, radius }
                    }
                    nonsensing::ThresholdPolicy::NeverTransmit => TransmitRule::Never,
                }
            }
            JamMode::Reactive { alpha, beta } => {
                let p = ReactivePoint::new([xhat0, xhat1], [alpha, beta])?;
                sim::bundle_from_reactive(&p, inst).transmit
            }
        },
    };
    let b = PolicyBundle {
        transmit,
        jam,
        xhat0,
        xhat1,
    };
    b.validate()?;
    Ok(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub schema_version: u32,
    pub kind: String,
    pub instance: InstanceInfo,
    pub seed: u64,
    pub bundle: PolicyBundle,
    pub result: SimResult,
    pub analytic_cost: f64,
    /// `(empirical - analytic) / std_error`.
    pub z_score: Option<f64>,
}

pub fn cmd_simulate(s: &Settings) -> Result<Report, CliError> {
    let inst = instance(s, 1.0)?;
    let bundle = match &s.policy {
        Some(p) => read_policy(p, &inst)?,
        None => inline_policy(s, &inst)?,
    };
    let n = s.n.unwrap_or(1_000_000);
    let seed = s.seed.unwrap_or(0);
    let trace_limit = if s.out.is_some() { EVENT_TRACE_DRAWS } else { 0 };
    let (result, events) = sim::simulate_with_trace(&inst, &bundle, n, seed, trace_limit)?;
    let analytic = sim::expected_cost(&inst, &bundle)?;
    let z = (result.std_error > 0.0).then(|| (result.empirical_cost - analytic) / result.std_error);
    let summary = format!(
        "n = {n}, seed = {seed}\nempirical cost = {:.6} +/- {:.6} (1 SE)\nanalytic cost  = {:.6}{}\n\
         P(U=1) = {:.4}  P(J=1) = {:.4}\n",
        result.empirical_cost,
        result.std_error,
        analytic,
        z.map(|z| format!("  (z = {z:.2})")).unwrap_or_default(),
        result.p_transmit,
        result.p_jam
    );
    let out = SimOutput {
        schema_version: SCHEMA_VERSION,
        kind: "simulation".into(),
        instance: InstanceInfo::of(&inst),
        seed,
        bundle,
        result,
        analytic_cost: analytic,
        z_score: z,
    };
    let json = to_json(&out);
    let mut files = vec![("simulation.json".into(), pretty(&json))];
    if trace_limit > 0 {
        let mut buf = Vec::new();
        sim::write_events_csv(&events, &mut buf).expect("in-memory write");
        files.push(("events.csv".into(), buf));
    }
    Ok(Report {
        json,
        summary,
        files,
        uncertified: None,
    })
}

/// Evenly spaced grid; rejects empty or inverted ranges.
pub fn grid(name: &str, range: [f64; 2], points: usize) -> Result<Vec<f64>, CliError> {
    let [lo, hi] = range;
    let bad = |why: &str| Err(CliError::Config(format!("{name} grid {why}")));
    if points == 0 {
        return bad("needs at least one point");
    }
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return bad(&format!("range [{lo}, {hi}] is not a finite interval"));
    }
    if points > 1 && lo == hi {
        return bad("has several points on a zero-width range");
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect())
}

pub const FIG2_RANGE: [f64; 2] = [0.05, 3.0];
pub const FIG2_POINTS: usize = 60;
pub const FIG4_RANGE: [f64; 2] = [1.0, 5.0];
pub const FIG4_POINTS: usize = 17;

fn csv_bytes(header_comment: &str, header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut buf = Vec::new();
    for line in header_comment.lines() {
        writeln!(buf, "# {line}").unwrap();
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header).unwrap();
        for r in rows {
            w.write_record(r).unwrap();
        }
        w.flush().unwrap();
    }
    buf
}

fn num(x: f64) -> String {
    format!("{x:.12e}")
}

pub fn cmd_sweep(s: &Settings) -> Result<Report, CliError> {
    let mode = s.mode.unwrap_or(SweepMode::Fig2);
    match mode {
        SweepMode::Fig2 => sweep_fig2(s),
        SweepMode::Fig4 => sweep_fig4(s),
    }
}

fn sweep_fig2(s: &Settings) -> Result<Report, CliError> {
    let cs = grid(
        "c",
        pair("c_range", &s.c_range)?.unwrap_or(FIG2_RANGE),
        s.c_points.unwrap_or(FIG2_POINTS),
    )?;
    let ds = grid(
        "d",
        pair("d_range", &s.d_range)?.unwrap_or(FIG2_RANGE),
        s.d_points.unwrap_or(FIG2_POINTS),
    )?;
    let dist = distribution(s, 1.0)?;
    let report = dist.check_symmetric_unimodal();
    if !report.is_admissible() {
        return Err(CliError::Config(format!(
            "source must be symmetric and unimodal:\n{report}"
        )));
    }
    let cells: Vec<(f64, f64)> = cs.iter().flat_map(|&c| ds.iter().map(move |&d| (c, d))).collect();
    let rows = cells
        .par_iter()
        .map(|&(c, d)| {
            let inst = GameInstance::new(dist.clone(), c, d)?;
            let eq = nonsensing::solve_admissible(&inst)?;
            Ok(vec![
                num(c),
                num(d),
                num(dist.variance()),
                num(eq.phi_star),
                format!("{:?}", eq.regime),
                num(eq.threshold),
                num(eq.value),
            ])
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let comment = format!(
        "optimal jamming probability against a non-sensing jammer over a (c, d) grid\n\
         grid: c in [{}, {}] ({} points), d in [{}, {}] ({} points); default ranges are this tool's choice\n\
         columns: c, d, source variance, phi*, regime, transmit threshold, equilibrium value",
        cs[0],
        cs[cs.len() - 1],
        cs.len(),
        ds[0],
        ds[ds.len() - 1],
        ds.len()
    );
    let header = ["c", "d", "sigma2", "phi_star", "regime", "threshold", "value"];
    let csv = csv_bytes(&comment, &header, &rows);
    let json = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "sweep_fig2",
        "cells": rows.len(),
    });
    Ok(Report {
        summary: format!("fig2 sweep: {} cells\n", rows.len()),
        json,
        files: vec![("sweep_fig2.csv".into(), csv)],
        uncertified: None,
    })
}

fn sweep_fig4(s: &Settings) -> Result<Report, CliError> {
    let vars = grid(
        "sigma2",
        pair("sigma2_range", &s.sigma2_range)?.unwrap_or(FIG4_RANGE),
        s.sigma2_points.unwrap_or(FIG4_POINTS),
    )?;
    let opts = pga_options(s)?;
    let c = s.c.unwrap_or(1.0);
    let d = s.d.unwrap_or(1.0);
    let outcomes = vars
        .par_iter()
        .map(|&v| {
            let dist = distribution(&Settings { sigma2: Some(v), scale: None, ..s.clone() }, v)?;
            let inst = GameInstance::new(dist, c, d)?;
            let init = init_point(s, &inst)?;
            Ok(reactive::solve_pga_ccp(&inst, &init, &opts)?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let rows: Vec<Vec<String>> = vars
        .iter()
        .zip(&outcomes)
        .map(|(&v, o)| {
            vec![
                num(v),
                num(o.point.alpha),
                num(o.point.beta),
                num(o.point.xhat0),
                num(o.point.xhat1),
                o.certificate.certified.to_string(),
                num(o.certificate.grad_norm),
                num(o.certificate.lp_gap),
                o.trace.steps().to_string(),
                format!("{:?}", o.trace.terminated_by),
            ]
        })
        .collect();
    let comment = format!(
        "first-order equilibria against a reactive jammer over the source variance (PGA-CCP, c = {c}, d = {d})\n\
         columns: sigma2, alpha*, beta*, xhat0*, xhat1* (representative with xhat0 > 0), certified, |grad_xhat|, lp_gap, iterations, termination"
    );
    let header = [
        "sigma2", "alpha", "beta", "xhat0", "xhat1", "certified", "grad_xhat_norm", "lp_gap",
        "iterations", "terminated_by",
    ];
    let csv = csv_bytes(&comment, &header, &rows);
    let failed: Vec<f64> = vars
        .iter()
        .zip(&outcomes)
        .filter(|(_, o)| !o.certificate.certified)
        .map(|(&v, _)| v)
        .collect();
    let json = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "sweep_fig4",
        "points": vars.len(),
        "uncertified_sigma2": failed,
    });
    Ok(Report {
        summary: format!("fig4 sweep: {} points, {} uncertified\n", vars.len(), failed.len()),
        json,
        files: vec![("sweep_fig4.csv".into(), csv)],
        uncertified: (!failed.is_empty()).then(|| format!("uncertified at sigma2 = {failed:?}")),
    })
}

pub fn cmd_compare(s: &Settings) -> Result<Report, CliError> {
    let inst = instance(s, 1.0)?;
    let init = init_point(s, &inst)?;
    let pga = reactive::solve_pga_ccp(&inst, &init, &pga_options(s)?)?;
    let gda = reactive::solve_gda(&inst, &init, &gda_options(s)?)?;

    let mut rows = Vec::new();
    for (name, o) in [("pga-ccp", &pga), ("gda", &gda)] {
        for r in &o.trace.iterations {
            rows.push(vec![
                name.to_string(),
                r.k.to_string(),
                num(r.objective),
                num(r.grad_xhat_norm),
                num(r.lp_gap),
                num(r.xhat0),
                num(r.xhat1),
                num(r.alpha),
                num(r.beta),
            ]);
        }
    }
    let header = [
        "solver", "k", "objective", "grad_xhat_norm", "lp_gap", "xhat0", "xhat1", "alpha", "beta",
    ];
    let csv = csv_bytes(
        "convergence of PGA-CCP and GDA from the same initial point\n\
         columns: solver, iteration, objective, |grad_xhat|, lp_gap, iterate",
        &header,
        &rows,
    );
    let summary = format!(
        "PGA-CCP: {} iterations ({:?})\nGDA:     {} iterations ({:?})\n",
        pga.trace.steps(),
        pga.trace.terminated_by,
        gda.trace.steps(),
        gda.trace.terminated_by
    );
    let json = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "solver_comparison",
        "instance": InstanceInfo::of(&inst),
        "pga_ccp": RunSummary::of(&init, &pga),
        "gda": RunSummary::of(&init, &gda),
    });
    let uncertified = [("PGA-CCP", &pga), ("GDA", &gda)]
        .iter()
        .filter(|(_, o)| !o.certificate.certified)
        .map(|(n, o)| format!("{n} terminated by {:?}", o.trace.terminated_by))
        .reduce(|a, b| format!("{a}; {b}"));
    Ok(Report {
        files: vec![
            ("compare.csv".into(), csv),
            ("compare.json".into(), pretty(&json)),
        ],
        json,
        summary,
        uncertified,
    })
}

/// Merges the config file under the command's flags and runs it.
pub fn execute(cli: &Cli) -> Result<Report, CliError> {
    let base = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            parse_config(&text, path.parent().unwrap_or(Path::new(".")))?
        }
        None => Settings::default(),
    };
    let (run, flags): (fn(&Settings) -> Result<Report, CliError>, &Settings) = match &cli.command {
        Command::SolveNonsensing(f) => (cmd_solve_nonsensing, f),
        Command::SolveReactive(f) => (cmd_solve_reactive, f),
        Command::Simulate(f) => (cmd_simulate, f),
        Command::Sweep(f) => (cmd_sweep, f),
        Command::Compare(f) => (cmd_compare, f),
    };
    let settings = flags.clone().or(base);
    let report = run(&settings)?;
    if let Some(dir) = &settings.out {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        for (name, bytes) in &report.files {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        }
    }
    Ok(report)
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(report) => {
            eprint!("{}", report.summary);
            println!("{}", serde_json::to_string_pretty(&report.json).expect("serializable"));
            match report.uncertified {
                Some(why) => {
                    eprintln!("{}", CliError::NotCertified(why));
                    4
                }
                None => 0,
            }
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

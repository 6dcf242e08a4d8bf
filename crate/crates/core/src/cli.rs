//! Config-driven front end: strict TOML parsing, dispatch to the scans, and the output
//! bundle (`results.csv`, `verdicts.json`, `plot.gp`, `manifest.json`).
//!
//! ```toml
//! [landscape]
//! name = "quadratic_saddle"
//! unstable = [1.0]
//! stable = [1.0]
//!
//! [scan]
//! replicas = 2000
//! dt = 1e-3
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{self, LandscapeSpec, ScanConfig, ScanKind, ScanReport, ScanRow, Verdict};
use crate::flow::{self, Direction, DomainSpec};
use crate::landscape::{self, Landscape};
use crate::rng::replica_seed;
use crate::sde::{self, ReplicaRecord, SdeConfig};

/// Environment variable consulted for the worker count when no flag is given.
pub const WORKERS_ENV: &str = "SADDLE_ESCAPE_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Flow,
    Simulate,
    ExitTimeScan,
    ExitDistScan,
    MultiSaddleScan,
    SgdScan,
    ShellScan,
    ValidateLandscape,
}

impl Command {
    pub fn scan_kind(self) -> Option<ScanKind> {
        match self {
            Command::ExitTimeScan => Some(ScanKind::ExitTime),
            Command::ExitDistScan => Some(ScanKind::ExitDistribution),
            Command::MultiSaddleScan => Some(ScanKind::MultiSaddle),
            Command::SgdScan => Some(ScanKind::Sgd),
            Command::ShellScan => Some(ScanKind::Shell),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowBlock {
    pub x0: Vec<f64>,
    pub dt: f64,
    pub t_max: f64,
    pub backward: bool,
    /// Exit ball around the first saddle; no domain when absent.
    pub radius: Option<f64>,
}

impl Default for FlowBlock {
    fn default() -> Self {
        FlowBlock {
            x0: vec![0.3, 0.2],
            dt: 1e-3,
            t_max: 20.0,
            backward: false,
            radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateBlock {
    /// Start; the chain's default start when absent.
    pub x0: Option<Vec<f64>>,
    pub epsilon: f64,
    pub t_max: f64,
    pub replicas: usize,
    pub j_max: usize,
}

impl Default for SimulateBlock {
    fn default() -> Self {
        SimulateBlock {
            x0: None,
            epsilon: 1e-2,
            t_max: 200.0,
            replicas: 10,
            j_max: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; must agree with the command line when both are given.
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub landscape: LandscapeSpec,
    /// Scan parameters; its `landscape` comes from the top-level block.
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub flow: FlowBlock,
    #[serde(default)]
    pub simulate: SimulateBlock,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn scan_config(&self) -> ScanConfig {
        ScanConfig {
            landscape: self.landscape.clone(),
            ..self.scan.clone()
        }
    }
}

const TOP_KEYS: &[&str] = &["command", "landscape", "scan", "flow", "simulate", "output_dir", "workers"];
const LANDSCAPE_KEYS: &[&str] = &[
    "name", "unstable", "stable", "hessian", "eigenvalues", "k", "lambda_u", "lambda_s", "drop",
];
const SCAN_KEYS: &[&str] = &[
    "epsilon_grid", "beta_grid", "replicas", "seed", "dt", "dt_per_rate", "t_max_factor", "tol", "bound_tol",
    "mean_tol", "slope_floor", "mu", "rho", "r", "h", "H", "e", "truncation_gate", "radius", "u_radius",
    "grid_per_axis", "start", "start_offset", "x0", "shells", "beyond_distance", "shell_stable_offset",
    "identity_beta", "identity_steps", "noise",
];
const START_KEYS: &[&str] = &["kind", "offset", "point"];
const NOISE_KEYS: &[&str] = &["kind", "matrix"];
const FLOW_KEYS: &[&str] = &["x0", "dt", "t_max", "backward", "radius"];
const SIMULATE_KEYS: &[&str] = &["x0", "epsilon", "t_max", "replicas", "j_max"];

fn known_keys(path: &str) -> &'static [&'static str] {
    match path {
        "" => TOP_KEYS,
        "landscape" => LANDSCAPE_KEYS,
        "scan" => SCAN_KEYS,
        "scan.start" => START_KEYS,
        "scan.noise" => NOISE_KEYS,
        "flow" => FLOW_KEYS,
        "simulate" => SIMULATE_KEYS,
        _ => &[],
    }
}

fn best_match<'a>(key: &str, candidates: impl Iterator<Item = (String, &'a str)>) -> Option<String> {
    candidates
        .map(|(full, k)| (strsim::jaro_winkler(key, k), full))
        .filter(|(s, _)| *s >= 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, full)| full)
}

/// Closest known key in the same table, else over every table, as a dotted path.
fn suggest(key: &str, path: &str) -> Option<String> {
    let qualify = |t: &str, k: &str| if t.is_empty() { k.to_string() } else { format!("{t}.{k}") };
    best_match(key, known_keys(path).iter().map(|k| (qualify(path, k), *k))).or_else(|| {
        let tables = ["", "landscape", "scan", "scan.start", "scan.noise", "flow", "simulate"];
        best_match(
            key,
            tables
                .iter()
                .flat_map(|t| known_keys(t).iter().map(move |k| (qualify(t, k), *k))),
        )
    })
}

fn check_keys(table: &toml::Table, path: &str) -> Result<()> {
    let known = known_keys(path);
    for (key, value) in table {
        let full = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
        if !known.contains(&key.as_str()) {
            let hint = suggest(key, path).map(|s| format!("; did you mean `{s}`?")).unwrap_or_default();
            return Err(Error::Config(format!("unknown key `{full}`{hint}")));
        }
        if let toml::Value::Table(t) = value {
            check_keys(t, &full)?;
        }
    }
    Ok(())
}

/// Parse and validate a config document; unknown keys are rejected with a suggestion.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(format!("parse error: {e}")))?;
    check_keys(&table, "")?;
    let config: ExperimentConfig = serde_path_to_error::deserialize(toml::Value::Table(table))
        .map_err(|e| Error::Config(format!("invalid value at `{}`: {}", e.path(), e.inner())))?;
    config.scan_config().validate()?;
    if let Some(w) = config.workers {
        if w == 0 {
            return Err(Error::Config("workers: must be at least 1".into()));
        }
    }
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&fs::read_to_string(path)?)
}

/// Command-line overrides; flags win over the environment, which wins over the config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: Command,
    pub version: String,
    pub seed: u64,
    pub dt_rule: experiments::DtRule,
    pub dt: f64,
    pub epsilon_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    pub replicas: usize,
    pub workers: usize,
    pub landscape: LandscapeSpec,
    pub scan: ScanConfig,
    pub unix_time: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub verdicts: Vec<Verdict>,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    /// 0 iff every verdict passed.
    pub fn status(&self) -> i32 {
        if self.verdicts.iter().all(|v| v.passed) {
            0
        } else {
            1
        }
    }
}

pub fn resolve_workers(flag: Option<usize>, config: Option<usize>) -> usize {
    flag.or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()).filter(|w| *w > 0))
        .or(config)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

struct Output {
    csv: Vec<u8>,
    verdicts: Vec<Verdict>,
    plot: String,
}

/// Run `command` and write the output bundle. All computation finishes before any file is
/// written.
pub fn run(command: Command, config: &ExperimentConfig, overrides: &Overrides) -> Result<RunOutcome> {
    if let Some(c) = config.command {
        if c != command {
            return Err(Error::Config(format!("command: config names {c:?} but {command:?} was requested")));
        }
    }
    let mut scan = config.scan_config();
    if let Some(seed) = overrides.seed {
        scan.seed = seed;
    }
    scan.validate()?;
    if command.scan_kind().is_some() {
        scan.require_statistics()?;
    }
    let workers = resolve_workers(overrides.workers, config.workers);
    let out_dir = overrides
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let land = scan.landscape.build()?;
    let output = pool.install(|| compute(command, config, &scan, &land))?;

    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("results.csv"), &output.csv)?;
    fs::write(out_dir.join("verdicts.json"), serde_json::to_string_pretty(&output.verdicts)?)?;
    fs::write(out_dir.join("plot.gp"), &output.plot)?;
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: scan.seed,
        dt_rule: scan.dt_rule(),
        dt: scan.resolve_dt(&land),
        epsilon_grid: scan.epsilon_grid.clone(),
        beta_grid: scan.beta_grid.clone(),
        replicas: scan.replicas,
        workers,
        landscape: scan.landscape.clone(),
        scan: scan.clone(),
        unix_time: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(RunOutcome {
        verdicts: output.verdicts,
        out_dir,
    })
}

fn compute(command: Command, config: &ExperimentConfig, scan: &ScanConfig, land: &Landscape) -> Result<Output> {
    if let Some(kind) = command.scan_kind() {
        let report = experiments::run_scan(kind, scan)?;
        let mut csv = Vec::new();
        experiments::write_rows_csv(&report.rows, &mut csv)?;
        return Ok(Output {
            plot: experiments::plot_script(&report, "results.csv"),
            csv,
            verdicts: report.verdicts,
        });
    }
    match command {
        Command::Flow => run_flow(&config.flow, land),
        Command::Simulate => run_simulate(&config.simulate, scan, land),
        Command::ValidateLandscape => run_validate(land),
        _ => unreachable!("scan commands handled above"),
    }
}

fn info(name: &str, passed: bool, detail: String) -> Verdict {
    Verdict {
        name: name.into(),
        passed,
        measured: f64::NAN,
        criterion: String::new(),
        detail,
    }
}

fn run_flow(block: &FlowBlock, land: &Landscape) -> Result<Output> {
    let domain = match block.radius {
        Some(r) => {
            let s = land
                .saddles()
                .first()
                .map(|c| c.location.clone())
                .ok_or_else(|| Error::precondition("flow.radius needs a landscape with a saddle"))?;
            Some(DomainSpec::ball(s, r))
        }
        None => None,
    };
    let dir = if block.backward { Direction::Backward } else { Direction::Forward };
    let traj = flow::integrate_directed(land, &block.x0, block.dt, block.t_max, domain.as_ref(), dir)?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)?;
    let end = traj.terminal_state();
    let verdict = match (&traj.exit, land.nearest_critical_point(end, flow::CONVERGENCE_TOL)) {
        (Some(e), _) => info("flow_terminal", true, format!("exits at t = {}", e.time)),
        (None, Some(i)) => info("flow_terminal", true, format!("converges to critical point {i}")),
        (None, None) => info("flow_terminal", false, "neither exit nor convergence by t_max".into()),
    };
    let plot = "set datafile separator ','\nset key autotitle columnhead\nplot 'results.csv' using 2:3 with lines\n".to_string();
    Ok(Output {
        csv,
        verdicts: vec![verdict],
        plot,
    })
}

fn run_simulate(block: &SimulateBlock, scan: &ScanConfig, land: &Landscape) -> Result<Output> {
    let x0 = match (&block.x0, land.chain()) {
        (Some(x), _) => x.clone(),
        (None, Some(c)) => c.start_before_first(land, scan.start_offset),
        (None, None) => return Err(Error::Config("simulate.x0: required for this landscape".into())),
    };
    let h = match scan.h {
        Some(h) => h,
        None => flow::default_h(land)?,
    };
    let dt = scan.resolve_dt(land);
    let levels: Vec<f64> = land.saddles().iter().map(|s| s.f_value).collect();
    let results: Vec<Result<Vec<ReplicaRecord>>> = {
        use rayon::prelude::*;
        (0..block.replicas)
            .into_par_iter()
            .map(|i| {
                let seed = replica_seed(scan.seed, i as u64);
                let cfg = SdeConfig {
                    noise: scan.noise.to_spec()?,
                    ..SdeConfig::new(block.epsilon, dt, block.t_max, seed)
                };
                Ok(sde::stopping_sequence(land, h, &cfg, &x0, block.j_max)?
                    .into_iter()
                    .map(|record| ReplicaRecord { replica: i, seed, record })
                    .collect())
            })
            .collect()
    };
    let mut records = Vec::new();
    for r in results {
        records.extend(r?);
    }
    let mut ordered = true;
    let mut on_level = true;
    for w in records.windows(2) {
        if w[0].replica == w[1].replica && w[1].record.time < w[0].record.time {
            ordered = false;
        }
    }
    for r in records.iter().filter(|r| !r.record.truncated) {
        let target = if r.record.label.starts_with("tau") { 0.5 * h } else { -h };
        if !levels.iter().any(|v| (r.record.f_value - (v + target)).abs() <= 1e-8 * (1.0 + v.abs())) {
            on_level = false;
        }
    }
    let mut csv = Vec::new();
    sde::write_records_csv(&records, &mut csv)?;
    let verdicts = vec![
        info("stopping_times_ordered", ordered, format!("{} records", records.len())),
        info("stopping_values_on_levels", on_level, format!("h = {h}")),
    ];
    let plot = "set datafile separator ','\nset key autotitle columnhead\nplot 'results.csv' using 3:4 with points\n".to_string();
    Ok(Output { csv, verdicts, plot })
}

#[derive(Serialize)]
struct CriticalRow {
    index: usize,
    location: String,
    f_value: f64,
    eigenvalues: String,
    classification: String,
}

fn run_validate(land: &Landscape) -> Result<Output> {
    let samples = land.region().grid(25);
    let fd = samples
        .iter()
        .map(|x| landscape::finite_difference_check(land, x, 1e-5))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let report = landscape::verify_strict_saddle_property(land, &samples);
    let worst_grad = land
        .critical_points()
        .iter()
        .map(|c| landscape::norm(&land.gradient_vec(&c.location)))
        .fold(0.0, f64::max);
    let mut w = csv::Writer::from_writer(Vec::new());
    for (index, c) in land.critical_points().iter().enumerate() {
        w.serialize(CriticalRow {
            index,
            location: format!("{:?}", c.location),
            f_value: c.f_value,
            eigenvalues: format!("{:?}", c.eigenvalues),
            classification: format!("{:?}", c.classification),
        })?;
    }
    let csv = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let verdicts = vec![
        Verdict {
            name: "finite_difference".into(),
            passed: fd <= 1e-5,
            measured: fd,
            criterion: "max relative error <= 1e-5".into(),
            detail: format!("{} samples", samples.len()),
        },
        Verdict {
            name: "strict_saddle_property".into(),
            passed: report.violations.is_empty(),
            measured: report.violations.len() as f64,
            criterion: "no violations".into(),
            detail: format!("{} samples", report.checked),
        },
        Verdict {
            name: "critical_points_stationary".into(),
            passed: worst_grad <= 1e-8,
            measured: worst_grad,
            criterion: "|grad F| <= 1e-8 at registered points".into(),
            detail: String::new(),
        },
    ];
    Ok(Output {
        csv,
        verdicts,
        plot: "set datafile separator ','\nset key autotitle columnhead\nplot 'results.csv' using 1:3 with points\n"
            .into(),
    })
}

/// Recompute a scan's verdicts from a saved `results.csv`.
pub fn reverify(command: Command, config: &ExperimentConfig, csv_path: &Path) -> Result<Vec<Verdict>> {
    let kind = command
        .scan_kind()
        .ok_or_else(|| Error::invalid("only scan commands have row-derived verdicts"))?;
    let rows: Vec<ScanRow> = experiments::read_rows_csv(fs::File::open(csv_path)?)?;
    Ok(experiments::verdicts_from_rows(kind, &rows, &config.scan_config()).0)
}

#[derive(Debug, Parser)]
#[command(name = "saddle-escape", version, about = "Saddle escape experiments for perturbed gradient flows")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Machine-readable failure report printed on stderr.
pub fn error_json(e: &Error) -> String {
    serde_json::json!({ "error": e.kind(), "message": e.to_string() }).to_string()
}

/// Entry point shared by the binary: 0 all PASS, 1 some FAIL, 2 error.
pub fn main_with_args(args: Args) -> i32 {
    let result = load_config(&args.config).and_then(|config| {
        run(
            args.command,
            &config,
            &Overrides {
                workers: args.workers,
                out: args.out.clone(),
                seed: args.seed,
            },
        )
    });
    match result {
        Ok(outcome) => {
            for v in &outcome.verdicts {
                println!("{} {} {}", if v.passed { "PASS" } else { "FAIL" }, v.name, v.detail);
            }
            outcome.status()
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            2
        }
    }
}

/// Convenience for reports built in code.
pub fn report_status(report: &ScanReport) -> i32 {
    if report.all_passed() {
        0
    } else {
        1
    }
}

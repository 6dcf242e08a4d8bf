//! Monte Carlo scan campaigns: each scan turns one limit statement into a table of
//! per-ε rows, and a separate pure function turns rows into PASS/FAIL verdicts.
//!
//! Replicas run in the current rayon pool; results are collected in replica order so the
//! rows do not depend on the worker count.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{self, DomainSpec, ExitTime};
use crate::landscape::{
    builtin_bowl, builtin_quadratic_form, builtin_quadratic_saddle, builtin_saddle_chain, Landscape,
};
use crate::rng::derive_seed;
use crate::saddle_analysis::{
    linear_exit_oracle, shell_exit_bound, shell_index, shell_representative, LinearSaddle, QMuSet, Shell,
    DEFAULT_SHELL_CAP,
};
use crate::sde::{self, NoiseSpec, ReplicaSet, SdeConfig, SgdConfig, TimeStats};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.96;

/// Smallest replica count accepted by the statistical scans.
pub const MIN_REPLICAS: usize = 100;

/// Builtin landscape selected by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum LandscapeSpec {
    QuadraticSaddle {
        #[serde(default = "one_vec")]
        unstable: Vec<f64>,
        #[serde(default = "one_vec")]
        stable: Vec<f64>,
    },
    QuadraticForm {
        hessian: Vec<Vec<f64>>,
    },
    Bowl {
        eigenvalues: Vec<f64>,
    },
    SaddleChain {
        k: usize,
        #[serde(default = "two")]
        lambda_u: f64,
        #[serde(default = "two")]
        lambda_s: f64,
        #[serde(default = "one")]
        drop: f64,
    },
}

fn one_vec() -> Vec<f64> {
    vec![1.0]
}
fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}

impl Default for LandscapeSpec {
    fn default() -> Self {
        LandscapeSpec::QuadraticSaddle {
            unstable: one_vec(),
            stable: one_vec(),
        }
    }
}

impl LandscapeSpec {
    pub fn build(&self) -> Result<Landscape> {
        match self {
            LandscapeSpec::QuadraticSaddle { unstable, stable } => builtin_quadratic_saddle(unstable, stable),
            LandscapeSpec::QuadraticForm { hessian } => {
                let n = hessian.len();
                if hessian.iter().any(|r| r.len() != n) {
                    return Err(Error::invalid("hessian must be a square list of rows"));
                }
                builtin_quadratic_form(&DMatrix::from_fn(n, n, |i, j| hessian[i][j]))
            }
            LandscapeSpec::Bowl { eigenvalues } => builtin_bowl(eigenvalues),
            LandscapeSpec::SaddleChain {
                k,
                lambda_u,
                lambda_s,
                drop,
            } => builtin_saddle_chain(*k, *lambda_u, *lambda_s, *drop),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    #[default]
    Identity,
    Constant {
        matrix: Vec<Vec<f64>>,
    },
}

impl NoiseConfig {
    pub fn to_spec(&self) -> Result<NoiseSpec> {
        match self {
            NoiseConfig::Identity => Ok(NoiseSpec::Identity),
            NoiseConfig::Constant { matrix } => {
                let n = matrix.len();
                if matrix.iter().any(|r| r.len() != n) {
                    return Err(Error::invalid("noise matrix must be square"));
                }
                Ok(NoiseSpec::ConstantMatrix(DMatrix::from_fn(n, n, |i, j| matrix[i][j])))
            }
        }
    }
}

/// Where the exit-time scan starts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StartRule {
    #[default]
    AtSaddle,
    /// Saddle plus `offset` along the first stable direction.
    InA1 { offset: f64 },
    InA2 { point: Vec<f64> },
}

/// Effective time step of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DtRule {
    Fixed { dt: f64 },
    /// `dt = per_rate / max |Hessian eigenvalue|` over registered critical points.
    Auto { per_rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub landscape: LandscapeSpec,
    pub epsilon_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    /// Fixed step; `None` selects the curvature-based automatic rule.
    pub dt: Option<f64>,
    pub dt_per_rate: f64,
    /// `t_max = factor (1 + ln 1/eps) max(1, k) / gamma_1`.
    pub t_max_factor: f64,
    /// Relative tolerance on slope equalities.
    pub tol: f64,
    /// Relative tolerance on slope upper bounds.
    pub bound_tol: f64,
    /// Relative tolerance on means compared with a deterministic time.
    pub mean_tol: f64,
    /// Multi-saddle slope floor as a fraction of `1 / gamma_1`.
    pub slope_floor: f64,
    pub mu: f64,
    pub rho: f64,
    pub r: f64,
    /// Level offset of the stopping-time sequence; defaults to a tenth of the smallest
    /// gap between critical values.
    pub h: Option<f64>,
    /// Working upper bound on F along the runs.
    #[serde(rename = "H")]
    pub big_h: Option<f64>,
    /// Target `F(x*) + e` of the hitting time T.
    pub e: f64,
    /// Largest admissible fraction of truncated replicas per row.
    pub truncation_gate: f64,
    /// Radius of the exit ball around the saddle.
    pub radius: f64,
    /// Radius of the start neighbourhood U for the uniform exit-distribution check.
    pub u_radius: f64,
    /// Grid points per axis over U; 0 disables the grid starts.
    pub grid_per_axis: usize,
    pub start: StartRule,
    /// Chain start, in cell spacings before the first saddle.
    pub start_offset: f64,
    /// Explicit start for the multi-saddle and SGD scans.
    pub x0: Option<Vec<f64>>,
    pub shells: Vec<u32>,
    pub beyond_distance: Option<f64>,
    /// Offset along the stable direction for shell starts.
    pub shell_stable_offset: f64,
    pub identity_beta: f64,
    pub identity_steps: usize,
    pub noise: NoiseConfig,
}

pub fn default_epsilon_grid() -> Vec<f64> {
    vec![1e-2, 3e-3, 1e-3, 3e-4, 1e-4]
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            landscape: LandscapeSpec::default(),
            epsilon_grid: default_epsilon_grid(),
            beta_grid: vec![1e-2, 1e-3, 1e-4],
            replicas: 2000,
            seed: 1,
            dt: None,
            dt_per_rate: 2e-3,
            t_max_factor: 10.0,
            tol: 0.15,
            bound_tol: 0.3,
            mean_tol: 0.1,
            slope_floor: 0.5,
            mu: 0.1,
            rho: 0.05,
            r: 0.2,
            h: None,
            big_h: None,
            e: 0.5,
            truncation_gate: 0.01,
            radius: 1.0,
            u_radius: 0.05,
            grid_per_axis: 3,
            start: StartRule::AtSaddle,
            start_offset: 0.75,
            x0: None,
            shells: vec![0, 1, 2],
            beyond_distance: Some(0.5),
            shell_stable_offset: 0.3,
            identity_beta: 2f64.powi(-14),
            identity_steps: 100,
            noise: NoiseConfig::Identity,
        }
    }
}

fn check_grid(name: &str, grid: &[f64], upper: f64) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config(format!("{name}: must not be empty")));
    }
    if grid.iter().any(|v| !(*v > 0.0 && *v < upper)) {
        return Err(Error::Config(format!("{name}: values must lie in (0, {upper})")));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config(format!("{name}: must be strictly decreasing")));
    }
    Ok(())
}

impl ScanConfig {
    /// Checks that do not depend on which scan runs.
    pub fn validate(&self) -> Result<()> {
        check_grid("epsilon_grid", &self.epsilon_grid, 1.0)?;
        check_grid("beta_grid", &self.beta_grid, 1.0)?;
        let positive = [
            ("dt_per_rate", self.dt_per_rate),
            ("t_max_factor", self.t_max_factor),
            ("tol", self.tol),
            ("bound_tol", self.bound_tol),
            ("mean_tol", self.mean_tol),
            ("mu", self.mu),
            ("e", self.e),
            ("radius", self.radius),
            ("u_radius", self.u_radius),
            ("identity_beta", self.identity_beta),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name}: must be positive and finite")));
            }
        }
        for (name, v) in [("rho", self.rho), ("truncation_gate", self.truncation_gate)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name}: must lie in [0, 1)")));
            }
        }
        if !(self.r >= 0.0) || !(self.slope_floor >= 0.0) {
            return Err(Error::Config("r, slope_floor: must be non-negative".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::Config("dt: must be positive".into()));
            }
        }
        if let Some(h) = self.h {
            if !(h > 0.0) {
                return Err(Error::Config("h: must be positive".into()));
            }
        }
        if self.u_radius >= self.radius {
            return Err(Error::Config("u_radius: must be smaller than radius".into()));
        }
        Ok(())
    }

    pub fn require_statistics(&self) -> Result<()> {
        if self.replicas < MIN_REPLICAS {
            return Err(Error::Config(format!(
                "replicas: {} is below the statistical minimum of {MIN_REPLICAS}",
                self.replicas
            )));
        }
        Ok(())
    }

    pub fn dt_rule(&self) -> DtRule {
        match self.dt {
            Some(dt) => DtRule::Fixed { dt },
            None => DtRule::Auto {
                per_rate: self.dt_per_rate,
            },
        }
    }

    pub fn resolve_dt(&self, landscape: &Landscape) -> f64 {
        match self.dt_rule() {
            DtRule::Fixed { dt } => dt,
            DtRule::Auto { per_rate } => {
                let stiff = landscape
                    .critical_points()
                    .iter()
                    .flat_map(|c| c.eigenvalues.iter().map(|v| v.abs()))
                    .fold(0.0, f64::max);
                if stiff > 0.0 {
                    per_rate / stiff
                } else {
                    per_rate
                }
            }
        }
    }

    fn t_max(&self, landscape: &Landscape, epsilon: f64, saddles: usize) -> f64 {
        self.t_max_factor * (1.0 + (1.0 / epsilon).ln()) * saddles.max(1) as f64 / landscape.gamma1()
    }
}

/// One aggregated row per (series, ε) with the columns written to `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub series: String,
    /// Series parameter: β for SGD rows, start distance for shell rows, start index for
    /// exit-distribution rows; NaN when unused.
    pub param: f64,
    pub epsilon: f64,
    pub log_inv_eps: f64,
    pub mean: f64,
    pub ci: f64,
    pub n_total: usize,
    pub n_effective: usize,
    pub truncated_fraction: f64,
    pub excluded_fraction: f64,
    pub fraction: f64,
    pub fraction_ci: f64,
    pub oracle_prediction: f64,
}

impl ScanRow {
    fn from_stats(series: &str, param: f64, epsilon: f64, stats: &TimeStats, oracle: f64) -> Self {
        ScanRow {
            series: series.to_string(),
            param,
            epsilon,
            log_inv_eps: (1.0 / epsilon).ln(),
            mean: stats.mean,
            ci: stats.ci,
            n_total: stats.n_total,
            n_effective: stats.n_effective,
            truncated_fraction: stats.truncated_fraction,
            excluded_fraction: if stats.n_total == 0 {
                0.0
            } else {
                1.0 - stats.n_effective as f64 / stats.n_total as f64
            },
            fraction: f64::NAN,
            fraction_ci: f64::NAN,
            oracle_prediction: oracle,
        }
    }
}

pub fn write_rows_csv<W: Write>(rows: &[ScanRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(reader: R) -> Result<Vec<ScanRow>> {
    let mut rd = csv::Reader::from_reader(reader);
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// `(ln 1/eps, mean, ci_half_width)`.
    pub points: Vec<(f64, f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_ci: (f64, f64),
    /// Weighted residual sum of squares.
    pub chi2: f64,
}

impl ScalingFit {
    pub fn slope_ci_contains(&self, v: f64) -> bool {
        self.slope_ci.0 <= v && v <= self.slope_ci.1
    }
}

/// Weighted least squares of mean against `ln 1/eps` with weights `1/ci^2`; the slope
/// interval is the 95% normal interval from the normal equations.
pub fn fit_log_scaling(points: &[(f64, f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::invalid(format!("need at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|p| !(p.2 > 0.0) || !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::invalid("every point needs finite coordinates and a positive CI width"));
    }
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, ci) in points {
        let w = 1.0 / (ci * ci);
        s += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let delta = s * sxx - sx * sx;
    if !(delta > 0.0) {
        return Err(Error::invalid("abscissae must not all coincide"));
    }
    let slope = (s * sxy - sx * sy) / delta;
    let intercept = (sxx * sy - sx * sxy) / delta;
    let half = Z95 * (s / delta).sqrt();
    let chi2 = points
        .iter()
        .map(|&(x, y, ci)| ((y - intercept - slope * x) / ci).powi(2))
        .sum();
    Ok(ScalingFit {
        points: points.to_vec(),
        slope,
        intercept,
        slope_ci: (slope - half, slope + half),
        chi2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    /// Human-readable acceptance condition.
    pub criterion: String,
    pub detail: String,
}

impl Verdict {
    fn new(name: impl Into<String>, passed: bool, measured: f64, criterion: impl Into<String>) -> Self {
        Verdict {
            name: name.into(),
            passed,
            measured,
            criterion: criterion.into(),
            detail: String::new(),
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    fn failed(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Verdict::new(name, false, f64::NAN, "computable").with_detail(detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanKind {
    ExitTime,
    ExitDistribution,
    MultiSaddle,
    Sgd,
    Shell,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub kind: ScanKind,
    pub rows: Vec<ScanRow>,
    pub fits: Vec<(String, ScalingFit)>,
    pub verdicts: Vec<Verdict>,
}

impl ScanReport {
    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    fn build(kind: ScanKind, rows: Vec<ScanRow>, config: &ScanConfig) -> Self {
        let (verdicts, fits) = verdicts_from_rows(kind, &rows, config);
        ScanReport {
            kind,
            rows,
            fits,
            verdicts,
        }
    }
}

pub fn run_scan(kind: ScanKind, config: &ScanConfig) -> Result<ScanReport> {
    match kind {
        ScanKind::ExitTime => exit_time_scan(config, &config.start),
        ScanKind::ExitDistribution => exit_distribution_scan(config, config.mu),
        ScanKind::MultiSaddle => multi_saddle_scan(config),
        ScanKind::Sgd => sgd_correspondence_scan(config),
        ScanKind::Shell => {
            let mut shells: Vec<Shell> = config.shells.iter().map(|k| Shell::Index(*k)).collect();
            if config.beyond_distance.is_some() {
                shells.push(Shell::Beyond);
            }
            shell_bound_scan(config, &shells)
        }
    }
}

fn prepare(config: &ScanConfig) -> Result<(Landscape, NoiseSpec)> {
    config.validate()?;
    config.require_statistics()?;
    let land = config.landscape.build()?;
    let noise = config.noise.to_spec()?;
    noise.validate(land.dim())?;
    Ok((land, noise))
}

fn single_saddle(land: &Landscape) -> Result<LinearSaddle> {
    let saddles = land.saddles();
    if saddles.len() != 1 {
        return Err(Error::precondition(format!(
            "scan needs a single-saddle landscape, found {} saddles",
            saddles.len()
        )));
    }
    LinearSaddle::from_critical_point(saddles[0])
}

fn sde_config(epsilon: f64, dt: f64, t_max: f64, seed: u64, noise: &NoiseSpec) -> SdeConfig {
    SdeConfig {
        noise: noise.clone(),
        ..SdeConfig::new(epsilon, dt, t_max, seed)
    }
}

fn series_seed(config: &ScanConfig, series: &str, index: usize) -> u64 {
    derive_seed(config.seed, &format!("{series}/{index}"))
}

/// Exit time from `Ball(O, radius)` across the ε grid.
pub fn exit_time_scan(config: &ScanConfig, rule: &StartRule) -> Result<ScanReport> {
    let (land, noise) = prepare(config)?;
    let lin = single_saddle(&land)?;
    let dt = config.resolve_dt(&land);
    let domain = DomainSpec::ball(lin.center.clone(), config.radius);
    let (x0, deterministic) = match rule {
        StartRule::AtSaddle => (lin.center.clone(), None),
        StartRule::InA1 { offset } => {
            if offset.abs() >= config.radius {
                return Err(Error::precondition("A1 offset must stay inside the ball"));
            }
            (lin.point_along(0.0, *offset), None)
        }
        StartRule::InA2 { point } => {
            let t_max = config.t_max(&land, config.epsilon_grid[0], 1);
            match flow::deterministic_exit_time(&land, point, &domain, dt.min(1e-3), t_max)? {
                ExitTime::Finite(t) => (point.clone(), Some(t)),
                ExitTime::NeverExits { .. } => {
                    return Err(Error::precondition("InA2 start converges to a critical point"));
                }
            }
        }
    };
    let mut rows = Vec::new();
    for (i, &eps) in config.epsilon_grid.iter().enumerate() {
        let cfg = sde_config(eps, dt, config.t_max(&land, eps, 1), series_seed(config, "tau", i), &noise);
        let set = sde::sample_tau(&land, &domain, &cfg, &x0, config.replicas)?;
        let oracle = match deterministic {
            Some(t) => t,
            None => linear_exit_oracle(&lin, eps)?,
        };
        rows.push(ScanRow::from_stats("tau", f64::NAN, eps, &set.stats(), oracle));
    }
    Ok(ScanReport::build(ScanKind::ExitTime, rows, config))
}

/// Agresti–Coull 95% interval half-width for `hits` out of `n`.
fn proportion(hits: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let nt = n as f64 + Z95 * Z95;
    let pt = (hits as f64 + 0.5 * Z95 * Z95) / nt;
    (hits as f64 / n as f64, Z95 * (pt * (1.0 - pt) / nt).sqrt())
}

/// Start points of the uniform exit-distribution check: a square grid of `U` scaled so
/// its corners lie on `∂U`.
pub fn u_grid(center: &[f64], u_radius: f64, per_axis: usize) -> Vec<Vec<f64>> {
    if per_axis == 0 {
        return Vec::new();
    }
    let n = center.len();
    let half = u_radius / (n as f64).sqrt();
    (0..per_axis.pow(n as u32))
        .map(|mut idx| {
            (0..n)
                .map(|d| {
                    let i = idx % per_axis;
                    idx /= per_axis;
                    let s = if per_axis == 1 {
                        0.0
                    } else {
                        2.0 * i as f64 / (per_axis - 1) as f64 - 1.0
                    };
                    center[d] + s * half
                })
                .collect()
        })
        .collect()
}

/// Fraction of exits landing in `Q^mu`, for the saddle start and for every grid start.
pub fn exit_distribution_scan(config: &ScanConfig, mu: f64) -> Result<ScanReport> {
    let (land, noise) = prepare(config)?;
    let lin = single_saddle(&land)?;
    let dt = config.resolve_dt(&land);
    let domain = DomainSpec::ball(lin.center.clone(), config.radius);
    let flow_t_max = config.t_max(&land, config.epsilon_grid[0], 1);
    let target = QMuSet::from_flow_images(&land, &lin, config.radius, config.u_radius, 21, dt.min(1e-3), flow_t_max)?;
    let mut starts = vec![("saddle".to_string(), f64::NAN, lin.center.clone())];
    for (j, p) in u_grid(&lin.center, config.u_radius, config.grid_per_axis).into_iter().enumerate() {
        starts.push((format!("grid_{j}"), j as f64, p));
    }
    let mut rows = Vec::new();
    for (series, param, x0) in &starts {
        for (i, &eps) in config.epsilon_grid.iter().enumerate() {
            let cfg = sde_config(eps, dt, config.t_max(&land, eps, 1), series_seed(config, series, i), &noise);
            let set = sde::sample_tau(&land, &domain, &cfg, x0, config.replicas)?;
            let exits: Vec<&[f64]> = set
                .records
                .iter()
                .filter(|r| !r.record.truncated)
                .map(|r| r.record.state.as_slice())
                .collect();
            let hits = exits.iter().filter(|x| target.contains(x, mu)).count();
            let (frac, frac_ci) = proportion(hits, exits.len());
            let mut row = ScanRow::from_stats(series, *param, eps, &set.stats(), 1.0);
            row.fraction = frac;
            row.fraction_ci = frac_ci;
            rows.push(row);
        }
    }
    Ok(ScanReport::build(ScanKind::ExitDistribution, rows, config))
}

fn minimizer_index(land: &Landscape) -> Result<usize> {
    let x_star = land
        .global_minimizer()
        .ok_or_else(|| Error::precondition("landscape has no registered minimizer"))?;
    Ok(land
        .critical_points()
        .iter()
        .position(|c| std::ptr::eq(c, x_star))
        .expect("minimizer is registered"))
}

fn chain_start(config: &ScanConfig, land: &Landscape) -> Result<Vec<f64>> {
    if let Some(x0) = &config.x0 {
        land.check_dim(x0)?;
        return Ok(x0.clone());
    }
    match land.chain() {
        Some(info) => Ok(info.start_before_first(land, config.start_offset)),
        None => Err(Error::Config("x0: required for landscapes other than saddle_chain".into())),
    }
}

/// Number of saddles the chain start has to traverse.
fn saddle_count(land: &Landscape) -> usize {
    land.chain().map_or(land.saddles().len(), |c| c.k)
}

/// Replicas that truncated or whose hitting state does not flow into the basin of `x*`.
fn condition_on_basin(land: &Landscape, set: &ReplicaSet, x_star: usize) -> Result<TimeStats> {
    let t_flow = 40.0 / land.gamma3();
    let dt_flow = (0.05 / land.gamma3()).min(t_flow / 10.0);
    let mut times = Vec::with_capacity(set.records.len());
    let mut truncated = set.failures.len();
    for r in set.records.iter() {
        if r.record.truncated {
            truncated += 1;
            continue;
        }
        let end = flow::flow_terminal(land, &r.record.state, dt_flow, t_flow)?;
        if land.nearest_critical_point(&end, 1e-4) == Some(x_star) {
            times.push(r.record.time);
        }
    }
    let n_total = set.records.len() + set.failures.len();
    let (mean, sd, ci) = sde::mean_ci(&times);
    Ok(TimeStats {
        n_total,
        n_effective: times.len(),
        truncated_fraction: truncated as f64 / n_total.max(1) as f64,
        mean,
        sd,
        ci,
    })
}

fn check_h_bound(config: &ScanConfig, land: &Landscape, x0: &[f64]) -> Result<()> {
    if let Some(h) = config.big_h {
        let f0 = land.value(x0);
        if !(f0 < h) {
            return Err(Error::precondition(format!("F(x0) = {f0} must stay below H = {h}")));
        }
    }
    Ok(())
}

/// Hitting time of `F <= F(x*) + e` from a start above the first saddle, conditioned on
/// reaching the basin of `x*`.
pub fn multi_saddle_scan(config: &ScanConfig) -> Result<ScanReport> {
    let (land, noise) = prepare(config)?;
    let x_star_idx = minimizer_index(&land)?;
    let x_star = land.critical_points()[x_star_idx].clone();
    let x0 = chain_start(config, &land)?;
    check_h_bound(config, &land, &x0)?;
    let k = saddle_count(&land);
    if let Some(top) = land.saddles().first() {
        if land.value(&x0) <= top.f_value {
            return Err(Error::precondition("F(x0) must exceed the first saddle value"));
        }
    }
    let dt = config.resolve_dt(&land);
    let mut rows = Vec::new();
    for (i, &eps) in config.epsilon_grid.iter().enumerate() {
        let cfg = sde_config(eps, dt, config.t_max(&land, eps, k), series_seed(config, "T", i), &noise);
        let set = sde::sample_t(&land, &x_star, config.e, &cfg, &x0, config.replicas)?;
        let stats = condition_on_basin(&land, &set, x_star_idx)?;
        let oracle = k as f64 * (1.0 / eps).ln() / land.gamma1();
        rows.push(ScanRow::from_stats("T", k as f64, eps, &stats, oracle));
    }
    Ok(ScanReport::build(ScanKind::MultiSaddle, rows, config))
}

/// SGD hitting times in their own clock against perturbed-flow hitting times at
/// `eps = sqrt(beta)`, plus the shared-noise path identity.
pub fn sgd_correspondence_scan(config: &ScanConfig) -> Result<ScanReport> {
    let (land, noise) = prepare(config)?;
    noise.check_ellipticity(&land.region().grid(5), 1e-12)?;
    let x_star_idx = minimizer_index(&land)?;
    let x_star = land.critical_points()[x_star_idx].clone();
    let x0 = chain_start(config, &land)?;
    check_h_bound(config, &land, &x0)?;
    let k = saddle_count(&land);
    let dt = config.resolve_dt(&land);
    let mut rows = Vec::new();
    for (i, &beta) in config.beta_grid.iter().enumerate() {
        let eps = beta.sqrt();
        let t_max = config.t_max(&land, eps, k);
        let sgd_cfg = SgdConfig {
            noise: noise.clone(),
            ..SgdConfig::matching(beta, dt, t_max, series_seed(config, "sgd_tau", i))
        };
        let set = sde::sample_sgd_t(&land, &x_star, config.e, &sgd_cfg, &x0, config.replicas)?;
        let oracle = k as f64 / (2.0 * land.gamma1()) * (1.0 / beta) * (1.0 / beta).ln();
        rows.push(ScanRow::from_stats("sgd_tau", beta, eps, &set.stats(), oracle));
        let cfg = sde_config(eps, dt, t_max, series_seed(config, "flow_T", i), &noise);
        let set = sde::sample_t(&land, &x_star, config.e, &cfg, &x0, config.replicas)?;
        let oracle = k as f64 * (1.0 / eps).ln() / land.gamma1();
        rows.push(ScanRow::from_stats("flow_T", beta, eps, &set.stats(), oracle));
    }
    let beta = config.identity_beta;
    let (_, _, gap) = sde::shared_noise_paths(&land, beta, dt, &x0, config.identity_steps, derive_seed(config.seed, "identity"))?;
    rows.push(ScanRow {
        series: "identity_gap".into(),
        param: beta,
        epsilon: beta.sqrt(),
        log_inv_eps: (1.0 / beta.sqrt()).ln(),
        mean: gap,
        ci: 0.0,
        n_total: config.identity_steps,
        n_effective: config.identity_steps,
        truncated_fraction: 0.0,
        excluded_fraction: 0.0,
        fraction: f64::NAN,
        fraction_ci: f64::NAN,
        oracle_prediction: 0.0,
    });
    Ok(ScanReport::build(ScanKind::Sgd, rows, config))
}

/// Start at distance `dist` from the stable set, offset along the stable direction.
fn shell_start(lin: &LinearSaddle, dist: f64, stable_offset: f64) -> Vec<f64> {
    lin.point_along(dist, stable_offset)
}

/// Mean exit time from shell starts against the per-shell bounds.
pub fn shell_bound_scan(config: &ScanConfig, shells: &[Shell]) -> Result<ScanReport> {
    let (land, noise) = prepare(config)?;
    let lin = single_saddle(&land)?;
    let dt = config.resolve_dt(&land);
    let domain = DomainSpec::ball(lin.center.clone(), config.radius);
    let beyond = config.beyond_distance.unwrap_or(0.5);
    let mut rows = Vec::new();
    for (i, &eps) in config.epsilon_grid.iter().enumerate() {
        for &shell in shells {
            let dist = match shell {
                Shell::Beyond => beyond,
                _ => shell_representative(shell, eps, DEFAULT_SHELL_CAP, beyond),
            };
            let x0 = shell_start(&lin, dist, config.shell_stable_offset);
            if !domain.contains(&land, &x0) {
                return Err(Error::precondition(format!("{shell} start {x0:?} lies outside the ball")));
            }
            let got = shell_index(&x0, &lin, eps)?;
            let far_bound = shell_exit_bound(Shell::Beyond, lin.lambda1(), config.r, eps)?;
            let consistent = match shell {
                // A far start only has to sit in a shell whose own bound is already below 2r ln(1/eps).
                Shell::Beyond => shell_exit_bound(got, lin.lambda1(), config.r, eps)? <= far_bound,
                _ => got == shell,
            };
            if !consistent {
                return Err(Error::precondition(format!("start meant for {shell} sits in {got}")));
            }
            let series = shell.to_string();
            let cfg = sde_config(eps, dt, config.t_max(&land, eps, 1), series_seed(config, &series, i), &noise);
            let set = sde::sample_tau(&land, &domain, &cfg, &x0, config.replicas)?;
            let bound = shell_exit_bound(shell, lin.lambda1(), config.r, eps)?;
            rows.push(ScanRow::from_stats(&series, dist, eps, &set.stats(), bound));
        }
    }
    Ok(ScanReport::build(ScanKind::Shell, rows, config))
}

fn series_rows<'a>(rows: &'a [ScanRow], series: &str) -> Vec<&'a ScanRow> {
    rows.iter().filter(|r| r.series == series).collect()
}

fn series_names(rows: &[ScanRow]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for r in rows {
        if !names.contains(&r.series) {
            names.push(r.series.clone());
        }
    }
    names
}

fn fit_rows(rows: &[&ScanRow]) -> Result<ScalingFit> {
    let pts: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.log_inv_eps, r.mean, r.ci)).collect();
    fit_log_scaling(&pts)
}

/// The row with the smallest ε.
fn smallest<'a>(rows: &[&'a ScanRow]) -> Option<&'a ScanRow> {
    rows.iter().copied().min_by(|a, b| a.epsilon.total_cmp(&b.epsilon))
}

fn quality_gate(rows: &[ScanRow], gate: f64) -> Verdict {
    let worst = rows
        .iter()
        .filter(|r| r.series != "identity_gap")
        .map(|r| r.truncated_fraction)
        .fold(0.0, f64::max);
    Verdict::new("quality_gate", worst <= gate, worst, format!("truncated fraction <= {gate}"))
}

/// Verdicts recomputed from the rows alone (given the scan configuration).
pub fn verdicts_from_rows(kind: ScanKind, rows: &[ScanRow], config: &ScanConfig) -> (Vec<Verdict>, Vec<(String, ScalingFit)>) {
    let mut verdicts = vec![quality_gate(rows, config.truncation_gate)];
    let mut fits = Vec::new();
    match kind {
        ScanKind::ExitTime => {
            let tau = series_rows(rows, "tau");
            match fit_rows(&tau) {
                Ok(fit) => {
                    match config.start {
                        StartRule::InA2 { .. } => {
                            verdicts.push(
                                Verdict::new(
                                    "slope_ci_contains_zero",
                                    fit.slope_ci_contains(0.0),
                                    fit.slope,
                                    "0 in slope CI",
                                )
                                .with_detail(format!("slope CI [{:.4e}, {:.4e}]", fit.slope_ci.0, fit.slope_ci.1)),
                            );
                        }
                        _ => {
                            let expected = tau[0].oracle_prediction / tau[0].log_inv_eps;
                            let (lo, hi) = (expected * (1.0 - config.tol), expected * (1.0 + config.tol));
                            verdicts.push(
                                Verdict::new(
                                    "slope_law",
                                    (lo..=hi).contains(&fit.slope),
                                    fit.slope,
                                    format!("slope in [{lo:.4}, {hi:.4}]"),
                                )
                                .with_detail(format!("1/lambda_1 = {expected:.4}")),
                            );
                        }
                    }
                    fits.push(("tau".to_string(), fit));
                }
                Err(e) => verdicts.push(Verdict::failed("scaling_fit", e.to_string())),
            }
            if matches!(config.start, StartRule::InA2 { .. }) {
                for r in &tau {
                    let rel = (r.mean - r.oracle_prediction).abs() / r.oracle_prediction;
                    verdicts.push(Verdict::new(
                        format!("mean_matches_t(x)@eps={:e}", r.epsilon),
                        rel <= config.mean_tol,
                        rel,
                        format!("|mean - t(x)| / t(x) <= {}", config.mean_tol),
                    ));
                }
            }
        }
        ScanKind::ExitDistribution => {
            let mut worst = f64::INFINITY;
            let mut worst_series = String::new();
            for name in series_names(rows) {
                let s = series_rows(rows, &name);
                let mut sorted = s.clone();
                sorted.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
                let monotone = sorted.windows(2).all(|w| {
                    w[1].fraction + 2.0 * w[0].fraction_ci.max(w[1].fraction_ci) >= w[0].fraction
                });
                verdicts.push(Verdict::new(
                    format!("fraction_monotone[{name}]"),
                    monotone,
                    f64::NAN,
                    "non-decreasing as eps decreases, within 2 CI widths",
                ));
                if let Some(last) = smallest(&s) {
                    let f = if last.fraction.is_nan() { 0.0 } else { last.fraction };
                    if f < worst {
                        worst = f;
                        worst_series = name.clone();
                    }
                    if name == "saddle" {
                        verdicts.push(Verdict::new(
                            "saddle_start_concentration",
                            f >= 1.0 - config.rho,
                            f,
                            format!("fraction in Q^mu >= {}", 1.0 - config.rho),
                        ));
                    }
                }
            }
            verdicts.push(
                Verdict::new(
                    "uniform_concentration",
                    worst >= 1.0 - config.rho,
                    worst,
                    format!("min over starts of fraction in Q^mu >= {}", 1.0 - config.rho),
                )
                .with_detail(format!("worst start: {worst_series}")),
            );
        }
        ScanKind::MultiSaddle => {
            let t = series_rows(rows, "T");
            let k = t.first().map_or(0.0, |r| r.param);
            match fit_rows(&t) {
                Ok(fit) => {
                    if k == 0.0 {
                        verdicts.push(Verdict::new(
                            "slope_ci_contains_zero",
                            fit.slope_ci_contains(0.0),
                            fit.slope,
                            "0 in slope CI",
                        ));
                    } else {
                        let bound = t[0].oracle_prediction / t[0].log_inv_eps;
                        let hi = bound * (1.0 + config.bound_tol);
                        let floor = config.slope_floor * bound / k;
                        verdicts.push(Verdict::new(
                            "slope_bound",
                            fit.slope <= hi,
                            fit.slope,
                            format!("slope <= (k/gamma_1)(1+{}) = {hi:.4}", config.bound_tol),
                        ));
                        verdicts.push(Verdict::new(
                            "slope_floor",
                            fit.slope >= floor,
                            fit.slope,
                            format!("slope >= {floor:.4}"),
                        ));
                    }
                    fits.push(("T".to_string(), fit));
                }
                Err(e) => verdicts.push(Verdict::failed("scaling_fit", e.to_string())),
            }
            if let Some(last) = smallest(&t) {
                verdicts.push(Verdict::new(
                    "conditioning_excluded",
                    last.excluded_fraction <= config.rho,
                    last.excluded_fraction,
                    format!("excluded fraction at smallest eps <= {}", config.rho),
                ));
            }
        }
        ScanKind::Sgd => {
            let sgd = series_rows(rows, "sgd_tau");
            let flw = series_rows(rows, "flow_T");
            for s in &sgd {
                match flw.iter().find(|f| f.param == s.param) {
                    Some(f) => {
                        let diff = (s.param * s.mean - f.mean).abs();
                        let joint = ((s.param * s.ci).powi(2) + f.ci.powi(2)).sqrt();
                        verdicts.push(Verdict::new(
                            format!("rescaling@beta={:e}", s.param),
                            diff <= joint,
                            diff,
                            format!("|beta E tau - E T| <= joint CI {joint:.4e}"),
                        ));
                    }
                    None => verdicts.push(Verdict::failed(
                        format!("rescaling@beta={:e}", s.param),
                        "missing flow_T row",
                    )),
                }
            }
            if let Some(last) = sgd.iter().copied().min_by(|a, b| a.param.total_cmp(&b.param)) {
                let beta = last.param;
                let scale = (1.0 / beta) * (1.0 / beta).ln();
                let ratio = last.mean / scale;
                let bound = last.oracle_prediction / scale * (1.0 + config.bound_tol);
                verdicts.push(Verdict::new(
                    "sgd_ratio_bound",
                    ratio <= bound,
                    ratio,
                    format!("E tau / (beta^-1 ln beta^-1) <= {bound:.4} at beta={beta:e}"),
                ));
            }
            for g in series_rows(rows, "identity_gap") {
                verdicts.push(Verdict::new(
                    "shared_noise_identity",
                    g.mean == 0.0,
                    g.mean,
                    "max |Y_m - X_m| == 0",
                ));
            }
        }
        ScanKind::Shell => {
            for r in rows {
                verdicts.push(Verdict::new(
                    format!("{}@eps={:e}", r.series, r.epsilon),
                    r.mean <= r.oracle_prediction,
                    r.mean,
                    format!("mean <= {:.4}", r.oracle_prediction),
                ));
            }
        }
    }
    (verdicts, fits)
}

/// Gnuplot script plotting each series' mean against `ln 1/eps` with its oracle line.
pub fn plot_script(report: &ScanReport, csv_name: &str) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead left top\n");
    s.push_str("set xlabel 'ln(1/eps)'\nset ylabel 'mean time'\n");
    s.push_str(&format!("set title '{:?}'\n", report.kind));
    let names: Vec<String> = series_names(&report.rows)
        .into_iter()
        .filter(|n| n != "identity_gap")
        .collect();
    let mut parts = Vec::new();
    for n in &names {
        parts.push(format!(
            "'{csv_name}' using 4:(strcol(1) eq '{n}' ? $5 : NaN):6 with yerrorbars title '{n}'"
        ));
        parts.push(format!(
            "'{csv_name}' using 4:(strcol(1) eq '{n}' ? $13 : NaN) with linespoints dt 2 title '{n} oracle'"
        ));
    }
    if !parts.is_empty() {
        s.push_str("plot ");
        s.push_str(&parts.join(", \\\n     "));
        s.push('\n');
    }
    s
}

//! Euler–Maruyama integration of `dY = -grad F(Y) dt + eps sigma(Y) dW` and of the SGD
//! diffusion `dX = -beta grad F(X) dt + beta sigma(X) dW`, with event detection for exit
//! times, hitting times and the alternating level-set stopping sequence.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::DomainSpec;
use crate::landscape::{sorted_eigenvalues, CriticalPoint, Landscape};
use crate::rng::{replica_rng, replica_seed, rng_from_seed};

/// Bisection iterations of the in-step crossing refinement.
const CROSSING_ITERS: usize = 60;

pub type StateNoiseFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// Diffusion coefficient `sigma(x)` (row-major `n x n`).
#[derive(Clone)]
pub enum NoiseSpec {
    Identity,
    ConstantMatrix(DMatrix<f64>),
    StateDependent(Arc<StateNoiseFn>),
}

impl fmt::Debug for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseSpec::Identity => write!(f, "Identity"),
            NoiseSpec::ConstantMatrix(m) => write!(f, "ConstantMatrix({m:?})"),
            NoiseSpec::StateDependent(_) => write!(f, "StateDependent(..)"),
        }
    }
}

impl NoiseSpec {
    pub fn sigma_at(&self, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        match self {
            NoiseSpec::Identity => DMatrix::identity(n, n),
            NoiseSpec::ConstantMatrix(m) => m.clone(),
            NoiseSpec::StateDependent(f) => {
                let mut buf = vec![0.0; n * n];
                f(x, &mut buf);
                DMatrix::from_row_slice(n, n, &buf)
            }
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if let NoiseSpec::ConstantMatrix(m) = self {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.nrows(),
                });
            }
        }
        Ok(())
    }

    /// Minimum eigenvalue of `sigma sigma^T` over `samples`; errors if below `ell`.
    pub fn check_ellipticity(&self, samples: &[Vec<f64>], ell: f64) -> Result<f64> {
        let worst = samples
            .iter()
            .map(|x| {
                let s = self.sigma_at(x);
                sorted_eigenvalues(&(&s * s.transpose()))[0]
            })
            .fold(f64::INFINITY, f64::min);
        if worst < ell {
            return Err(Error::precondition(format!(
                "diffusion is not uniformly elliptic: min eig(sigma sigma^T) = {worst:e} < {ell:e}"
            )));
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone)]
pub struct SdeConfig {
    /// Noise scale; zero reduces the scheme to explicit Euler on the flow.
    pub epsilon: f64,
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    pub noise: NoiseSpec,
}

impl SdeConfig {
    pub fn new(epsilon: f64, dt: f64, t_max: f64, seed: u64) -> Self {
        SdeConfig {
            epsilon,
            dt,
            t_max,
            seed,
            noise: NoiseSpec::Identity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid("epsilon must be finite and non-negative"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        if !(self.t_max > 0.0) {
            return Err(Error::invalid("t_max must be positive"));
        }
        if !self.t_max.is_finite() {
            return Err(Error::invalid("t_max must be finite so every run terminates"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossDirection {
    Down,
    Up,
    Either,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    ExitDomain(DomainSpec),
    ValueBelow(f64),
    LevelCross { level: f64, direction: CrossDirection },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventSpec {
    pub kind: EventKind,
    pub label: String,
}

impl EventSpec {
    pub fn exit_domain(domain: DomainSpec) -> Self {
        EventSpec {
            kind: EventKind::ExitDomain(domain),
            label: "tau".into(),
        }
    }

    pub fn value_below(threshold: f64) -> Self {
        EventSpec {
            kind: EventKind::ValueBelow(threshold),
            label: "T".into(),
        }
    }

    /// Signed quantity that is positive before the event and non-positive once it holds.
    fn gap(&self, land: &Landscape, x: &[f64]) -> f64 {
        self.gap_given(x, land.value(x))
    }

    #[inline]
    fn gap_given(&self, x: &[f64], f: f64) -> f64 {
        match &self.kind {
            EventKind::ExitDomain(d) => d.signed_distance_given(x, f),
            EventKind::ValueBelow(thr) => f - thr,
            EventKind::LevelCross { level, .. } => f - level,
        }
    }

    /// Whether the event predicate holds at `x` within `tol`.
    pub fn holds_at(&self, land: &Landscape, x: &[f64], tol: f64) -> bool {
        match &self.kind {
            EventKind::LevelCross { .. } | EventKind::ExitDomain(_) => self.gap(land, x).abs() <= tol,
            EventKind::ValueBelow(_) => self.gap(land, x) <= tol,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match &self.kind {
            EventKind::ExitDomain(d) => d.validate(dim),
            EventKind::ValueBelow(v) | EventKind::LevelCross { level: v, .. } => {
                if v.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("event threshold must be finite"))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingRecord {
    pub label: String,
    pub time: f64,
    pub state: Vec<f64>,
    pub f_value: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSummary {
    pub terminal_state: Vec<f64>,
    pub min_f: f64,
    pub max_f: f64,
    pub steps: u64,
}

/// A record tagged with its replica index and derived seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub replica: usize,
    pub seed: u64,
    pub record: StoppingRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaFailure {
    pub replica: usize,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaSet {
    pub records: Vec<ReplicaRecord>,
    pub failures: Vec<ReplicaFailure>,
}

/// Mean and 95% half-width of the non-truncated times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeStats {
    pub n_total: usize,
    pub n_effective: usize,
    pub truncated_fraction: f64,
    pub mean: f64,
    pub sd: f64,
    pub ci: f64,
}

/// Sample mean, standard deviation and `1.96 s / sqrt(n)`.
pub fn mean_ci(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    (mean, sd, 1.96 * sd / (n as f64).sqrt())
}

impl ReplicaSet {
    pub fn stats(&self) -> TimeStats {
        let n_total = self.records.len() + self.failures.len();
        let times: Vec<f64> = self
            .records
            .iter()
            .filter(|r| !r.record.truncated)
            .map(|r| r.record.time)
            .collect();
        let (mean, sd, ci) = mean_ci(&times);
        let truncated = n_total - times.len();
        TimeStats {
            n_total,
            n_effective: times.len(),
            truncated_fraction: if n_total == 0 { 0.0 } else { truncated as f64 / n_total as f64 },
            mean,
            sd,
            ci,
        }
    }

    /// CSV with header `replica,label,time,f_value,truncated,seed`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_records_csv(&self.records, writer)
    }
}

pub fn write_records_csv<W: Write>(records: &[ReplicaRecord], writer: W) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        replica: usize,
        label: &'a str,
        time: f64,
        f_value: f64,
        truncated: bool,
        seed: u64,
    }
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(Row {
            replica: r.replica,
            label: &r.record.label,
            time: r.record.time,
            f_value: r.record.f_value,
            truncated: r.record.truncated,
            seed: r.seed,
        })?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Engine

/// One Euler–Maruyama scheme `x <- x - a grad F(x) dt + b sigma(x) sqrt(dt) xi`.
struct Stepper<'a> {
    noise: &'a NoiseSpec,
    drift_step: f64,
    noise_step: f64,
    xi: Vec<f64>,
    sigma: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(n: usize, noise: &'a NoiseSpec, drift: f64, diffusion: f64, dt: f64) -> Self {
        Stepper {
            noise,
            drift_step: drift * dt,
            noise_step: diffusion * dt.sqrt(),
            xi: vec![0.0; n],
            sigma: vec![0.0; n * n],
        }
    }

    /// Advance from `x` with precomputed gradient `grad`.
    #[inline]
    fn step<R: Rng>(&mut self, x: &[f64], grad: &[f64], out: &mut [f64], rng: &mut R) {
        let n = x.len();
        if self.noise_step == 0.0 {
            for i in 0..n {
                out[i] = x[i] - self.drift_step * grad[i];
            }
            return;
        }
        for v in self.xi.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        match self.noise {
            NoiseSpec::Identity => {
                for i in 0..n {
                    out[i] = x[i] - self.drift_step * grad[i] + self.noise_step * self.xi[i];
                }
            }
            NoiseSpec::ConstantMatrix(m) => {
                for i in 0..n {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += m[(i, j)] * self.xi[j];
                    }
                    out[i] = x[i] - self.drift_step * grad[i] + self.noise_step * s;
                }
            }
            NoiseSpec::StateDependent(f) => {
                f(x, &mut self.sigma);
                for i in 0..n {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += self.sigma[i * n + j] * self.xi[j];
                    }
                    out[i] = x[i] - self.drift_step * grad[i] + self.noise_step * s;
                }
            }
        }
    }
}

/// Root of `g` on the segment `a + theta (b - a)`, `theta` in `[0, 1]`, given
/// `g(a) > 0 >= g(b)`.
fn refine_segment(g: impl Fn(&[f64]) -> f64, a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let mut p = a.to_vec();
    let at = |theta: f64, p: &mut Vec<f64>| {
        for i in 0..a.len() {
            p[i] = a[i] + theta * (b[i] - a[i]);
        }
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..CROSSING_ITERS {
        let mid = 0.5 * (lo + hi);
        at(mid, &mut p);
        if g(&p) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    at(hi, &mut p);
    (hi, p)
}

/// Checks one segment against one event; returns the crossing fraction and state.
fn detect(event: &EventSpec, land: &Landscape, a: &[f64], b: &[f64], ga: f64, gb: f64) -> Option<(f64, Vec<f64>)> {
    match &event.kind {
        EventKind::ExitDomain(_) | EventKind::ValueBelow(_) => {
            (ga > 0.0 && gb <= 0.0).then(|| refine_segment(|p| event.gap(land, p), a, b))
        }
        EventKind::LevelCross { direction, .. } => {
            let down = ga > 0.0 && gb <= 0.0;
            let up = ga < 0.0 && gb >= 0.0;
            match (direction, down, up) {
                (CrossDirection::Down | CrossDirection::Either, true, _) => {
                    Some(refine_segment(|p| event.gap(land, p), a, b))
                }
                (CrossDirection::Up | CrossDirection::Either, _, true) => {
                    Some(refine_segment(|p| -event.gap(land, p), a, b))
                }
                _ => None,
            }
        }
    }
}

/// Triggered at the starting state already (e.g. start outside the domain).
fn fires_at_start(event: &EventSpec, land: &Landscape, x: &[f64]) -> bool {
    match &event.kind {
        EventKind::ExitDomain(_) | EventKind::ValueBelow(_) => event.gap(land, x) <= 0.0,
        EventKind::LevelCross { .. } => event.gap(land, x) == 0.0,
    }
}

struct Outcome {
    record: StoppingRecord,
    summary: PathSummary,
}

#[allow(clippy::too_many_arguments)]
fn run_events<R: Rng>(
    land: &Landscape,
    noise: &NoiseSpec,
    drift: f64,
    diffusion: f64,
    dt: f64,
    t0: f64,
    t_max: f64,
    x0: &[f64],
    events: &[EventSpec],
    rng: &mut R,
) -> Result<Outcome> {
    let n = land.dim();
    let mut stepper = Stepper::new(n, noise, drift, diffusion, dt);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut grad_next = vec![0.0; n];
    let mut f = land.value_and_gradient(&x, &mut grad);
    let mut summary = PathSummary {
        terminal_state: Vec::new(),
        min_f: f,
        max_f: f,
        steps: 0,
    };
    for ev in events {
        if fires_at_start(ev, land, &x) {
            summary.terminal_state = x.clone();
            return Ok(Outcome {
                record: StoppingRecord {
                    label: ev.label.clone(),
                    time: t0,
                    f_value: f,
                    state: x,
                    truncated: false,
                },
                summary,
            });
        }
    }
    let mut gaps: Vec<f64> = events.iter().map(|e| e.gap_given(&x, f)).collect();
    let mut gaps_next = gaps.clone();
    let steps = ((t_max - t0) / dt).round().max(0.0) as u64;
    for m in 0..steps {
        stepper.step(&x, &grad, &mut next, rng);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                t: t0 + (m + 1) as f64 * dt,
            });
        }
        let f_next = land.value_and_gradient(&next, &mut grad_next);
        summary.steps = m + 1;
        let mut best: Option<(f64, Vec<f64>, usize)> = None;
        for (i, ev) in events.iter().enumerate() {
            gaps_next[i] = ev.gap_given(&next, f_next);
            if let Some((theta, p)) = detect(ev, land, &x, &next, gaps[i], gaps_next[i]) {
                if best.as_ref().is_none_or(|b| theta < b.0) {
                    best = Some((theta, p, i));
                }
            }
        }
        if let Some((theta, state, i)) = best {
            let fs = land.value(&state);
            summary.min_f = summary.min_f.min(fs);
            summary.max_f = summary.max_f.max(fs);
            summary.terminal_state = state.clone();
            return Ok(Outcome {
                record: StoppingRecord {
                    label: events[i].label.clone(),
                    time: t0 + (m as f64 + theta) * dt,
                    f_value: fs,
                    state,
                    truncated: false,
                },
                summary,
            });
        }
        std::mem::swap(&mut x, &mut next);
        std::mem::swap(&mut grad, &mut grad_next);
        std::mem::swap(&mut gaps, &mut gaps_next);
        f = f_next;
        summary.min_f = summary.min_f.min(f);
        summary.max_f = summary.max_f.max(f);
    }
    summary.terminal_state = x.clone();
    Ok(Outcome {
        record: StoppingRecord {
            label: events.first().map_or_else(|| "none".into(), |e| e.label.clone()),
            time: t_max,
            f_value: f,
            state: x,
            truncated: true,
        },
        summary,
    })
}

fn check_start(land: &Landscape, x0: &[f64]) -> Result<()> {
    land.check_dim(x0)?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("start point must be finite"));
    }
    Ok(())
}

/// One Euler–Maruyama run of the perturbed flow until the earliest event or `t_max`.
pub fn simulate(
    landscape: &Landscape,
    config: &SdeConfig,
    x0: &[f64],
    events: &[EventSpec],
) -> Result<(StoppingRecord, PathSummary)> {
    simulate_with_rng(landscape, config, x0, events, &mut rng_from_seed(config.seed))
}

/// As [`simulate`] with an externally owned generator.
pub fn simulate_with_rng<R: Rng>(
    landscape: &Landscape,
    config: &SdeConfig,
    x0: &[f64],
    events: &[EventSpec],
    rng: &mut R,
) -> Result<(StoppingRecord, PathSummary)> {
    config.validate()?;
    config.noise.validate(landscape.dim())?;
    check_start(landscape, x0)?;
    for e in events {
        e.validate(landscape.dim())?;
    }
    let out = run_events(
        landscape,
        &config.noise,
        1.0,
        config.epsilon,
        config.dt,
        0.0,
        config.t_max,
        x0,
        events,
        rng,
    )?;
    Ok((out.record, out.summary))
}

/// Full Euler–Maruyama path sampled every step, for diagnostics and the zero-noise check.
pub fn simulate_path(landscape: &Landscape, config: &SdeConfig, x0: &[f64]) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    check_start(landscape, x0)?;
    let mut rng = rng_from_seed(config.seed);
    let mut stepper = Stepper::new(x0.len(), &config.noise, 1.0, config.epsilon, config.dt);
    let steps = (config.t_max / config.dt).round() as u64;
    let mut path = Vec::with_capacity(steps as usize + 1);
    path.push(x0.to_vec());
    let mut next = vec![0.0; x0.len()];
    let mut grad = vec![0.0; x0.len()];
    for m in 0..steps {
        landscape.gradient(path.last().unwrap(), &mut grad);
        stepper.step(path.last().unwrap(), &grad, &mut next, &mut rng);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                t: (m + 1) as f64 * config.dt,
            });
        }
        path.push(next.clone());
    }
    Ok(path)
}

/// Run `replicas` independent copies of `job` in the current rayon pool, collecting in
/// index order.
fn run_replicas<F>(base_seed: u64, replicas: usize, job: F) -> ReplicaSet
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<StoppingRecord> + Sync,
{
    let results: Vec<(usize, u64, Result<StoppingRecord>)> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let seed = replica_seed(base_seed, i as u64);
            let mut rng = replica_rng(base_seed, i as u64);
            (i, seed, job(&mut rng))
        })
        .collect();
    let mut set = ReplicaSet {
        records: Vec::with_capacity(replicas),
        failures: Vec::new(),
    };
    for (replica, seed, r) in results {
        match r {
            Ok(record) => set.records.push(ReplicaRecord { replica, seed, record }),
            Err(e) => set.failures.push(ReplicaFailure {
                replica,
                seed,
                reason: e.to_string(),
            }),
        }
    }
    set
}

/// Exit records from `domain` for `replicas` runs seeded by `mix(config.seed, i)`.
pub fn sample_tau(
    landscape: &Landscape,
    domain: &DomainSpec,
    config: &SdeConfig,
    x0: &[f64],
    replicas: usize,
) -> Result<ReplicaSet> {
    config.validate()?;
    config.noise.validate(landscape.dim())?;
    check_start(landscape, x0)?;
    domain.validate(landscape.dim())?;
    if !domain.contains(landscape, x0) {
        return Err(Error::precondition("x0 must lie inside the domain"));
    }
    let events = [EventSpec::exit_domain(domain.clone())];
    Ok(run_replicas(config.seed, replicas, |rng| {
        simulate_with_rng(landscape, config, x0, &events, rng).map(|r| r.0)
    }))
}

/// Records of the first time `F <= F(x*) + e`.
pub fn sample_t(
    landscape: &Landscape,
    x_star: &CriticalPoint,
    e: f64,
    config: &SdeConfig,
    x0: &[f64],
    replicas: usize,
) -> Result<ReplicaSet> {
    let threshold = hitting_threshold(landscape, x_star, e, x0)?;
    config.validate()?;
    config.noise.validate(landscape.dim())?;
    let events = [EventSpec::value_below(threshold)];
    Ok(run_replicas(config.seed, replicas, |rng| {
        simulate_with_rng(landscape, config, x0, &events, rng).map(|r| r.0)
    }))
}

/// `F(x*) + e` after checking `e > 0`, `F(x0) > F(x*) + e` and that every registered
/// saddle above `x*` stays above the threshold.
pub fn hitting_threshold(landscape: &Landscape, x_star: &CriticalPoint, e: f64, x0: &[f64]) -> Result<f64> {
    check_start(landscape, x0)?;
    if !(e > 0.0) {
        return Err(Error::precondition("e must be positive"));
    }
    let threshold = x_star.f_value + e;
    if landscape.value(x0) <= threshold {
        return Err(Error::precondition(format!(
            "F(x0) = {} must exceed F(x*) + e = {threshold}",
            landscape.value(x0)
        )));
    }
    if let Some(low) = landscape
        .saddles()
        .iter()
        .map(|s| s.f_value)
        .filter(|v| *v > x_star.f_value)
        .reduce(f64::min)
    {
        if low <= threshold {
            return Err(Error::precondition(format!(
                "lowest saddle value {low} must exceed F(x*) + e = {threshold}"
            )));
        }
    }
    Ok(threshold)
}

/// Alternating records `tau_1, sigma_1, tau_2, ...`: `tau_j` is the first hit of some
/// level `F(O_i) + h/2` after `sigma_{j-1}`, `sigma_j` the next hit of some `F(O_i) - h`.
/// Stops after `j_max` pairs or with a truncated record at `t_max`.
pub fn stopping_sequence(
    landscape: &Landscape,
    h: f64,
    config: &SdeConfig,
    x0: &[f64],
    j_max: usize,
) -> Result<Vec<StoppingRecord>> {
    config.validate()?;
    check_start(landscape, x0)?;
    if !(h > 0.0) {
        return Err(Error::invalid("h must be positive"));
    }
    let saddle_values: Vec<f64> = landscape.saddles().iter().map(|s| s.f_value).collect();
    if saddle_values.is_empty() {
        return Err(Error::precondition("stopping sequence needs registered saddles"));
    }
    if landscape.value(x0) <= saddle_values[0] {
        return Err(Error::precondition("F(x0) must exceed F(O_1)"));
    }
    let upper: Vec<EventSpec> = saddle_values
        .iter()
        .enumerate()
        .map(|(i, v)| EventSpec {
            kind: EventKind::LevelCross {
                level: v + 0.5 * h,
                direction: CrossDirection::Either,
            },
            label: format!("tau_{}", i + 1),
        })
        .collect();
    let lower: Vec<EventSpec> = saddle_values
        .iter()
        .enumerate()
        .map(|(i, v)| EventSpec {
            kind: EventKind::LevelCross {
                level: v - h,
                direction: CrossDirection::Either,
            },
            label: format!("sigma_{}", i + 1),
        })
        .collect();
    let mut rng = rng_from_seed(config.seed);
    let mut out = Vec::with_capacity(2 * j_max);
    let mut x = x0.to_vec();
    let mut t = 0.0;
    'outer: for _ in 0..j_max {
        for set in [&upper, &lower] {
            let o = run_events(landscape, &config.noise, 1.0, config.epsilon, config.dt, t, config.t_max, &x, set, &mut rng)?;
            let truncated = o.record.truncated;
            t = o.record.time;
            x = o.record.state.clone();
            out.push(o.record);
            if truncated {
                break 'outer;
            }
        }
    }
    Ok(out)
}

/// Parameters of the SGD diffusion in its own time variable.
#[derive(Debug, Clone)]
pub struct SgdConfig {
    pub beta: f64,
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    pub noise: NoiseSpec,
}

impl SgdConfig {
    /// Time grid matching a perturbed run with step `dt_y` and horizon `t_max_y`:
    /// `dt = dt_y / beta`, `t_max = t_max_y / beta`.
    pub fn matching(beta: f64, dt_y: f64, t_max_y: f64, seed: u64) -> Self {
        SgdConfig {
            beta,
            dt: dt_y / beta,
            t_max: t_max_y / beta,
            seed,
            noise: NoiseSpec::Identity,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::invalid("beta must be positive"));
        }
        if !(self.dt > 0.0) || !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return Err(Error::invalid("dt and t_max must be positive and finite"));
        }
        Ok(())
    }
}

/// One run of `dX = -beta grad F dt + beta sigma dW`; times are in X-time.
pub fn sgd_simulate(
    landscape: &Landscape,
    config: &SgdConfig,
    x0: &[f64],
    events: &[EventSpec],
) -> Result<StoppingRecord> {
    sgd_simulate_with_rng(landscape, config, x0, events, &mut rng_from_seed(config.seed))
}

pub fn sgd_simulate_with_rng<R: Rng>(
    landscape: &Landscape,
    config: &SgdConfig,
    x0: &[f64],
    events: &[EventSpec],
    rng: &mut R,
) -> Result<StoppingRecord> {
    config.validate()?;
    config.noise.validate(landscape.dim())?;
    check_start(landscape, x0)?;
    for e in events {
        e.validate(landscape.dim())?;
    }
    let b = config.beta;
    Ok(run_events(landscape, &config.noise, b, b, config.dt, 0.0, config.t_max, x0, events, rng)?.record)
}

/// Replicated first-hitting times of `F <= F(x*) + e` for the SGD diffusion.
pub fn sample_sgd_t(
    landscape: &Landscape,
    x_star: &CriticalPoint,
    e: f64,
    config: &SgdConfig,
    x0: &[f64],
    replicas: usize,
) -> Result<ReplicaSet> {
    let threshold = hitting_threshold(landscape, x_star, e, x0)?;
    config.validate()?;
    let events = [EventSpec::value_below(threshold)];
    Ok(run_replicas(config.seed, replicas, |rng| {
        sgd_simulate_with_rng(landscape, config, x0, &events, rng)
    }))
}

/// Paths of `Y` (noise `sqrt(beta)`, step `dt`) and of `X` (step `dt / beta`) driven by
/// the same Gaussian draws, plus the largest coordinate gap between `Y_m` and `X_m`.
pub fn shared_noise_paths(
    landscape: &Landscape,
    beta: f64,
    dt: f64,
    x0: &[f64],
    steps: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, f64)> {
    check_start(landscape, x0)?;
    if !(beta > 0.0) || !(dt > 0.0) {
        return Err(Error::invalid("beta and dt must be positive"));
    }
    let noise = NoiseSpec::Identity;
    let n = x0.len();
    let mut sy = Stepper::new(n, &noise, 1.0, beta.sqrt(), dt);
    let mut sx = Stepper::new(n, &noise, beta, beta, dt / beta);
    let mut grad = vec![0.0; n];
    let mut ys = vec![x0.to_vec()];
    let mut xs = vec![x0.to_vec()];
    let mut gap = 0f64;
    let mut buf = vec![0.0; n];
    let mut rng_y = rng_from_seed(seed);
    let mut rng_x = rng_from_seed(seed);
    for _ in 0..steps {
        landscape.gradient(ys.last().unwrap(), &mut grad);
        sy.step(ys.last().unwrap(), &grad, &mut buf, &mut rng_y);
        ys.push(buf.clone());
        landscape.gradient(xs.last().unwrap(), &mut grad);
        sx.step(xs.last().unwrap(), &grad, &mut buf, &mut rng_x);
        xs.push(buf.clone());
        let (y, x) = (ys.last().unwrap(), xs.last().unwrap());
        gap = y.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(gap, f64::max);
    }
    Ok((ys, xs, gap))
}

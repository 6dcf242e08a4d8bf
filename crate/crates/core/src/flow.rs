//! Deterministic gradient flow `dS/dt = -grad F(S)`: fixed-step RK4 with refined boundary
//! crossings, exit times `t(x)`, the A1/A2/A3 decomposition around a saddle, exit-manner
//! probes and numeric estimates of the level-set constants `h` and `kappa`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{norm, CriticalPoint, Landscape};

/// Distance to a registered critical point that counts as convergence.
pub const CONVERGENCE_TOL: f64 = 1e-6;

/// Relative time tolerance of the crossing bisection, in units of `dt`.
const CROSSING_REL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Ball { center: Vec<f64>, radius: f64 },
    SublevelBand { f_low: f64, f_high: f64 },
    Sublevel { f_max: f64 },
}

impl DomainSpec {
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        DomainSpec::Ball { center, radius }
    }

    /// Positive inside, zero on the boundary, negative outside. Geometric for balls,
    /// measured in F for level-set domains.
    #[inline]
    pub fn signed_distance(&self, landscape: &Landscape, x: &[f64]) -> f64 {
        match self {
            DomainSpec::Ball { .. } => self.signed_distance_given(x, f64::NAN),
            _ => self.signed_distance_given(x, landscape.value(x)),
        }
    }

    /// As [`DomainSpec::signed_distance`] with `F(x)` already known.
    #[inline]
    pub fn signed_distance_given(&self, x: &[f64], f: f64) -> f64 {
        match self {
            DomainSpec::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                radius - r2.sqrt()
            }
            DomainSpec::SublevelBand { f_low, f_high } => (f - f_low).min(f_high - f),
            DomainSpec::Sublevel { f_max } => f_max - f,
        }
    }

    pub fn contains(&self, landscape: &Landscape, x: &[f64]) -> bool {
        self.signed_distance(landscape, x) > 0.0
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            DomainSpec::Ball { center, radius } => {
                if center.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: center.len(),
                    });
                }
                if !(*radius > 0.0) {
                    return Err(Error::invalid("ball radius must be positive"));
                }
            }
            DomainSpec::SublevelBand { f_low, f_high } => {
                if !(f_low < f_high) {
                    return Err(Error::invalid("band needs f_low < f_high"));
                }
            }
            DomainSpec::Sublevel { f_max } => {
                if !f_max.is_finite() {
                    return Err(Error::invalid("sublevel bound must be finite"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowExit {
    pub time: f64,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub f_values: Vec<f64>,
    pub exit: Option<FlowExit>,
}

impl FlowTrajectory {
    pub fn terminal_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// CSV with header `t,x1..xn,F`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let n = self.states.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.push("F".into());
        w.write_record(&header)?;
        for ((t, x), f) in self.times.iter().zip(&self.states).zip(&self.f_values) {
            let mut row = Vec::with_capacity(n + 2);
            row.push(*t);
            row.extend_from_slice(x);
            row.push(*f);
            w.serialize(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

struct Rk4<'a> {
    land: &'a Landscape,
    sign: f64,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a> Rk4<'a> {
    fn new(land: &'a Landscape, dir: Direction) -> Self {
        let n = land.dim();
        Rk4 {
            land,
            sign: if dir == Direction::Forward { -1.0 } else { 1.0 },
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
        }
    }

    fn field(&mut self, i: usize) {
        self.land.gradient(&self.tmp, &mut self.k[i]);
        for v in self.k[i].iter_mut() {
            *v *= self.sign;
        }
    }

    fn step(&mut self, x: &[f64], h: f64, out: &mut [f64]) {
        let n = x.len();
        self.tmp.copy_from_slice(x);
        self.field(0);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k[0][i];
        }
        self.field(1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k[1][i];
        }
        self.field(2);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k[2][i];
        }
        self.field(3);
        for i in 0..n {
            out[i] = x[i] + h / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
    }
}

struct FlowRun {
    trajectory: Option<FlowTrajectory>,
    terminal: Vec<f64>,
    exit: Option<FlowExit>,
}

fn check_step_args(dt: f64, t_max: f64) -> Result<()> {
    if !(dt > 0.0) || !(t_max >= dt) || !t_max.is_finite() {
        return Err(Error::invalid(format!("need dt > 0 and t_max >= dt (dt={dt}, t_max={t_max})")));
    }
    Ok(())
}

fn run_flow(
    land: &Landscape,
    x0: &[f64],
    dt: f64,
    t_max: f64,
    domain: Option<&DomainSpec>,
    dir: Direction,
    record: bool,
) -> Result<FlowRun> {
    land.check_dim(x0)?;
    check_step_args(dt, t_max)?;
    let n = land.dim();
    let steps = (t_max / dt).round() as u64;
    let mut rk = Rk4::new(land, dir);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    let mut traj = record.then(|| FlowTrajectory {
        times: vec![0.0],
        states: vec![x.clone()],
        f_values: vec![land.value(&x)],
        exit: None,
    });
    let mut d_prev = domain.map(|d| d.signed_distance(land, &x));
    for m in 0..steps {
        let t = m as f64 * dt;
        rk.step(&x, dt, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { t: t + dt });
        }
        if let (Some(dom), Some(dp)) = (domain, d_prev) {
            let dn = dom.signed_distance(land, &next);
            if dp >= 0.0 && dn < 0.0 {
                let (lo, hi) = bisect_crossing(&mut rk, dom, land, &x, dt);
                let h = 0.5 * (lo + hi);
                let mut state = vec![0.0; n];
                rk.step(&x, h, &mut state);
                let exit = FlowExit { time: t + h, state };
                if let Some(tr) = traj.as_mut() {
                    tr.times.push(exit.time);
                    tr.states.push(exit.state.clone());
                    tr.f_values.push(land.value(&exit.state));
                    tr.exit = Some(exit.clone());
                }
                return Ok(FlowRun {
                    trajectory: traj,
                    terminal: exit.state.clone(),
                    exit: Some(exit),
                });
            }
            d_prev = Some(dn);
        }
        std::mem::swap(&mut x, &mut next);
        if let Some(tr) = traj.as_mut() {
            tr.times.push((m + 1) as f64 * dt);
            tr.f_values.push(land.value(&x));
            tr.states.push(x.clone());
        }
    }
    Ok(FlowRun {
        trajectory: traj,
        terminal: x,
        exit: None,
    })
}

/// Bracket of the substep at which the boundary is crossed.
fn bisect_crossing(rk: &mut Rk4<'_>, dom: &DomainSpec, land: &Landscape, x: &[f64], dt: f64) -> (f64, f64) {
    let mut probe = vec![0.0; x.len()];
    let (mut lo, mut hi) = (0.0, dt);
    while hi - lo > dt * CROSSING_REL_TOL {
        let mid = 0.5 * (lo + hi);
        rk.step(x, mid, &mut probe);
        if dom.signed_distance(land, &probe) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

/// Fixed-step RK4 flow from `x0`, stopped at the first boundary crossing of `domain`.
pub fn integrate(
    landscape: &Landscape,
    x0: &[f64],
    dt: f64,
    t_max: f64,
    domain: Option<&DomainSpec>,
) -> Result<FlowTrajectory> {
    integrate_directed(landscape, x0, dt, t_max, domain, Direction::Forward)
}

/// As [`integrate`], optionally along `+grad F`.
pub fn integrate_directed(
    landscape: &Landscape,
    x0: &[f64],
    dt: f64,
    t_max: f64,
    domain: Option<&DomainSpec>,
    dir: Direction,
) -> Result<FlowTrajectory> {
    Ok(run_flow(landscape, x0, dt, t_max, domain, dir, true)?
        .trajectory
        .expect("recording run"))
}

/// Terminal state of the flow after `t_max` without recording the path.
pub fn flow_terminal(landscape: &Landscape, x0: &[f64], dt: f64, t_max: f64) -> Result<Vec<f64>> {
    Ok(run_flow(landscape, x0, dt, t_max, None, Direction::Forward, false)?.terminal)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExitTime {
    Finite(f64),
    /// No crossing and the flow settled on the registered critical point at this index.
    NeverExits { critical_point: usize },
}

impl ExitTime {
    pub fn finite(&self) -> Option<f64> {
        match self {
            ExitTime::Finite(t) => Some(*t),
            ExitTime::NeverExits { .. } => None,
        }
    }
}

/// First exit time `t(x)` of the flow from `domain`.
pub fn deterministic_exit_time(
    landscape: &Landscape,
    x: &[f64],
    domain: &DomainSpec,
    dt: f64,
    t_max: f64,
) -> Result<ExitTime> {
    Ok(deterministic_exit(landscape, x, domain, dt, t_max)?.0)
}

/// Exit time together with the exit state when finite.
pub fn deterministic_exit(
    landscape: &Landscape,
    x: &[f64],
    domain: &DomainSpec,
    dt: f64,
    t_max: f64,
) -> Result<(ExitTime, Option<Vec<f64>>)> {
    landscape.check_dim(x)?;
    domain.validate(landscape.dim())?;
    if !domain.contains(landscape, x) {
        return Err(Error::precondition("start point is not inside the domain"));
    }
    let run = run_flow(landscape, x, dt, t_max, Some(domain), Direction::Forward, false)?;
    if let Some(exit) = run.exit {
        return Ok((ExitTime::Finite(exit.time), Some(exit.state)));
    }
    match landscape.nearest_critical_point(&run.terminal, CONVERGENCE_TOL) {
        Some(i) => Ok((ExitTime::NeverExits { critical_point: i }, None)),
        None => Err(Error::Undetermined(format!(
            "no exit by t_max = {t_max} and no convergence to a registered critical point; raise t_max"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum AbcClass {
    Origin,
    A1,
    A2,
    A3,
    Undetermined(String),
}

/// `Origin`, A1 (forward-converges to the saddle), A2 (backward-converges, forward
/// exits), A3 (exits both ways) or `Undetermined`.
pub fn classify_abc(
    landscape: &Landscape,
    x: &[f64],
    domain: &DomainSpec,
    saddle: &CriticalPoint,
    dt: f64,
    t_max: f64,
) -> Result<AbcClass> {
    landscape.check_dim(x)?;
    if landscape.distance(x, &saddle.location) <= 1e-9 {
        return Ok(AbcClass::Origin);
    }
    if domain.signed_distance(landscape, x) < 0.0 {
        return Err(Error::precondition("point lies outside the closed domain"));
    }
    let at_saddle = |p: &[f64]| landscape.distance(p, &saddle.location) <= CONVERGENCE_TOL;
    let fwd = run_flow(landscape, x, dt, t_max, Some(domain), Direction::Forward, false)?;
    if fwd.exit.is_none() && at_saddle(&fwd.terminal) {
        return Ok(AbcClass::A1);
    }
    let bwd = run_flow(landscape, x, dt, t_max, Some(domain), Direction::Backward, false)?;
    Ok(match (fwd.exit.is_some(), bwd.exit.is_some()) {
        (true, false) if at_saddle(&bwd.terminal) => AbcClass::A2,
        (true, true) => AbcClass::A3,
        (true, false) => AbcClass::Undetermined("backward flow neither exits nor reaches the saddle".into()),
        (false, _) => AbcClass::Undetermined("forward flow neither exits nor reaches the saddle".into()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitMannerReport {
    pub regular: Vec<bool>,
    /// Largest exit time over the samples.
    pub t0: f64,
    /// Smallest post-exit distance to the closed domain at `t(x) + delta`.
    pub c: f64,
}

/// Checks that the flow state `delta` after the exit lies strictly outside the closed
/// domain for every sample.
pub fn exit_manner_probe(
    landscape: &Landscape,
    domain: &DomainSpec,
    samples: &[Vec<f64>],
    dt: f64,
    t_max: f64,
    delta: f64,
) -> Result<ExitMannerReport> {
    if !(delta > 0.0) {
        return Err(Error::invalid("delta must be positive"));
    }
    let mut regular = Vec::with_capacity(samples.len());
    let mut t0 = 0f64;
    let mut c = f64::INFINITY;
    for x in samples {
        let (t, state) = match deterministic_exit(landscape, x, domain, dt, t_max)? {
            (ExitTime::Finite(t), Some(s)) => (t, s),
            _ => {
                return Err(Error::Undetermined(format!(
                    "sample {x:?} never exits, t(x) is infinite"
                )))
            }
        };
        t0 = t0.max(t);
        let after = run_flow(landscape, &state, dt.min(delta), delta, None, Direction::Forward, false)?.terminal;
        let dist = -domain.signed_distance(landscape, &after);
        regular.push(dist > 0.0);
        c = c.min(dist);
    }
    Ok(ExitMannerReport { regular, t0, c })
}

/// Minimum of |grad F| over a grid of the working region restricted to `band` and
/// outside the `excluded` balls.
pub fn estimate_kappa(
    landscape: &Landscape,
    band: &DomainSpec,
    grid_resolution: usize,
    excluded: &[(Vec<f64>, f64)],
) -> Result<f64> {
    if !matches!(band, DomainSpec::SublevelBand { .. }) {
        return Err(Error::invalid("kappa is estimated over a sublevel band"));
    }
    band.validate(landscape.dim())?;
    let kappa = landscape
        .region()
        .grid(grid_resolution)
        .into_iter()
        .filter(|x| band.contains(landscape, x))
        .filter(|x| excluded.iter().all(|(c, r)| landscape.distance(x, c) >= *r))
        .map(|x| norm(&landscape.gradient_vec(&x)))
        .reduce(f64::min)
        .ok_or_else(|| Error::invalid("no grid point left in the band after exclusions"))?;
    if kappa < 1e-6 {
        log::warn!("kappa estimate {kappa:e} is numerically zero; the band likely contains a critical point");
    }
    Ok(kappa)
}

/// `(f_start - f_target) / kappa^2`, the descent-time bound from `dF/dt <= -kappa^2`.
pub fn descent_time_bound(f_start: f64, f_target: f64, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::invalid("kappa must be positive"));
    }
    if !(f_start > f_target) {
        return Err(Error::precondition("f_start must exceed f_target"));
    }
    Ok((f_start - f_target) / (kappa * kappa))
}

/// `0.1 * min_i (F(O_i) - F(O_{i+1}))` over the registered saddles followed by the lowest
/// minimizer.
pub fn default_h(landscape: &Landscape) -> Result<f64> {
    let mut values: Vec<f64> = landscape.saddles().iter().map(|c| c.f_value).collect();
    if let Some(m) = landscape.global_minimizer() {
        values.push(m.f_value);
    }
    values
        .windows(2)
        .map(|w| w[0] - w[1])
        .reduce(f64::min)
        .map(|g| 0.1 * g)
        .filter(|h| *h > 0.0)
        .ok_or_else(|| Error::invalid("need at least two ordered critical values to choose h"))
}

/// Whether the level `F(O_i) + h/2` meets the ball of radius `r_u` around every registered
/// saddle: the ball contains the saddle (below the level) and, on its boundary, some point
/// above it.
pub fn level_meets_saddle_balls(landscape: &Landscape, h: f64, r_u: f64) -> bool {
    const RAYS: usize = 256;
    landscape.saddles().iter().all(|s| {
        let n = s.location.len();
        let ev = nalgebra::SymmetricEigen::new(s.hessian_matrix());
        // Sample along every eigen-direction and, in 2-D, a full circle.
        let mut dirs: Vec<Vec<f64>> = (0..n)
            .flat_map(|j| {
                let v: Vec<f64> = ev.eigenvectors.column(j).iter().copied().collect();
                let w: Vec<f64> = v.iter().map(|a| -a).collect();
                [v, w]
            })
            .collect();
        if n == 2 {
            dirs.extend((0..RAYS).map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / RAYS as f64;
                vec![a.cos(), a.sin()]
            }));
        }
        dirs.iter().any(|d| {
            let p: Vec<f64> = s.location.iter().zip(d).map(|(c, u)| c + r_u * u).collect();
            landscape.value(&p) > s.f_value + 0.5 * h
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{builtin_bowl, builtin_quadratic_saddle, builtin_saddle_chain};
    use approx::assert_abs_diff_eq;

    fn saddle2() -> Landscape {
        builtin_quadratic_saddle(&[2.0], &[2.0]).unwrap()
    }

    fn unit_ball() -> DomainSpec {
        DomainSpec::ball(vec![0.0, 0.0], 1.0)
    }

    #[test]
    fn stable_axis_never_exits() {
        let land = saddle2();
        let tr = integrate(&land, &[0.0, 0.5], 1e-3, 20.0, Some(&unit_ball())).unwrap();
        assert!(tr.exit.is_none());
        assert!(norm(tr.terminal_state()) < 1e-6);
        assert_eq!(
            deterministic_exit_time(&land, &[0.0, 0.3], &unit_ball(), 1e-3, 20.0).unwrap(),
            ExitTime::NeverExits { critical_point: 0 }
        );
    }

    #[test]
    fn unstable_axis_exit_matches_closed_form() {
        let land = saddle2();
        let tr = integrate(&land, &[0.1, 0.0], 1e-3, 20.0, Some(&unit_ball())).unwrap();
        let exit = tr.exit.unwrap();
        assert_abs_diff_eq!(exit.time, 10f64.ln() / 2.0, epsilon = 1e-3);
        assert_abs_diff_eq!(norm(&exit.state), 1.0, epsilon = 1e-5);
    }

    #[test]
    fn off_axis_exit_matches_dense_reference() {
        let land = saddle2();
        let coarse = deterministic_exit_time(&land, &[0.05, 0.9], &unit_ball(), 1e-3, 20.0)
            .unwrap()
            .finite()
            .unwrap();
        let dense = deterministic_exit_time(&land, &[0.05, 0.9], &unit_ball(), 1e-5, 20.0)
            .unwrap()
            .finite()
            .unwrap();
        assert_abs_diff_eq!(coarse, dense, epsilon = 1e-3);
        // Linear flow oracle: x = 0.05 e^{2t}, y = 0.9 e^{-2t}.
        let g = |t: f64| (0.05 * (2.0 * t).exp()).hypot(0.9 * (-2.0 * t).exp()) - 1.0;
        let (mut lo, mut hi) = (0.5, 5.0);
        for _ in 0..100 {
            let m = 0.5 * (lo + hi);
            if g(m) < 0.0 {
                lo = m
            } else {
                hi = m
            }
        }
        assert_abs_diff_eq!(coarse, lo, epsilon = 1e-3);
    }

    #[test]
    fn bowl_decays_monotonically() {
        let bowl = builtin_bowl(&[2.0, 2.0]).unwrap();
        let tr = integrate(&bowl, &[0.5, 0.0], 1e-3, 12.0, None).unwrap();
        assert!(tr.f_values.windows(2).all(|w| w[1] <= w[0] + 1e-8));
        assert!(*tr.f_values.last().unwrap() < 1e-8);
    }

    #[test]
    fn abc_examples() {
        let land = saddle2();
        let s = land.critical_points()[0].clone();
        let b = unit_ball();
        assert_eq!(classify_abc(&land, &[0.0, 0.0], &b, &s, 1e-3, 20.0).unwrap(), AbcClass::Origin);
        assert_eq!(classify_abc(&land, &[0.0, 0.5], &b, &s, 1e-3, 20.0).unwrap(), AbcClass::A1);
        assert_eq!(classify_abc(&land, &[0.2, 0.0], &b, &s, 1e-3, 20.0).unwrap(), AbcClass::A2);
        assert_eq!(classify_abc(&land, &[0.5, 0.5], &b, &s, 1e-3, 20.0).unwrap(), AbcClass::A3);
    }

    #[test]
    fn exit_manner_on_linear_saddle() {
        let land = saddle2();
        let samples: Vec<Vec<f64>> = [0.1, 0.3, 0.6, -0.2, -0.5].iter().map(|&u| vec![u, 0.0]).collect();
        let rep = exit_manner_probe(&land, &unit_ball(), &samples, 1e-3, 20.0, 0.05).unwrap();
        assert!(rep.regular.iter().all(|&r| r));
        assert!(rep.c > 0.0);
        assert!(rep.t0 >= 10f64.ln() / 2.0 - 1e-3);
        assert!(matches!(
            exit_manner_probe(&land, &unit_ball(), &[vec![0.0, 0.0]], 1e-3, 5.0, 0.05),
            Err(Error::Undetermined(_))
        ));
    }

    #[test]
    fn kappa_and_descent_bound() {
        let chain = builtin_saddle_chain(1, 2.0, 2.0, 1.0).unwrap();
        let h = 0.2;
        let band = DomainSpec::SublevelBand { f_low: 1.0 + h / 2.0, f_high: 3.0 };
        let kappa = estimate_kappa(&chain, &band, 81, &[]).unwrap();
        assert!(kappa > 0.0);
        let mut last = f64::INFINITY;
        for h in [0.4, 0.2, 0.1, 0.05] {
            let band = DomainSpec::SublevelBand { f_low: 1.0 + h / 2.0, f_high: 3.0 };
            let k = estimate_kappa(&chain, &band, 161, &[]).unwrap();
            assert!(k <= last + 1e-12);
            last = k;
        }
        let saddle = saddle2();
        let around = DomainSpec::SublevelBand { f_low: -0.5, f_high: 0.5 };
        assert!(estimate_kappa(&saddle, &around, 41, &[]).unwrap() < 1e-6);
        let pos = estimate_kappa(&saddle, &around, 41, &[(vec![0.0, 0.0], 0.2)]).unwrap();
        assert!(pos > 0.3);
        assert_abs_diff_eq!(descent_time_bound(3.0, 1.1, 0.5).unwrap(), 7.6, epsilon = 1e-12);
        assert!(descent_time_bound(1.0, 1.0, 0.5).is_err());
        assert!(descent_time_bound(2.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn default_h_and_lemma_check() {
        let chain = builtin_saddle_chain(3, 2.0, 2.0, 1.0).unwrap();
        let h = default_h(&chain).unwrap();
        assert_abs_diff_eq!(h, 0.1, epsilon = 1e-12);
        assert!(level_meets_saddle_balls(&chain, h, 0.3));
        assert!(!level_meets_saddle_balls(&chain, h, 0.01));
    }

    #[test]
    fn trajectory_csv_header() {
        let land = saddle2();
        let tr = integrate(&land, &[0.1, 0.1], 0.1, 0.3, None).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x1,x2,F\n"));
        assert_eq!(text.lines().count(), 1 + tr.times.len());
    }
}

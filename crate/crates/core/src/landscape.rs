//! Test potentials with analytically known critical structure, plus the Def. 1.2/1.3
//! classification of points and critical points.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on |grad F| at registered critical points.
pub const CRITICAL_GRAD_TOL: f64 = 1e-10;

/// A smooth potential `F: R^n -> R` with analytic gradient and Hessian.
pub trait Potential: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// Row-major `n x n` Hessian.
    fn hessian(&self, x: &[f64], out: &mut [f64]);
    /// `F(x)` with the gradient written to `out`.
    fn value_and_gradient(&self, x: &[f64], out: &mut [f64]) -> f64 {
        self.gradient(x, out);
        self.value(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    LocalMin,
    StrongSaddle,
    StrictOnlySaddle,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    pub f_value: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub classification: Classification,
    /// Row-major Hessian at the point.
    pub hessian: Vec<f64>,
}

impl CriticalPoint {
    pub fn hessian_matrix(&self) -> DMatrix<f64> {
        let n = self.location.len();
        DMatrix::from_row_slice(n, n, &self.hessian)
    }

    pub fn is_saddle(&self) -> bool {
        matches!(
            self.classification,
            Classification::StrongSaddle | Classification::StrictOnlySaddle
        )
    }
}

/// Axis-aligned box on which the landscape's regularity and strict-saddle claims hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkingRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl WorkingRegion {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| v >= lo && v <= hi)
    }

    /// Regular grid with `per_axis` points per coordinate, endpoints included.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let n = self.lower.len();
        let per_axis = per_axis.max(2);
        let total = per_axis.pow(n as u32);
        (0..total)
            .map(|mut idx| {
                (0..n)
                    .map(|d| {
                        let i = idx % per_axis;
                        idx /= per_axis;
                        let s = i as f64 / (per_axis - 1) as f64;
                        self.lower[d] + s * (self.upper[d] - self.lower[d])
                    })
                    .collect()
            })
            .collect()
    }
}

/// Metadata of a saddle chain landscape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainInfo {
    pub k: usize,
    pub lambda_u: f64,
    pub lambda_s: f64,
    pub drop: f64,
    /// Indices into the registry: saddles in descending F order, then the minimizer.
    pub saddle_indices: Vec<usize>,
    pub minimizer_index: usize,
    /// Spacing between consecutive saddles along x.
    pub spacing: f64,
    /// Period of F in the second coordinate.
    pub period: f64,
}

#[derive(Debug, Clone)]
pub struct Landscape {
    name: String,
    potential: Arc<dyn Potential>,
    critical_points: Vec<CriticalPoint>,
    gamma1: f64,
    gamma2: f64,
    gamma3: f64,
    region: WorkingRegion,
    periods: Vec<Option<f64>>,
    chain: Option<ChainInfo>,
}

/// `(F, grad F, Hess F)` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub f: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl Landscape {
    /// Assemble a landscape; critical points are classified from their spectra.
    pub fn new(
        name: impl Into<String>,
        potential: Arc<dyn Potential>,
        locations: Vec<Vec<f64>>,
        gammas: (f64, f64, f64),
        region: WorkingRegion,
    ) -> Result<Self> {
        let (gamma1, gamma2, gamma3) = gammas;
        if !(gamma1 > 0.0 && gamma2 > 0.0 && gamma3 > 0.0) {
            return Err(Error::invalid("gamma1, gamma2 and gamma3 must be positive"));
        }
        let n = potential.dim();
        if region.lower.len() != n || region.upper.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: region.lower.len(),
            });
        }
        let mut critical_points = Vec::with_capacity(locations.len());
        for loc in locations {
            if loc.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: loc.len(),
                });
            }
            let mut hess = vec![0.0; n * n];
            potential.hessian(&loc, &mut hess);
            let eigenvalues = sorted_eigenvalues(&DMatrix::from_row_slice(n, n, &hess));
            let classification = classify_critical_point(&eigenvalues, gamma1, gamma3)?;
            critical_points.push(CriticalPoint {
                f_value: potential.value(&loc),
                location: loc,
                eigenvalues,
                classification,
                hessian: hess,
            });
        }
        Ok(Landscape {
            name: name.into(),
            potential,
            critical_points,
            gamma1,
            gamma2,
            gamma3,
            region,
            periods: vec![None; n],
            chain: None,
        })
    }

    fn with_periods(mut self, periods: Vec<Option<f64>>) -> Self {
        self.periods = periods;
        self
    }

    fn with_chain(mut self, chain: ChainInfo) -> Self {
        self.chain = Some(chain);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn dim(&self) -> usize {
        self.potential.dim()
    }
    pub fn potential(&self) -> &Arc<dyn Potential> {
        &self.potential
    }
    pub fn critical_points(&self) -> &[CriticalPoint] {
        &self.critical_points
    }
    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }
    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }
    pub fn gamma3(&self) -> f64 {
        self.gamma3
    }
    pub fn region(&self) -> &WorkingRegion {
        &self.region
    }
    pub fn periods(&self) -> &[Option<f64>] {
        &self.periods
    }
    pub fn chain(&self) -> Option<&ChainInfo> {
        self.chain.as_ref()
    }

    /// Registered saddles in descending order of F.
    pub fn saddles(&self) -> Vec<&CriticalPoint> {
        let mut s: Vec<&CriticalPoint> =
            self.critical_points.iter().filter(|c| c.is_saddle()).collect();
        s.sort_by(|a, b| b.f_value.total_cmp(&a.f_value));
        s
    }

    /// Registered local minimum with the lowest value.
    pub fn global_minimizer(&self) -> Option<&CriticalPoint> {
        self.critical_points
            .iter()
            .filter(|c| c.classification == Classification::LocalMin)
            .min_by(|a, b| a.f_value.total_cmp(&b.f_value))
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        self.potential.value(x)
    }
    #[inline]
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.potential.gradient(x, out)
    }
    #[inline]
    pub fn hessian(&self, x: &[f64], out: &mut [f64]) {
        self.potential.hessian(x, out)
    }
    #[inline]
    pub fn value_and_gradient(&self, x: &[f64], out: &mut [f64]) -> f64 {
        self.potential.value_and_gradient(x, out)
    }

    pub fn gradient_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient(x, &mut g);
        g
    }

    pub fn hessian_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut h = vec![0.0; n * n];
        self.hessian(x, &mut h);
        DMatrix::from_row_slice(n, n, &h)
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `to - from`, with periodic coordinates wrapped into `[-P/2, P/2)`.
    pub fn displacement(&self, from: &[f64], to: &[f64]) -> Vec<f64> {
        from.iter()
            .zip(to)
            .zip(&self.periods)
            .map(|((a, b), p)| {
                let d = b - a;
                match p {
                    Some(p) => d - p * (d / p).round(),
                    None => d,
                }
            })
            .collect()
    }

    /// Euclidean distance modulo the periodic coordinates.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        norm(&self.displacement(a, b))
    }

    /// Nearest registered critical point within `tol`, if any.
    pub fn nearest_critical_point(&self, x: &[f64], tol: f64) -> Option<usize> {
        self.critical_points
            .iter()
            .enumerate()
            .map(|(i, c)| (i, self.distance(x, &c.location)))
            .filter(|(_, d)| *d <= tol)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Bundle of `F`, `grad F` and `Hess F` at `x`.
pub fn evaluate(landscape: &Landscape, x: &[f64]) -> Result<Evaluation> {
    landscape.check_dim(x)?;
    Ok(Evaluation {
        f: landscape.value(x),
        grad: DVector::from_vec(landscape.gradient_vec(x)),
        hess: landscape.hessian_matrix(x),
    })
}

/// Def. 1.2 / 1.3 classification from an ascending spectrum.
pub fn classify_critical_point(eigenvalues: &[f64], gamma1: f64, gamma3: f64) -> Result<Classification> {
    let min = eigenvalues
        .iter()
        .copied()
        .reduce(f64::min)
        .ok_or_else(|| Error::invalid("empty eigenvalue list"))?;
    if !(gamma1 > 0.0 && gamma3 > 0.0) {
        return Err(Error::invalid("gamma1 and gamma3 must be positive"));
    }
    let has_zero = eigenvalues.iter().any(|&e| e == 0.0);
    Ok(if has_zero {
        Classification::Degenerate
    } else if min >= gamma1 {
        Classification::LocalMin
    } else if min <= -gamma1 {
        if eigenvalues.iter().all(|e| e.abs() >= gamma3) {
            Classification::StrongSaddle
        } else {
            Classification::StrictOnlySaddle
        }
    } else {
        Classification::Degenerate
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrictSaddleViolation {
    pub point: Vec<f64>,
    pub grad_norm: f64,
    pub lambda_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrictSaddleReport {
    pub checked: usize,
    pub violations: Vec<StrictSaddleViolation>,
}

/// Check the strict saddle alternatives at every sample using the landscape's own
/// `(gamma1, gamma2)`.
pub fn verify_strict_saddle_property(landscape: &Landscape, samples: &[Vec<f64>]) -> StrictSaddleReport {
    verify_strict_saddle_with(landscape, samples, landscape.gamma1(), landscape.gamma2())
}

/// As [`verify_strict_saddle_property`] with explicit thresholds.
pub fn verify_strict_saddle_with(
    landscape: &Landscape,
    samples: &[Vec<f64>],
    gamma1: f64,
    gamma2: f64,
) -> StrictSaddleReport {
    let violations = samples
        .iter()
        .filter_map(|x| {
            let grad_norm = norm(&landscape.gradient_vec(x));
            if grad_norm >= gamma2 {
                return None;
            }
            let lambda_min = sorted_eigenvalues(&landscape.hessian_matrix(x))[0];
            if lambda_min <= -gamma1 || lambda_min >= gamma1 {
                None
            } else {
                Some(StrictSaddleViolation {
                    point: x.clone(),
                    grad_norm,
                    lambda_min,
                })
            }
        })
        .collect();
    StrictSaddleReport {
        checked: samples.len(),
        violations,
    }
}

/// Largest mixed error `|a - b| / max(1, |a|, |b|)` between analytic derivatives and
/// central differences (gradient from F, Hessian from the gradient).
pub fn finite_difference_check(landscape: &Landscape, x: &[f64], step: f64) -> Result<f64> {
    landscape.check_dim(x)?;
    if !(step > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let n = landscape.dim();
    let g = landscape.gradient_vec(x);
    let h = landscape.hessian_matrix(x);
    let rel = |a: f64, b: f64| (a - b).abs() / 1f64.max(a.abs()).max(b.abs());
    let mut worst = 0f64;
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for i in 0..n {
        xp[i] = x[i] + step;
        xm[i] = x[i] - step;
        let fd = (landscape.value(&xp) - landscape.value(&xm)) / (2.0 * step);
        worst = worst.max(rel(g[i], fd));
        let gp = landscape.gradient_vec(&xp);
        let gm = landscape.gradient_vec(&xm);
        for j in 0..n {
            let fd2 = (gp[j] - gm[j]) / (2.0 * step);
            worst = worst.max(rel(h[(j, i)], fd2));
        }
        xp[i] = x[i];
        xm[i] = x[i];
    }
    Ok(worst)
}

/// Norm of the central-difference gradient at `x`.
pub fn finite_difference_gradient_norm(landscape: &Landscape, x: &[f64], step: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    let mut acc = 0.0;
    for i in 0..x.len() {
        xp[i] = x[i] + step;
        xm[i] = x[i] - step;
        let fd = (landscape.value(&xp) - landscape.value(&xm)) / (2.0 * step);
        acc += fd * fd;
        xp[i] = x[i];
        xm[i] = x[i];
    }
    acc.sqrt()
}

// ---------------------------------------------------------------------------
// Quadratic forms

/// `F(x) = 1/2 (x - c)^T H (x - c)`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    n: usize,
    h: Vec<f64>,
    center: Vec<f64>,
}

impl QuadraticForm {
    pub fn new(hessian: &DMatrix<f64>, center: Vec<f64>) -> Result<Self> {
        let n = hessian.nrows();
        if hessian.ncols() != n || center.len() != n || n == 0 {
            return Err(Error::invalid("Hessian must be square and match the center"));
        }
        if (hessian - hessian.transpose()).abs().max() > 1e-12 * (1.0 + hessian.abs().max()) {
            return Err(Error::invalid("Hessian must be symmetric"));
        }
        let h = (0..n * n).map(|k| hessian[(k / n, k % n)]).collect();
        Ok(QuadraticForm { n, h, center })
    }
}

impl Potential for QuadraticForm {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            let di = x[i] - self.center[i];
            let mut row = 0.0;
            for j in 0..n {
                row += self.h[i * n + j] * (x[j] - self.center[j]);
            }
            acc += di * row;
        }
        0.5 * acc
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.h[i * n + j] * (x[j] - self.center[j]);
            }
            out[i] = row;
        }
    }

    fn hessian(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.h);
    }
}

/// Default gradient threshold for the quadratic builtins.
const QUADRATIC_GAMMA2: f64 = 0.1;

/// General quadratic form with its single critical point at the origin.
///
/// `gamma1` is the largest unstable magnitude when the form has negative directions,
/// otherwise the smallest eigenvalue; `gamma3` is the smallest absolute eigenvalue.
pub fn builtin_quadratic_form(hessian: &DMatrix<f64>) -> Result<Landscape> {
    let n = hessian.nrows();
    let pot = QuadraticForm::new(hessian, vec![0.0; n])?;
    let ev = sorted_eigenvalues(hessian);
    let gamma3 = ev.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
    if !(gamma3 > 0.0) {
        return Err(Error::invalid("quadratic form must be nondegenerate"));
    }
    let gamma1 = if ev[0] < 0.0 { -ev[0] } else { ev[0] };
    let region = WorkingRegion {
        lower: vec![-2.0; n],
        upper: vec![2.0; n],
    };
    Landscape::new(
        "quadratic_form",
        Arc::new(pot),
        vec![vec![0.0; n]],
        (gamma1, QUADRATIC_GAMMA2, gamma3),
        region,
    )
}

/// `F(x) = 1/2 (sum_stable mu_i x_i^2 - sum_unstable lambda_j x_j^2)`, unstable
/// coordinates first.
pub fn builtin_quadratic_saddle(unstable_eigs: &[f64], stable_eigs: &[f64]) -> Result<Landscape> {
    if unstable_eigs.is_empty() {
        return Err(Error::invalid("at least one unstable eigenvalue is required"));
    }
    if unstable_eigs.iter().chain(stable_eigs).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("eigenvalue magnitudes must be positive and finite"));
    }
    let diag: Vec<f64> = unstable_eigs
        .iter()
        .map(|l| -l)
        .chain(stable_eigs.iter().copied())
        .collect();
    let mut land = builtin_quadratic_form(&DMatrix::from_diagonal(&DVector::from_vec(diag)))?;
    land.name = "quadratic_saddle".into();
    Ok(land)
}

/// `F(x) = 1/2 sum mu_i x_i^2` with all `mu_i > 0`.
pub fn builtin_bowl(eigs: &[f64]) -> Result<Landscape> {
    if eigs.is_empty() || eigs.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("bowl eigenvalues must be positive and finite"));
    }
    let mut land =
        builtin_quadratic_form(&DMatrix::from_diagonal(&DVector::from_vec(eigs.to_vec())))?;
    land.name = "bowl".into();
    Ok(land)
}

// ---------------------------------------------------------------------------
// Saddle chain
//
// Base potential in reference units (lambda_u = lambda_s = 2, drop = 1):
//   F1(x, y) = Phi(x) + K(x) T(y),   T(y) = P^2/(4 pi^2) (1 - cos(2 pi y / P)).
// T is P-periodic with T = 0, T'' = 1 on y = 0 (line A) and T = P^2/(2 pi^2),
// T'' = -1 on y = P/2 (line B). Both lines are invariant under the flow. Saddle O_i sits
// at x = (i - 1 + s) L on line A or B alternately, stable along x and unstable across,
// so its unstable branches land on the other line and run down to O_{i+1}. The minimizer
// sits on line A at x = (k + s) L. Near every registered point F is replaced by its exact
// quadratic Taylor polynomial through a C^3 radial bump, so the registered Hessians hold
// on a whole neighborhood. Physical parameters are reached by the exact rescaling
// F(x, y) = drop * F1(x / sx, y / sy).

const BASE_L: f64 = 1.4;
const BASE_P: f64 = 2.0;
const BASE_THETA: f64 = PI / 4.0;
const BASE_LAMBDA: f64 = 2.0;
const BASE_LSTAR: f64 = 2.5;
const BASE_TAIL: f64 = 4.0;
const BUMP_INNER: f64 = 0.08;
const BUMP_OUTER: f64 = 0.2;

/// `35 t^4 - 84 t^5 + 70 t^6 - 20 t^7` clipped to [0, 1] with derivatives.
#[inline]
fn smoothstep3(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let s = t4 * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t)));
        let d1 = t3 * (140.0 + t * (-420.0 + t * (420.0 - 140.0 * t)));
        let d2 = t2 * (420.0 + t * (-1680.0 + t * (2100.0 - 840.0 * t)));
        (s, d1, d2)
    }
}

#[derive(Debug, Clone)]
struct QuadPatch {
    center: [f64; 2],
    value: f64,
    hess: [f64; 3], // xx, xy, yy
}

#[derive(Debug, Clone)]
struct ChainBase {
    k: usize,
    x_first: f64,
    x_star: f64,
    c0: f64,
    big_c0: f64,
    a1: f64,
    a2: f64,
    b1: f64,
    b2: f64,
    amp: f64,
    sgn_left: f64,
    patches: Vec<QuadPatch>,
}

/// (F, Fx, Fy, Fxx, Fxy, Fyy)
type Jet = [f64; 6];

impl ChainBase {
    fn new(k: usize) -> Self {
        let (l, p, lu, ls, d) = (BASE_L, BASE_P, BASE_LAMBDA, BASE_LAMBDA, 1.0);
        let beta = p * p / (2.0 * PI * PI);
        let amp = lu / BASE_THETA.cos();
        let q = amp * (PI / l) * BASE_THETA.sin();
        let a1 = beta * lu / 2.0;
        let a2 = -ls * l * l / (4.0 * PI * PI) - beta * lu / 8.0;
        let c0 = -beta * lu / 2.0 - a2;
        let b1 = beta * q * l / (2.0 * PI);
        let b2 = (2.0 * d - beta * q * l) / (4.0 * PI);
        let s = k % 2;
        let x_first = s as f64 * l;
        let x_star = (k + s) as f64 * l;
        let mut base = ChainBase {
            k,
            x_first,
            x_star,
            c0,
            big_c0: (k + s) as f64 * d,
            a1,
            a2,
            b1,
            b2,
            amp,
            sgn_left: if s == 0 { 1.0 } else { -1.0 },
            patches: Vec::new(),
        };
        let mut patches: Vec<QuadPatch> = base
            .saddle_locations()
            .into_iter()
            .enumerate()
            .map(|(i, c)| QuadPatch {
                center: c,
                value: (k - i) as f64 * d,
                hess: [ls, 0.0, -lu],
            })
            .collect();
        patches.push(QuadPatch {
            center: [x_star, 0.0],
            value: 0.0,
            hess: [ls, 0.0, BASE_LSTAR],
        });
        base.patches = patches;
        base
    }

    fn saddle_locations(&self) -> Vec<[f64; 2]> {
        let s = self.k % 2;
        (0..self.k)
            .map(|i| {
                let j = i + s;
                let y = if j % 2 == 0 { 0.0 } else { BASE_P / 2.0 };
                [j as f64 * BASE_L, y]
            })
            .collect()
    }

    /// (Phi, Phi', Phi'')
    #[inline]
    fn phi(&self, x: f64) -> (f64, f64, f64) {
        let w = PI / BASE_L;
        let u = w * x;
        let (su, cu) = u.sin_cos();
        let s2 = 2.0 * su * cu;
        let c2 = cu * cu - su * su;
        let slope = 1.0 / BASE_L;
        let mut v = self.big_c0 - slope * x
            + self.c0
            + self.a1 * cu
            + self.a2 * c2
            + self.b1 * su
            + self.b2 * s2;
        let mut d1 = -slope
            + w * (-self.a1 * su - 2.0 * self.a2 * s2 + self.b1 * cu + 2.0 * self.b2 * c2);
        let mut d2 = w * w * (-self.a1 * cu - 4.0 * self.a2 * c2 - self.b1 * su - 4.0 * self.b2 * s2);
        let tr = x - (self.x_star + 0.1 * BASE_L);
        if tr > 0.0 {
            v += BASE_TAIL * tr.powi(4);
            d1 += 4.0 * BASE_TAIL * tr.powi(3);
            d2 += 12.0 * BASE_TAIL * tr * tr;
        }
        let tl = (self.x_first - 0.5 * BASE_L) - x;
        if tl > 0.0 {
            v += BASE_TAIL * tl.powi(4);
            d1 -= 4.0 * BASE_TAIL * tl.powi(3);
            d2 += 12.0 * BASE_TAIL * tl * tl;
        }
        (v, d1, d2)
    }

    /// (K, K', K'')
    #[inline]
    fn kappa(&self, x: f64) -> (f64, f64, f64) {
        let w = PI / BASE_L;
        let (sv, cv) = (w * x - BASE_THETA).sin_cos();
        let k0 = -self.amp * cv;
        let k1 = self.amp * w * sv;
        let k2 = self.amp * w * w * cv;
        let width = 0.3 * BASE_L;
        let (wr, wr1, wr2) = smoothstep3((x - (self.x_star - 0.9 * BASE_L)) / width);
        let (wr1, wr2) = (wr1 / width, wr2 / (width * width));
        let v0 = (1.0 - wr) * k0 + wr * BASE_LSTAR;
        let v1 = (1.0 - wr) * k1 + wr1 * (BASE_LSTAR - k0);
        let v2 = (1.0 - wr) * k2 - 2.0 * wr1 * k1 + wr2 * (BASE_LSTAR - k0);
        let (wl, s1, s2) = smoothstep3(((self.x_first - 0.6 * BASE_L) - x) / width);
        let (wl1, wl2) = (-s1 / width, s2 / (width * width));
        let c = self.sgn_left * BASE_LSTAR;
        (
            (1.0 - wl) * v0 + wl * c,
            (1.0 - wl) * v1 + wl1 * (c - v0),
            (1.0 - wl) * v2 - 2.0 * wl1 * v1 + wl2 * (c - v0),
        )
    }

    #[inline]
    fn smooth_jet(&self, x: f64, y: f64) -> Jet {
        let (p0, p1, p2) = self.phi(x);
        let (k0, k1, k2) = self.kappa(x);
        let om = 2.0 * PI / BASE_P;
        let (sy, cy) = (om * y).sin_cos();
        let t0 = (BASE_P * BASE_P / (4.0 * PI * PI)) * (1.0 - cy);
        let t1 = (BASE_P / (2.0 * PI)) * sy;
        let t2 = cy;
        [
            p0 + k0 * t0,
            p1 + k1 * t0,
            k0 * t1,
            p2 + k2 * t0,
            k1 * t1,
            k0 * t2,
        ]
    }

    #[inline]
    fn jet(&self, x: f64, y: f64) -> Jet {
        for patch in &self.patches {
            let dx = x - patch.center[0];
            if dx.abs() >= BUMP_OUTER {
                continue;
            }
            let mut dy = y - patch.center[1];
            dy -= BASE_P * (dy / BASE_P).round();
            let r2 = dx * dx + dy * dy;
            if r2 >= BUMP_OUTER * BUMP_OUTER {
                continue;
            }
            let [hxx, hxy, hyy] = patch.hess;
            let qx = hxx * dx + hxy * dy;
            let qy = hxy * dx + hyy * dy;
            let qv = patch.value + 0.5 * (dx * qx + dy * qy);
            let quad: Jet = [qv, qx, qy, hxx, hxy, hyy];
            let r = r2.sqrt();
            if r <= BUMP_INNER {
                return quad;
            }
            // F = Fs + b (Q - Fs), b = 1 - S((r - r0)/(r1 - r0)).
            let fs = self.smooth_jet(x, y);
            let span = BUMP_OUTER - BUMP_INNER;
            let (s0, s1, s2) = smoothstep3((r - BUMP_INNER) / span);
            let b = 1.0 - s0;
            let db = -s1 / span;
            let ddb = -s2 / (span * span);
            let (ux, uy) = (dx / r, dy / r);
            let bx = db * ux;
            let by = db * uy;
            let bxx = ddb * ux * ux + db / r * (1.0 - ux * ux);
            let bxy = ddb * ux * uy - db / r * ux * uy;
            let byy = ddb * uy * uy + db / r * (1.0 - uy * uy);
            let m: Jet = std::array::from_fn(|i| quad[i] - fs[i]);
            return [
                fs[0] + b * m[0],
                fs[1] + b * m[1] + m[0] * bx,
                fs[2] + b * m[2] + m[0] * by,
                fs[3] + b * m[3] + 2.0 * bx * m[1] + m[0] * bxx,
                fs[4] + b * m[4] + bx * m[2] + by * m[1] + m[0] * bxy,
                fs[5] + b * m[5] + 2.0 * by * m[2] + m[0] * byy,
            ];
        }
        self.smooth_jet(x, y)
    }
}

/// The base chain mapped to physical units.
#[derive(Debug, Clone)]
pub struct SaddleChain {
    base: ChainBase,
    drop: f64,
    sx: f64,
    sy: f64,
}

impl SaddleChain {
    #[inline]
    fn phys_jet(&self, x: &[f64]) -> Jet {
        let j = self.base.jet(x[0] / self.sx, x[1] / self.sy);
        let d = self.drop;
        [
            d * j[0],
            d * j[1] / self.sx,
            d * j[2] / self.sy,
            d * j[3] / (self.sx * self.sx),
            d * j[4] / (self.sx * self.sy),
            d * j[5] / (self.sy * self.sy),
        ]
    }
}

impl Potential for SaddleChain {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.phys_jet(x)[0]
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let j = self.phys_jet(x);
        out[0] = j[1];
        out[1] = j[2];
    }
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let j = self.phys_jet(x);
        out.copy_from_slice(&[j[3], j[4], j[4], j[5]]);
    }
    fn value_and_gradient(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let j = self.phys_jet(x);
        out[0] = j[1];
        out[1] = j[2];
        j[0]
    }
}

/// Two-dimensional chain of `k` strong saddles `F(O_1) > ... > F(O_k)` draining into
/// a quadratic minimizer `x*` with `F(x*) = 0` and `F(O_i) = (k - i + 1) drop`.
///
/// Each saddle has Hessian `diag(lambda_s, -lambda_u)`; the minimizer has
/// `diag(lambda_s, 1.25 lambda_u)`. F is periodic in the second
/// coordinate; the registry lists one representative per critical point. The
/// minimizer classifies as a local minimum only when `lambda_s >= lambda_u`.
pub fn builtin_saddle_chain(k: usize, lambda_u: f64, lambda_s: f64, drop: f64) -> Result<Landscape> {
    if k < 1 {
        return Err(Error::invalid("saddle chain needs k >= 1"));
    }
    for (name, v) in [("lambda_u", lambda_u), ("lambda_s", lambda_s), ("drop", drop)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be positive and finite")));
        }
    }
    let base = ChainBase::new(k);
    let sx = (BASE_LAMBDA * drop / lambda_s).sqrt();
    let sy = (BASE_LAMBDA * drop / lambda_u).sqrt();
    let mut locations: Vec<Vec<f64>> = base
        .saddle_locations()
        .iter()
        .map(|c| vec![c[0] * sx, c[1] * sy])
        .collect();
    locations.push(vec![base.x_star * sx, 0.0]);
    let region = WorkingRegion {
        lower: vec![(base.x_first - 1.2 * BASE_L) * sx, -0.5 * BASE_P * sy],
        upper: vec![(base.x_star + 0.5 * BASE_L) * sx, 0.5 * BASE_P * sy],
    };
    let chain = SaddleChain { base, drop, sx, sy };
    let eigs = [lambda_u, lambda_s, 1.25 * lambda_u];
    let gamma3 = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    // Near-inflection points off the registry reach |grad F| ~ 0.038 in base units.
    let gamma2 = 0.02 * (drop * lambda_u.min(lambda_s) / BASE_LAMBDA).sqrt();
    let land = Landscape::new(
        "saddle_chain",
        Arc::new(chain),
        locations,
        (lambda_u, gamma2, gamma3),
        region,
    )?
    .with_periods(vec![None, Some(BASE_P * sy)]);
    let info = ChainInfo {
        k,
        lambda_u,
        lambda_s,
        drop,
        saddle_indices: (0..k).collect(),
        minimizer_index: k,
        spacing: BASE_L * sx,
        period: BASE_P * sy,
    };
    Ok(land.with_chain(info))
}

impl ChainInfo {
    /// A point on the first saddle's line, `offset` spacings before it (higher F).
    pub fn start_before_first(&self, landscape: &Landscape, offset: f64) -> Vec<f64> {
        let o1 = &landscape.critical_points()[self.saddle_indices[0]].location;
        vec![o1[0] - offset * self.spacing, o1[1]]
    }
}

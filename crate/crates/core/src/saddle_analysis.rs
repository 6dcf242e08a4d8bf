//! Oracles for exactly linear saddles: the fastest unstable eigenspace and its trace
//! `Q_max` on the sphere, `Q^mu` membership, the distance shells around the stable set
//! and the predicted exit-time bounds attached to them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{deterministic_exit, DomainSpec, ExitTime};
use crate::landscape::{norm, CriticalPoint, Landscape};

/// Relative gap below which two unstable eigenvalues count as one top block.
const MULTIPLICITY_TOL: f64 = 1e-9;

/// Default number of explicit shells before the `Beyond` bucket.
pub const DEFAULT_SHELL_CAP: u32 = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSaddle {
    pub center: Vec<f64>,
    /// `Lambda = -Hess F(O)`.
    pub lambda_matrix: DMatrix<f64>,
    /// Unstable rates `lambda_1 >= lambda_2 >= ...` (positive).
    pub unstable_rates: Vec<f64>,
    /// Stable rates (positive), ascending.
    pub stable_rates: Vec<f64>,
    /// Multiplicity of the top rate.
    pub q: usize,
    pub unstable_basis: Vec<DVector<f64>>,
    pub stable_basis: Vec<DVector<f64>>,
    pub gamma_max_basis: Vec<DVector<f64>>,
}

impl LinearSaddle {
    pub fn from_hessian(center: Vec<f64>, hessian: &DMatrix<f64>) -> Result<Self> {
        let n = hessian.nrows();
        if hessian.ncols() != n || center.len() != n {
            return Err(Error::invalid("Hessian must be square and match the center"));
        }
        let eig = SymmetricEigen::new(hessian.clone());
        let mut order: Vec<usize> = (0..n).collect();
        // Ascending Hessian eigenvalues, ties by index.
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
        let mut unstable_rates = Vec::new();
        let mut unstable_basis = Vec::new();
        let mut stable_rates = Vec::new();
        let mut stable_basis = Vec::new();
        for &i in &order {
            let ev = eig.eigenvalues[i];
            let v = eig.eigenvectors.column(i).into_owned();
            if ev < 0.0 {
                unstable_rates.push(-ev);
                unstable_basis.push(v);
            } else if ev > 0.0 {
                stable_rates.push(ev);
                stable_basis.push(v);
            } else {
                return Err(Error::invalid("saddle Hessian is singular"));
            }
        }
        if unstable_rates.is_empty() {
            return Err(Error::invalid("Hessian has no unstable direction"));
        }
        let top = unstable_rates[0];
        let q = unstable_rates
            .iter()
            .take_while(|r| (top - **r) <= MULTIPLICITY_TOL * top)
            .count();
        let gamma_max_basis = unstable_basis[..q].to_vec();
        Ok(LinearSaddle {
            center,
            lambda_matrix: -hessian,
            unstable_rates,
            stable_rates,
            q,
            unstable_basis,
            stable_basis,
            gamma_max_basis,
        })
    }

    pub fn from_critical_point(cp: &CriticalPoint) -> Result<Self> {
        Self::from_hessian(cp.location.clone(), &cp.hessian_matrix())
    }

    pub fn lambda1(&self) -> f64 {
        self.unstable_rates[0]
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Norm of the projection of `x - O` on the unstable subspace, i.e. the distance to
    /// the stable set `A_1 + O` of the linear flow.
    pub fn distance_to_stable_set(&self, x: &[f64]) -> f64 {
        let d = DVector::from_iterator(x.len(), x.iter().zip(&self.center).map(|(a, c)| a - c));
        self.unstable_basis.iter().map(|v| v.dot(&d).powi(2)).sum::<f64>().sqrt()
    }

    /// Point `O + a u_1 + b s_1` along the top unstable and first stable directions.
    pub fn point_along(&self, unstable: f64, stable: f64) -> Vec<f64> {
        let mut p = DVector::from_vec(self.center.clone()) + &self.unstable_basis[0] * unstable;
        if let Some(s) = self.stable_basis.first() {
            p += s * stable;
        }
        p.iter().copied().collect()
    }
}

/// `span(Gamma_max) ∩ sphere(O, R)`: two antipodal points for `q = 1`, a `(q-1)`-sphere
/// otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct QMaxRep {
    pub center: Vec<f64>,
    pub radius: f64,
    pub basis: Vec<DVector<f64>>,
}

impl QMaxRep {
    pub fn q(&self) -> usize {
        self.basis.len()
    }

    /// For `q = 1`, the two points.
    pub fn points(&self) -> Option<[Vec<f64>; 2]> {
        (self.q() == 1).then(|| {
            let c = DVector::from_vec(self.center.clone());
            let v = &self.basis[0] * self.radius;
            [(&c + &v).iter().copied().collect(), (&c - &v).iter().copied().collect()]
        })
    }

    /// Euclidean distance from `x` to the set.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let d = DVector::from_iterator(x.len(), x.iter().zip(&self.center).map(|(a, c)| a - c));
        let mut p = DVector::zeros(x.len());
        for v in &self.basis {
            p += v * v.dot(&d);
        }
        let perp = (&d - &p).norm_squared();
        let radial = p.norm() - self.radius;
        (perp + radial * radial).sqrt()
    }
}

pub fn q_max(linear: &LinearSaddle, radius: f64) -> Result<QMaxRep> {
    if !(radius > 0.0) {
        return Err(Error::invalid("radius must be positive"));
    }
    Ok(QMaxRep {
        center: linear.center.clone(),
        radius,
        basis: linear.gamma_max_basis.clone(),
    })
}

/// Whether the boundary point `x` of `Ball(O, R)` lies within `mu` of `Q_max`.
pub fn q_mu_contains(qmax: &QMaxRep, x: &[f64], mu: f64) -> Result<bool> {
    if !(mu > 0.0) {
        return Err(Error::invalid("mu must be positive"));
    }
    let r = norm(&x.iter().zip(&qmax.center).map(|(a, c)| a - c).collect::<Vec<_>>());
    if (r - qmax.radius).abs() > 1e-6 {
        return Err(Error::precondition(format!(
            "point is not on the boundary sphere (|x - O| = {r}, R = {})",
            qmax.radius
        )));
    }
    Ok(qmax.distance(x) < mu)
}

/// `Q^mu` target built from deterministic exit images of a grid of `U ∪ ∂U` together
/// with `Q_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct QMuSet {
    pub qmax: QMaxRep,
    pub cloud: Vec<Vec<f64>>,
}

impl QMuSet {
    /// Flow every grid point of `Ball(O, u_radius)` (with `per_axis` points per axis) out of
    /// `domain`; points that never exit are skipped.
    pub fn from_flow_images(
        landscape: &Landscape,
        linear: &LinearSaddle,
        domain_radius: f64,
        u_radius: f64,
        per_axis: usize,
        dt: f64,
        t_max: f64,
    ) -> Result<Self> {
        let qmax = q_max(linear, domain_radius)?;
        let domain = DomainSpec::ball(linear.center.clone(), domain_radius);
        let n = linear.dim();
        let per_axis = per_axis.max(2);
        let mut cloud = Vec::new();
        for idx in 0..per_axis.pow(n as u32) {
            let mut rem = idx;
            let x: Vec<f64> = (0..n)
                .map(|d| {
                    let i = rem % per_axis;
                    rem /= per_axis;
                    linear.center[d] + u_radius * (2.0 * i as f64 / (per_axis - 1) as f64 - 1.0)
                })
                .collect();
            if landscape.distance(&x, &linear.center) > u_radius {
                continue;
            }
            match deterministic_exit(landscape, &x, &domain, dt, t_max) {
                Ok((ExitTime::Finite(_), Some(state))) => cloud.push(state),
                Ok(_) | Err(Error::Undetermined(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(QMuSet { qmax, cloud })
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        self.cloud
            .iter()
            .map(|c| norm(&x.iter().zip(c).map(|(a, b)| a - b).collect::<Vec<_>>()))
            .fold(self.qmax.distance(x), f64::min)
    }

    pub fn contains(&self, x: &[f64], mu: f64) -> bool {
        self.distance(x) < mu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shell {
    /// `k = 0`: distance below `eps`; `k >= 1`: `eps^{1/2^{k-1}} <= dist < eps^{1/2^k}`.
    Index(u32),
    Beyond,
}

impl std::fmt::Display for Shell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shell::Index(k) => write!(f, "shell_{k}"),
            Shell::Beyond => write!(f, "beyond"),
        }
    }
}

/// `eps^{1/2^k}`, the outer edge of shell `k`.
pub fn shell_edge(epsilon: f64, k: u32) -> f64 {
    epsilon.powf(0.5f64.powi(k as i32))
}

/// Shell of a distance to the stable set; `Beyond` at or past `eps^{1/2^k_cap}`.
pub fn shell_of_distance(dist: f64, epsilon: f64, k_cap: u32) -> Result<Shell> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon must lie in (0, 1)"));
    }
    if !(dist >= 0.0) {
        return Err(Error::invalid("distance must be non-negative"));
    }
    if dist < epsilon {
        return Ok(Shell::Index(0));
    }
    Ok((1..=k_cap)
        .find(|&k| dist < shell_edge(epsilon, k))
        .map_or(Shell::Beyond, Shell::Index))
}

/// Shell of `x` relative to the linear saddle's stable set.
pub fn shell_index(x: &[f64], linear: &LinearSaddle, epsilon: f64) -> Result<Shell> {
    shell_of_distance(linear.distance_to_stable_set(x), epsilon, DEFAULT_SHELL_CAP)
}

/// A distance strictly inside shell `k` (geometric midpoint of the band edges); `0` for
/// `k = 0`.
pub fn shell_representative(shell: Shell, epsilon: f64, k_cap: u32, beyond: f64) -> f64 {
    match shell {
        Shell::Index(0) => 0.0,
        Shell::Index(k) => (shell_edge(epsilon, k - 1) * shell_edge(epsilon, k)).sqrt(),
        Shell::Beyond => beyond.max(shell_edge(epsilon, k_cap)),
    }
}

/// `(1/lambda_1 + r) ln(1/eps)` for `k = 0`, `(1/(2^{k-1} lambda_1) + r) ln(1/eps)` for
/// `k >= 1` and `2 r ln(1/eps)` beyond the shells.
pub fn shell_exit_bound(shell: Shell, lambda1: f64, r: f64, epsilon: f64) -> Result<f64> {
    if !(lambda1 > 0.0) || !(r >= 0.0) {
        return Err(Error::invalid("need lambda1 > 0 and r >= 0"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon must lie in (0, 1)"));
    }
    let l = (1.0 / epsilon).ln();
    Ok(match shell {
        Shell::Index(0) => (1.0 / lambda1 + r) * l,
        Shell::Index(k) => (1.0 / (2f64.powi(k as i32 - 1) * lambda1) + r) * l,
        Shell::Beyond => 2.0 * r * l,
    })
}

/// Leading-order mean exit time `ln(1/eps) / lambda_1` from the saddle.
pub fn linear_exit_oracle(linear: &LinearSaddle, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon must lie in (0, 1)"));
    }
    Ok((1.0 / epsilon).ln() / linear.lambda1())
}

//! Mixed l2/l1 minimization
//!
//! ```text
//! minimize ||x||_{2,1}  subject to  ||y - A x||_2 <= eps
//! ```
//!
//! solved by two-block alternating-direction splitting: `x` is kept in the
//! feasible set `C = {x : ||y - A x||_2 <= eps}` by exact Euclidean
//! projection, and a copy `z = x` carries the block-shrinkage step. The
//! projection uses one eigendecomposition of `A^T A` per call and reduces to
//! a scalar equation for the multiplier, so the iteration count does not
//! degrade with the conditioning of `A`. The returned estimate is the shrunk
//! iterate `z`, so it is exactly block sparse.
//!
//! The problem is positively homogeneous in `(y, eps)`; it is solved on data
//! scaled to `||y||_2 = 1` and mapped back.

use alloc::vec;
use alloc::vec::Vec;

use crate::block_model::BlockVector;
use crate::error::{invalid_arg, Error, Result};
use crate::linalg::{Matrix, SymmetricEigen};
use crate::math;
use crate::rip_cert::SensingMatrix;

/// Relative feasibility slack of the solver contract.
pub const FEASIBILITY_SLACK: f64 = 1e-6;
/// Relative optimality slack of the solver contract.
pub const OPTIMALITY_SLACK: f64 = 1e-6;
/// Eigenvalues of `A A^T` below this fraction of the largest one are treated
/// as zero when measuring the distance from `y` to the range of `A`.
pub const RANGE_RANK_TOLERANCE: f64 = 1e-12;

/// Iterations before the first penalty rebalancing check. The gap between
/// checks grows by half after every change, so the penalty settles on
/// degenerate problems instead of chasing the residual ratio.
pub const PENALTY_UPDATE_INTERVAL: usize = 100;
/// Upper limit on penalty changes per solve; with finitely many changes the
/// usual ADMM convergence guarantee is retained.
pub const MAX_PENALTY_UPDATES: usize = 1000;

/// `1e-6 * max(1, ||y||_2)`.
pub fn feasibility_slack(y_norm: f64) -> f64 {
    FEASIBILITY_SLACK * y_norm.max(1.0)
}

/// `1e-6 * max(1, ||w||_{2,1})` for a comparison point `w`.
pub fn optimality_slack(comparison_norm_2_1: f64) -> f64 {
    OPTIMALITY_SLACK * comparison_norm_2_1.max(1.0)
}

/// Sensing matrix, observation and noise radius.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementInstance {
    a: SensingMatrix,
    y: Vec<f64>,
    epsilon: f64,
}

impl MeasurementInstance {
    pub fn new(a: SensingMatrix, y: Vec<f64>, epsilon: f64) -> Result<Self> {
        if y.len() != a.rows() {
            return Err(Error::DimensionMismatch { expected: a.rows(), found: y.len() });
        }
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(invalid_arg!("epsilon must be finite and nonnegative, got {epsilon}"));
        }
        Ok(Self { a, y, epsilon })
    }

    pub fn matrix(&self) -> &SensingMatrix {
        &self.a
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `||y - A x||_2`.
    pub fn residual_norm(&self, x: &BlockVector) -> Result<f64> {
        Ok(math::dist2(&self.y, &self.a.apply(x)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub primal_tolerance: f64,
    pub dual_tolerance: f64,
    /// Initial ADMM penalty.
    pub penalty: f64,
    pub over_relaxation: f64,
    /// Rebalance the penalty from the ratio of the normalized primal and dual
    /// residuals, at most [`MAX_PENALTY_UPDATES`] times per solve.
    pub adaptive_penalty: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iterations: 20_000, primal_tolerance: 1e-9, dual_tolerance: 1e-9, penalty: 1.0, over_relaxation: 1.0, adaptive_penalty: true }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(invalid_arg!("max_iterations must be positive"));
        }
        if !(self.primal_tolerance > 0.0) || !(self.dual_tolerance > 0.0) {
            return Err(invalid_arg!("tolerances must be positive"));
        }
        if !(self.penalty > 0.0) || !self.penalty.is_finite() {
            return Err(invalid_arg!("penalty must be positive"));
        }
        if !(1.0..2.0).contains(&self.over_relaxation) {
            return Err(invalid_arg!("over_relaxation must lie in [1, 2)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub x_hat: BlockVector,
    /// `||x_hat||_{2,1}`.
    pub objective: f64,
    /// `||y - A x_hat||_2`.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Proximal operator of `tau ||.||_{2,1}`: each block is pulled towards the
/// origin by `tau` in Euclidean norm, or zeroed when shorter than `tau`.
pub fn block_shrink(v: &BlockVector, tau: f64) -> BlockVector {
    let mut out = v.clone();
    block_shrink_in_place(&mut out, tau);
    out
}

fn block_shrink_in_place(v: &mut BlockVector, tau: f64) {
    for i in 0..v.structure().block_count() {
        let norm = v.block_norm(i);
        let block = v.block_mut(i);
        if norm <= tau {
            block.fill(0.0);
        } else {
            let scale = 1.0 - tau / norm;
            block.iter_mut().for_each(|x| *x *= scale);
        }
    }
}

/// Projection of `w` onto the ball `{u : ||u - y||_2 <= epsilon}`.
pub fn project_residual_ball(w: &[f64], y: &[f64], epsilon: f64) -> Vec<f64> {
    let d = math::dist2(w, y);
    if d <= epsilon {
        return w.to_vec();
    }
    let s = epsilon / d;
    w.iter().zip(y).map(|(wi, yi)| yi + s * (wi - yi)).collect()
}

/// Newton steps allowed when solving for the projection multiplier.
const MULTIPLIER_ITERATIONS: usize = 200;

/// Euclidean projection onto `C = {x : ||y - A x||_2 <= eps}`.
///
/// With `A^T A = V diag(s_i^2) V^T` and `b_i = v_i^T A^T y / s_i` on the
/// directions with `s_i > 0`, the residual of `x = V c` is
/// `sum_i (s_i c_i - b_i)^2 + dist(y, range A)^2`. The projection of `v`
/// moves only these coordinates, by `mu s_i e_i / (1 + mu s_i^2)` with
/// `e_i = s_i c_i - b_i`, where `mu >= 0` matches the remaining radius.
#[derive(Debug, Clone)]
pub struct FeasibleSet {
    basis: Matrix,
    /// `(index, s_i, b_i)` for the range directions.
    range: Vec<(usize, f64, f64)>,
    radius: f64,
}

impl FeasibleSet {
    /// Fails with [`Error::Infeasible`] when `y` is farther than `epsilon`
    /// plus [`feasibility_slack`] from the range of `A`; inside the slack the
    /// set degenerates to the least-squares solutions.
    pub fn new(a: &Matrix, y: &[f64], epsilon: f64) -> Result<Self> {
        let gap = distance_to_range(a, y)?;
        if gap > epsilon + feasibility_slack(math::norm2(y)) {
            return Err(Error::Infeasible { residual: gap, epsilon });
        }
        let eig = SymmetricEigen::new(&a.gram())?;
        let cutoff = RANGE_RANK_TOLERANCE * eig.max().max(0.0);
        let aty = a.tmul_vec(y);
        let mut range = Vec::new();
        for (i, &lambda) in eig.values.iter().enumerate() {
            if lambda > cutoff && lambda > 0.0 {
                let s = math::sqrt(lambda);
                range.push((i, s, math::dot(&eig.vector(i), &aty) / s));
            }
        }
        let radius = math::sqrt((epsilon * epsilon - gap * gap).max(0.0));
        Ok(Self { basis: eig.vectors, range, radius })
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let n = v.len();
        // e_i = s_i (v_i^T v) - b_i on the range directions
        let e: Vec<f64> = self
            .range
            .iter()
            .map(|&(i, s, b)| s * (0..n).map(|r| self.basis[(r, i)] * v[r]).sum::<f64>() - b)
            .collect();
        let norm_sq = |mu: f64| -> f64 {
            self.range.iter().zip(&e).map(|(&(_, s, _), &ei)| (ei / (1.0 + mu * s * s)) * (ei / (1.0 + mu * s * s))).sum()
        };
        let r = self.radius;
        if norm_sq(0.0) <= r * r {
            return v.to_vec();
        }
        let shifts: Vec<f64> = if r == 0.0 {
            self.range.iter().zip(&e).map(|(&(_, s, _), &ei)| ei / s).collect()
        } else {
            let mu = self.multiplier(&e, r);
            self.range.iter().zip(&e).map(|(&(_, s, _), &ei)| mu * s * ei / (1.0 + mu * s * s)).collect()
        };
        let mut x = v.to_vec();
        for (&(i, _, _), &shift) in self.range.iter().zip(&shifts) {
            for (rw, xr) in x.iter_mut().enumerate() {
                *xr -= shift * self.basis[(rw, i)];
            }
        }
        x
    }

    /// Root of `1 / sqrt(g(mu)) = 1 / r` with `g(mu) = sum_i (e_i / (1 + mu s_i^2))^2`.
    /// The left side is increasing and concave in `mu`, so Newton's method
    /// started at 0 increases monotonically to the root.
    fn multiplier(&self, e: &[f64], r: f64) -> f64 {
        let mut mu = 0.0f64;
        for _ in 0..MULTIPLIER_ITERATIONS {
            let mut g = 0.0;
            let mut dg = 0.0;
            for (&(_, s, _), &ei) in self.range.iter().zip(e) {
                let q = 1.0 + mu * s * s;
                let t = ei / q;
                g += t * t;
                dg += s * s * t * t / q;
            }
            let root = math::sqrt(g);
            let psi = 1.0 / root - 1.0 / r;
            let dpsi = dg / (g * root);
            if !(dpsi > 0.0) {
                break;
            }
            let next = mu - psi / dpsi;
            if !(next > mu) {
                break;
            }
            let done = next - mu <= 4.0 * f64::EPSILON * next;
            mu = next;
            if done {
                break;
            }
        }
        mu
    }

    /// `sqrt(eps^2 - dist(y, range A)^2)`, the radius left for the
    /// component of the residual inside the range of `A`.
    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// `min_x ||y - A x||_2`, from the eigenvectors of `A A^T` with (numerically)
/// zero eigenvalue.
pub fn distance_to_range(a: &Matrix, y: &[f64]) -> Result<f64> {
    if y.len() != a.rows() {
        return Err(Error::DimensionMismatch { expected: a.rows(), found: y.len() });
    }
    let eig = SymmetricEigen::new(&a.transpose().gram())?;
    let cutoff = RANGE_RANK_TOLERANCE * eig.max().max(0.0);
    let mut gap = 0.0;
    for (i, &lambda) in eig.values.iter().enumerate() {
        if lambda <= cutoff {
            let u = eig.vector(i);
            let c = math::dot(&u, y);
            gap += c * c;
        }
    }
    Ok(math::sqrt(gap))
}

/// Solves the mixed l2/l1 program. A run that exhausts `max_iterations` is
/// returned with `converged = false`. When `y` lies farther than `epsilon`
/// (plus the feasibility slack) from the range of `A`, no iteration is run
/// and [`Error::Infeasible`] is returned.
pub fn solve(instance: &MeasurementInstance, config: &SolverConfig) -> Result<SolverResult> {
    config.validate()?;
    let a = instance.matrix();
    let structure = a.structure().clone();
    let y_norm = math::norm2(instance.y());
    if y_norm <= instance.epsilon() {
        return Ok(SolverResult {
            x_hat: BlockVector::zeros(structure),
            objective: 0.0,
            residual_norm: y_norm,
            iterations: 0,
            converged: true,
        });
    }

    let range_gap = distance_to_range(a.matrix(), instance.y())?;
    if range_gap > instance.epsilon() + feasibility_slack(y_norm) {
        return Err(Error::Infeasible { residual: range_gap, epsilon: instance.epsilon() });
    }

    let scale = y_norm;
    let y: Vec<f64> = instance.y().iter().map(|v| v / scale).collect();
    let eps = instance.epsilon() / scale;
    let slack = feasibility_slack(y_norm) / scale;
    let mat: &Matrix = a.matrix();
    let n = mat.cols();
    let alpha = config.over_relaxation;
    let mut rho = config.penalty;
    let mut penalty_updates = 0usize;
    let mut next_check = PENALTY_UPDATE_INTERVAL;
    let mut interval = PENALTY_UPDATE_INTERVAL;

    let set = FeasibleSet::new(mat, &y, eps).map_err(|e| match e {
        Error::Infeasible { residual, .. } => Error::Infeasible { residual: residual * scale, epsilon: instance.epsilon() },
        other => other,
    })?;

    let mut z = BlockVector::zeros(structure.clone());
    let mut u = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0usize;
    let mut residual = 1.0;

    for it in 1..=config.max_iterations {
        iterations = it;
        let v: Vec<f64> = z.values().iter().zip(&u).map(|(zi, ui)| zi - ui).collect();
        let x = set.project(&v);
        let x_rel: Vec<f64> = x.iter().zip(z.values()).map(|(xi, zi)| alpha * xi + (1.0 - alpha) * zi).collect();

        let z_old = z.values().to_vec();
        for ((zn, xr), ui) in z.values_mut().iter_mut().zip(&x_rel).zip(&u) {
            *zn = xr + ui;
        }
        block_shrink_in_place(&mut z, 1.0 / rho);
        for ((ui, xr), zi) in u.iter_mut().zip(&x_rel).zip(z.values()) {
            *ui += xr - zi;
        }

        let r_primal = math::dist2(&x, z.values());
        let r_dual = rho * math::dist2(z.values(), &z_old);
        let eps_primal = config.primal_tolerance * 1f64.max(math::norm2(&x)).max(math::norm2(z.values()));
        let eps_dual = config.dual_tolerance * 1f64.max(rho * math::norm2(&u));

        residual = math::dist2(&y, &mat.mul_vec(z.values()));
        if r_primal <= eps_primal && r_dual <= eps_dual && residual <= eps + slack {
            converged = true;
            break;
        }

        if config.adaptive_penalty && it == next_check && penalty_updates < MAX_PENALTY_UPDATES {
            next_check += interval;
            let ratio = math::sqrt((r_primal / eps_primal) / (r_dual / eps_dual).max(f64::MIN_POSITIVE));
            if ratio.is_finite() && !(0.2..=5.0).contains(&ratio) {
                let new_rho = (rho * ratio).clamp(1e-6, 1e6);
                // the scaled dual carries a factor 1 / rho
                let rescale = rho / new_rho;
                u.iter_mut().for_each(|ui| *ui *= rescale);
                rho = new_rho;
                penalty_updates += 1;
                interval += interval / 2;
            }
        }
    }

    let x_hat = z.scaled(scale);
    Ok(SolverResult {
        objective: x_hat.norm_2_1(),
        residual_norm: residual * scale,
        x_hat,
        iterations,
        converged,
    })
}

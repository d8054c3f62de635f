//! The sharpness instance: a matrix whose `delta_tk` is within `eps_rip` of
//! `sqrt((t - 1) / t)` and a block `k`-sparse signal that mixed l2/l1
//! minimization does not recover.
//!
//! With `a' = ((t - 1) + sqrt(t (t - 1))) k`, `a` the largest integer strictly
//! below `a'`, and `M = k + a` blocks of size `d`:
//!
//! - `x0` has `k` all-ones blocks followed by `a` zero blocks,
//! - `gamma0` has `k` zero blocks followed by `a` blocks of `k / a'`,
//! - `gamma = (x0 - gamma0) / ||x0 - gamma0||_2`,
//! - `A = sqrt(1 + sqrt((t - 1) / t)) (I - gamma gamma^T)`.
//!
//! `A gamma = 0`, so `A x0 = A gamma0` while `||gamma0||_{2,1} = (a / a') k sqrt(d)`
//! is strictly smaller than `||x0||_{2,1} = k sqrt(d)`.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::block_model::{BlockStructure, BlockVector};
use crate::error::{invalid_arg, Error, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::rip_cert::{binomial, clamped_order, exact_block_ric, recovery_threshold, SensingMatrix, ENUMERATION_LIMIT};
use crate::solver::{optimality_slack, solve, MeasurementInstance, SolverConfig};

/// Smallest `t` for which the construction is claimed sharp.
pub const MIN_T: f64 = 4.0 / 3.0;

/// Noise radii used by [`verify_recovery_failure`].
pub const NOISE_RADII: [f64; 3] = [1e-2, 1e-4, 1e-6];

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleInstance {
    pub t: f64,
    pub k: usize,
    pub d: usize,
    pub epsilon_rip: f64,
    pub a_prime: f64,
    pub a: usize,
    pub structure: Arc<BlockStructure>,
    pub gamma: BlockVector,
    pub matrix: SensingMatrix,
    pub x0: BlockVector,
    pub gamma0: BlockVector,
}

/// `a' = ((t - 1) + sqrt(t (t - 1))) k`, snapped to an integer when within
/// `1e-9` of one.
pub fn a_prime(t: f64, k: usize) -> f64 {
    math::snap_integer(((t - 1.0) + math::sqrt(t * (t - 1.0))) * k as f64)
}

/// Largest integer strictly below `x` (for integral `x` this is `x - 1`).
pub fn largest_integer_below(x: f64) -> i64 {
    let x = math::snap_integer(x);
    let f = math::floor(x);
    if f == x {
        f as i64 - 1
    } else {
        f as i64
    }
}

/// Builds the instance, enforcing `t >= 4/3` and `k >= 5 / epsilon_rip`.
pub fn construct(t: f64, k: usize, d: usize, epsilon_rip: f64) -> Result<CounterexampleInstance> {
    if !(t >= MIN_T - 1e-12) {
        return Err(Error::Precondition(format!("t = {t} is below 4/3")));
    }
    if !(epsilon_rip > 0.0) {
        return Err(Error::Precondition(format!("epsilon_rip must be positive, got {epsilon_rip}")));
    }
    if (k as f64) < 5.0 / epsilon_rip * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!("k = {k} is below 5 / epsilon_rip = {}", 5.0 / epsilon_rip)));
    }
    construct_unchecked(t, k, d, epsilon_rip)
}

/// Builds the instance for any `t > 1` and `k >= 1`, without the hypotheses
/// under which the RIP bound is guaranteed.
pub fn construct_unchecked(t: f64, k: usize, d: usize, epsilon_rip: f64) -> Result<CounterexampleInstance> {
    recovery_threshold(t)?;
    if k == 0 || d == 0 {
        return Err(invalid_arg!("k and d must be at least 1"));
    }
    let a_prime = a_prime(t, k);
    let a = largest_integer_below(a_prime);
    if a < 1 {
        return Err(invalid_arg!("t = {t}, k = {k} leave no room for the kernel blocks (a = {a})"));
    }
    let a = a as usize;
    let m = k + a;
    let structure = Arc::new(BlockStructure::uniform(m, d)?);
    let n = structure.dim();
    let kd = k * d;

    let ratio = k as f64 / a_prime;
    let mut x0 = BlockVector::zeros(structure.clone());
    x0.values_mut()[..kd].fill(1.0);
    let mut gamma0 = BlockVector::zeros(structure.clone());
    gamma0.values_mut()[kd..].fill(ratio);

    let norm = math::sqrt(kd as f64 + (a * d) as f64 * ratio * ratio);
    let gamma = x0.sub(&gamma0)?.scaled(1.0 / norm);

    let scale2 = 1.0 + recovery_threshold(t)?;
    let g = gamma.values();
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            data.push(math::sqrt(scale2) * (id - g[i] * g[j]));
        }
    }
    let matrix = SensingMatrix::new(Matrix::new(n, n, data)?, structure.clone())?;
    Ok(CounterexampleInstance { t, k, d, epsilon_rip, a_prime, a, structure, gamma, matrix, x0, gamma0 })
}

/// Numerical values of the construction's defining identities.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct InvariantReport {
    pub gamma_norm: f64,
    /// `max_i |(A gamma)_i|`.
    pub kernel_residual: f64,
    /// `max_i |(A x0 - A gamma0)_i|`.
    pub observation_gap: f64,
    pub x0_norm_2_1: f64,
    pub gamma0_norm_2_1: f64,
    /// `||gamma0||_{2,1} / ||x0||_{2,1}`, which should equal `a / a'`.
    pub norm_ratio: f64,
    pub a_over_a_prime: f64,
}

impl InvariantReport {
    pub fn holds(&self) -> bool {
        math::abs(self.gamma_norm - 1.0) <= 1e-12
            && self.kernel_residual <= 1e-10
            && self.observation_gap <= 1e-10
            && self.gamma0_norm_2_1 < self.x0_norm_2_1
            && math::abs(self.norm_ratio - self.a_over_a_prime) <= 1e-10
    }
}

impl CounterexampleInstance {
    pub fn block_count(&self) -> usize {
        self.structure.block_count()
    }

    /// `y = A x0`.
    pub fn observation(&self) -> Vec<f64> {
        self.matrix.matrix().mul_vec(self.x0.values())
    }

    /// `(1 - a / a') k sqrt(d)`, the closed-form gap between the two norms.
    pub fn norm_gap(&self) -> f64 {
        (1.0 - self.a as f64 / self.a_prime) * self.k as f64 * math::sqrt(self.d as f64)
    }

    pub fn invariants(&self) -> InvariantReport {
        let m = self.matrix.matrix();
        let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |acc, x| acc.max(math::abs(*x)));
        let ag = m.mul_vec(self.gamma.values());
        let ax = m.mul_vec(self.x0.values());
        let ag0 = m.mul_vec(self.gamma0.values());
        let diff: Vec<f64> = ax.iter().zip(&ag0).map(|(a, b)| a - b).collect();
        let x0n = self.x0.norm_2_1();
        let g0n = self.gamma0.norm_2_1();
        InvariantReport {
            gamma_norm: self.gamma.norm_2_2(),
            kernel_residual: max_abs(&ag),
            observation_gap: max_abs(&diff),
            x0_norm_2_1: x0n,
            gamma0_norm_2_1: g0n,
            norm_ratio: g0n / x0n,
            a_over_a_prime: self.a as f64 / self.a_prime,
        }
    }

    /// Upper bound on `delta_tk` derived from
    /// `|<gamma, x>|^2 <= (a'^2 + k (ceil(tk) - k)) / (a'^2 + a k) ||x||^2`.
    pub fn analytic_delta_bound(&self) -> Result<f64> {
        let (order, _) = clamped_order(self.t, self.k, self.block_count())?;
        let thr = recovery_threshold(self.t)?;
        let ap = self.a_prime;
        let kf = self.k as f64;
        let beta = (ap * ap + kf * (order as f64 - kf)) / (ap * ap + self.a as f64 * kf);
        Ok(f64::max(thr, 1.0 - (1.0 + thr) * (1.0 - beta.min(1.0))))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RipBoundReport {
    pub order: usize,
    pub clamped: bool,
    pub delta_tk: f64,
    pub threshold: f64,
    /// `threshold + epsilon_rip`.
    pub target: f64,
    pub analytic_bound: f64,
    pub supports_examined: u64,
}

/// Exact `delta_tk` of the instance matrix, which must not exceed
/// `sqrt((t - 1) / t) + epsilon_rip`.
pub fn verify_rip_bound(inst: &CounterexampleInstance) -> Result<RipBoundReport> {
    let (order, clamped) = clamped_order(inst.t, inst.k, inst.block_count())?;
    let count = binomial(inst.block_count(), order);
    if count > ENUMERATION_LIMIT {
        return Err(Error::Capacity { supports: count, limit: ENUMERATION_LIMIT });
    }
    let ric = exact_block_ric(&inst.matrix, order)?;
    let threshold = recovery_threshold(inst.t)?;
    let target = threshold + inst.epsilon_rip;
    if ric.delta > target {
        return Err(Error::CounterexampleInvalid(format!(
            "delta_tk = {} exceeds the target {target}",
            ric.delta
        )));
    }
    Ok(RipBoundReport {
        order,
        clamped,
        delta_tk: ric.delta,
        threshold,
        target,
        analytic_bound: inst.analytic_delta_bound()?,
        supports_examined: ric.supports_examined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize), serde(rename_all = "kebab-case"))]
pub enum FailureStatus {
    /// Recovery failed as predicted.
    Confirmed,
    /// The solver did not converge; no conclusion.
    Inconclusive,
    /// The solver found `x0` (or came close): the prediction did not hold.
    Refuted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct NoisyRun {
    pub radius: f64,
    pub error: f64,
    pub objective: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RecoveryFailureReport {
    pub status: FailureStatus,
    pub objective: f64,
    pub gamma0_norm_2_1: f64,
    pub x0_norm_2_1: f64,
    /// `||x_hat - x0||_2` in the noiseless run.
    pub noiseless_error: f64,
    pub iterations: usize,
    pub noisy: Vec<NoisyRun>,
}

/// Minimum error separating a failed recovery from `x0`.
pub const FAILURE_ERROR_THRESHOLD: f64 = 0.1;

/// Solver settings for the failure check. The noisy runs sit close to a
/// degenerate optimum, so they get a larger iteration budget than the
/// general default.
pub fn failure_solver_config() -> SolverConfig {
    SolverConfig { max_iterations: 200_000, ..SolverConfig::default() }
}

/// Solves the noiseless instance `y = A x0` and the noisy instances
/// `y = A x0 + r u` (`eps = r`) for each radius in [`NOISE_RADII`], where `u`
/// is the normalized `noise_direction`.
///
/// Confirmed when the noiseless objective does not exceed
/// `||gamma0||_{2,1}` (plus slack) and stays below `||x0||_{2,1}`, the
/// noiseless error exceeds [`FAILURE_ERROR_THRESHOLD`], and no noisy error
/// drops below half the noiseless error.
pub fn verify_recovery_failure(
    inst: &CounterexampleInstance,
    config: &SolverConfig,
    noise_direction: &[f64],
) -> Result<RecoveryFailureReport> {
    let n = inst.structure.dim();
    if noise_direction.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: noise_direction.len() });
    }
    let dir_norm = math::norm2(noise_direction);
    if !(dir_norm > 0.0) {
        return Err(invalid_arg!("noise direction must be nonzero"));
    }
    let y = inst.observation();
    let base = solve(&MeasurementInstance::new(inst.matrix.clone(), y.clone(), 0.0)?, config)?;
    let x0n = inst.x0.norm_2_1();
    let g0n = inst.gamma0.norm_2_1();
    let noiseless_error = base.x_hat.sub(&inst.x0)?.norm_2_2();

    let mut noisy = Vec::with_capacity(NOISE_RADII.len());
    for &r in &NOISE_RADII {
        let yz: Vec<f64> = y.iter().zip(noise_direction).map(|(yi, ui)| yi + r * ui / dir_norm).collect();
        let res = solve(&MeasurementInstance::new(inst.matrix.clone(), yz, r)?, config)?;
        noisy.push(NoisyRun {
            radius: r,
            error: res.x_hat.sub(&inst.x0)?.norm_2_2(),
            objective: res.objective,
            converged: res.converged,
        });
    }

    let status = if !base.converged || noisy.iter().any(|r| !r.converged) {
        FailureStatus::Inconclusive
    } else if base.objective <= g0n + optimality_slack(g0n)
        && base.objective < x0n
        && noiseless_error > FAILURE_ERROR_THRESHOLD
        && noisy.iter().all(|r| r.error >= 0.5 * noiseless_error)
    {
        FailureStatus::Confirmed
    } else {
        FailureStatus::Refuted
    };
    Ok(RecoveryFailureReport {
        status,
        objective: base.objective,
        gamma0_norm_2_1: g0n,
        x0_norm_2_1: x0n,
        noiseless_error,
        iterations: base.iterations,
        noisy,
    })
}

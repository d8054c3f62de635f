//! Error bound for mixed l2/l1 recovery under the high-order block RIP
//! condition `delta_tk < sqrt((t - 1) / t)`, and the cone constraint that
//! every minimizer satisfies.
//!
//! With `g = sqrt((t - 1) / t) - delta`, the bound reads
//!
//! ```text
//! ||x_hat - x||_2 <= 2 sqrt(2 t (t - 1) (1 + delta)) / (t g) * eps
//!                  + ((sqrt(2) delta + sqrt(t g delta)) / (t g) + 1) * 2 ||x[I0^c]||_{2,1} / sqrt(k)
//! ```
//!
//! where `I0` holds the `k` largest blocks of `x`.

use crate::block_model::{BlockIndexSet, BlockVector};
use crate::error::{invalid_arg, Error, Result};
use crate::math;
use crate::rip_cert::{check_recovery_condition, clamped_order, recovery_threshold, RecoveryCondition, RicMode, RicReport};
use crate::solver::{feasibility_slack, MeasurementInstance, SolverResult};

/// Absolute part of the pass criterion, scaled by `max(1, ||x||_2)`.
pub const BOUND_COMPARISON_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundInputs {
    pub t: f64,
    pub k: usize,
    pub delta_tk: f64,
    pub epsilon: f64,
    /// `||x[I0^c]||_{2,1}` of the ground truth.
    pub tail_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BoundValue {
    pub noise_coefficient: f64,
    pub compressibility_coefficient: f64,
    pub total: f64,
}

pub fn evaluate_bound(inputs: &BoundInputs) -> Result<BoundValue> {
    let BoundInputs { t, k, delta_tk: delta, epsilon, tail_norm } = *inputs;
    let threshold = recovery_threshold(t)?;
    if k == 0 {
        return Err(invalid_arg!("k must be at least 1"));
    }
    if !(delta >= 0.0) || !(epsilon >= 0.0) || !(tail_norm >= 0.0) {
        return Err(invalid_arg!("delta, epsilon and tail norm must be nonnegative"));
    }
    if delta >= threshold {
        return Err(Error::HypothesisViolated { delta, threshold });
    }
    let gap = threshold - delta;
    let noise_coefficient = 2.0 * math::sqrt(2.0 * t * (t - 1.0) * (1.0 + delta)) / (t * gap);
    let compressibility_coefficient = (core::f64::consts::SQRT_2 * delta + math::sqrt(t * gap * delta)) / (t * gap) + 1.0;
    let total = noise_coefficient * epsilon + compressibility_coefficient * (2.0 * tail_norm / math::sqrt(k as f64));
    Ok(BoundValue { noise_coefficient, compressibility_coefficient, total })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ConeCheck {
    pub holds: bool,
    /// `||h[G]||_{2,1} + 2 ||x[G^c]||_{2,1} - ||h[G^c]||_{2,1}`.
    pub slack: f64,
}

/// Evaluates `||h[G^c]||_{2,1} <= ||h[G]||_{2,1} + 2 ||x[G^c]||_{2,1}` for
/// `h = x_hat - x`. The inequality is guaranteed only when `x_hat` minimizes
/// a program for which `x` is feasible.
pub fn check_cone_constraint(x: &BlockVector, x_hat: &BlockVector, gamma: &BlockIndexSet) -> Result<ConeCheck> {
    let h = x_hat.sub(x)?;
    let complement = gamma.complement(x.structure().block_count());
    let lhs = h.restrict(&complement)?.norm_2_1();
    let rhs = h.restrict(gamma)?.norm_2_1() + 2.0 * x.restrict(&complement)?.norm_2_1();
    let slack = rhs - lhs;
    Ok(ConeCheck { holds: slack >= 0.0, slack })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize), serde(rename_all = "kebab-case"))]
pub enum GuaranteeStatus {
    Pass,
    Violation,
    ConditionNotMet,
    /// The solver did not converge, so no claim is made.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct GuaranteeRecord {
    pub condition: RecoveryCondition,
    pub delta_tk: f64,
    pub bound: Option<BoundValue>,
    pub observed_error: f64,
    pub tail_norm: f64,
    pub status: GuaranteeStatus,
}

impl GuaranteeRecord {
    pub fn condition_met(&self) -> bool {
        self.condition.met
    }

    pub fn pass(&self) -> Option<bool> {
        match self.status {
            GuaranteeStatus::Pass => Some(true),
            GuaranteeStatus::Violation => Some(false),
            _ => None,
        }
    }
}

/// Checks the error bound on one solved instance.
///
/// `ric` must be an exact certificate of order `min(ceil(tk), M)` for the
/// instance matrix, which is what [`crate::rip_cert::exact_ric_for`]
/// produces.
pub fn verify_guarantee(
    instance: &MeasurementInstance,
    x_true: &BlockVector,
    k: usize,
    t: f64,
    result: &SolverResult,
    ric: &RicReport,
) -> Result<GuaranteeRecord> {
    if ric.mode != RicMode::Exact {
        return Err(invalid_arg!("guarantee checks need an exact RIC certificate"));
    }
    let structure = instance.matrix().structure();
    let (order, _) = clamped_order(t, k, structure.block_count())?;
    if ric.order_k != order {
        return Err(invalid_arg!("RIC certificate has order {}, expected {order}", ric.order_k));
    }
    let y_norm = crate::math::norm2(instance.y());
    let truth_residual = instance.residual_norm(x_true)?;
    if truth_residual > instance.epsilon() + feasibility_slack(y_norm) {
        return Err(invalid_arg!(
            "ground truth is not feasible: residual {truth_residual:e} exceeds epsilon {:e}",
            instance.epsilon()
        ));
    }

    let condition = check_recovery_condition(ric.delta, t)?;
    let tail = x_true.restrict(&x_true.top_k_blocks(k)?.complement(structure.block_count()))?.norm_2_1();
    let observed_error = result.x_hat.sub(x_true)?.norm_2_2();

    let (bound, status) = if !condition.met {
        (None, GuaranteeStatus::ConditionNotMet)
    } else {
        let bound = evaluate_bound(&BoundInputs { t, k, delta_tk: ric.delta, epsilon: instance.epsilon(), tail_norm: tail })?;
        let status = if !result.converged {
            GuaranteeStatus::Inconclusive
        } else if observed_error <= bound.total + BOUND_COMPARISON_SLACK * x_true.norm_2_2().max(1.0) {
            GuaranteeStatus::Pass
        } else {
            GuaranteeStatus::Violation
        };
        (Some(bound), status)
    };
    Ok(GuaranteeRecord { condition, delta_tk: ric.delta, bound, observed_error, tail_norm: tail, status })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block_model::BlockStructure;
    use alloc::sync::Arc;
    use alloc::vec;

    fn inputs(t: f64, delta: f64, epsilon: f64, tail: f64) -> BoundInputs {
        BoundInputs { t, k: 1, delta_tk: delta, epsilon, tail_norm: tail }
    }

    #[test]
    fn exact_recovery_case_has_zero_bound() {
        let b = evaluate_bound(&inputs(2.0, 0.3, 0.0, 0.0)).unwrap();
        assert_eq!(b.total, 0.0);
        assert!(b.noise_coefficient > 0.0 && b.compressibility_coefficient > 1.0);
    }

    #[test]
    fn threshold_is_excluded() {
        let t = 4.0 / 3.0;
        let thr = recovery_threshold(t).unwrap();
        assert!(matches!(evaluate_bound(&inputs(t, thr, 1.0, 0.0)), Err(Error::HypothesisViolated { .. })));
        assert!(evaluate_bound(&inputs(1.0, 0.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn cone_constraint_examples() {
        let st = Arc::new(BlockStructure::uniform(3, 2).unwrap());
        let x = BlockVector::new(vec![1.0, 0.0, 0.0, 0.0, 0.2, 0.0], st.clone()).unwrap();
        let g = BlockIndexSet::new(vec![0], 3).unwrap();
        let c = check_cone_constraint(&x, &x, &g).unwrap();
        assert!(c.holds);
        assert!((c.slack - 0.4).abs() < 1e-15);
        let far = BlockVector::new(vec![0.0, 0.0, 5.0, 0.0, 0.0, 0.0], st).unwrap();
        let c = check_cone_constraint(&x, &far, &g).unwrap();
        assert!(!c.holds);
    }
}

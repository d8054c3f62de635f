mod common;

use blockrip_core::counterexample::{
    a_prime, construct, construct_unchecked, failure_solver_config, verify_recovery_failure, verify_rip_bound, FailureStatus,
};
use blockrip_core::rip_cert::{exact_block_ric, recovery_threshold, sampled_block_ric};
use blockrip_core::Error;
use common::*;

const CASES: [(f64, usize, usize); 4] = [(4.0 / 3.0, 5, 1), (4.0 / 3.0, 5, 2), (2.0, 5, 1), (2.0, 5, 2)];

#[test]
fn invariants_hold_on_reference_cases() {
    for (t, k, d) in CASES {
        let inst = construct(t, k, d, 1.0).unwrap();
        let rep = inst.invariants();
        assert!(rep.holds(), "{t} {k} {d}: {rep:?}");
        assert!((inst.gamma.norm_2_2() - 1.0).abs() < 1e-12);
        let ag = inst.matrix.apply(&inst.gamma).unwrap();
        assert!(ag.iter().all(|v| v.abs() < 1e-10));
        let ax = inst.matrix.apply(&inst.x0).unwrap();
        let ag0 = inst.matrix.apply(&inst.gamma0).unwrap();
        assert!(ax.iter().zip(&ag0).all(|(p, q)| (p - q).abs() < 1e-10));
        // closed-form norms
        let kd = k as f64 * (d as f64).sqrt();
        assert!((inst.x0.norm_2_1() - kd).abs() < 1e-10);
        assert!((inst.gamma0.norm_2_1() - inst.a as f64 / inst.a_prime * kd).abs() < 1e-10);
        assert!((inst.norm_gap() - (1.0 - inst.a as f64 / inst.a_prime) * kd).abs() < 1e-10);
        assert!(inst.a as f64 / inst.a_prime < 1.0);
        assert_eq!(inst.x0.norm_2_0(), k);
        assert_eq!(inst.gamma0.norm_2_0(), inst.a);
        assert!(inst.x0.support().indices().iter().all(|i| !inst.gamma0.support().contains(*i)));
    }
}

#[test]
fn reference_parameter_values() {
    let inst = construct(4.0 / 3.0, 5, 2, 1.0).unwrap();
    assert_eq!(inst.a_prime, 5.0);
    assert_eq!(inst.a, 4);
    assert!((inst.gamma0.norm_2_1() - 4.0 * 2f64.sqrt()).abs() < 1e-12);
    assert!((inst.x0.norm_2_1() - 5.0 * 2f64.sqrt()).abs() < 1e-12);
    let inst = construct(2.0, 5, 1, 1.0).unwrap();
    assert!((inst.a_prime - 5.0 * (1.0 + 2f64.sqrt())).abs() < 1e-12);
    assert_eq!(inst.a, 12);
    assert!((a_prime(3.0, 2) - 2.0 * (2.0 + 6f64.sqrt())).abs() < 1e-12);
}

#[test]
fn preconditions_are_enforced() {
    assert!(matches!(construct(1.2, 5, 1, 1.0), Err(Error::Precondition(_))));
    assert!(matches!(construct(2.0, 5, 1, 0.5), Err(Error::Precondition(_))));
    assert!(matches!(construct(2.0, 0, 1, 1.0), Err(_)));
    assert!(construct(2.0, 10, 1, 0.5).is_ok());
}

#[test]
fn matrix_has_one_dimensional_kernel() {
    for (t, k, d) in CASES {
        let inst = construct(t, k, d, 1.0).unwrap();
        let sv = to_nalgebra(inst.matrix.matrix()).singular_values();
        let n = inst.structure.dim();
        let scale = (1.0 + recovery_threshold(t).unwrap()).sqrt();
        let zeros = sv.iter().filter(|&&s| s < 1e-10).count();
        assert_eq!(zeros, 1, "{t} {k} {d}");
        assert_eq!(sv.iter().filter(|&&s| (s - scale).abs() < 1e-10).count(), n - 1);
    }
}

#[test]
fn quadratic_form_identity() {
    let inst = construct(2.0, 5, 2, 1.0).unwrap();
    let c = 1.0 + recovery_threshold(2.0).unwrap();
    let mut r = rng(77);
    for _ in 0..100 {
        let x = gaussian_vector(&mut r, &inst.structure);
        let ax = inst.matrix.apply(&x).unwrap();
        let lhs: f64 = ax.iter().map(|v| v * v).sum();
        let g: f64 = x.values().iter().zip(inst.gamma.values()).map(|(p, q)| p * q).sum();
        let rhs = c * (x.norm_2_2().powi(2) - g * g);
        assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1e-300));
    }
}

#[test]
fn exact_ric_matches_closed_form_and_target() {
    for (t, k, d) in CASES {
        let inst = construct(t, k, d, 1.0).unwrap();
        let rep = verify_rip_bound(&inst).unwrap();
        assert!(rep.delta_tk <= rep.target);
        // the brute-force oracle agrees with the certificate
        let brute = brute_force_ric(&inst.matrix, rep.order);
        assert!((brute - rep.delta_tk).abs() < 1e-10, "{t} {k} {d}: {brute} vs {}", rep.delta_tk);
        assert!((rep.analytic_bound - rep.delta_tk).abs() < 1e-10, "{t} {k} {d}");
        // the constant sits strictly above the recovery threshold
        assert!(rep.delta_tk > rep.threshold);
    }
}

fn gaps_above_threshold(t: f64) -> Vec<f64> {
    let thr = recovery_threshold(t).unwrap();
    let mut gaps = Vec::new();
    for k in [5usize, 10, 20] {
        let inst = construct_unchecked(t, k, 1, 1.0).unwrap();
        let analytic = inst.analytic_delta_bound().unwrap();
        let order = (t * k as f64).ceil() as usize;
        let sampled = sampled_block_ric(&inst.matrix, order, 2000, 9).unwrap();
        assert!(sampled.delta <= analytic + 1e-10, "k={k}: sampled {} above {analytic}", sampled.delta);
        if k == 5 {
            let exact = exact_block_ric(&inst.matrix, order).unwrap();
            assert!((exact.delta - analytic).abs() < 1e-10);
        }
        gaps.push(analytic - thr);
    }
    gaps
}

#[test]
fn gap_above_threshold_shrinks_with_k() {
    let gaps = gaps_above_threshold(4.0 / 3.0);
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    // at t = 2 the ratio floor((1 + sqrt 2) k) / k is 2.4 for all three k, and
    // the constant depends on k only through such ratios
    let gaps = gaps_above_threshold(2.0);
    assert!(gaps.windows(2).all(|w| (w[1] - w[0]).abs() < 1e-12), "{gaps:?}");
}

#[test]
fn minimizer_prefers_the_kernel_shifted_vector() {
    let mut r = rng(31);
    for (t, k, d) in CASES {
        let inst = construct(t, k, d, 1.0).unwrap();
        let dir = random_unit(&mut r, inst.structure.dim());
        let rep = verify_recovery_failure(&inst, &failure_solver_config(), &dir).unwrap();
        assert_eq!(rep.status, FailureStatus::Confirmed, "{t} {k} {d}: {rep:?}");
        assert!(rep.objective <= rep.gamma0_norm_2_1 + 1e-6, "{t} {k} {d}: {rep:?}");
        assert!(rep.noiseless_error > 0.1);
        for run in &rep.noisy {
            assert!(run.error >= 0.5 * rep.noiseless_error);
        }
    }
}

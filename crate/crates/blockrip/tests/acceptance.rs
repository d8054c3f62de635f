//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p blockrip --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use blockrip::experiment::{execute, run_guarantee_check, ExperimentConfig, GuaranteeTrial};
use blockrip_core::counterexample::{self, failure_solver_config, FailureStatus, FAILURE_ERROR_THRESHOLD};
use blockrip_core::guarantees::{check_cone_constraint, evaluate_bound, BoundInputs, GuaranteeStatus};
use blockrip_core::polytope::{check_tail_power_inequality, decompose, in_t, in_u, PolytopeSpec, TailPowerOutcome};
use blockrip_core::rip_cert::{exact_block_ric, recovery_threshold};
use blockrip_core::solver::{solve, MeasurementInstance};
use blockrip_core::{BlockStructure, BlockVector, Matrix, SensingMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};

/// Outcome of one criterion: pass flag and a one-line summary.
type Verdict = (bool, String);

#[derive(Default)]
struct Shared {
    /// Cone slacks of converged solver outputs gathered by criteria 1 to 3.
    cone_slacks: Vec<f64>,
    /// Trials of the criterion 1 campaigns, tagged with the campaign name.
    campaigns: Vec<(String, Vec<GuaranteeTrial>)>,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn config(v: Value) -> ExperimentConfig {
    ExperimentConfig::from_json(&v.to_string()).expect("valid configuration")
}

fn guarantee_config(ensemble: &str, epsilon: f64, signal: Value, seed: u64) -> ExperimentConfig {
    config(json!({
        "experiment_kind": "guarantee_check",
        "matrix_ensemble": ensemble,
        "n": 14, "M": 8, "d": 2,
        "k_grid": [1], "t_grid": [2.0],
        "epsilon": epsilon,
        "trials_per_cell": 200,
        "seed": seed,
        "signal": signal,
        "output_path": "unused.csv"
    }))
}

fn guarantee_campaigns(shared: &mut Shared) -> Verdict {
    let start = Instant::now();
    let sparse = json!({ "kind": "sparse" });
    let variants = [
        ("row_orthonormal/eps=0/sparse", "row_orthonormal", 0.0, sparse.clone()),
        ("row_orthonormal/eps=0.05/sparse", "row_orthonormal", 0.05, sparse.clone()),
        ("row_orthonormal/eps=0/compressible", "row_orthonormal", 0.0, json!({ "kind": "compressible", "decay": 1.5 })),
        ("row_orthonormal/eps=0.05/compressible", "row_orthonormal", 0.05, json!({ "kind": "compressible", "decay": 2.0 })),
        ("gaussian/eps=0/sparse", "gaussian", 0.0, sparse),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    let mut met_total = 0;
    for (i, (name, ensemble, eps, signal)) in variants.into_iter().enumerate() {
        let run = run_guarantee_check(&guarantee_config(ensemble, eps, signal, 1 + i as u64)).expect("campaign runs");
        let c = run.campaign();
        ok &= c.trials >= 200 && c.violations == 0;
        met_total += c.condition_met;
        parts.push(format!("{name}: {}/{} met, {} violations, {} inconclusive", c.condition_met, c.trials, c.violations, c.inconclusive));
        shared.cone_slacks.extend(run.trials.iter().filter_map(|t| t.cone_slack));
        shared.campaigns.push((name.to_string(), run.trials));
    }
    let elapsed = start.elapsed();
    ok &= met_total > 0 && elapsed < Duration::from_secs(300);
    (ok, format!("{}; {:.1}s", parts.join("; "), elapsed.as_secs_f64()))
}

fn exact_recovery(shared: &mut Shared) -> Verdict {
    let exact: Vec<&GuaranteeTrial> = shared
        .campaigns
        .iter()
        .flat_map(|(_, trials)| trials)
        .filter(|t| t.exact_case && t.condition_met)
        .collect();
    let recovered = exact.iter().filter(|t| t.converged && t.relative_error <= 1e-5).count();
    let wrong = exact.iter().filter(|t| t.converged && t.relative_error > 1e-5).count();
    let inconclusive = exact.iter().filter(|t| t.status == GuaranteeStatus::Inconclusive).count();
    let n = exact.len();
    let ok = n > 0 && recovered as f64 >= 0.99 * n as f64 && wrong == 0;
    (ok, format!("{recovered}/{n} recovered to 1e-5, {wrong} wrong, {inconclusive} inconclusive"))
}

fn sharpness(shared: &mut Shared) -> Verdict {
    let start = Instant::now();
    let solver = failure_solver_config();
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, &(t, k, d)) in
        [(4.0 / 3.0, 5, 1), (4.0 / 3.0, 5, 2), (2.0, 5, 1), (2.0, 5, 2)].iter().enumerate()
    {
        let inst = counterexample::construct(t, k, d, 1.0).expect("construct");
        let inv = inst.invariants();
        let ratio = inst.a as f64 / inst.a_prime;
        ok &= (inv.norm_ratio - ratio).abs() <= 1e-10 && ratio < 1.0;
        let kernel = inst.matrix.apply(&inst.gamma).unwrap().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ok &= kernel <= 1e-10;

        let mut r = rng(100 + i as u64);
        let direction: Vec<f64> = (0..inst.structure.dim()).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let report = counterexample::verify_recovery_failure(&inst, &solver, &direction).expect("solves");
        let g0 = inst.gamma0.norm_2_1();
        ok &= report.status == FailureStatus::Confirmed
            && report.objective <= g0 + 1e-6
            && report.noiseless_error > FAILURE_ERROR_THRESHOLD
            && report.noisy.iter().all(|run| run.error >= 0.5 * report.noiseless_error);

        // cone slack of the noiseless and noisy solver outputs
        let y = inst.observation();
        let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        let gamma = inst.x0.top_k_blocks(k).unwrap();
        for eps in [0.0, 1e-2, 1e-4, 1e-6] {
            let yz: Vec<f64> = y.iter().zip(&direction).map(|(a, u)| a + eps * u / norm).collect();
            let res = solve(&MeasurementInstance::new(inst.matrix.clone(), yz, eps).unwrap(), &solver).unwrap();
            if res.converged {
                shared.cone_slacks.push(check_cone_constraint(&inst.x0, &res.x_hat, &gamma).unwrap().slack);
            }
        }
        let min_noisy = report.noisy.iter().map(|r| r.error).fold(f64::INFINITY, f64::min);
        parts.push(format!(
            "t={t:.4},d={d}: a/a'={ratio:.6}, |A gamma|={kernel:.1e}, objective-|gamma0|={:.1e}, error {:.4}, min noisy {min_noisy:.4}",
            report.objective - g0,
            report.noiseless_error
        ));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(60);
    (ok, format!("{}; {:.1}s", parts.join("; "), elapsed.as_secs_f64()))
}

/// Every support of `k` blocks, full symmetric eigendecomposition of the
/// Gram submatrix from nalgebra.
fn brute_force_ric(a: &Matrix, st: &BlockStructure, k: usize) -> f64 {
    let full = nalgebra::DMatrix::from_row_slice(a.rows(), a.cols(), a.data());
    let m = st.block_count();
    let mut best = 0.0f64;
    let mut support: Vec<usize> = (0..k).collect();
    loop {
        let cols: Vec<usize> = support.iter().flat_map(|&b| st.range(b)).collect();
        let sub = full.select_columns(cols.iter());
        let eig = (sub.transpose() * &sub).symmetric_eigen();
        let lmax = eig.eigenvalues.max();
        let lmin = eig.eigenvalues.min();
        best = best.max(lmax - 1.0).max(1.0 - lmin);
        // next k-subset in lexicographic order
        let Some(i) = (0..k).rev().find(|&i| support[i] < m - k + i) else { break };
        support[i] += 1;
        for j in i + 1..k {
            support[j] = support[j - 1] + 1;
        }
    }
    best
}

fn ric_oracle(_: &mut Shared) -> Verdict {
    let mut r = rng(4);
    let mut worst = 0.0f64;
    let mut monotone = true;
    for _ in 0..20 {
        let m = r.random_range(3..=8usize);
        let sizes: Vec<usize> = (0..m).map(|_| r.random_range(1..=3usize)).collect();
        let st = Arc::new(BlockStructure::new(sizes).unwrap());
        let rows = r.random_range(2..=st.dim() + 2);
        let scale = 1.0 / (rows as f64).sqrt();
        let data = (0..rows * st.dim()).map(|_| scale * r.sample::<f64, _>(StandardNormal)).collect();
        let a = SensingMatrix::new(Matrix::new(rows, st.dim(), data).unwrap(), st.clone()).unwrap();
        let mut prev = 0.0;
        for k in 1..=3 {
            let ours = exact_block_ric(&a, k).unwrap().delta;
            worst = worst.max((ours - brute_force_ric(a.matrix(), &st, k)).abs());
            monotone &= ours >= prev - 1e-12;
            prev = ours;
        }
    }
    (worst <= 1e-10 && monotone, format!("20 matrices, max |difference| {worst:.1e}, monotone {monotone}"))
}

/// Rejection sampler over structures with at most 8 blocks.
fn polytope_member(r: &mut ChaCha8Rng) -> (BlockVector, PolytopeSpec) {
    loop {
        let m = r.random_range(2..=8usize);
        let st = Arc::new(BlockStructure::new((0..m).map(|_| r.random_range(1..=3usize)).collect()).unwrap());
        let k = r.random_range(1..m);
        let alpha = r.random_range(0.2..3.0);
        let density = r.random_range(0.3..1.0);
        let c = r.random_range(0.1..=1.0);
        let mut values = vec![0.0; st.dim()];
        for b in 0..m {
            if r.random_bool(density) {
                let dir: Vec<f64> = (0..st.block_size(b)).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
                let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
                let norm = r.random_range(0.0..1.2 * alpha * c);
                for (slot, x) in values[st.range(b)].iter_mut().zip(dir) {
                    *slot = norm * x / len;
                }
            }
        }
        let v = BlockVector::new(values, st).unwrap();
        let spec = PolytopeSpec::new(alpha, k).unwrap();
        if in_t(&v, &spec) {
            return (v, spec);
        }
    }
}

fn polytope_suite(_: &mut Shared) -> Verdict {
    let mut r = rng(5);
    let mut failures = 0;
    let mut split = 0;
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let (v, spec) = polytope_member(&mut r);
        split += usize::from(v.norm_2_0() > spec.k);
        let Ok(dec) = decompose(&v, &spec) else {
            failures += 1;
            continue;
        };
        let sum: f64 = dec.weights.iter().sum();
        let weights_ok = (sum - 1.0).abs() <= 1e-12 && dec.weights.iter().all(|w| (0.0..=1.0).contains(w));
        let atoms_ok = dec.atoms.iter().all(|a| in_u(a, &v, &spec).unwrap_or(false));
        let err = dec
            .recombine()
            .map(|b| b.sub(&v).unwrap().values().iter().fold(0.0f64, |m, x| m.max(x.abs())))
            .unwrap_or(f64::INFINITY);
        worst = worst.max(err);
        if !(weights_ok && atoms_ok && err <= 1e-9) {
            failures += 1;
        }
    }
    (failures == 0, format!("500 members ({split} needing splits), {failures} failures, max recombination error {worst:.1e}"))
}

fn tail_power(_: &mut Shared) -> Verdict {
    let mut r = rng(6);
    let mut holds = 0;
    let total = 10_000;
    for _ in 0..total {
        let m = r.random_range(1..=20usize);
        let k = r.random_range(1..=m);
        let mut a: Vec<f64> = (0..m).map(|_| r.random_range(0.0..2.0) * r.random::<f64>()).collect();
        a.sort_by(|x, y| y.total_cmp(x));
        let head: f64 = a[..k].iter().sum();
        let tail: f64 = a[k..].iter().sum();
        let lambda = (tail - head).max(0.0) + r.random_range(0.0..1.0) * r.random::<f64>().powi(3);
        let alpha = 1.0 + r.random_range(0.0..4.0);
        if check_tail_power_inequality(&a, k, lambda, alpha) == Ok(TailPowerOutcome::Holds) {
            holds += 1;
        }
    }
    (holds == total, format!("{holds}/{total} hypothesis-satisfying tuples hold"))
}

fn cone_constraint(shared: &mut Shared) -> Verdict {
    let n = shared.cone_slacks.len();
    let min = shared.cone_slacks.iter().copied().fold(f64::INFINITY, f64::min);
    let bad = shared.cone_slacks.iter().filter(|&&s| s < -1e-6).count();
    (n > 0 && bad == 0, format!("{n} converged outputs, min slack {min:.3e}, {bad} below -1e-6"))
}

fn bound_behavior(_: &mut Shared) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for t in [1.5, 2.0, 3.0] {
        let thr = recovery_threshold(t).unwrap();
        let total = |delta: f64| {
            evaluate_bound(&BoundInputs { t, k: 2, delta_tk: delta, epsilon: 1.0, tail_norm: 1.0 }).unwrap().total
        };
        let grid: Vec<f64> = (0..100).map(|i| total(thr * i as f64 / 100.0)).collect();
        let monotone = grid.windows(2).all(|w| w[1] >= w[0]);
        let edge = total(thr * (1.0 - 1e-6));
        ok &= monotone && edge > 1e6;
        parts.push(format!("t={t}: monotone {monotone}, edge {edge:.3e}"));
    }
    let b = evaluate_bound(&BoundInputs { t: 2.0, k: 1, delta_tk: 0.0, epsilon: 1.0, tail_norm: 0.0 }).unwrap();
    let coefficients =
        (b.compressibility_coefficient - 1.0).abs() <= 1e-9 && (b.noise_coefficient - 2.0 * 2f64.sqrt()).abs() <= 1e-9;
    ok &= coefficients;
    parts.push(format!("delta=0 coefficients {:.12}, {:.12}", b.noise_coefficient, b.compressibility_coefficient));
    (ok, parts.join("; "))
}

fn outputs_of(cfg: &ExperimentConfig, threads: usize) -> Vec<Vec<u8>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let summary = pool.install(|| execute(cfg)).expect("experiment runs");
    summary.outputs.iter().map(|p| std::fs::read(p).unwrap()).collect()
}

fn determinism(_: &mut Shared) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let at = |name: &str| dir.path().join(name);
    let base = |kind: &str, out: &Path| {
        json!({
            "experiment_kind": kind, "matrix_ensemble": "gaussian",
            "n": 10, "M": 6, "d": 2, "k_grid": [1, 2], "t_grid": [2.0],
            "epsilon": 0.01, "trials_per_cell": 12, "seed": 9, "output_path": out
        })
    };
    let mut configs = vec![
        base("phase_transition", &at("pt.csv")),
        base("guarantee_check", &at("g.csv")),
        base("block_vs_scalar", &at("bs.csv")),
    ];
    configs[1]["matrix_ensemble"] = json!("row_orthonormal");
    let mut sharp = base("sharpness", &at("sharp.json"));
    sharp["t_grid"] = json!([4.0 / 3.0]);
    sharp["k_grid"] = json!([5]);
    configs.push(sharp);

    let mut identical = 0;
    for v in &configs {
        let cfg = config(v.clone());
        let first = outputs_of(&cfg, 1);
        if [outputs_of(&cfg, 1), outputs_of(&cfg, 4), outputs_of(&cfg, 2)].iter().all(|o| *o == first) {
            identical += 1;
        }
    }
    (identical == configs.len(), format!("{identical}/{} configs byte-identical across 1, 2 and 4 threads", configs.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn(&mut Shared) -> Verdict); 9] = [
        ("error bound campaigns", guarantee_campaigns),
        ("exact recovery", exact_recovery),
        ("counterexample", sharpness),
        ("RIC oracle", ric_oracle),
        ("polytope decomposition", polytope_suite),
        ("tail power inequality", tail_power),
        ("cone constraint", cone_constraint),
        ("bound behavior", bound_behavior),
        ("determinism", determinism),
    ];
    let mut shared = Shared::default();
    let mut all = true;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = catch_unwind(AssertUnwindSafe(|| check(&mut shared)))
            .unwrap_or_else(|_| (false, "panicked".to_string()));
        all &= ok;
        println!("{} [{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" }, i + 1);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use blockrip::error::{HarnessError, Result, EXIT_ASSERTION, EXIT_OK};
use blockrip::experiment::{self, ExperimentConfig};
use blockrip::{ensemble, io};
use blockrip_core::counterexample::{self, failure_solver_config, FailureStatus, MIN_T};
use blockrip_core::guarantees::{evaluate_bound, BoundInputs};
use blockrip_core::polytope::{decompose, PolytopeSpec};
use blockrip_core::rip_cert::{clamped_order, exact_block_ric, recovery_threshold, sampled_block_ric};
use blockrip_core::solver::{solve, MeasurementInstance, SolverConfig};
use blockrip_core::{BlockStructure, BlockVector, SensingMatrix};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Parser)]
#[command(name = "blockrip", version, about = "Block-sparse recovery by mixed l2/l1 minimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Sampled,
}

#[derive(Subcommand)]
enum Command {
    /// Solve min ||x||_{2,1} subject to ||y - A x||_2 <= epsilon. Prints the
    /// solution as a vector file followed by a JSON status line.
    Solve {
        #[arg(long)]
        matrix: PathBuf,
        /// Block sizes; scalar blocks when omitted.
        #[arg(long)]
        structure: Option<PathBuf>,
        #[arg(long)]
        y: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Primal and dual tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Also write the solution to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Block restricted isometry constant of order k, or ceil(t k) with --t.
    Ric {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        structure: Option<PathBuf>,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        mode: Mode,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate the recovery error bound.
    Bound {
        #[arg(long)]
        t: f64,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.0)]
        tail: f64,
    },
    /// Decompose a vector of the block polytope into sparse atoms.
    #[command(hide = true)]
    Decompose {
        #[arg(long)]
        vector: PathBuf,
        #[arg(long)]
        structure: Option<PathBuf>,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        k: usize,
    },
    /// Build and verify the instance on which recovery provably fails.
    Counterexample {
        #[arg(long)]
        t: f64,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        eps_rip: f64,
        /// Directory for matrix.txt, structure.txt, x0.txt, gamma0.txt and
        /// gamma.txt.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Permit t < 4/3 and k < 5 / eps_rip; nothing is asserted then.
        #[arg(long = "unsafe")]
        allow_unsafe: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run an experiment campaign described by a JSON configuration.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn load_structure(path: Option<&Path>, dim: usize) -> Result<Arc<BlockStructure>> {
    match path {
        Some(p) => io::read_structure(p),
        None => Ok(Arc::new(BlockStructure::scalar(dim)?)),
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string(value).expect("json value"));
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve { matrix, structure, y, epsilon, max_iter, tol, out } => {
            let a = io::read_matrix(&matrix)?;
            let st = load_structure(structure.as_deref(), a.cols())?;
            let y = io::read_vector(&y)?;
            let inst = MeasurementInstance::new(SensingMatrix::new(a, st)?, y, epsilon)?;
            let mut cfg = SolverConfig::default();
            if let Some(m) = max_iter {
                cfg.max_iterations = m;
            }
            if let Some(t) = tol {
                cfg.primal_tolerance = t;
                cfg.dual_tolerance = t;
            }
            let res = solve(&inst, &cfg)?;
            if let Some(path) = out {
                io::write_vector(&path, res.x_hat.values())?;
            }
            print!("{}", io::format_vector(res.x_hat.values()));
            print_json(&json!({
                "objective": res.objective,
                "residual_norm": res.residual_norm,
                "iterations": res.iterations,
                "converged": res.converged,
            }));
            Ok(EXIT_OK)
        }
        Command::Ric { matrix, structure, k, t, mode, trials, seed } => {
            let m = io::read_matrix(&matrix)?;
            let st = load_structure(structure.as_deref(), m.cols())?;
            let a = SensingMatrix::new(m, st)?;
            let (order, clamped) = match t {
                Some(t) => clamped_order(t, k, a.structure().block_count())?,
                None => (k, false),
            };
            let mut report = match mode {
                Mode::Exact => exact_block_ric(&a, order)?,
                Mode::Sampled => sampled_block_ric(&a, order, trials, seed)?,
            };
            report.clamped = clamped;
            print_json(&serde_json::to_value(&report).expect("report"));
            Ok(EXIT_OK)
        }
        Command::Bound { t, k, delta, epsilon, tail } => {
            let b = evaluate_bound(&BoundInputs { t, k, delta_tk: delta, epsilon, tail_norm: tail })?;
            print_json(&json!({
                "threshold": recovery_threshold(t)?,
                "noise_coefficient": b.noise_coefficient,
                "compressibility_coefficient": b.compressibility_coefficient,
                "total": b.total,
            }));
            Ok(EXIT_OK)
        }
        Command::Decompose { vector, structure, alpha, k } => {
            let values = io::read_vector(&vector)?;
            let st = load_structure(structure.as_deref(), values.len())?;
            let v = BlockVector::new(values, st)?;
            let dec = decompose(&v, &PolytopeSpec::new(alpha, k)?)?;
            let back = dec.recombine().ok_or_else(|| HarnessError::Assertion("empty decomposition".into()))?;
            let err = back.sub(&v)?.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
            print_json(&json!({ "atoms": dec.len(), "max_recombination_error": err }));
            Ok(EXIT_OK)
        }
        Command::Counterexample { t, k, d, eps_rip, out_dir, allow_unsafe, seed } => {
            counterexample_command(t, k, d, eps_rip, out_dir.as_deref(), allow_unsafe, seed)
        }
        Command::Experiment { config, threads } => {
            let cfg = ExperimentConfig::load(&config)?;
            let summary = match threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| HarnessError::Config(e.to_string()))?
                    .install(|| experiment::execute(&cfg))?,
                None => experiment::execute(&cfg)?,
            };
            print_json(&serde_json::to_value(&summary).expect("summary"));
            Ok(if summary.passed { EXIT_OK } else { EXIT_ASSERTION })
        }
    }
}

fn counterexample_command(
    t: f64,
    k: usize,
    d: usize,
    eps_rip: f64,
    out_dir: Option<&Path>,
    allow_unsafe: bool,
    seed: u64,
) -> Result<i32> {
    let checked = t >= MIN_T && (k as f64) * eps_rip >= 5.0;
    let inst = if allow_unsafe && !checked {
        counterexample::construct_unchecked(t, k, d, eps_rip)?
    } else {
        counterexample::construct(t, k, d, eps_rip)?
    };
    if let Some(dir) = out_dir {
        io::write_matrix(&dir.join("matrix.txt"), inst.matrix.matrix())?;
        io::write_structure(&dir.join("structure.txt"), &inst.structure)?;
        io::write_vector(&dir.join("x0.txt"), inst.x0.values())?;
        io::write_vector(&dir.join("gamma0.txt"), inst.gamma0.values())?;
        io::write_vector(&dir.join("gamma.txt"), inst.gamma.values())?;
        io::write_vector(&dir.join("y.txt"), &inst.observation())?;
    }
    let rip = match counterexample::verify_rip_bound(&inst) {
        Ok(r) => serde_json::to_value(r).expect("report"),
        Err(blockrip_core::Error::Capacity { supports, limit }) => {
            json!({ "skipped": format!("{supports} supports exceed the enumeration limit {limit}") })
        }
        Err(e) if !checked => json!({ "error": e.to_string() }),
        Err(e) => return Err(e.into()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let direction = ensemble::sphere_noise(&mut rng, inst.structure.dim(), 1.0);
    let recovery = counterexample::verify_recovery_failure(&inst, &failure_solver_config(), &direction)?;
    let invariants = inst.invariants();
    print_json(&json!({
        "t": t,
        "k": k,
        "d": d,
        "epsilon_rip": eps_rip,
        "a_prime": inst.a_prime,
        "a": inst.a,
        "blocks": inst.block_count(),
        "threshold": recovery_threshold(t)?,
        "analytic_delta": inst.analytic_delta_bound()?,
        "checked": checked,
        "invariants": invariants,
        "rip": rip,
        "recovery": recovery,
    }));
    if checked && (!invariants.holds() || recovery.status == FailureStatus::Refuted) {
        return Ok(EXIT_ASSERTION);
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

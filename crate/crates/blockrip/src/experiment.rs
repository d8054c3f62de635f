//! Seeded experiment campaigns.
//!
//! Every trial draws its data from its own ChaCha8 stream, seeded by
//! [`trial_seed`], so results do not depend on scheduling. Trials run on the
//! rayon pool and are reported in `(cell, trial)` order. Outputs carry a
//! provenance header with the tool version, the configuration hash and the
//! seed; timings are deliberately left out so reruns are byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use blockrip_core::counterexample::{
    self, failure_solver_config, FailureStatus, RecoveryFailureReport, RipBoundReport, MIN_T,
};
use blockrip_core::guarantees::{check_cone_constraint, verify_guarantee, GuaranteeStatus};
use blockrip_core::rip_cert::{exact_ric_for, recovery_threshold, RicReport};
use blockrip_core::solver::{solve, MeasurementInstance, SolverConfig, SolverResult};
use blockrip_core::{BlockStructure, BlockVector, Matrix, SensingMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::{self, MatrixEnsemble, SignalKind};
use crate::error::{HarnessError, Result};
use crate::io;

/// Relative error at or below which a trial counts as exact recovery.
pub const SUCCESS_THRESHOLD: f64 = 1e-4;

pub const VERSION_LINE: &str = concat!("blockrip ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PhaseTransition,
    GuaranteeCheck,
    Sharpness,
    BlockVsScalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_kind: ExperimentKind,
    pub matrix_ensemble: MatrixEnsemble,
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub d: usize,
    pub k_grid: Vec<usize>,
    pub t_grid: Vec<f64>,
    pub epsilon: f64,
    pub trials_per_cell: usize,
    pub seed: u64,
    /// Defaults to the library defaults, or to the larger iteration budget of
    /// the failure check for sharpness runs.
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    pub output_path: PathBuf,
    /// Matrix file for the `provided-file` ensemble.
    #[serde(default)]
    pub matrix_path: Option<PathBuf>,
    /// Measurement counts to sweep instead of the single `n`.
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    /// Block sizes to sweep in sharpness runs instead of the single `d`.
    #[serde(default)]
    pub d_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub signal: SignalKind,
    /// Slack of the counterexample construction; defaults to `5 / k`, the
    /// smallest value its hypothesis allows.
    #[serde(default)]
    pub epsilon_rip: Option<f64>,
}

fn config_error(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_error(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn solver_config(&self) -> SolverConfig {
        self.solver.unwrap_or_else(|| match self.experiment_kind {
            ExperimentKind::Sharpness => failure_solver_config(),
            _ => SolverConfig::default(),
        })
    }

    pub fn n_values(&self) -> Vec<usize> {
        self.n_grid.clone().unwrap_or_else(|| vec![self.n])
    }

    pub fn d_values(&self) -> Vec<usize> {
        self.d_grid.clone().unwrap_or_else(|| vec![self.d])
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials_per_cell == 0 {
            return Err(config_error("trials_per_cell must be at least 1"));
        }
        if self.k_grid.is_empty() || self.t_grid.is_empty() {
            return Err(config_error("k_grid and t_grid must be nonempty"));
        }
        if matches!(&self.n_grid, Some(g) if g.is_empty()) || matches!(&self.d_grid, Some(g) if g.is_empty()) {
            return Err(config_error("n_grid and d_grid must be nonempty when given"));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(config_error("epsilon must be finite and nonnegative"));
        }
        if let Some(s) = &self.solver {
            s.validate()?;
        }
        if self.t_grid.iter().any(|t| !(*t > 1.0) || !t.is_finite()) {
            return Err(config_error("every t must be finite and greater than 1"));
        }
        if self.experiment_kind == ExperimentKind::Sharpness {
            if let Some(t) = self.t_grid.iter().find(|&&t| t < MIN_T) {
                return Err(config_error(format!("sharpness runs need t >= 4/3, got {t}")));
            }
            if self.k_grid.contains(&0) || self.d_values().contains(&0) {
                return Err(config_error("sharpness runs need k >= 1 and d >= 1"));
            }
            if let Some(e) = self.epsilon_rip {
                if !(e > 0.0) {
                    return Err(config_error("epsilon_rip must be positive"));
                }
                if let Some(k) = self.k_grid.iter().find(|&&k| (k as f64) * e < 5.0) {
                    return Err(config_error(format!("k = {k} is below 5 / epsilon_rip")));
                }
            }
            return Ok(());
        }
        if self.m == 0 || self.d == 0 {
            return Err(config_error("M and d must be positive"));
        }
        if self.n_values().contains(&0) {
            return Err(config_error("measurement counts must be positive"));
        }
        if let Some(k) = self.k_grid.iter().find(|&&k| k > self.m) {
            return Err(config_error(format!("k = {k} exceeds M = {}", self.m)));
        }
        if self.experiment_kind == ExperimentKind::GuaranteeCheck && self.k_grid.contains(&0) {
            return Err(config_error("guarantee checks need k >= 1"));
        }
        let big_n = self.m * self.d;
        match self.matrix_ensemble {
            MatrixEnsemble::RowOrthonormal => {
                if let Some(n) = self.n_values().into_iter().find(|&n| n > big_n) {
                    return Err(config_error(format!("row-orthonormal ensemble needs n <= N = {big_n}, got {n}")));
                }
            }
            MatrixEnsemble::ProvidedFile => {
                if self.matrix_path.is_none() {
                    return Err(config_error("the provided-file ensemble needs matrix_path"));
                }
                if self.n_grid.is_some() {
                    return Err(config_error("n_grid cannot be combined with a provided matrix"));
                }
            }
            MatrixEnsemble::Gaussian => {}
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the parsed configuration.
    pub fn sha256(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("configuration serializes");
        Sha256::digest(&canonical).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn provenance(&self) -> Provenance {
        Provenance { version: VERSION_LINE.to_string(), config_sha256: self.sha256(), seed: self.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    fn csv_header(&self, kind: ExperimentKind) -> String {
        let kind = serde_json::to_value(kind).expect("kind serializes");
        format!(
            "# {}\n# config_sha256 {}\n# seed {}\n# experiment_kind {}\n",
            self.version,
            self.config_sha256,
            self.seed,
            kind.as_str().unwrap_or_default()
        )
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64(seed ^ splitmix64((cell << 32) | trial))`.
pub fn trial_seed(seed: u64, cell: usize, trial: usize) -> u64 {
    splitmix64(seed ^ splitmix64(((cell as u64) << 32) | trial as u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Success,
    Failure,
    Inconclusive,
}

impl TrialStatus {
    fn as_str(self) -> &'static str {
        match self {
            Self::Success => "success",
            Self::Failure => "failure",
            Self::Inconclusive => "inconclusive",
        }
    }
}

fn guarantee_status_str(s: GuaranteeStatus) -> &'static str {
    match s {
        GuaranteeStatus::Pass => "pass",
        GuaranteeStatus::Violation => "violation",
        GuaranteeStatus::ConditionNotMet => "condition-not-met",
        GuaranteeStatus::Inconclusive => "inconclusive",
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Relative error, or the absolute error for a zero ground truth.
pub fn relative_error(x_hat: &BlockVector, x0: &BlockVector) -> f64 {
    let err = x_hat.sub(x0).expect("same structure").norm_2_2();
    let norm = x0.norm_2_2();
    if norm > 0.0 {
        err / norm
    } else {
        err
    }
}

fn classify(result: &SolverResult, rel: f64) -> TrialStatus {
    if !result.converged {
        TrialStatus::Inconclusive
    } else if rel <= SUCCESS_THRESHOLD {
        TrialStatus::Success
    } else {
        TrialStatus::Failure
    }
}

fn cone_slack(x0: &BlockVector, result: &SolverResult, k: usize) -> Result<Option<f64>> {
    if !result.converged {
        return Ok(None);
    }
    let gamma = x0.top_k_blocks(k)?;
    Ok(Some(check_cone_constraint(x0, &result.x_hat, &gamma)?.slack))
}

/// Shared trial data: matrix, ground truth and observation.
struct Draw {
    a: SensingMatrix,
    x0: BlockVector,
    instance: MeasurementInstance,
}

struct Setup {
    structure: Arc<BlockStructure>,
    provided: Option<Matrix>,
}

impl Setup {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let structure = Arc::new(BlockStructure::uniform(cfg.m, cfg.d)?);
        let provided = match (cfg.matrix_ensemble, &cfg.matrix_path) {
            (MatrixEnsemble::ProvidedFile, Some(path)) => {
                let m = io::read_matrix(path)?;
                if m.cols() != structure.dim() || m.rows() != cfg.n {
                    return Err(config_error(format!(
                        "{} holds a {}x{} matrix, expected {}x{}",
                        path.display(),
                        m.rows(),
                        m.cols(),
                        cfg.n,
                        structure.dim()
                    )));
                }
                Some(m)
            }
            _ => None,
        };
        Ok(Self { structure, provided })
    }

    fn draw(&self, cfg: &ExperimentConfig, rng: &mut ChaCha8Rng, n: usize, k: usize) -> Result<Draw> {
        let big_n = self.structure.dim();
        let matrix = match (&self.provided, cfg.matrix_ensemble) {
            (Some(m), _) => m.clone(),
            (None, MatrixEnsemble::RowOrthonormal) => ensemble::row_orthonormal_matrix(rng, n, big_n)?,
            (None, _) => ensemble::gaussian_matrix(rng, n, big_n),
        };
        let a = SensingMatrix::new(matrix, self.structure.clone())?;
        let x0 = ensemble::signal(rng, &self.structure, k, cfg.signal)?;
        let z = ensemble::sphere_noise(rng, n, cfg.epsilon);
        let mut y = a.apply(&x0)?;
        y.iter_mut().zip(&z).for_each(|(yi, zi)| *yi += zi);
        let instance = MeasurementInstance::new(a.clone(), y, cfg.epsilon)?;
        Ok(Draw { a, x0, instance })
    }
}

fn jobs(cells: usize, trials: usize) -> Vec<(usize, usize)> {
    (0..cells).flat_map(|c| (0..trials).map(move |t| (c, t))).collect()
}

// ---------------------------------------------------------------------------
// Phase transition

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryTrial {
    pub cell: usize,
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub relative_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub status: TrialStatus,
    pub cone_slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub cell: usize,
    pub n: usize,
    pub k: usize,
    pub trials: usize,
    pub successes: usize,
    pub failures: usize,
    pub inconclusive: usize,
    pub success_rate: f64,
}

fn summarize(cell: usize, n: usize, k: usize, statuses: &[TrialStatus]) -> CellSummary {
    let count = |s| statuses.iter().filter(|&&x| x == s).count();
    let successes = count(TrialStatus::Success);
    CellSummary {
        cell,
        n,
        k,
        trials: statuses.len(),
        successes,
        failures: count(TrialStatus::Failure),
        inconclusive: count(TrialStatus::Inconclusive),
        success_rate: successes as f64 / statuses.len() as f64,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTransitionRun {
    pub cells: Vec<CellSummary>,
    pub trials: Vec<RecoveryTrial>,
}

fn nk_cells(cfg: &ExperimentConfig) -> Vec<(usize, usize)> {
    cfg.n_values().into_iter().flat_map(|n| cfg.k_grid.iter().map(move |&k| (n, k))).collect()
}

pub fn run_phase_transition(cfg: &ExperimentConfig) -> Result<PhaseTransitionRun> {
    let setup = Setup::new(cfg)?;
    let solver = cfg.solver_config();
    let cells = nk_cells(cfg);
    let trials = jobs(cells.len(), cfg.trials_per_cell)
        .into_par_iter()
        .map(|(cell, trial)| -> Result<RecoveryTrial> {
            let (n, k) = cells[cell];
            let seed = trial_seed(cfg.seed, cell, trial);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let draw = setup.draw(cfg, &mut rng, n, k)?;
            let result = solve(&draw.instance, &solver)?;
            let rel = relative_error(&result.x_hat, &draw.x0);
            Ok(RecoveryTrial {
                cell,
                trial,
                seed,
                n,
                k,
                relative_error: rel,
                iterations: result.iterations,
                converged: result.converged,
                status: classify(&result, rel),
                cone_slack: cone_slack(&draw.x0, &result, k)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cells = cells
        .iter()
        .enumerate()
        .map(|(c, &(n, k))| {
            let st: Vec<TrialStatus> = trials.iter().filter(|t| t.cell == c).map(|t| t.status).collect();
            summarize(c, n, k, &st)
        })
        .collect();
    Ok(PhaseTransitionRun { cells, trials })
}

pub const CELL_HEADER: &str = "cell,n,k,trials,successes,failures,inconclusive,success_rate";
pub const RECOVERY_TRIAL_HEADER: &str = "cell,trial,seed,n,k,relative_error,iterations,converged,status,cone_slack";

impl PhaseTransitionRun {
    pub fn cells_csv(&self, p: &Provenance) -> String {
        let mut out = p.csv_header(ExperimentKind::PhaseTransition);
        out.push_str(CELL_HEADER);
        out.push('\n');
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.cell,
                c.n,
                c.k,
                c.trials,
                c.successes,
                c.failures,
                c.inconclusive,
                num(c.success_rate)
            );
        }
        out
    }

    pub fn trials_csv(&self, p: &Provenance) -> String {
        let mut out = p.csv_header(ExperimentKind::PhaseTransition);
        out.push_str(RECOVERY_TRIAL_HEADER);
        out.push('\n');
        for t in &self.trials {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                t.cell,
                t.trial,
                t.seed,
                t.n,
                t.k,
                num(t.relative_error),
                t.iterations,
                t.converged,
                t.status.as_str(),
                opt_num(t.cone_slack)
            );
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Guarantee check

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuaranteeTrial {
    pub cell: usize,
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub t: f64,
    pub order: usize,
    pub delta_tk: f64,
    pub threshold: f64,
    pub condition_met: bool,
    pub bound: Option<f64>,
    pub observed_error: f64,
    pub relative_error: f64,
    pub tail_norm: f64,
    pub status: GuaranteeStatus,
    /// Noiseless run with an exactly block `k`-sparse truth.
    pub exact_case: bool,
    pub iterations: usize,
    pub converged: bool,
    pub cone_slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuaranteeCampaign {
    pub trials: usize,
    pub condition_met: usize,
    pub passes: usize,
    pub violations: usize,
    pub inconclusive: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuaranteeRun {
    pub trials: Vec<GuaranteeTrial>,
}

impl GuaranteeRun {
    pub fn campaign(&self) -> GuaranteeCampaign {
        let count = |s| self.trials.iter().filter(|t| t.status == s).count();
        GuaranteeCampaign {
            trials: self.trials.len(),
            condition_met: self.trials.iter().filter(|t| t.condition_met).count(),
            passes: count(GuaranteeStatus::Pass),
            violations: count(GuaranteeStatus::Violation),
            inconclusive: count(GuaranteeStatus::Inconclusive),
        }
    }

    pub fn csv(&self, p: &Provenance) -> String {
        let mut out = p.csv_header(ExperimentKind::GuaranteeCheck);
        out.push_str(GUARANTEE_HEADER);
        out.push('\n');
        for t in &self.trials {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                t.cell,
                t.trial,
                t.seed,
                t.n,
                t.k,
                num(t.t),
                t.order,
                num(t.delta_tk),
                num(t.threshold),
                t.condition_met,
                opt_num(t.bound),
                num(t.observed_error),
                num(t.relative_error),
                num(t.tail_norm),
                guarantee_status_str(t.status),
                t.exact_case,
                t.iterations,
                t.converged,
                opt_num(t.cone_slack)
            );
        }
        out
    }
}

pub const GUARANTEE_HEADER: &str = "cell,trial,seed,n,k,t,order,delta_tk,threshold,condition_met,bound,observed_error,relative_error,tail_norm,status,exact_case,iterations,converged,cone_slack";

pub fn run_guarantee_check(cfg: &ExperimentConfig) -> Result<GuaranteeRun> {
    let setup = Setup::new(cfg)?;
    let solver = cfg.solver_config();
    let cells: Vec<(usize, usize, f64)> = nk_cells(cfg)
        .into_iter()
        .flat_map(|(n, k)| cfg.t_grid.iter().map(move |&t| (n, k, t)))
        .collect();
    let exact_case = cfg.epsilon == 0.0 && matches!(cfg.signal, SignalKind::Sparse { .. });
    // a provided matrix has one certificate per cell
    let fixed_ric: Option<Vec<RicReport>> = match &setup.provided {
        Some(m) => {
            let a = SensingMatrix::new(m.clone(), setup.structure.clone())?;
            Some(cells.iter().map(|&(_, k, t)| exact_ric_for(&a, t, k)).collect::<blockrip_core::Result<_>>()?)
        }
        None => None,
    };
    let trials = jobs(cells.len(), cfg.trials_per_cell)
        .into_par_iter()
        .map(|(cell, trial)| -> Result<GuaranteeTrial> {
            let (n, k, t) = cells[cell];
            let seed = trial_seed(cfg.seed, cell, trial);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let draw = setup.draw(cfg, &mut rng, n, k)?;
            let ric = match &fixed_ric {
                Some(r) => r[cell].clone(),
                None => exact_ric_for(&draw.a, t, k)?,
            };
            let result = solve(&draw.instance, &solver)?;
            let record = verify_guarantee(&draw.instance, &draw.x0, k, t, &result, &ric)?;
            Ok(GuaranteeTrial {
                cell,
                trial,
                seed,
                n,
                k,
                t,
                order: ric.order_k,
                delta_tk: ric.delta,
                threshold: record.condition.threshold,
                condition_met: record.condition_met(),
                bound: record.bound.map(|b| b.total),
                observed_error: record.observed_error,
                relative_error: relative_error(&result.x_hat, &draw.x0),
                tail_norm: record.tail_norm,
                status: record.status,
                exact_case,
                iterations: result.iterations,
                converged: result.converged,
                cone_slack: cone_slack(&draw.x0, &result, k)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GuaranteeRun { trials })
}

// ---------------------------------------------------------------------------
// Block versus scalar

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedTrial {
    pub cell: usize,
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub block_relative_error: f64,
    pub block_status: TrialStatus,
    pub scalar_relative_error: f64,
    pub scalar_status: TrialStatus,
    pub block_cone_slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedCell {
    pub block: CellSummary,
    pub scalar: CellSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockVsScalarRun {
    pub cells: Vec<PairedCell>,
    pub trials: Vec<PairedTrial>,
}

pub const PAIRED_CELL_HEADER: &str = "cell,n,k,trials,block_successes,block_inconclusive,block_success_rate,scalar_successes,scalar_inconclusive,scalar_success_rate";
pub const PAIRED_TRIAL_HEADER: &str =
    "cell,trial,seed,n,k,block_relative_error,block_status,scalar_relative_error,scalar_status,block_cone_slack";

pub fn run_block_vs_scalar(cfg: &ExperimentConfig) -> Result<BlockVsScalarRun> {
    let setup = Setup::new(cfg)?;
    let solver = cfg.solver_config();
    let scalar = Arc::new(BlockStructure::scalar(setup.structure.dim())?);
    let cells = nk_cells(cfg);
    let trials = jobs(cells.len(), cfg.trials_per_cell)
        .into_par_iter()
        .map(|(cell, trial)| -> Result<PairedTrial> {
            let (n, k) = cells[cell];
            let seed = trial_seed(cfg.seed, cell, trial);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let draw = setup.draw(cfg, &mut rng, n, k)?;
            let block = solve(&draw.instance, &solver)?;
            let block_rel = relative_error(&block.x_hat, &draw.x0);

            let flat = MeasurementInstance::new(
                draw.a.with_structure(scalar.clone())?,
                draw.instance.y().to_vec(),
                cfg.epsilon,
            )?;
            let x0_flat = draw.x0.with_structure(scalar.clone())?;
            let flat_result = solve(&flat, &solver)?;
            let scalar_rel = relative_error(&flat_result.x_hat, &x0_flat);
            Ok(PairedTrial {
                cell,
                trial,
                seed,
                n,
                k,
                block_relative_error: block_rel,
                block_status: classify(&block, block_rel),
                scalar_relative_error: scalar_rel,
                scalar_status: classify(&flat_result, scalar_rel),
                block_cone_slack: cone_slack(&draw.x0, &block, k)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cells = cells
        .iter()
        .enumerate()
        .map(|(c, &(n, k))| {
            let rows: Vec<&PairedTrial> = trials.iter().filter(|t| t.cell == c).collect();
            let b: Vec<TrialStatus> = rows.iter().map(|t| t.block_status).collect();
            let s: Vec<TrialStatus> = rows.iter().map(|t| t.scalar_status).collect();
            PairedCell { block: summarize(c, n, k, &b), scalar: summarize(c, n, k, &s) }
        })
        .collect();
    Ok(BlockVsScalarRun { cells, trials })
}

impl BlockVsScalarRun {
    pub fn cells_csv(&self, p: &Provenance) -> String {
        let mut out = p.csv_header(ExperimentKind::BlockVsScalar);
        out.push_str(PAIRED_CELL_HEADER);
        out.push('\n');
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                c.block.cell,
                c.block.n,
                c.block.k,
                c.block.trials,
                c.block.successes,
                c.block.inconclusive,
                num(c.block.success_rate),
                c.scalar.successes,
                c.scalar.inconclusive,
                num(c.scalar.success_rate)
            );
        }
        out
    }

    pub fn trials_csv(&self, p: &Provenance) -> String {
        let mut out = p.csv_header(ExperimentKind::BlockVsScalar);
        out.push_str(PAIRED_TRIAL_HEADER);
        out.push('\n');
        for t in &self.trials {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                t.cell,
                t.trial,
                t.seed,
                t.n,
                t.k,
                num(t.block_relative_error),
                t.block_status.as_str(),
                num(t.scalar_relative_error),
                t.scalar_status.as_str(),
                opt_num(t.block_cone_slack)
            );
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Sharpness

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharpnessPoint {
    pub t: f64,
    pub k: usize,
    pub d: usize,
    pub epsilon_rip: f64,
    pub a_prime: f64,
    pub a: usize,
    pub blocks: usize,
    pub threshold: f64,
    pub analytic_delta: f64,
    /// `None` when the exact certificate would exceed the enumeration limit.
    pub rip: Option<RipBoundReport>,
    pub invariants_hold: bool,
    pub recovery: RecoveryFailureReport,
    /// Cone-constraint slack of the noiseless solve.
    pub cone_slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharpnessRun {
    pub provenance: Provenance,
    pub points: Vec<SharpnessPoint>,
    pub all_confirmed: bool,
}

pub fn run_sharpness(cfg: &ExperimentConfig) -> Result<SharpnessRun> {
    let solver = cfg.solver_config();
    let grid: Vec<(f64, usize, usize)> = cfg
        .t_grid
        .iter()
        .flat_map(|&t| cfg.k_grid.iter().flat_map(move |&k| cfg.d_values().into_iter().map(move |d| (t, k, d))))
        .collect();
    let points = grid
        .par_iter()
        .enumerate()
        .map(|(cell, &(t, k, d))| -> Result<SharpnessPoint> {
            let eps_rip = cfg.epsilon_rip.unwrap_or(5.0 / k as f64);
            let inst = counterexample::construct(t, k, d, eps_rip)?;
            let rip = match counterexample::verify_rip_bound(&inst) {
                Ok(r) => Some(r),
                Err(blockrip_core::Error::Capacity { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.seed, cell, 0));
            let direction = ensemble::sphere_noise(&mut rng, inst.structure.dim(), 1.0);
            let recovery = counterexample::verify_recovery_failure(&inst, &solver, &direction)?;
            let base = solve(&MeasurementInstance::new(inst.matrix.clone(), inst.observation(), 0.0)?, &solver)?;
            Ok(SharpnessPoint {
                t,
                k,
                d,
                epsilon_rip: eps_rip,
                a_prime: inst.a_prime,
                a: inst.a,
                blocks: inst.block_count(),
                threshold: recovery_threshold(t)?,
                analytic_delta: inst.analytic_delta_bound()?,
                rip,
                invariants_hold: inst.invariants().holds(),
                recovery,
                cone_slack: cone_slack(&inst.x0, &base, k)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let all_confirmed = points.iter().all(|p| p.invariants_hold && p.recovery.status == FailureStatus::Confirmed);
    Ok(SharpnessRun { provenance: cfg.provenance(), points, all_confirmed })
}

impl SharpnessRun {
    pub fn json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

// ---------------------------------------------------------------------------
// Dispatch

/// Path of the per-trial table written next to a per-cell table.
pub fn trials_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}.trials.csv"))
}

/// What `execute` wrote and whether the campaign-level assertion held.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecutionSummary {
    pub experiment_kind: ExperimentKind,
    pub provenance: Provenance,
    pub outputs: Vec<PathBuf>,
    pub passed: bool,
    pub detail: serde_json::Value,
}

/// Runs the configured experiment and writes its outputs.
pub fn execute(cfg: &ExperimentConfig) -> Result<ExecutionSummary> {
    cfg.validate()?;
    let prov = cfg.provenance();
    let out = cfg.output_path.clone();
    let (outputs, passed, detail) = match cfg.experiment_kind {
        ExperimentKind::PhaseTransition => {
            let run = run_phase_transition(cfg)?;
            let tp = trials_path(&out);
            io::write_file(&out, &run.cells_csv(&prov))?;
            io::write_file(&tp, &run.trials_csv(&prov))?;
            (vec![out, tp], true, json(&run.cells))
        }
        ExperimentKind::GuaranteeCheck => {
            let run = run_guarantee_check(cfg)?;
            io::write_file(&out, &run.csv(&prov))?;
            let campaign = run.campaign();
            (vec![out], campaign.violations == 0, json(&campaign))
        }
        ExperimentKind::BlockVsScalar => {
            let run = run_block_vs_scalar(cfg)?;
            let tp = trials_path(&out);
            io::write_file(&out, &run.cells_csv(&prov))?;
            io::write_file(&tp, &run.trials_csv(&prov))?;
            (vec![out, tp], true, json(&run.cells))
        }
        ExperimentKind::Sharpness => {
            let run = run_sharpness(cfg)?;
            io::write_file(&out, &run.json())?;
            let detail = serde_json::json!({ "points": run.points.len(), "all_confirmed": run.all_confirmed });
            (vec![out], run.all_confirmed, detail)
        }
    };
    Ok(ExecutionSummary { experiment_kind: cfg.experiment_kind, provenance: prov, outputs, passed, detail })
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("summary serializes")
}

//! Block restricted isometry constants.
//!
//! For a sensing matrix `A` and block sparsity order `k`, `delta_k` is the
//! smallest constant with
//! `(1 - delta) ||x||^2 <= ||Ax||^2 <= (1 + delta) ||x||^2` for every block
//! `k`-sparse `x`. Restricted to a support `S` of `k` blocks this is the
//! spectral deviation `max(lambda_max(G_S) - 1, 1 - lambda_min(G_S))` of the
//! Gram matrix of the columns in `S`; since supports nest, the maximum over
//! supports of exactly `k` blocks gives `delta_k`.
//!
//! [`exact_block_ric`] enumerates every support; [`sampled_block_ric`]
//! evaluates a seeded random subset and so yields a lower bound.

use alloc::collections::BTreeSet;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::block_model::{BlockIndexSet, BlockStructure, BlockVector};
use crate::error::{invalid_arg, Error, Result};
use crate::linalg::{Matrix, SymmetricEigen};
use crate::math;

/// Largest number of supports [`exact_block_ric`] will enumerate.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

/// A measurement matrix whose columns are grouped by a block structure.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    matrix: Matrix,
    structure: Arc<BlockStructure>,
}

impl SensingMatrix {
    pub fn new(matrix: Matrix, structure: Arc<BlockStructure>) -> Result<Self> {
        if matrix.cols() != structure.dim() {
            return Err(Error::DimensionMismatch { expected: structure.dim(), found: matrix.cols() });
        }
        if matrix.rows() == 0 {
            return Err(invalid_arg!("sensing matrix needs at least one row"));
        }
        Ok(Self { matrix, structure })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn structure(&self) -> &Arc<BlockStructure> {
        &self.structure
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn apply(&self, x: &BlockVector) -> Result<Vec<f64>> {
        if x.dim() != self.cols() {
            return Err(Error::DimensionMismatch { expected: self.cols(), found: x.dim() });
        }
        Ok(self.matrix.mul_vec(x.values()))
    }

    /// Same matrix regrouped under another structure of equal dimension.
    pub fn with_structure(&self, structure: Arc<BlockStructure>) -> Result<Self> {
        Self::new(self.matrix.clone(), structure)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize), serde(rename_all = "kebab-case"))]
pub enum RicMode {
    Exact,
    SampledLowerBound,
}

/// A computed block restricted isometry constant.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RicReport {
    /// Block sparsity order actually evaluated.
    pub order_k: usize,
    pub delta: f64,
    pub mode: RicMode,
    pub supports_examined: u64,
    /// Support attaining `delta`; the lexicographically smallest on ties.
    pub extremal_support: BlockIndexSet,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Set when the requested order exceeded the block count and was
    /// replaced by it.
    pub clamped: bool,
}

/// Spectral extremes of one support's Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportDeviation {
    pub delta: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

fn deviation_of(gram: &Matrix, structure: &BlockStructure, support: &[usize]) -> Result<SupportDeviation> {
    let idx = structure.coordinates(support);
    let eig = SymmetricEigen::new(&gram.principal_submatrix(&idx))?;
    let (lambda_min, lambda_max) = (eig.min(), eig.max());
    Ok(SupportDeviation { delta: f64::max(lambda_max - 1.0, 1.0 - lambda_min), lambda_min, lambda_max })
}

/// Isometry deviation of `a` on the given support.
pub fn support_deviation(a: &SensingMatrix, support: &BlockIndexSet) -> Result<SupportDeviation> {
    if let Some(&index) = support.indices().last() {
        let blocks = a.structure().block_count();
        if index >= blocks {
            return Err(Error::IndexOutOfRange { index, blocks });
        }
    }
    deviation_of(&a.matrix().gram(), a.structure(), support.indices())
}

/// `C(n, k)`, saturating at `u64::MAX`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Lexicographic iterator over the `k`-subsets of `0..n`.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        Self { n, current: (k <= n).then(|| (0..k).collect()) }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let c = self.current.as_mut().unwrap();
        let k = c.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if c[i] < self.n - k + i {
                c[i] += 1;
                for j in i + 1..k {
                    c[j] = c[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

fn check_order(structure: &BlockStructure, k: usize) -> Result<()> {
    let m = structure.block_count();
    if k == 0 {
        return Err(invalid_arg!("block sparsity order must be at least 1"));
    }
    if k > m {
        return Err(invalid_arg!("order {k} exceeds the block count {m}"));
    }
    Ok(())
}

/// Maximum deviation over the given supports. Supports must arrive in
/// lexicographic order so the first maximizer is the smallest one.
fn max_over<I>(a: &SensingMatrix, k: usize, supports: I, mode: RicMode) -> Result<RicReport>
where
    I: IntoIterator<Item = Vec<usize>>,
{
    let gram = a.matrix().gram();
    let mut best: Option<(SupportDeviation, Vec<usize>)> = None;
    let mut examined = 0u64;
    for s in supports {
        examined += 1;
        let dev = deviation_of(&gram, a.structure(), &s)?;
        if best.as_ref().is_none_or(|(b, _)| dev.delta > b.delta) {
            best = Some((dev, s));
        }
    }
    let (dev, support) = best.ok_or_else(|| Error::Internal("no supports examined".into()))?;
    Ok(RicReport {
        order_k: k,
        delta: dev.delta.max(0.0),
        mode,
        supports_examined: examined,
        extremal_support: BlockIndexSet::from_sorted(support),
        lambda_min: dev.lambda_min,
        lambda_max: dev.lambda_max,
        clamped: false,
    })
}

/// Exact `delta_k` by enumerating all `C(M, k)` block supports.
pub fn exact_block_ric(a: &SensingMatrix, k: usize) -> Result<RicReport> {
    let m = a.structure().block_count();
    check_order(a.structure(), k)?;
    let count = binomial(m, k);
    if count > ENUMERATION_LIMIT {
        return Err(Error::Capacity { supports: count, limit: ENUMERATION_LIMIT });
    }
    max_over(a, k, Combinations::new(m, k), RicMode::Exact)
}

/// Lower bound on `delta_k` from `trials` distinct supports drawn uniformly
/// without replacement. Falls back to exhaustive enumeration (reported as
/// [`RicMode::Exact`]) when `C(M, k) <= trials`.
pub fn sampled_block_ric(a: &SensingMatrix, k: usize, trials: u64, seed: u64) -> Result<RicReport> {
    let m = a.structure().block_count();
    check_order(a.structure(), k)?;
    if trials == 0 {
        return Err(invalid_arg!("at least one trial is required"));
    }
    if binomial(m, k) <= trials {
        return max_over(a, k, Combinations::new(m, k), RicMode::Exact);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: BTreeSet<Vec<usize>> = BTreeSet::new();
    while (chosen.len() as u64) < trials {
        let mut s = rand::seq::index::sample(&mut rng, m, k).into_vec();
        s.sort_unstable();
        chosen.insert(s);
    }
    max_over(a, k, chosen, RicMode::SampledLowerBound)
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 1.0) || !t.is_finite() {
        return Err(invalid_arg!("t must be a finite real greater than 1, got {t}"));
    }
    Ok(())
}

/// `ceil(t k)`, the integer order that `delta_{tk}` refers to. Products
/// within `1e-9` of an integer are treated as that integer.
pub fn ric_order_for(t: f64, k: usize) -> Result<usize> {
    check_t(t)?;
    if k == 0 {
        return Err(invalid_arg!("k must be at least 1"));
    }
    Ok(math::ceil(math::snap_integer(t * k as f64)) as usize)
}

/// [`ric_order_for`] clamped to `blocks`; the flag reports whether clamping
/// happened.
pub fn clamped_order(t: f64, k: usize, blocks: usize) -> Result<(usize, bool)> {
    let order = ric_order_for(t, k)?;
    Ok(if order > blocks { (blocks, true) } else { (order, false) })
}

/// Exact `delta_{ceil(tk)}`, using `delta_M` when `ceil(tk) > M`.
pub fn exact_ric_for(a: &SensingMatrix, t: f64, k: usize) -> Result<RicReport> {
    let (order, clamped) = clamped_order(t, k, a.structure().block_count())?;
    let mut report = exact_block_ric(a, order)?;
    report.clamped = clamped;
    Ok(report)
}

/// `sqrt((t - 1) / t)`.
pub fn recovery_threshold(t: f64) -> Result<f64> {
    check_t(t)?;
    Ok(math::sqrt((t - 1.0) / t))
}

/// Outcome of testing `delta_tk < sqrt((t - 1) / t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RecoveryCondition {
    pub met: bool,
    pub threshold: f64,
    /// `threshold - delta`; positive exactly when the condition is met.
    pub margin: f64,
}

pub fn check_recovery_condition(delta_tk: f64, t: f64) -> Result<RecoveryCondition> {
    let threshold = recovery_threshold(t)?;
    if !(delta_tk >= 0.0) {
        return Err(invalid_arg!("delta must be nonnegative, got {delta_tk}"));
    }
    Ok(RecoveryCondition { met: delta_tk < threshold, threshold, margin: threshold - delta_tk })
}

/// A unit eigenvector on the report's extremal support realizing `delta`:
/// `||Ax||^2` equals `1 + delta` or `1 - delta` for it.
pub fn extremal_vector(a: &SensingMatrix, report: &RicReport) -> Result<BlockVector> {
    let structure = a.structure();
    let idx = structure.coordinates(report.extremal_support.indices());
    let eig = SymmetricEigen::new(&a.matrix().gram().principal_submatrix(&idx))?;
    let upper = eig.max() - 1.0;
    let lower = 1.0 - eig.min();
    let col = if upper >= lower { idx.len() - 1 } else { 0 };
    let mut x = BlockVector::zeros(structure.clone());
    for (v, &i) in eig.vector(col).into_iter().zip(&idx) {
        x.values_mut()[i] = v;
    }
    Ok(x)
}

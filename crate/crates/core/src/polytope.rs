//! The block polytope
//!
//! ```text
//! T(alpha, k) = { v : ||v||_{2,inf} <= alpha, ||v||_{2,1} <= k alpha }
//! ```
//!
//! and its representation as a convex hull of block `k`-sparse atoms
//! `U(alpha, k, v)`: vectors supported inside `supp(v)` with at most `k`
//! nonzero blocks, the same `||.||_{2,1}` as `v` and every block norm at most
//! `alpha`. [`decompose`] constructs such a convex combination explicitly by
//! repeatedly splitting an `s`-sparse member into `(s-1)`-sparse members.

use alloc::vec::Vec;

use crate::block_model::BlockVector;
use crate::error::{invalid_arg, Error, Result};
use crate::math;

/// Absolute slack on `||.||_{2,inf} <= alpha`.
pub const INF_NORM_SLACK: f64 = 1e-12;
/// Relative slack on the `||.||_{2,1}` equality of atoms.
pub const L21_RELATIVE_SLACK: f64 = 1e-9;
/// Children with weight below this are dropped.
pub const WEIGHT_CUTOFF: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolytopeSpec {
    pub alpha: f64,
    pub k: usize,
}

impl PolytopeSpec {
    pub fn new(alpha: f64, k: usize) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(invalid_arg!("alpha must be positive, got {alpha}"));
        }
        if k == 0 {
            return Err(invalid_arg!("k must be at least 1"));
        }
        Ok(Self { alpha, k })
    }
}

/// `v = sum_i weights[i] * atoms[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexDecomposition {
    pub weights: Vec<f64>,
    pub atoms: Vec<BlockVector>,
}

impl ConvexDecomposition {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `sum_i weights[i] * atoms[i]`.
    pub fn recombine(&self) -> Option<BlockVector> {
        let first = self.atoms.first()?;
        let mut out = BlockVector::zeros(first.structure().clone());
        for (w, atom) in self.weights.iter().zip(&self.atoms) {
            for (o, a) in out.values_mut().iter_mut().zip(atom.values()) {
                *o += w * a;
            }
        }
        Some(out)
    }
}

/// Membership in `T(alpha, k)`.
pub fn in_t(v: &BlockVector, spec: &PolytopeSpec) -> bool {
    v.norm_2_inf() <= spec.alpha + INF_NORM_SLACK && v.norm_2_1() <= spec.k as f64 * spec.alpha + INF_NORM_SLACK
}

fn close_relative(a: f64, b: f64, rel: f64) -> bool {
    a == b || math::abs(a - b) <= rel * a.abs().max(b.abs())
}

/// Membership of `u` in `U(alpha, k, v)`.
pub fn in_u(u: &BlockVector, v: &BlockVector, spec: &PolytopeSpec) -> Result<bool> {
    if u.structure() != v.structure() {
        return Err(Error::InvalidStructure("u and v use different block structures".into()));
    }
    Ok(u.support().is_subset(&v.support())
        && u.norm_2_0() <= spec.k
        && close_relative(u.norm_2_1(), v.norm_2_1(), L21_RELATIVE_SLACK)
        && u.norm_2_inf() <= spec.alpha + INF_NORM_SLACK)
}

/// One splitting step applied to a member `v` of `T(alpha, k)` with
/// `s > k` nonzero blocks of norms `c_1 >= ... >= c_s` (ties by block index).
///
/// With `l` the largest index in `1..s` such that
/// `c_l + ... + c_s <= (s - l) alpha`, every block from `l` on is rescaled to
/// the common norm `B = (c_l + ... + c_s) / (s - l)`, and child `j` (for
/// `l <= j <= s`) additionally drops block `j`. Child `j` gets weight
/// `(B - c_j) / B`. Returns `None` if `v` is already block `k`-sparse.
pub fn split_once(v: &BlockVector, spec: &PolytopeSpec) -> Result<Option<Vec<(f64, BlockVector)>>> {
    split_with_alpha(v, spec.k, spec.alpha)
}

fn split_with_alpha(v: &BlockVector, k: usize, alpha: f64) -> Result<Option<Vec<(f64, BlockVector)>>> {
    let norms = v.block_norms();
    let mut sorted: Vec<usize> = (0..norms.len()).filter(|&i| v.block(i).iter().any(|&x| x != 0.0)).collect();
    let s = sorted.len();
    if s <= k {
        return Ok(None);
    }
    sorted.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let c: Vec<f64> = sorted.iter().map(|&i| norms[i]).collect();

    // suffix[p] = c[p] + ... + c[s-1] (0-based positions)
    let mut suffix = alloc::vec![0.0; s + 1];
    for p in (0..s).rev() {
        suffix[p] = suffix[p + 1] + c[p];
    }
    // 1-based l in 1..=s-1 maps to position p = l - 1, with s - l = s - 1 - p
    let tol = 1.0 + 4.0 * f64::EPSILON * s as f64;
    let p = (0..s - 1)
        .rev()
        .find(|&p| suffix[p] <= (s - 1 - p) as f64 * alpha * tol)
        .ok_or_else(|| Error::Internal("empty index set in polytope split".into()))?;
    let tail_count = (s - 1 - p) as f64;
    let common = (suffix[p] / tail_count).min(alpha);

    let mut b: Vec<f64> = c[p..].iter().map(|&cj| (common - cj).max(0.0)).collect();
    let total: f64 = b.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Internal("degenerate weights in polytope split".into()));
    }
    b.iter_mut().for_each(|bj| *bj /= total);

    let mut children = Vec::with_capacity(b.len());
    for (offset, &weight) in b.iter().enumerate() {
        let mut child = v.clone();
        for (pos, &block) in sorted.iter().enumerate().skip(p) {
            let cb = c[pos];
            let target = if pos == p + offset { 0.0 } else { common / cb };
            child.block_mut(block).iter_mut().for_each(|x| *x *= target);
        }
        children.push((weight, child));
    }
    Ok(Some(children))
}

/// Writes `v` in `T(alpha, k)` as a convex combination of atoms of
/// `U(alpha, k, v)`.
///
/// Children with weight below [`WEIGHT_CUTOFF`] are discarded and the
/// remaining weights renormalized. Atoms come out in lexicographic order of
/// their coordinates.
pub fn decompose(v: &BlockVector, spec: &PolytopeSpec) -> Result<ConvexDecomposition> {
    if !in_t(v, spec) {
        return Err(Error::Precondition("vector is not in the block polytope T(alpha, k)".into()));
    }
    // Inside the slack band the input is treated as a member of the slightly
    // larger polytope it belongs to exactly.
    let k = spec.k;
    let alpha = spec.alpha.max(v.norm_2_inf()).max(v.norm_2_1() / k as f64);
    let max_depth = v.structure().block_count();

    let mut done: Vec<(f64, BlockVector)> = Vec::new();
    let mut stack: Vec<(f64, BlockVector, usize)> = alloc::vec![(1.0, v.clone(), 0)];
    while let Some((weight, node, depth)) = stack.pop() {
        if depth > max_depth {
            return Err(Error::Internal("polytope recursion exceeded the block count".into()));
        }
        match split_with_alpha(&node, k, alpha)? {
            None => done.push((weight, node)),
            Some(children) => {
                for (w, child) in children.into_iter().rev() {
                    let cw = weight * w;
                    if cw >= WEIGHT_CUTOFF {
                        stack.push((cw, child, depth + 1));
                    }
                }
            }
        }
    }

    done.sort_by(|a, b| {
        a.1.values()
            .iter()
            .zip(b.1.values())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    // identical atoms reached along different paths are merged
    let mut merged: Vec<(f64, BlockVector)> = Vec::with_capacity(done.len());
    for (w, atom) in done {
        match merged.last_mut() {
            Some((mw, last)) if last.values() == atom.values() => *mw += w,
            _ => merged.push((w, atom)),
        }
    }
    let total: f64 = merged.iter().map(|(w, _)| w).sum();
    let (weights, atoms) = merged.into_iter().map(|(w, a)| (w / total, a)).unzip();
    Ok(ConvexDecomposition { weights, atoms })
}

/// Result of [`check_tail_power_inequality`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailPowerOutcome {
    /// Hypothesis met and the conclusion holds.
    Holds,
    /// Hypothesis met but the conclusion fails.
    Violated,
    /// `sum_{i<=k} a_i + lambda < sum_{i>k} a_i`; nothing to check.
    HypothesisNotMet,
}

/// Relative slack on the conclusion of the tail power inequality.
pub const TAIL_POWER_SLACK: f64 = 1e-10;

/// Probe of the tail power inequality: for a nonincreasing nonnegative
/// sequence `a` of length `m >= k` with `sum_{i<=k} a_i + lambda >=
/// sum_{i>k} a_i`, and `alpha >= 1`,
///
/// ```text
/// sum_{j>k} a_j^alpha <= k * ( (sum_{i<=k} a_i^alpha / k)^(1/alpha) + lambda / k )^alpha
/// ```
pub fn check_tail_power_inequality(a: &[f64], k: usize, lambda: f64, alpha: f64) -> Result<TailPowerOutcome> {
    if k == 0 || a.len() < k {
        return Err(invalid_arg!("need 1 <= k <= m, got k = {k}, m = {}", a.len()));
    }
    if a.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(invalid_arg!("sequence entries must be finite and nonnegative"));
    }
    if a.windows(2).any(|w| w[0] < w[1]) {
        return Err(invalid_arg!("sequence must be nonincreasing"));
    }
    if !(lambda >= 0.0) || !(alpha >= 1.0) {
        return Err(invalid_arg!("need lambda >= 0 and alpha >= 1"));
    }
    let (head, tail) = a.split_at(k);
    if head.iter().sum::<f64>() + lambda < tail.iter().sum::<f64>() {
        return Ok(TailPowerOutcome::HypothesisNotMet);
    }
    let kf = k as f64;
    let lhs: f64 = tail.iter().map(|&x| math::powf(x, alpha)).sum();
    let head_power: f64 = head.iter().map(|&x| math::powf(x, alpha)).sum();
    let rhs = kf * math::powf(math::powf(head_power / kf, 1.0 / alpha) + lambda / kf, alpha);
    Ok(if lhs <= rhs * (1.0 + TAIL_POWER_SLACK) + f64::MIN_POSITIVE {
        TailPowerOutcome::Holds
    } else {
        TailPowerOutcome::Violated
    })
}

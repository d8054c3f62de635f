//! Block structures, block vectors and mixed norms.
//!
//! A [`BlockStructure`] partitions the coordinates `0..N` into `M`
//! consecutive blocks of sizes `d_0, ..., d_{M-1}`. A [`BlockVector`] is a
//! dense length-`N` vector read against such a partition; every mixed norm
//! `||x||_{2,p}` takes the Euclidean norm inside each block and the `p`-norm
//! across blocks.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{invalid_arg, Error, Result};
use crate::math;

/// Partition of `0..N` into consecutive blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockStructure {
    sizes: Vec<usize>,
    // offsets[i]..offsets[i + 1] is block i; offsets.len() == sizes.len() + 1
    offsets: Vec<usize>,
}

impl BlockStructure {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidStructure("at least one block is required".into()));
        }
        if let Some(pos) = sizes.iter().position(|&d| d == 0) {
            return Err(Error::InvalidStructure(alloc::format!("block {pos} has size 0")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0usize;
        offsets.push(0);
        for &d in &sizes {
            acc += d;
            offsets.push(acc);
        }
        Ok(Self { sizes, offsets })
    }

    /// `blocks` blocks of common size `block_size`.
    pub fn uniform(blocks: usize, block_size: usize) -> Result<Self> {
        Self::new(alloc::vec![block_size; blocks])
    }

    /// The scalar structure on `n` coordinates, where block sparsity is
    /// ordinary sparsity.
    pub fn scalar(n: usize) -> Result<Self> {
        Self::uniform(n, 1)
    }

    pub fn block_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn dim(&self) -> usize {
        self.offsets[self.sizes.len()]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn block_size(&self, block: usize) -> usize {
        self.sizes[block]
    }

    pub fn offset(&self, block: usize) -> usize {
        self.offsets[block]
    }

    /// Coordinate range occupied by `block`.
    pub fn range(&self, block: usize) -> Range<usize> {
        self.offsets[block]..self.offsets[block + 1]
    }

    pub fn max_block_size(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    /// All coordinates belonging to the given blocks, in block order.
    pub fn coordinates(&self, blocks: &[usize]) -> Vec<usize> {
        blocks.iter().flat_map(|&b| self.range(b)).collect()
    }
}

/// A set of block indices, kept sorted and free of duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize), serde(transparent))]
pub struct BlockIndexSet {
    indices: Vec<usize>,
}

impl BlockIndexSet {
    /// Builds a set valid for a structure with `blocks` blocks.
    pub fn new(mut indices: Vec<usize>, blocks: usize) -> Result<Self> {
        indices.sort_unstable();
        let before = indices.len();
        indices.dedup();
        if indices.len() != before {
            return Err(invalid_arg!("duplicate block index"));
        }
        if let Some(&index) = indices.iter().find(|&&i| i >= blocks) {
            return Err(Error::IndexOutOfRange { index, blocks });
        }
        Ok(Self { indices })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn all(blocks: usize) -> Self {
        Self { indices: (0..blocks).collect() }
    }

    pub(crate) fn from_sorted(indices: Vec<usize>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, block: usize) -> bool {
        self.indices.binary_search(&block).is_ok()
    }

    pub fn is_subset(&self, other: &BlockIndexSet) -> bool {
        self.indices.iter().all(|&i| other.contains(i))
    }

    /// Complement within `0..blocks`.
    pub fn complement(&self, blocks: usize) -> Self {
        Self { indices: (0..blocks).filter(|&i| !self.contains(i)).collect() }
    }

    fn check(&self, blocks: usize) -> Result<()> {
        match self.indices.last() {
            Some(&index) if index >= blocks => Err(Error::IndexOutOfRange { index, blocks }),
            _ => Ok(()),
        }
    }
}

/// A dense vector interpreted against a block structure.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    values: Vec<f64>,
    structure: Arc<BlockStructure>,
}

impl BlockVector {
    pub fn new(values: Vec<f64>, structure: Arc<BlockStructure>) -> Result<Self> {
        if values.len() != structure.dim() {
            return Err(Error::DimensionMismatch { expected: structure.dim(), found: values.len() });
        }
        Ok(Self { values, structure })
    }

    pub fn zeros(structure: Arc<BlockStructure>) -> Self {
        Self { values: alloc::vec![0.0; structure.dim()], structure }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn structure(&self) -> &Arc<BlockStructure> {
        &self.structure
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.values[self.structure.range(i)]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        let r = self.structure.range(i);
        &mut self.values[r]
    }

    /// Euclidean norm of block `i`.
    pub fn block_norm(&self, i: usize) -> f64 {
        math::norm2(self.block(i))
    }

    pub fn block_norms(&self) -> Vec<f64> {
        (0..self.structure.block_count()).map(|i| self.block_norm(i)).collect()
    }

    /// Blocks with at least one nonzero entry.
    pub fn support(&self) -> BlockIndexSet {
        BlockIndexSet::from_sorted(
            (0..self.structure.block_count())
                .filter(|&i| self.block(i).iter().any(|&x| x != 0.0))
                .collect(),
        )
    }

    /// `||v||_{2,0}`: number of blocks that are not identically zero.
    pub fn norm_2_0(&self) -> usize {
        (0..self.structure.block_count())
            .filter(|&i| self.block(i).iter().any(|&x| x != 0.0))
            .count()
    }

    /// `||v||_{2,1} = sum_i ||v[i]||_2`.
    pub fn norm_2_1(&self) -> f64 {
        (0..self.structure.block_count()).map(|i| self.block_norm(i)).sum()
    }

    /// `||v||_{2,2}`, the plain Euclidean norm.
    pub fn norm_2_2(&self) -> f64 {
        math::norm2(&self.values)
    }

    /// `||v||_{2,inf} = max_i ||v[i]||_2`.
    pub fn norm_2_inf(&self) -> f64 {
        (0..self.structure.block_count()).map(|i| self.block_norm(i)).fold(0.0, f64::max)
    }

    /// Equal to `self` on the blocks in `set`, zero elsewhere.
    pub fn restrict(&self, set: &BlockIndexSet) -> Result<BlockVector> {
        set.check(self.structure.block_count())?;
        let mut out = BlockVector::zeros(self.structure.clone());
        for &b in set.indices() {
            out.block_mut(b).copy_from_slice(self.block(b));
        }
        Ok(out)
    }

    /// The `k` blocks of largest Euclidean norm. Ties go to the lower block
    /// index.
    pub fn top_k_blocks(&self, k: usize) -> Result<BlockIndexSet> {
        let m = self.structure.block_count();
        if k > m {
            return Err(invalid_arg!("k = {k} exceeds the block count {m}"));
        }
        let norms = self.block_norms();
        let mut order: Vec<usize> = (0..m).collect();
        // stable sort keeps ascending index among equal norms
        order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
        order.truncate(k);
        order.sort_unstable();
        Ok(BlockIndexSet::from_sorted(order))
    }

    /// Best block `k`-term approximation: all but the `k` largest blocks set
    /// to zero.
    pub fn best_block_k_approx(&self, k: usize) -> Result<BlockVector> {
        let top = self.top_k_blocks(k)?;
        self.restrict(&top)
    }

    pub fn is_block_sparse(&self, k: usize) -> bool {
        self.norm_2_0() <= k
    }

    fn check_same(&self, other: &BlockVector) -> Result<()> {
        if self.structure != other.structure {
            return Err(Error::InvalidStructure("operands use different block structures".into()));
        }
        Ok(())
    }

    pub fn sub(&self, other: &BlockVector) -> Result<BlockVector> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(BlockVector { values, structure: self.structure.clone() })
    }

    pub fn add(&self, other: &BlockVector) -> Result<BlockVector> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(BlockVector { values, structure: self.structure.clone() })
    }

    pub fn scaled(&self, c: f64) -> BlockVector {
        BlockVector { values: self.values.iter().map(|x| c * x).collect(), structure: self.structure.clone() }
    }

    /// Same values re-read against a different structure of equal dimension.
    pub fn with_structure(&self, structure: Arc<BlockStructure>) -> Result<BlockVector> {
        BlockVector::new(self.values.clone(), structure)
    }
}

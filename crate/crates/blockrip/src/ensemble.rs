//! Random sensing matrices, signals and noise.

use std::sync::Arc;

use blockrip_core::{BlockStructure, BlockVector, Matrix};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixEnsemble {
    /// Entries iid `N(0, 1/n)`.
    #[serde(rename = "gaussian")]
    Gaussian,
    /// Gaussian rows orthonormalized and scaled by `sqrt(N/n)`, so that
    /// `A A^T = (N/n) I` and columns have unit norm on average.
    #[serde(rename = "row_orthonormal", alias = "row-orthonormal")]
    RowOrthonormal,
    /// A fixed matrix read from `matrix_path`.
    #[serde(rename = "provided-file", alias = "provided_file")]
    ProvidedFile,
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let sd = 1.0 / (rows as f64).sqrt();
    let data = (0..rows * cols).map(|_| sd * normal(rng)).collect();
    Matrix::new(rows, cols, data).expect("dimensions match")
}

/// Requires `rows <= cols`.
pub fn row_orthonormal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Result<Matrix> {
    if rows > cols {
        return Err(HarnessError::Config(format!("row-orthonormal ensemble needs n <= N, got {rows} > {cols}")));
    }
    let scale = (cols as f64 / rows as f64).sqrt();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rows);
    while basis.len() < rows {
        let mut v: Vec<f64> = (0..cols).map(|_| normal(rng)).collect();
        // modified Gram-Schmidt, twice for numerical orthogonality
        for _ in 0..2 {
            for b in &basis {
                let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let data = basis.into_iter().flatten().map(|x| scale * x).collect();
    Ok(Matrix::new(rows, cols, data)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalKind {
    /// Exactly `k` nonzero blocks on a uniformly random support; each block
    /// is standard Gaussian, rescaled to unit norm when `normalize` is set.
    Sparse {
        #[serde(default = "default_true")]
        normalize: bool,
    },
    /// Every block is nonzero. The blocks of a random permutation get norms
    /// `1, 2^-decay, 3^-decay, ...` along Gaussian directions.
    Compressible { decay: f64 },
}

fn default_true() -> bool {
    true
}

impl Default for SignalKind {
    fn default() -> Self {
        Self::Sparse { normalize: true }
    }
}

fn random_direction<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..len).map(|_| normal(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub fn signal<R: Rng + ?Sized>(rng: &mut R, structure: &Arc<BlockStructure>, k: usize, kind: SignalKind) -> Result<BlockVector> {
    let m = structure.block_count();
    if k > m {
        return Err(HarnessError::Config(format!("k = {k} exceeds the block count {m}")));
    }
    let mut values = vec![0.0; structure.dim()];
    match kind {
        SignalKind::Sparse { normalize } => {
            let mut support = index::sample(rng, m, k).into_vec();
            support.sort_unstable();
            for b in support {
                let block: Vec<f64> = if normalize {
                    random_direction(rng, structure.block_size(b))
                } else {
                    (0..structure.block_size(b)).map(|_| normal(rng)).collect()
                };
                values[structure.range(b)].copy_from_slice(&block);
            }
        }
        SignalKind::Compressible { decay } => {
            if !(decay > 0.0) {
                return Err(HarnessError::Config("compressible decay must be positive".into()));
            }
            let order = index::sample(rng, m, m).into_vec();
            for (rank, b) in order.into_iter().enumerate() {
                let norm = ((rank + 1) as f64).powf(-decay);
                let dir = random_direction(rng, structure.block_size(b));
                for (slot, x) in values[structure.range(b)].iter_mut().zip(dir) {
                    *slot = norm * x;
                }
            }
        }
    }
    Ok(BlockVector::new(values, structure.clone())?)
}

/// Uniform on the sphere of radius `epsilon`; zero when `epsilon = 0`.
pub fn sphere_noise<R: Rng + ?Sized>(rng: &mut R, len: usize, epsilon: f64) -> Vec<f64> {
    if epsilon == 0.0 {
        return vec![0.0; len];
    }
    random_direction(rng, len).into_iter().map(|x| epsilon * x).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn row_orthonormal_rows() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let a = row_orthonormal_matrix(&mut r, 5, 12).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let d: f64 = a.row(i).iter().zip(a.row(j)).map(|(x, y)| x * y).sum();
                let expected = if i == j { 12.0 / 5.0 } else { 0.0 };
                assert!((d - expected).abs() < 1e-12);
            }
        }
        assert!(row_orthonormal_matrix(&mut r, 13, 12).is_err());
    }

    #[test]
    fn sparse_signal_shape() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let st = Arc::new(BlockStructure::uniform(6, 3).unwrap());
        let x = signal(&mut r, &st, 2, SignalKind::default()).unwrap();
        assert_eq!(x.norm_2_0(), 2);
        for b in x.support().indices() {
            assert!((x.block_norms()[*b] - 1.0).abs() < 1e-12);
        }
        assert_eq!(signal(&mut r, &st, 0, SignalKind::default()).unwrap().norm_2_0(), 0);
        assert!(signal(&mut r, &st, 7, SignalKind::default()).is_err());
    }

    #[test]
    fn compressible_norms_follow_power_law() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let st = Arc::new(BlockStructure::uniform(5, 2).unwrap());
        let x = signal(&mut r, &st, 1, SignalKind::Compressible { decay: 1.0 }).unwrap();
        let mut norms = x.block_norms();
        norms.sort_by(|a, b| b.total_cmp(a));
        for (i, n) in norms.iter().enumerate() {
            assert!((n - 1.0 / (i + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_has_exact_radius() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let z = sphere_noise(&mut r, 9, 0.25);
        assert!((z.iter().map(|x| x * x).sum::<f64>().sqrt() - 0.25).abs() < 1e-15);
        assert!(sphere_noise(&mut r, 3, 0.0).iter().all(|&x| x == 0.0));
    }
}

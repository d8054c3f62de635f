#![allow(dead_code)]

use std::sync::Arc;

use blockrip_core::{BlockStructure, BlockVector, Matrix, SensingMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn structure(sizes: &[usize]) -> Arc<BlockStructure> {
    Arc::new(BlockStructure::new(sizes.to_vec()).unwrap())
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

pub fn gaussian_sensing(rng: &mut ChaCha8Rng, rows: usize, st: &Arc<BlockStructure>) -> SensingMatrix {
    let m = gaussian_matrix(rng, rows, st.dim(), 1.0 / (rows as f64).sqrt());
    SensingMatrix::new(m, st.clone()).unwrap()
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, st: &Arc<BlockStructure>) -> BlockVector {
    let v = (0..st.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    BlockVector::new(v, st.clone()).unwrap()
}

/// Random block `k`-sparse vector with Gaussian entries on a uniformly
/// chosen support.
pub fn sparse_vector(rng: &mut ChaCha8Rng, st: &Arc<BlockStructure>, k: usize) -> BlockVector {
    let support = rand::seq::index::sample(rng, st.block_count(), k).into_vec();
    let mut v = BlockVector::zeros(st.clone());
    for b in support {
        for x in v.block_mut(b) {
            *x = rng.sample::<f64, _>(StandardNormal);
        }
    }
    v
}

pub fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

pub fn to_nalgebra(m: &Matrix) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

/// Brute-force block RIC: every support, extreme singular values of the
/// column submatrix from nalgebra's SVD.
pub fn brute_force_ric(a: &SensingMatrix, k: usize) -> f64 {
    let st = a.structure();
    let full = to_nalgebra(a.matrix());
    let m = st.block_count();
    let mut best = 0.0f64;
    let mut stack = vec![(0usize, Vec::<usize>::new())];
    while let Some((next, chosen)) = stack.pop() {
        if chosen.len() == k {
            let cols: Vec<usize> = chosen.iter().flat_map(|&b| st.range(b)).collect();
            let sub = full.select_columns(cols.iter());
            let sv = sub.singular_values();
            let smax = sv.max();
            // fewer rows than columns means a zero singular value
            let smin = if sub.nrows() < sub.ncols() { 0.0 } else { sv.min() };
            best = best.max(smax * smax - 1.0).max(1.0 - smin * smin);
            continue;
        }
        for b in next..m {
            let mut c = chosen.clone();
            c.push(b);
            stack.push((b + 1, c));
        }
    }
    best
}

/// Independent reference solver for `min sum_i ||x[i]||_2 s.t. ||y - Ax|| <= eps`
/// (primal-dual hybrid gradient). `blocks` lists the coordinate ranges; with
/// unit blocks the prox is scalar soft thresholding.
pub fn pdhg_reference(a: &Matrix, y: &[f64], eps: f64, blocks: &[std::ops::Range<usize>], iters: usize) -> Vec<f64> {
    let n = a.cols();
    let m = a.rows();
    let na = to_nalgebra(a);
    let op_norm = na.singular_values().max();
    let tau = 0.95 / op_norm;
    let sigma = 0.95 / op_norm;
    let mut x = vec![0.0; n];
    let mut p = vec![0.0; m];
    for _ in 0..iters {
        let atp = a.tmul_vec(&p);
        let mut xn: Vec<f64> = x.iter().zip(&atp).map(|(xi, gi)| xi - tau * gi).collect();
        for r in blocks {
            let nb = xn[r.clone()].iter().map(|v| v * v).sum::<f64>().sqrt();
            let s = if nb <= tau { 0.0 } else { 1.0 - tau / nb };
            xn[r.clone()].iter_mut().for_each(|v| *v *= s);
        }
        let xbar: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| 2.0 * a - b).collect();
        let ax = a.mul_vec(&xbar);
        let q: Vec<f64> = p.iter().zip(&ax).map(|(pi, ai)| pi + sigma * ai).collect();
        // prox of sigma g* via Moreau: q - sigma * proj_ball(q / sigma)
        let qs: Vec<f64> = q.iter().map(|v| v / sigma).collect();
        let d = qs.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let proj: Vec<f64> = if d <= eps {
            qs.clone()
        } else {
            qs.iter().zip(y).map(|(a, b)| b + eps * (a - b) / d).collect()
        };
        p = q.iter().zip(&proj).map(|(qi, pi)| qi - sigma * pi).collect();
        x = xn;
    }
    x
}

pub fn unit_blocks(n: usize) -> Vec<std::ops::Range<usize>> {
    (0..n).map(|i| i..i + 1).collect()
}

/// Exact basis pursuit (`eps = 0`, scalar structure) by enumerating the
/// basic solutions of the equivalent linear program.
pub fn basis_pursuit_by_vertices(a: &Matrix, y: &[f64]) -> f64 {
    let (m, n) = (a.rows(), a.cols());
    let na = to_nalgebra(a);
    let yv = nalgebra::DVector::from_column_slice(y);
    let mut best = f64::INFINITY;
    for cols in blockrip_core::rip_cert::Combinations::new(n, m) {
        let sub = na.select_columns(cols.iter());
        if let Some(sol) = sub.lu().solve(&yv) {
            let res = (&na.select_columns(cols.iter()) * &sol - &yv).norm();
            if res < 1e-9 {
                best = best.min(sol.iter().map(|v| v.abs()).sum());
            }
        }
    }
    best
}

pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let g = gaussian_matrix(rng, n, n, 1.0);
    let q = to_nalgebra(&g).qr().q();
    let data: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| q[(i, j)]).collect();
    Matrix::new(n, n, data).unwrap()
}

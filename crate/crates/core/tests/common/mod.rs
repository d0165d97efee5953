//! Dense reference computations shared by the integration tests.
#![allow(dead_code)]

use ftcs_core::sparse::CsrMatrix;
use rand::Rng;

/// Singular values and vectors of a dense `m x n` matrix by one-sided Jacobi
/// rotations on its columns. Returns `(sigma, left, right)` sorted by
/// decreasing `sigma`; `left[k]` has length `m`, `right[k]` length `n`.
#[allow(clippy::needless_range_loop)]
pub fn jacobi_svd(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let m = a.len();
    let n = a[0].len();
    // Work on columns of A (stored as rows of `w`) and accumulate V.
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a[i][j]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = w[p].iter().map(|x| x * x).sum();
                let beta: f64 = w[q].iter().map(|x| x * x).sum();
                let gamma: f64 = w[p].iter().zip(&w[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt().max(1e-300));
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (w[p][i], w[q][i]);
                    w[p][i] = c * x - s * y;
                    w[q][i] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[p][i], v[q][i]);
                    v[p][i] = c * x - s * y;
                    v[q][i] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = w
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    idx.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let sigma = idx.iter().map(|&j| norms[j]).collect();
    let left = idx
        .iter()
        .map(|&j| {
            w[j].iter()
                .map(|x| if norms[j] > 0.0 { x / norms[j] } else { 0.0 })
                .collect()
        })
        .collect();
    let right = idx.iter().map(|&j| v[j].clone()).collect();
    (sigma, left, right)
}

/// Random row-stochastic matrix with roughly `density` fill and a guaranteed
/// nonzero in every column.
pub fn random_stochastic<R: Rng>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    density: f64,
) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; cols]; rows];
    for row in a.iter_mut() {
        for v in row.iter_mut() {
            if rng.random_bool(density) {
                *v = rng.random_range(0.01..1.0);
            }
        }
        let k = rng.random_range(0..cols);
        row[k] += 0.5;
    }
    for j in 0..cols {
        if a.iter().all(|r| r[j] == 0.0) {
            let i = rng.random_range(0..rows);
            a[i][j] = 0.3;
        }
    }
    for row in a.iter_mut() {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    a
}

pub fn dense(m: &CsrMatrix) -> Vec<Vec<f64>> {
    m.to_dense()
}

/// Flips `(u, v)` so the largest-magnitude entry of `u` is positive.
pub fn sign_fix(u: &mut [f64], v: &mut [f64]) {
    let mut lead = 0;
    for i in 0..u.len() {
        if u[i].abs() > u[lead].abs() {
            lead = i;
        }
    }
    if u[lead] < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

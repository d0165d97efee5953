mod common;

use common::{jacobi_svd, random_stochastic, sign_fix};
use ftcs_core::operator::{weighted_matrix, TransferMatrices};
use ftcs_core::sparse::CsrMatrix;
use ftcs_core::spectral::{minimax, top_k_singular};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn oracle_reconstructs_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let (s, u, v) = jacobi_svd(&a);
    for i in 0..5 {
        for j in 0..4 {
            let r: f64 = (0..4).map(|k| s[k] * u[k][i] * v[k][j]).sum();
            assert!((r - a[i][j]).abs() < 1e-12);
        }
    }
}

#[test]
fn stochastic_eight_by_ten_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = random_stochastic(&mut rng, 8, 10, 0.4);
    let tm = TransferMatrices::with_uniform(CsrMatrix::from_dense(&p)).unwrap();
    let m = weighted_matrix(&tm).unwrap();
    let ts = top_k_singular(&m, 3, 1e-12, 10_000, 0).unwrap();
    let (s, _, _) = jacobi_svd(&m.to_dense());
    assert!((s[0] - 1.0).abs() < 1e-12);
    for k in 0..3 {
        assert!(
            (ts[k].sigma - s[k]).abs() < 1e-8,
            "k={k}: {} vs {}",
            ts[k].sigma,
            s[k]
        );
    }
}

#[test]
fn fifty_random_matrices_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for case in 0..50 {
        let rows = rng.random_range(3..=50);
        let cols = rng.random_range(3..=50);
        let a: Vec<Vec<f64>> = if case % 2 == 0 {
            let p = random_stochastic(&mut rng, rows, cols, 0.3);
            let tm = TransferMatrices::with_uniform(CsrMatrix::from_dense(&p)).unwrap();
            weighted_matrix(&tm).unwrap().to_dense()
        } else {
            (0..rows)
                .map(|_| {
                    (0..cols)
                        .map(|_| {
                            if rng.random_bool(0.4) {
                                rng.random_range(-1.0..1.0)
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect()
        };
        let m = CsrMatrix::from_dense(&a);
        let ts = top_k_singular(&m, 3, 1e-11, 100_000, case).unwrap();
        // The oracle works on columns, so hand it A^T: its left vectors live on the rows of A.
        let at: Vec<Vec<f64>> = (0..cols)
            .map(|j| (0..rows).map(|i| a[i][j]).collect())
            .collect();
        let (s, vr, ul) = jacobi_svd(&at);
        for k in 0..3 {
            assert!(
                (ts[k].sigma - s[k]).abs() < 1e-8,
                "case {case} k={k}: {} vs {}",
                ts[k].sigma,
                s[k]
            );
            let gap_below = if k + 1 < s.len() {
                s[k] - s[k + 1]
            } else {
                f64::INFINITY
            };
            let gap_above = if k > 0 {
                s[k - 1] - s[k]
            } else {
                f64::INFINITY
            };
            if gap_below > 1e-6 && gap_above > 1e-6 && s[k] > 1e-6 {
                let (mut u, mut v) = (ul[k].clone(), vr[k].clone());
                sign_fix(&mut u, &mut v);
                assert!(max_diff(&u, &ts[k].u) < 1e-6, "case {case} k={k} u");
                assert!(max_diff(&v, &ts[k].v) < 1e-6, "case {case} k={k} v");
            }
            let (value, _) = minimax(&m, &ts[k].u).unwrap();
            assert!((value - ts[k].sigma).abs() < 1e-10);
            assert!(ts[k].sigma >= 0.0);
        }
        for i in 0..3 {
            for j in 0..i {
                let d: f64 = ts[i].u.iter().zip(&ts[j].u).map(|(x, y)| x * y).sum();
                assert!(d.abs() < 1e-8);
            }
        }
    }
}

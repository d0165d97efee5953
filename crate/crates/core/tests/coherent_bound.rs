mod common;

use common::{jacobi_svd, random_stochastic};
use ftcs_core::coherent::{
    atom_excess, coherence, extract, random_equal_mass_partition, singular_to_functions,
    split_correlation, ThresholdOptions,
};
use ftcs_core::operator::{weighted_matrix, TransferMatrices};
use ftcs_core::sparse::CsrMatrix;
use ftcs_core::spectral::top_k_singular;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Two noisy blocks coupled weakly, so the second singular value is simple.
fn blocky(rng: &mut ChaCha8Rng, n: usize, leak: f64) -> Vec<Vec<f64>> {
    let mut p = random_stochastic(rng, n, n, 0.5);
    let half = n / 2;
    for (i, row) in p.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if (i < half) != (j < half) {
                *v *= leak;
            }
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    p
}

/// Mixture of permutation matrices: block-preserving ones with total weight
/// `1 - leak`, unrestricted ones with weight `leak`. Rows and columns sum to
/// one, so `q` stays uniform.
fn doubly_stochastic_blocks(rng: &mut ChaCha8Rng, half: usize, leak: f64) -> Vec<Vec<f64>> {
    let n = 2 * half;
    let mut p = vec![vec![0.0; n]; n];
    let mut add = |perm: &[usize], w: f64| {
        for (i, &j) in perm.iter().enumerate() {
            p[i][j] += w;
        }
    };
    for _ in 0..4 {
        let mut lo: Vec<usize> = (0..half).collect();
        let mut hi: Vec<usize> = (half..n).collect();
        lo.shuffle(rng);
        hi.shuffle(rng);
        lo.extend(hi);
        add(&lo, (1.0 - leak) / 4.0);
        let mut any: Vec<usize> = (0..n).collect();
        any.shuffle(rng);
        add(&any, leak / 4.0);
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Any split, matched or not: the normalized two-valued correlation is at most sigma_2.
    #[test]
    fn split_correlation_never_exceeds_sigma2(seed in any::<u64>(), n in 6usize..24, leak in 0.01f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tm = TransferMatrices::with_uniform(CsrMatrix::from_dense(&blocky(&mut rng, n, leak))).unwrap();
        let m = weighted_matrix(&tm).unwrap();
        let ts = top_k_singular(&m, 2, 1e-12, 10_000, 0).unwrap();
        let sigma2 = ts[1].sigma;
        if let Ok(part) = extract(&tm, &ts, &ThresholdOptions::default()) {
            prop_assert!(split_correlation(&tm, &part.x_labels, &part.y_labels).unwrap() <= sigma2 + 1e-9);
            prop_assert!(part.rho <= 1.0 + sigma2 + atom_excess(&tm, &part).unwrap() + 1e-9);
            let swapped = part.swapped();
            let r = coherence(&tm, &swapped.x_labels, &swapped.y_labels).unwrap();
            prop_assert!((r - part.rho).abs() < 1e-14);
        }
        for _ in 0..20 {
            let part = random_equal_mass_partition(&tm, &mut rng).unwrap();
            prop_assert!(split_correlation(&tm, &part.x_labels, &part.y_labels).unwrap() <= sigma2 + 1e-9);
        }
    }

    /// With `q` uniform and equal cell counts the masses match exactly and rho itself obeys the bound.
    #[test]
    fn rho_never_exceeds_one_plus_sigma2_when_masses_match(seed in any::<u64>(), half in 3usize..12, leak in 0.01f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 * half;
        let tm = TransferMatrices::with_uniform(CsrMatrix::from_dense(&doubly_stochastic_blocks(&mut rng, half, leak))).unwrap();
        let m = weighted_matrix(&tm).unwrap();
        let sigma2 = top_k_singular(&m, 2, 1e-12, 10_000, 0).unwrap()[1].sigma;
        for _ in 0..50 {
            let mut x: Vec<u8> = (0..n).map(|i| if i < half { 1 } else { 2 }).collect();
            let mut y = x.clone();
            x.shuffle(&mut rng);
            y.shuffle(&mut rng);
            let rho = coherence(&tm, &x, &y).unwrap();
            prop_assert!(rho <= 1.0 + sigma2 + 1e-9, "rho {} sigma2 {}", rho, sigma2);
            prop_assert!((split_correlation(&tm, &x, &y).unwrap() - (rho - 1.0)).abs() < 1e-9);
        }
    }
}

#[test]
fn three_state_functions_match_dense_oracle() {
    let dense = vec![
        vec![0.8, 0.2, 0.0],
        vec![0.1, 0.8, 0.1],
        vec![0.0, 0.2, 0.8],
    ];
    let tm = TransferMatrices::with_uniform(CsrMatrix::from_dense(&dense)).unwrap();
    let m = weighted_matrix(&tm).unwrap();
    let ts = top_k_singular(&m, 2, 1e-13, 1000, 0).unwrap();
    let (f, g) = singular_to_functions(&ts[1], &tm.p, &tm.q).unwrap();
    let mt: Vec<Vec<f64>> = (0..3)
        .map(|j| (0..3).map(|i| m.to_dense()[i][j]).collect())
        .collect();
    let (s, v, u) = jacobi_svd(&mt);
    assert!((s[1] - ts[1].sigma).abs() < 1e-12);
    let sign = if u[1].iter().zip(&ts[1].u).map(|(a, b)| a * b).sum::<f64>() < 0.0 {
        -1.0
    } else {
        1.0
    };
    for i in 0..3 {
        assert!((f[i] - sign * u[1][i] / tm.p[i].sqrt()).abs() < 1e-8);
        assert!((g[i] - sign * v[1][i] / tm.q[i].sqrt()).abs() < 1e-8);
    }
}

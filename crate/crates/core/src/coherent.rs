//! Coherent pairs from the second singular triple.
//!
//! The singular vectors are unweighted into functions `f` on source boxes and
//! `g` on image boxes. Level sets `{f >= b}` are paired with the top-`g` image
//! boxes of matching mass, and `b` is chosen by a line search over quantiles.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::TransferMatrices;
use crate::spectral::SingularTriple;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentPartition {
    /// Threshold on `f`; source boxes with `f >= b` form `X1`.
    pub b: f64,
    /// Smallest `g` value admitted to `Y1`.
    pub c: f64,
    /// Label 1 or 2 per source box.
    pub x_labels: Vec<u8>,
    /// Label 1 or 2 per image box.
    pub y_labels: Vec<u8>,
    pub mu: [f64; 2],
    pub nu: [f64; 2],
    pub rho: f64,
}

impl CoherentPartition {
    /// Builds a partition record from labels, measuring masses and `rho`.
    pub fn from_labels(
        tm: &TransferMatrices,
        x_labels: Vec<u8>,
        y_labels: Vec<u8>,
        b: f64,
        c: f64,
    ) -> Result<Self> {
        let mu = masses(&tm.p, &x_labels)?;
        let nu = masses(&tm.q, &y_labels)?;
        let rho = coherence(tm, &x_labels, &y_labels)?;
        Ok(Self {
            b,
            c,
            x_labels,
            y_labels,
            mu,
            nu,
            rho,
        })
    }

    pub fn x_set(&self, label: u8) -> Vec<usize> {
        indices_with(&self.x_labels, label)
    }

    pub fn y_set(&self, label: u8) -> Vec<usize> {
        indices_with(&self.y_labels, label)
    }

    /// Largest `|mu(X_k) - nu(Y_k)|`.
    pub fn mass_mismatch(&self) -> f64 {
        (self.mu[0] - self.nu[0])
            .abs()
            .max((self.mu[1] - self.nu[1]).abs())
    }

    /// Exchanges the roles of the two cells.
    pub fn swapped(&self) -> Self {
        let flip = |l: &Vec<u8>| l.iter().map(|&x| 3 - x).collect::<Vec<u8>>();
        Self {
            x_labels: flip(&self.x_labels),
            y_labels: flip(&self.y_labels),
            mu: [self.mu[1], self.mu[0]],
            nu: [self.nu[1], self.nu[0]],
            ..self.clone()
        }
    }
}

fn indices_with(labels: &[u8], label: u8) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == label)
        .map(|(i, _)| i)
        .collect()
}

fn masses(weights: &[f64], labels: &[u8]) -> Result<[f64; 2]> {
    if weights.len() != labels.len() {
        return Err(Error::Dimension {
            expected: weights.len(),
            got: labels.len(),
        });
    }
    let mut m = [0.0; 2];
    for (&w, &l) in weights.iter().zip(labels) {
        match l {
            1 => m[0] += w,
            2 => m[1] += w,
            other => {
                return Err(Error::InvalidMeasure(format!(
                    "label {other} is not 1 or 2"
                )))
            }
        }
    }
    Ok(m)
}

/// `f_i = u_i / sqrt(p_i)` and `g_j = v_j / sqrt(q_j)`.
pub fn singular_to_functions(
    triple: &SingularTriple,
    p: &[f64],
    q: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((unweight(&triple.u, p)?, unweight(&triple.v, q)?))
}

fn unweight(vector: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if vector.len() != weights.len() {
        return Err(Error::Dimension {
            expected: weights.len(),
            got: vector.len(),
        });
    }
    vector
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(index, (&x, &w))| {
            if w > 0.0 {
                Ok(x / w.sqrt())
            } else if x == 0.0 {
                Ok(0.0)
            } else {
                Err(Error::ZeroWeight { index })
            }
        })
        .collect()
}

/// Two-term coherence `sum_k <L 1_{X_k}, 1_{Y_k}>_nu / mu(X_k)`, in `[0, 2]`.
pub fn coherence(tm: &TransferMatrices, x_labels: &[u8], y_labels: &[u8]) -> Result<f64> {
    let mu = masses(&tm.p, x_labels)?;
    if y_labels.len() != tm.n_image() {
        return Err(Error::Dimension {
            expected: tm.n_image(),
            got: y_labels.len(),
        });
    }
    for (k, &m) in mu.iter().enumerate() {
        if !(m > 0.0) {
            return Err(Error::EmptyCell(k + 1));
        }
    }
    let mut retained = [0.0; 2];
    for (i, &pi) in tm.p.iter().enumerate() {
        let lx = x_labels[i];
        let s: f64 = tm
            .transition
            .row(i)
            .filter(|&(j, _)| y_labels[j] == lx)
            .map(|(_, v)| v)
            .sum();
        retained[(lx - 1) as usize] += pi * s;
    }
    Ok(retained[0] / mu[0] + retained[1] / mu[1])
}

/// `<L psi_X, psi_Y>_nu` for the two-valued functions
/// `psi_X = sqrt(mu2 / mu1) 1_{X1} - sqrt(mu1 / mu2) 1_{X2}` and the same on `Y`
/// with `nu`. Both have mean zero and unit norm, so the value never exceeds
/// `sigma_2`; when `nu(Y_k) = mu(X_k)` it equals `rho - 1`.
pub fn split_correlation(tm: &TransferMatrices, x_labels: &[u8], y_labels: &[u8]) -> Result<f64> {
    let mu = masses(&tm.p, x_labels)?;
    let nu = masses(&tm.q, y_labels)?;
    for (k, (&a, &b)) in mu.iter().zip(&nu).enumerate() {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::EmptyCell(k + 1));
        }
    }
    let mut flux = [[0.0; 2]; 2];
    for (i, &pi) in tm.p.iter().enumerate() {
        let from = &mut flux[(x_labels[i] - 1) as usize];
        for (j, v) in tm.transition.row(i) {
            from[(y_labels[j] - 1) as usize] += pi * v;
        }
    }
    let psi_x = [(mu[1] / mu[0]).sqrt(), -(mu[0] / mu[1]).sqrt()];
    let psi_y = [(nu[1] / nu[0]).sqrt(), -(nu[0] / nu[1]).sqrt()];
    let mut total = 0.0;
    for k in 0..2 {
        for l in 0..2 {
            total += psi_x[k] * psi_y[l] * flux[k][l];
        }
    }
    Ok(total)
}

/// How far `rho - 1` exceeds the split correlation because `nu(Y_k)` cannot
/// equal `mu(X_k)` exactly on atoms. Zero for exactly matched masses.
pub fn atom_excess(tm: &TransferMatrices, part: &CoherentPartition) -> Result<f64> {
    let corr = split_correlation(tm, &part.x_labels, &part.y_labels)?;
    Ok((part.rho - 1.0 - corr).max(0.0))
}

/// Atomic resolution of mass matching: `2 (max p + max q)`.
pub fn mass_tol(tm: &TransferMatrices) -> f64 {
    let mp = tm.p.iter().copied().fold(0.0, f64::max);
    let mq = tm.q.iter().copied().fold(0.0, f64::max);
    2.0 * (mp + mq)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdOptions {
    pub n_candidates: usize,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self { n_candidates: 512 }
    }
}

/// Boxes ordered by decreasing `g` (ties by index) with cumulative `q`.
struct ImageRanking {
    order: Vec<usize>,
    rank: Vec<usize>,
    cumulative: Vec<f64>,
}

impl ImageRanking {
    fn new(g: &[f64], q: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..g.len()).collect();
        order.sort_by(|&a, &b| g[b].total_cmp(&g[a]).then(a.cmp(&b)));
        let mut rank = vec![0; g.len()];
        for (r, &j) in order.iter().enumerate() {
            rank[j] = r;
        }
        let mut acc = 0.0;
        let cumulative = order
            .iter()
            .map(|&j| {
                acc += q[j];
                acc
            })
            .collect();
        Self {
            order,
            rank,
            cumulative,
        }
    }

    /// Number of leading boxes whose mass is closest to `target`, keeping both cells nonempty.
    fn prefix_for(&self, target: f64) -> usize {
        let n = self.order.len();
        let mut best = (1, f64::INFINITY);
        let start = self.cumulative.partition_point(|&c| c < target);
        for r in start.saturating_sub(1)..=(start + 1) {
            let len = r + 1;
            if len < 1 || len >= n {
                continue;
            }
            let d = (self.cumulative[r] - target).abs();
            if d < best.1 {
                best = (len, d);
            }
        }
        if best.1.is_infinite() {
            best.0 = if start == 0 { 1 } else { n - 1 };
        }
        best.0
    }
}

/// Candidate thresholds: `mu`-weighted quantiles of `f`, excluding its minimum.
fn candidates(f: &[f64], p: &[f64], n_candidates: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..f.len()).collect();
    order.sort_by(|&a, &b| f[a].total_cmp(&f[b]).then(a.cmp(&b)));
    let min = f[order[0]];
    let total: f64 = p.iter().sum();
    let mut cum = Vec::with_capacity(order.len());
    let mut acc = 0.0;
    for &i in &order {
        acc += p[i];
        cum.push(acc);
    }
    let mut out: Vec<f64> = (1..=n_candidates)
        .map(|m| {
            let level = total * m as f64 / (n_candidates + 1) as f64;
            let pos = cum.partition_point(|&c| c < level).min(order.len() - 1);
            f[order[pos]]
        })
        .filter(|&b| b > min)
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Line search over `b`; each candidate pairs `{f >= b}` with the top-`g` image
/// boxes whose mass best matches. Returns the candidate maximizing `rho`.
pub fn threshold_search(
    tm: &TransferMatrices,
    f: &[f64],
    g: &[f64],
    n_candidates: usize,
) -> Result<CoherentPartition> {
    if f.len() != tm.n_source() {
        return Err(Error::Dimension {
            expected: tm.n_source(),
            got: f.len(),
        });
    }
    if g.len() != tm.n_image() {
        return Err(Error::Dimension {
            expected: tm.n_image(),
            got: g.len(),
        });
    }
    if n_candidates == 0 {
        return Err(Error::InvalidStudy(
            "at least one threshold candidate is required".into(),
        ));
    }
    if tm.n_image() < 2 {
        return Err(Error::ConstantFunction);
    }
    let bs = candidates(f, &tm.p, n_candidates);
    if bs.is_empty() {
        return Err(Error::ConstantFunction);
    }
    let ranking = ImageRanking::new(g, &tm.q);

    let scored: Vec<(f64, f64, f64, usize)> = bs
        .par_iter()
        .map(|&b| {
            let mut mu1 = 0.0;
            for (&fi, &pi) in f.iter().zip(&tm.p) {
                if fi >= b {
                    mu1 += pi;
                }
            }
            let len = ranking.prefix_for(mu1);
            let nu1 = ranking.cumulative[len - 1];
            let mut s11 = 0.0;
            for (i, (&fi, &pi)) in f.iter().zip(&tm.p).enumerate() {
                if fi >= b {
                    let s: f64 = tm
                        .transition
                        .row(i)
                        .filter(|&(j, _)| ranking.rank[j] < len)
                        .map(|(_, v)| v)
                        .sum();
                    s11 += pi * s;
                }
            }
            let s22 = 1.0 - mu1 - nu1 + s11;
            let rho = if mu1 > 0.0 && mu1 < 1.0 {
                s11 / mu1 + s22 / (1.0 - mu1)
            } else {
                f64::NEG_INFINITY
            };
            (rho, mu1, b, len)
        })
        .collect();

    let best = scored
        .iter()
        .copied()
        .reduce(|a, c| {
            let better = c.0 > a.0 || (c.0 == a.0 && (c.1 - 0.5).abs() < (a.1 - 0.5).abs());
            if better {
                c
            } else {
                a
            }
        })
        .expect("nonempty candidates");
    if !best.0.is_finite() {
        return Err(Error::ConstantFunction);
    }
    let (_, _, b, len) = best;
    let x_labels = f.iter().map(|&fi| if fi >= b { 1 } else { 2 }).collect();
    let y_labels = ranking
        .rank
        .iter()
        .map(|&r| if r < len { 1 } else { 2 })
        .collect();
    let c = g[ranking.order[len - 1]];
    CoherentPartition::from_labels(tm, x_labels, y_labels, b, c)
}

/// Thresholds the second triple, refusing a multiple `sigma_2`.
pub fn extract(
    tm: &TransferMatrices,
    triples: &[SingularTriple],
    opts: &ThresholdOptions,
) -> Result<CoherentPartition> {
    let second = triples.get(1).ok_or(Error::TooManyTriples {
        k: 2,
        min_dim: triples.len(),
    })?;
    if second.degenerate {
        let gap = triples[0].sigma - second.sigma;
        return Err(Error::DegenerateSingularValue { gap });
    }
    let (f, g) = singular_to_functions(second, &tm.p, &tm.q)?;
    threshold_search(tm, &f, &g, opts.n_candidates)
}

/// Outcome of checking `rho <= 1 + sigma_2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub rho: f64,
    pub sigma2: f64,
    /// `1 + sigma_2 - rho`; negative means a violation.
    pub slack: f64,
}

impl BoundCheck {
    pub fn new(rho: f64, sigma2: f64) -> Self {
        Self {
            rho,
            sigma2,
            slack: 1.0 + sigma2 - rho,
        }
    }

    pub fn holds(&self, allowance: f64) -> bool {
        self.slack >= -allowance
    }
}

/// A random partition with `mu(X1)` near one half and `nu(Y1)` matched to it.
pub fn random_equal_mass_partition<R: Rng + ?Sized>(
    tm: &TransferMatrices,
    rng: &mut R,
) -> Result<CoherentPartition> {
    let mut xs: Vec<usize> = (0..tm.n_source()).collect();
    xs.shuffle(rng);
    let mut x_labels = vec![2u8; xs.len()];
    let mut mu1 = 0.0;
    for &i in &xs {
        if mu1 >= 0.5 {
            break;
        }
        x_labels[i] = 1;
        mu1 += tm.p[i];
    }
    let mut ys: Vec<usize> = (0..tm.n_image()).collect();
    ys.shuffle(rng);
    let mut y_labels = vec![2u8; ys.len()];
    let mut nu1 = 0.0;
    for &j in &ys {
        if (nu1 + tm.q[j] - mu1).abs() > (nu1 - mu1).abs() {
            break;
        }
        y_labels[j] = 1;
        nu1 += tm.q[j];
    }
    CoherentPartition::from_labels(tm, x_labels, y_labels, f64::NAN, f64::NAN)
}

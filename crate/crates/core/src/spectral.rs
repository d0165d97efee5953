//! Leading singular triples of a sparse matrix.
//!
//! Thick-restart Lanczos on `A = M M^T` with full reorthogonalization. The
//! projected matrix is assembled from the orthogonalization coefficients, so
//! restarts with Ritz vectors need no bookkeeping beyond the residual vector.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{dot, norm, LinearOperator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularTriple {
    pub sigma: f64,
    /// Unit vector over the rows of `M` (source boxes).
    pub u: Vec<f64>,
    /// Unit vector over the columns of `M` (image boxes).
    pub v: Vec<f64>,
    /// `max(|M^T u - sigma v|, |M v - sigma u|)`.
    pub residual: f64,
    /// Products with `M M^T` spent by the solve.
    pub iterations: usize,
    /// Set when a neighbouring singular value lies within the cluster tolerance.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    pub k: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Krylov basis size; picked from `k` when absent.
    #[serde(default)]
    pub ncv: Option<usize>,
    #[serde(default = "default_cluster_tol")]
    pub cluster_tol: f64,
}

fn default_cluster_tol() -> f64 {
    1e-12
}

impl SolverOptions {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            tol: 1e-10,
            max_iter: 200_000,
            seed: 0,
            ncv: None,
            cluster_tol: default_cluster_tol(),
        }
    }
}

pub fn top_k_singular<A: LinearOperator + ?Sized>(
    m: &A,
    k: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<Vec<SingularTriple>> {
    top_k_singular_with(
        m,
        &SolverOptions {
            k,
            tol,
            max_iter,
            seed,
            ..SolverOptions::new(k)
        },
    )
}

struct Lanczos<'a, A: ?Sized> {
    m: &'a A,
    n: usize,
    rng: ChaCha8Rng,
    scratch: Vec<f64>,
    matvecs: usize,
}

impl<A: LinearOperator + ?Sized> Lanczos<'_, A> {
    fn apply(&mut self, x: &[f64]) -> Vec<f64> {
        self.matvecs += 1;
        let t = self
            .m
            .apply_transpose(x)
            .expect("dimensions fixed by construction");
        self.scratch.resize(self.n, 0.0);
        self.m.apply_into(&t, &mut self.scratch);
        self.scratch.clone()
    }

    /// Removes the span of `basis` from `w` twice, returning the coefficients.
    fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
        let mut h = vec![0.0; basis.len()];
        for _ in 0..2 {
            for (hi, b) in h.iter_mut().zip(basis) {
                let c = dot(b, w);
                *hi += c;
                w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= c * bi);
            }
        }
        h
    }

    /// A random unit vector orthogonal to `basis`, or `None` if the space is full.
    fn fresh(&mut self, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
        if basis.len() >= self.n {
            return None;
        }
        for _ in 0..8 {
            let mut w: Vec<f64> = (0..self.n)
                .map(|_| self.rng.random_range(-1.0..1.0))
                .collect();
            Self::orthogonalize(basis, &mut w);
            let nw = norm(&w);
            if nw > 1e-8 {
                w.iter_mut().for_each(|x| *x /= nw);
                return Some(w);
            }
        }
        None
    }
}

pub fn top_k_singular_with<A: LinearOperator + ?Sized>(
    m: &A,
    opts: &SolverOptions,
) -> Result<Vec<SingularTriple>> {
    let n = m.rows();
    let min_dim = n.min(m.cols());
    let k = opts.k;
    if k == 0 || k > min_dim {
        return Err(Error::TooManyTriples { k, min_dim });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidSolver(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let nev = (k + 1).min(min_dim);
    let ncv = opts
        .ncv
        .unwrap_or((2 * nev + 10).max(20))
        .max(nev + 1)
        .min(n);
    let keep = ((nev + ncv) / 2).clamp(nev.min(ncv - 1).max(1), (ncv - 1).max(1));

    let mut lz = Lanczos {
        m,
        n,
        rng: ChaCha8Rng::seed_from_u64(opts.seed),
        scratch: Vec::new(),
        matvecs: 0,
    };
    let mut basis: Vec<Vec<f64>> = vec![lz.fresh(&[]).expect("nonempty space")];
    let mut h = DMatrix::<f64>::zeros(ncv, ncv);
    let mut done = 0usize;
    let mut scale = 0.0f64;

    loop {
        // Expand to a full basis; `resid` couples the last column to the rest of the space.
        let mut resid: Option<(Vec<f64>, f64)> = None;
        while done < basis.len() {
            let j = done;
            let mut w = lz.apply(&basis[j]);
            let coeffs = Lanczos::<A>::orthogonalize(&basis, &mut w);
            for (i, &c) in coeffs.iter().enumerate() {
                h[(i, j)] = c;
                h[(j, i)] = c;
            }
            scale = scale.max(coeffs[j].abs());
            done += 1;
            let beta = norm(&w);
            let broke = beta <= 1e-13 * scale.max(f64::MIN_POSITIVE) || basis.len() == n;
            if done < ncv {
                if broke {
                    if let Some(fresh) = lz.fresh(&basis) {
                        basis.push(fresh);
                    }
                } else {
                    w.iter_mut().for_each(|x| *x /= beta);
                    basis.push(w);
                }
            } else if broke {
                resid = lz.fresh(&basis).map(|r| (r, 0.0));
            } else {
                w.iter_mut().for_each(|x| *x /= beta);
                resid = Some((w, beta));
            }
        }
        let s = done;
        let eig = SymmetricEigen::new(h.view((0, 0), (s, s)).into_owned());
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let beta = resid.as_ref().map_or(0.0, |r| r.1);
        let estimate = |i: usize| {
            let col = order[i];
            (beta * eig.eigenvectors[(s - 1, col)]).abs() / theta[i].sqrt().max(1e-150)
        };
        let worst = (0..k.min(s)).map(estimate).fold(0.0, f64::max);
        let exhausted = resid.is_none();

        if s >= k && (worst <= 0.1 * opts.tol || exhausted) {
            let ritz = |i: usize| -> Vec<f64> {
                let col = order[i];
                let mut y = vec![0.0; n];
                for (t, b) in basis.iter().take(s).enumerate() {
                    let c = eig.eigenvectors[(t, col)];
                    y.iter_mut().zip(b).for_each(|(yi, bi)| *yi += c * bi);
                }
                y
            };
            let mut triples = Vec::with_capacity(k);
            let mut vs: Vec<Vec<f64>> = Vec::with_capacity(k);
            for i in 0..k {
                let t = finish_triple(m, ritz(i), &vs, &mut lz)?;
                vs.push(t.v.clone());
                triples.push(t);
            }
            let worst_true = triples.iter().map(|t| t.residual).fold(0.0, f64::max);
            if worst_true <= opts.tol || exhausted {
                let mut sigmas: Vec<f64> = triples.iter().map(|t| t.sigma).collect();
                if nev > k && s > k {
                    sigmas.push(theta[k].sqrt());
                }
                for (i, t) in triples.iter_mut().enumerate() {
                    t.iterations = lz.matvecs;
                    let below = i > 0 && (sigmas[i - 1] - sigmas[i]).abs() < opts.cluster_tol;
                    let above = i + 1 < sigmas.len()
                        && (sigmas[i] - sigmas[i + 1]).abs() < opts.cluster_tol;
                    t.degenerate = below || above;
                }
                if worst_true > opts.tol {
                    return Err(Error::NoConvergence {
                        iterations: lz.matvecs,
                        residual: worst_true,
                    });
                }
                return Ok(triples);
            }
        }
        if lz.matvecs >= opts.max_iter {
            return Err(Error::NoConvergence {
                iterations: lz.matvecs,
                residual: worst,
            });
        }

        // Thick restart: keep the leading Ritz vectors plus the residual direction.
        let l = keep.min(s);
        let mut kept: Vec<Vec<f64>> = Vec::with_capacity(ncv);
        for &col in order.iter().take(l) {
            let mut y = vec![0.0; n];
            for (t, b) in basis.iter().take(s).enumerate() {
                let c = eig.eigenvectors[(t, col)];
                y.iter_mut().zip(b).for_each(|(yi, bi)| *yi += c * bi);
            }
            kept.push(y);
        }
        h.fill(0.0);
        for (i, &t) in theta.iter().take(l).enumerate() {
            h[(i, i)] = t;
        }
        let (r, _) = resid.expect("not exhausted");
        kept.push(r);
        basis = kept;
        done = l;
    }
}

fn finish_triple<A: LinearOperator + ?Sized>(
    m: &A,
    mut u: Vec<f64>,
    previous_v: &[Vec<f64>],
    lz: &mut Lanczos<A>,
) -> Result<SingularTriple> {
    let nu = norm(&u);
    u.iter_mut().for_each(|x| *x /= nu);
    let mut t = m.apply_transpose(&u)?;
    let sigma = norm(&t);
    let v = if sigma > 1e-300 {
        t.iter_mut().for_each(|x| *x /= sigma);
        t
    } else {
        // Null direction: any unit vector orthogonal to the earlier right vectors.
        let mut w: Vec<f64> = (0..m.cols())
            .map(|_| lz.rng.random_range(-1.0..1.0))
            .collect();
        Lanczos::<A>::orthogonalize(previous_v, &mut w);
        let nw = norm(&w);
        w.iter_mut().for_each(|x| *x /= nw);
        w
    };
    let mut triple = SingularTriple {
        sigma,
        u,
        v,
        residual: 0.0,
        iterations: 0,
        degenerate: false,
    };
    fix_sign(&mut triple);
    triple.residual = residual(m, &triple)?;
    Ok(triple)
}

/// Flips `(u, v)` so the largest-magnitude entry of `u` is positive.
pub fn fix_sign(t: &mut SingularTriple) {
    let lead =
        t.u.iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (i, &x)| {
                if x.abs() > acc.1 {
                    (i, x.abs())
                } else {
                    acc
                }
            })
            .0;
    if t.u.get(lead).is_some_and(|&x| x < 0.0) {
        t.u.iter_mut().for_each(|x| *x = -*x);
        t.v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// `max(|M^T u - sigma v|, |M v - sigma u|)` for a candidate triple.
pub fn residual<A: LinearOperator + ?Sized>(m: &A, t: &SingularTriple) -> Result<f64> {
    let mtu = m.apply_transpose(&t.u)?;
    let mv = m.apply(&t.v)?;
    let a: Vec<f64> = mtu.iter().zip(&t.v).map(|(x, y)| x - t.sigma * y).collect();
    let b: Vec<f64> = mv.iter().zip(&t.u).map(|(x, y)| x - t.sigma * y).collect();
    Ok(norm(&a).max(norm(&b)))
}

/// Value and maximizer of `max_{|y|=1} <M^T u, y>`.
pub fn minimax<A: LinearOperator + ?Sized>(m: &A, u: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut y = m.apply_transpose(u)?;
    let value = norm(&y);
    if value > 0.0 {
        y.iter_mut().for_each(|x| *x /= value);
    }
    Ok((value, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CsrMatrix;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let m = CsrMatrix::identity(6);
        let ts = top_k_singular(&m, 6, 1e-12, 1000, 1).unwrap();
        assert_eq!(ts.len(), 6);
        for (i, t) in ts.iter().enumerate() {
            assert!((t.sigma - 1.0).abs() < 1e-12);
            assert!(t.residual <= 1e-12);
            assert!(t.degenerate);
            for s in &ts[..i] {
                assert!(dot(&s.u, &t.u).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn diagonal_spectrum() {
        let m = CsrMatrix::from_dense(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.5, 0.0],
            vec![0.0, 0.0, 0.25],
        ]);
        let ts = top_k_singular(&m, 2, 1e-12, 1000, 7).unwrap();
        assert!((ts[0].sigma - 1.0).abs() < 1e-12 && (ts[1].sigma - 0.5).abs() < 1e-12);
        assert!(max_abs_diff(&ts[0].u, &[1.0, 0.0, 0.0]) < 1e-10);
        assert!(max_abs_diff(&ts[1].u, &[0.0, 1.0, 0.0]) < 1e-10);
        assert!(max_abs_diff(&ts[1].v, &[0.0, 1.0, 0.0]) < 1e-10);
        assert!(!ts[0].degenerate && !ts[1].degenerate);
    }

    #[test]
    fn restarts_on_long_chain() {
        // A 400-state lazy walk forces several restarts with a 20-vector basis.
        let n = 400;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, 0.5));
            trip.push((i, (i + 1) % n, 0.3));
            trip.push((i, (i + n - 1) % n, 0.2));
        }
        let m = CsrMatrix::from_triplets(n, n, trip).unwrap();
        let ts = top_k_singular(&m, 3, 1e-10, 50_000, 3).unwrap();
        assert!((ts[0].sigma - 1.0).abs() < 1e-10);
        for w in ts.windows(2) {
            assert!(w[0].sigma >= w[1].sigma);
        }
        for t in &ts {
            assert!(t.residual <= 1e-10);
            let (value, y) = minimax(&m, &t.u).unwrap();
            assert!((value - t.sigma).abs() <= 1e-10);
            assert!(max_abs_diff(&y, &t.v) < 1e-8);
        }
        assert!(ts[2].iterations > 20);
    }

    #[test]
    fn sign_convention_and_determinism() {
        let m = CsrMatrix::from_dense(&[
            vec![0.2, 0.9, 0.1],
            vec![0.6, 0.1, 0.3],
            vec![0.3, 0.3, 0.4],
        ]);
        let a = top_k_singular(&m, 2, 1e-12, 1000, 11).unwrap();
        let b = top_k_singular(&m, 2, 1e-12, 1000, 11).unwrap();
        assert_eq!(a, b);
        for t in &a {
            let lead =
                t.u.iter()
                    .cloned()
                    .fold(0.0, |m: f64, x| if x.abs() > m.abs() { x } else { m });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn rank_deficient_matrix() {
        let m = CsrMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![0.0, 0.0]]);
        let ts = top_k_singular(&m, 2, 1e-12, 1000, 0).unwrap();
        assert!((ts[0].sigma - 2.0).abs() < 1e-12);
        assert!(ts[1].sigma.abs() < 1e-12);
        assert!((norm(&ts[1].v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_requests() {
        let m = CsrMatrix::identity(3);
        assert!(matches!(
            top_k_singular(&m, 4, 1e-10, 100, 0),
            Err(Error::TooManyTriples { .. })
        ));
        assert!(matches!(
            top_k_singular(&m, 0, 1e-10, 100, 0),
            Err(Error::TooManyTriples { .. })
        ));
        assert!(top_k_singular(&m, 1, 0.0, 100, 0).is_err());
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let n = 300;
        let trip: Vec<_> = (0..n).map(|i| (i, i, 1.0 - i as f64 * 1e-6)).collect();
        let m = CsrMatrix::from_triplets(n, n, trip).unwrap();
        match top_k_singular(&m, 3, 1e-14, 25, 0) {
            Err(Error::NoConvergence {
                iterations,
                residual,
            }) => {
                assert!(iterations >= 25);
                assert!(residual.is_finite());
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

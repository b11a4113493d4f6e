//! Block locally optimal preconditioned conjugate gradient eigensolver for
//! the smallest eigenpairs of a sparse SPD matrix.
//!
//! Each iteration performs Rayleigh-Ritz on `span[X, W, P]`, with `W` the
//! preconditioned residuals of the unconverged columns and `P` the previous
//! search directions. The basis is orthonormalized by two-pass Gram-Schmidt;
//! nearly dependent columns are dropped. Converged columns stop contributing
//! residual directions (soft locking) but stay in the Ritz basis, so the
//! remaining columns are kept orthogonal to them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::cg::Preconditioner;
use crate::linalg::csr::CsrMatrix;
use crate::linalg::dense::{symmetric_eigen, DenseMatrix};
use crate::linalg::{axpy, dot, norm, scale};
use crate::scalar::Real;

/// Problems up to this size are diagonalized densely.
const DENSE_LIMIT: usize = 200;

#[derive(Clone, Copy, Debug)]
pub struct LobpcgParams<T> {
    /// Relative residual `||A x - θ x|| / (θ ||x||)` required for every requested pair.
    pub tol: T,
    pub max_iter: usize,
    /// Seed of the random start block.
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct EigenResult<T> {
    /// Ascending.
    pub values: Vec<T>,
    /// Unit Euclidean norm, mutually orthogonal.
    pub vectors: Vec<Vec<T>>,
    pub residuals: Vec<T>,
    pub iterations: usize,
}

/// The `k` smallest eigenpairs of `a`. `initial` columns, if given, seed the
/// start block (warm start); missing columns are random.
pub fn lobpcg<T: Real>(
    a: &CsrMatrix<T>,
    precond: &dyn Preconditioner<T>,
    k: usize,
    initial: Option<&[Vec<T>]>,
    params: &LobpcgParams<T>,
) -> Result<EigenResult<T>> {
    let n = a.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!(
            "requested {k} eigenpairs of a {n}x{n} operator"
        )));
    }
    if n <= DENSE_LIMIT {
        return Ok(dense_eigs(a, k));
    }
    let block = (k + (k / 2).max(2)).min(n / 3);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let random_column = |rng: &mut ChaCha8Rng| -> Vec<T> {
        (0..n).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect()
    };

    let mut x: Vec<Vec<T>> = Vec::with_capacity(block);
    if let Some(init) = initial {
        for col in init.iter().take(block) {
            if col.len() == n {
                x.push(col.clone());
            }
        }
    }
    let drop_tol = T::epsilon().sqrt() * T::lit(1e-2);
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(block);
    for col in x.drain(..) {
        push_orthonormal(&mut basis, col, drop_tol);
    }
    let mut attempts = 0;
    while basis.len() < block {
        let col = random_column(&mut rng);
        push_orthonormal(&mut basis, col, drop_tol);
        attempts += 1;
        if attempts > 10 * block {
            return Err(Error::InvalidInput(
                "could not build an independent start block".into(),
            ));
        }
    }

    // Initial Rayleigh-Ritz on X alone.
    let (mut theta, mut x, mut ax) = rayleigh_ritz(a, &basis, block, None);
    let mut p: Vec<Vec<T>> = Vec::new();
    let mut residuals = vec![T::infinity(); block];
    let mut r = vec![vec![T::zero(); n]; block];

    for iteration in 0..=params.max_iter {
        for c in 0..block {
            r[c].copy_from_slice(&ax[c]);
            axpy(-theta[c], &x[c], &mut r[c]);
            let denom = theta[c].abs().max(T::min_positive_value());
            residuals[c] = norm(&r[c]) / denom;
        }
        if residuals[..k].iter().all(|&res| res <= params.tol) {
            return Ok(EigenResult {
                values: theta[..k].to_vec(),
                vectors: x.into_iter().take(k).collect(),
                residuals: residuals[..k].to_vec(),
                iterations: iteration,
            });
        }
        if iteration == params.max_iter {
            break;
        }

        let mut s: Vec<Vec<T>> = x.clone();
        for c in 0..block {
            if residuals[c] <= params.tol {
                continue;
            }
            let mut w = vec![T::zero(); n];
            precond.apply(&r[c], &mut w);
            push_orthonormal(&mut s, w, drop_tol);
        }
        for col in p.drain(..) {
            push_orthonormal(&mut s, col, drop_tol);
        }
        if s.len() == block {
            break;
        }
        (theta, x, ax) = rayleigh_ritz(a, &s, block, Some(&mut p));
    }
    Err(Error::EigenNonConvergence {
        iterations: params.max_iter,
        residuals: residuals[..k].iter().map(|v| v.as_f64()).collect(),
    })
}

/// Orthogonalizes `v` against `basis` (two passes) and appends it if enough
/// of it survives.
fn push_orthonormal<T: Real>(basis: &mut Vec<Vec<T>>, mut v: Vec<T>, drop_tol: T) -> bool {
    let start = norm(&v);
    if !(start > T::zero()) || !start.is_finite() {
        return false;
    }
    scale(T::one() / start, &mut v);
    for _ in 0..2 {
        for q in basis.iter() {
            let c = dot(q, &v);
            axpy(-c, q, &mut v);
        }
    }
    let remaining = norm(&v);
    if remaining <= drop_tol {
        return false;
    }
    scale(T::one() / remaining, &mut v);
    basis.push(v);
    true
}

type RitzBlock<T> = (Vec<T>, Vec<Vec<T>>, Vec<Vec<T>>);

/// Rayleigh-Ritz on the orthonormal columns `s`; returns the `block` lowest
/// Ritz values, vectors and their images under `a`. When `directions` is
/// given it receives the part of each Ritz vector outside the first `block`
/// columns of `s` (the new search directions).
fn rayleigh_ritz<T: Real>(
    a: &CsrMatrix<T>,
    s: &[Vec<T>],
    block: usize,
    directions: Option<&mut Vec<Vec<T>>>,
) -> RitzBlock<T> {
    let n = a.nrows();
    let q = s.len();
    let a_s: Vec<Vec<T>> = s
        .iter()
        .map(|col| {
            let mut out = vec![T::zero(); n];
            a.mul_vec(col, &mut out);
            out
        })
        .collect();
    let mut g = DenseMatrix::zeros(q);
    for i in 0..q {
        for j in i..q {
            let v = dot(&s[i], &a_s[j]);
            g.set(i, j, v);
            g.set(j, i, v);
        }
    }
    let (values, y) = symmetric_eigen(&g);
    let combine = |cols: &[Vec<T>], c: usize, from: usize| -> Vec<T> {
        let mut out = vec![T::zero(); n];
        for (j, col) in cols.iter().enumerate().skip(from) {
            let coef = y.get(j, c);
            if coef != T::zero() {
                axpy(coef, col, &mut out);
            }
        }
        out
    };
    let x: Vec<Vec<T>> = (0..block).map(|c| combine(s, c, 0)).collect();
    let ax: Vec<Vec<T>> = (0..block).map(|c| combine(&a_s, c, 0)).collect();
    if let Some(p) = directions {
        p.clear();
        if q > block {
            p.extend((0..block).map(|c| combine(s, c, block)));
        }
    }
    (values[..block].to_vec(), x, ax)
}

fn dense_eigs<T: Real>(a: &CsrMatrix<T>, k: usize) -> EigenResult<T> {
    let n = a.nrows();
    let dense = DenseMatrix {
        n,
        data: a.to_dense(),
    };
    let (values, vectors) = symmetric_eigen(&dense);
    let mut out_vectors = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for c in 0..k {
        let v: Vec<T> = (0..n).map(|i| vectors.get(i, c)).collect();
        let mut av = vec![T::zero(); n];
        a.mul_vec(&v, &mut av);
        axpy(-values[c], &v, &mut av);
        residuals.push(norm(&av) / values[c].abs().max(T::min_positive_value()));
        out_vectors.push(v);
    }
    EigenResult {
        values: values[..k].to_vec(),
        vectors: out_vectors,
        residuals,
        iterations: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cg::Jacobi;

    fn laplacian_2d(n: usize) -> CsrMatrix<f64> {
        let rows = (0..n * n)
            .map(|c| {
                let (i, j) = (c % n, c / n);
                let mut row = vec![(c, 4.0)];
                if i > 0 {
                    row.push((c - 1, -1.0));
                }
                if i + 1 < n {
                    row.push((c + 1, -1.0));
                }
                if j > 0 {
                    row.push((c - n, -1.0));
                }
                if j + 1 < n {
                    row.push((c + n, -1.0));
                }
                row
            })
            .collect();
        CsrMatrix::from_rows(n * n, rows)
    }

    fn exact(n: usize, p: usize, q: usize) -> f64 {
        let s = |m: usize| {
            let t = (m as f64) * std::f64::consts::PI / (2.0 * (n as f64 + 1.0));
            4.0 * t.sin().powi(2)
        };
        s(p) + s(q)
    }

    #[test]
    fn matches_separable_spectrum() {
        let n = 40;
        let a = laplacian_2d(n);
        let params = LobpcgParams {
            tol: 1e-9,
            max_iter: 2000,
            seed: 7,
        };
        let res = lobpcg(&a, &Jacobi::new(&a), 4, None, &params).unwrap();
        let expect = [exact(n, 1, 1), exact(n, 1, 2), exact(n, 1, 2), exact(n, 2, 2)];
        for (got, want) in res.values.iter().zip(expect) {
            assert!((got - want).abs() < 1e-8 * want, "{got} vs {want}");
        }
        for i in 0..4 {
            for j in 0..4 {
                let d = dot(&res.vectors[i], &res.vectors[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((d - target).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn warm_start_converges_immediately() {
        let n = 30;
        let a = laplacian_2d(n);
        let params = LobpcgParams {
            tol: 1e-9,
            max_iter: 2000,
            seed: 1,
        };
        let cold = lobpcg(&a, &Jacobi::new(&a), 2, None, &params).unwrap();
        let warm = lobpcg(&a, &Jacobi::new(&a), 2, Some(&cold.vectors), &params).unwrap();
        assert!(warm.iterations < cold.iterations);
        assert!((warm.values[0] - cold.values[0]).abs() < 1e-10);
    }

    #[test]
    fn small_problems_go_dense() {
        let a = laplacian_2d(6);
        let params = LobpcgParams {
            tol: 1e-10,
            max_iter: 10,
            seed: 0,
        };
        let res = lobpcg(&a, &Jacobi::new(&a), 3, None, &params).unwrap();
        assert!((res.values[0] - exact(6, 1, 1)).abs() < 1e-12);
        assert!(res.residuals.iter().all(|&r| r < 1e-10));
    }
}

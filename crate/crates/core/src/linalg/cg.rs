use crate::linalg::csr::CsrMatrix;
use crate::linalg::{axpy, dot, norm};
use crate::scalar::Real;

/// Symmetric positive definite approximation of `A^{-1}`.
pub trait Preconditioner<T>: Send + Sync {
    /// `z = M^{-1} r`.
    fn apply(&self, r: &[T], z: &mut [T]);
}

/// Diagonal scaling.
pub struct Jacobi<T> {
    inv_diag: Vec<T>,
}

impl<T: Real> Jacobi<T> {
    pub fn new(a: &CsrMatrix<T>) -> Self {
        let inv_diag = a
            .diagonal()
            .into_iter()
            .map(|d| if d != T::zero() { T::one() / d } else { T::one() })
            .collect();
        Self { inv_diag }
    }
}

impl<T: Real> Preconditioner<T> for Jacobi<T> {
    fn apply(&self, r: &[T], z: &mut [T]) {
        for ((zi, &ri), &d) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * d;
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CgOutcome<T> {
    pub iterations: usize,
    /// `||b - A x|| / ||b||` at exit.
    pub relative_residual: T,
    pub converged: bool,
}

/// Preconditioned conjugate gradients on `A x = b`, starting from the content of `x`.
///
/// Convergence is judged on the true residual; the recurrence is restarted
/// when it drifts below the tolerance before the true residual does.
pub fn pcg<T: Real>(
    a: &CsrMatrix<T>,
    precond: &dyn Preconditioner<T>,
    b: &[T],
    x: &mut [T],
    tol: T,
    max_iter: usize,
) -> CgOutcome<T> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return CgOutcome {
            iterations: 0,
            relative_residual: T::zero(),
            converged: true,
        };
    }
    let mut r = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut ap = vec![T::zero(); n];
    let mut it = 0;
    loop {
        a.mul_vec(x, &mut r);
        for (ri, &bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let res = norm(&r) / bnorm;
        if res <= tol || it >= max_iter {
            return CgOutcome {
                iterations: it,
                relative_residual: res,
                converged: res <= tol,
            };
        }
        precond.apply(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        let start = it;
        while it < max_iter {
            a.mul_vec(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > T::zero()) {
                break;
            }
            let alpha = rz / pap;
            axpy(alpha, &p, x);
            axpy(-alpha, &ap, &mut r);
            it += 1;
            if norm(&r) / bnorm <= tol {
                break;
            }
            precond.apply(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, &zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        if it == start {
            // Breakdown without progress.
            a.mul_vec(x, &mut r);
            for (ri, &bi) in r.iter_mut().zip(b) {
                *ri = bi - *ri;
            }
            let res = norm(&r) / bnorm;
            return CgOutcome {
                iterations: it,
                relative_residual: res,
                converged: res <= tol,
            };
        }
    }
}

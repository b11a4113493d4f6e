use crate::error::{Error, Result};
use crate::linalg::lobpcg::{lobpcg, LobpcgParams};
use crate::pde::operator::LaplaceOperator;
use crate::scalar::Real;

/// Largest number of eigenpairs a single call may request.
pub const MAX_EIGENPAIRS: usize = 20;

/// One eigenpair of a discrete Dirichlet Laplacian.
#[derive(Clone, Debug)]
pub struct EigenPair<T> {
    pub lambda: T,
    /// Full-grid eigenfunction, normalized so that `h^dim Σ u^2 = 1`, with `Σ u >= 0`.
    pub u: Vec<T>,
    /// 1-based position in the spectrum.
    pub index: usize,
    /// `||A u - λ u|| / (λ ||u||)`.
    pub residual: T,
}

/// The `k` smallest eigenpairs, in nondecreasing order.
pub fn eigs_smallest<T: Real>(op: &LaplaceOperator<T>, k: usize) -> Result<Vec<EigenPair<T>>> {
    eigs_smallest_from(op, k, None)
}

/// As [`eigs_smallest`], starting from the eigenfunctions of `warm` (typically
/// the pairs of a nearby operator on the same grid).
pub fn eigs_smallest_from<T: Real>(
    op: &LaplaceOperator<T>,
    k: usize,
    warm: Option<&[EigenPair<T>]>,
) -> Result<Vec<EigenPair<T>>> {
    if k == 0 || k > MAX_EIGENPAIRS {
        return Err(Error::InvalidInput(format!(
            "number of eigenpairs must be in 1..={MAX_EIGENPAIRS}, got {k}"
        )));
    }
    if k > op.unknown_count() {
        return Err(Error::InvalidInput(format!(
            "requested {k} eigenpairs but the operator has {} unknowns",
            op.unknown_count()
        )));
    }
    let initial: Option<Vec<Vec<T>>> =
        warm.map(|pairs| pairs.iter().map(|p| op.gather(&p.u)).collect());
    let config = op.config();
    let params = LobpcgParams {
        tol: config.eig_tol,
        max_iter: config.eig_max_iter,
        seed: config.seed,
    };
    let result = lobpcg(
        op.matrix(),
        op.preconditioner(),
        k,
        initial.as_deref(),
        &params,
    )?;
    let scale = T::one() / op.domain().cell_volume().sqrt();
    Ok(result
        .values
        .into_iter()
        .zip(result.vectors)
        .zip(result.residuals)
        .enumerate()
        .map(|(i, ((lambda, x), residual))| {
            let sign = orientation(&x);
            let u = op.scatter(&x.iter().map(|&v| v * scale * sign).collect::<Vec<_>>());
            EigenPair {
                lambda,
                u,
                index: i + 1,
                residual,
            }
        })
        .collect())
}

/// `±1` making the vector's sum nonnegative, falling back to its first
/// significant entry when the sum cancels.
fn orientation<T: Real>(x: &[T]) -> T {
    let sum: T = x.iter().copied().sum();
    let amax = x.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let threshold = amax * T::lit(1e-6) * T::of_usize(x.len()).sqrt();
    if sum.abs() > threshold {
        return sum.signum();
    }
    x.iter()
        .find(|v| v.abs() > amax * T::lit(1e-3))
        .map_or(T::one(), |v| v.signum())
}

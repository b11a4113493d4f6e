//! Geometric multigrid V-cycle for cell-centered operators on (masked) boxes.
//!
//! Coarse cells aggregate 2^dim fine cells. Prolongation is cell-centered
//! (bi/tri)linear interpolation restricted to active unknowns, restriction is
//! its transpose and coarse operators are Galerkin products, so masks,
//! removed rows and penalization potentials are inherited without special
//! cases. Smoothing is symmetric Gauss-Seidel, which keeps the V-cycle a
//! symmetric positive definite preconditioner.

use crate::linalg::cg::Preconditioner;
use crate::linalg::csr::CsrMatrix;
use crate::linalg::dense::{cholesky, cholesky_solve, DenseMatrix};
use crate::scalar::Real;

/// Stop coarsening once a level has at most this many unknowns.
const COARSEST_SIZE: usize = 400;
const MAX_LEVELS: usize = 16;

/// Active cells of a box level: `cells[a]` is the box index of unknown `a`.
#[derive(Clone, Debug)]
pub struct LevelGeometry {
    pub dim: usize,
    pub shape: [usize; 3],
    pub cells: Vec<usize>,
}

impl LevelGeometry {
    fn lookup(&self) -> Vec<usize> {
        let mut map = vec![usize::MAX; self.shape[0] * self.shape[1] * self.shape[2]];
        for (a, &c) in self.cells.iter().enumerate() {
            map[c] = a;
        }
        map
    }

    fn coarsen(&self) -> LevelGeometry {
        let mut shape = [1usize; 3];
        for axis in 0..self.dim {
            shape[axis] = self.shape[axis].div_ceil(2);
        }
        let mut flag = vec![false; shape[0] * shape[1] * shape[2]];
        for &c in &self.cells {
            let ijk = unflatten(c, self.shape);
            let cc = [ijk[0] / 2, ijk[1] / 2, ijk[2] / 2];
            flag[flatten(cc, shape)] = true;
        }
        let cells = flag
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect();
        LevelGeometry {
            dim: self.dim,
            shape,
            cells,
        }
    }
}

#[inline]
fn flatten(ijk: [usize; 3], shape: [usize; 3]) -> usize {
    ijk[0] + shape[0] * (ijk[1] + shape[1] * ijk[2])
}

#[inline]
fn unflatten(idx: usize, shape: [usize; 3]) -> [usize; 3] {
    let i = idx % shape[0];
    let rest = idx / shape[0];
    [i, rest % shape[1], rest / shape[1]]
}

/// Interpolation weights from the coarse axis cells onto fine axis cell `i`.
fn axis_weights<T: Real>(i: usize, n_coarse: usize, used: bool) -> [(usize, T); 2] {
    if !used {
        return [(0, T::one()), (usize::MAX, T::zero())];
    }
    let c = i / 2;
    let near = T::lit(0.75);
    let far = T::lit(0.25);
    let other = if i % 2 == 0 {
        c.checked_sub(1)
    } else {
        (c + 1 < n_coarse).then_some(c + 1)
    };
    [(c, near), (other.unwrap_or(usize::MAX), far)]
}

fn prolongation<T: Real>(fine: &LevelGeometry, coarse: &LevelGeometry) -> CsrMatrix<T> {
    let lookup = coarse.lookup();
    let rows = fine
        .cells
        .iter()
        .map(|&c| {
            let ijk = unflatten(c, fine.shape);
            let wx = axis_weights::<T>(ijk[0], coarse.shape[0], fine.dim > 0);
            let wy = axis_weights::<T>(ijk[1], coarse.shape[1], fine.dim > 1);
            let wz = axis_weights::<T>(ijk[2], coarse.shape[2], fine.dim > 2);
            let mut row = Vec::with_capacity(8);
            for &(x, a) in &wx {
                for &(y, b) in &wy {
                    for &(z, e) in &wz {
                        if x == usize::MAX || y == usize::MAX || z == usize::MAX {
                            continue;
                        }
                        let w = a * b * e;
                        if w == T::zero() {
                            continue;
                        }
                        let target = lookup[flatten([x, y, z], coarse.shape)];
                        if target != usize::MAX {
                            row.push((target, w));
                        }
                    }
                }
            }
            row
        })
        .collect();
    CsrMatrix::from_rows(coarse.cells.len(), rows)
}

struct Level<T> {
    a: CsrMatrix<T>,
    inv_diag: Vec<T>,
    /// Maps the next coarser level onto this one.
    prolong: Option<CsrMatrix<T>>,
    restrict: Option<CsrMatrix<T>>,
}

enum CoarseSolver<T> {
    Direct(DenseMatrix<T>),
    Smoother,
}

pub struct Multigrid<T> {
    levels: Vec<Level<T>>,
    coarse: CoarseSolver<T>,
}

impl<T: Real> Multigrid<T> {
    pub fn new(a: CsrMatrix<T>, geometry: LevelGeometry) -> Self {
        let mut levels = Vec::new();
        let mut a = a;
        let mut geom = geometry;
        loop {
            let inv_diag = inverse_diagonal(&a);
            let n = a.nrows();
            if n <= COARSEST_SIZE || levels.len() + 1 >= MAX_LEVELS {
                levels.push(Level {
                    a,
                    inv_diag,
                    prolong: None,
                    restrict: None,
                });
                break;
            }
            let coarse_geom = geom.coarsen();
            if coarse_geom.cells.len() >= n {
                levels.push(Level {
                    a,
                    inv_diag,
                    prolong: None,
                    restrict: None,
                });
                break;
            }
            let p = prolongation::<T>(&geom, &coarse_geom);
            let r = p.transpose();
            let coarse_a = r.matmul(&a.matmul(&p));
            levels.push(Level {
                a,
                inv_diag,
                prolong: Some(p),
                restrict: Some(r),
            });
            a = coarse_a;
            geom = coarse_geom;
        }
        let last = &levels.last().expect("at least one level").a;
        let coarse = if last.nrows() <= 4 * COARSEST_SIZE {
            let n = last.nrows();
            let dense = DenseMatrix {
                n,
                data: last.to_dense(),
            };
            cholesky(&dense).map_or(CoarseSolver::Smoother, CoarseSolver::Direct)
        } else {
            CoarseSolver::Smoother
        };
        Self { levels, coarse }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    fn vcycle(&self, depth: usize, b: &[T], x: &mut [T]) {
        let level = &self.levels[depth];
        let n = b.len();
        if depth + 1 == self.levels.len() {
            match &self.coarse {
                CoarseSolver::Direct(l) => {
                    x.copy_from_slice(b);
                    cholesky_solve(l, x);
                }
                CoarseSolver::Smoother => {
                    x.iter_mut().for_each(|v| *v = T::zero());
                    for _ in 0..20 {
                        gauss_seidel(&level.a, &level.inv_diag, b, x, true);
                        gauss_seidel(&level.a, &level.inv_diag, b, x, false);
                    }
                }
            }
            return;
        }
        x.iter_mut().for_each(|v| *v = T::zero());
        gauss_seidel(&level.a, &level.inv_diag, b, x, true);
        let mut residual = vec![T::zero(); n];
        level.a.mul_vec(x, &mut residual);
        for (r, &bi) in residual.iter_mut().zip(b) {
            *r = bi - *r;
        }
        let restrict = level.restrict.as_ref().expect("non-final level");
        let prolong = level.prolong.as_ref().expect("non-final level");
        let mut coarse_b = vec![T::zero(); restrict.nrows()];
        restrict.mul_vec(&residual, &mut coarse_b);
        let mut coarse_x = vec![T::zero(); coarse_b.len()];
        self.vcycle(depth + 1, &coarse_b, &mut coarse_x);
        prolong.mul_vec(&coarse_x, &mut residual);
        for (xi, &c) in x.iter_mut().zip(&residual) {
            *xi += c;
        }
        gauss_seidel(&level.a, &level.inv_diag, b, x, false);
    }
}

impl<T: Real> Preconditioner<T> for Multigrid<T> {
    fn apply(&self, r: &[T], z: &mut [T]) {
        self.vcycle(0, r, z);
    }
}

fn inverse_diagonal<T: Real>(a: &CsrMatrix<T>) -> Vec<T> {
    a.diagonal()
        .into_iter()
        .map(|d| if d > T::zero() { T::one() / d } else { T::zero() })
        .collect()
}

fn gauss_seidel<T: Real>(a: &CsrMatrix<T>, inv_diag: &[T], b: &[T], x: &mut [T], forward: bool) {
    let n = b.len();
    let mut sweep = |i: usize| {
        let (cols, vals) = a.row(i);
        let mut s = b[i];
        for (&c, &v) in cols.iter().zip(vals) {
            if c != i {
                s -= v * x[c];
            }
        }
        x[i] = s * inv_diag[i];
    };
    if forward {
        (0..n).for_each(&mut sweep);
    } else {
        (0..n).rev().for_each(&mut sweep);
    }
}

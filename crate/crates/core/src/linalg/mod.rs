//! Sparse and dense linear algebra used by the PDE layer.

pub mod cg;
pub mod csr;
pub mod dense;
pub mod lobpcg;
pub mod multigrid;

use rayon::prelude::*;

use crate::scalar::Real;

/// Vectors at least this long are reduced on the rayon pool, in fixed-size
/// chunks so the summation order does not depend on scheduling.
const PARALLEL_LEN: usize = 1 << 15;
const CHUNK: usize = 1 << 12;

pub fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    debug_assert_eq!(x.len(), y.len());
    if x.len() >= PARALLEL_LEN {
        let partial: Vec<T> = x
            .par_chunks(CHUNK)
            .zip(y.par_chunks(CHUNK))
            .map(|(a, b)| serial_dot(a, b))
            .collect();
        partial.into_iter().sum()
    } else {
        serial_dot(x, y)
    }
}

#[inline]
fn serial_dot<T: Real>(x: &[T], y: &[T]) -> T {
    let mut acc = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        acc += a * b;
    }
    acc
}

pub fn norm<T: Real>(x: &[T]) -> T {
    dot(x, x).sqrt()
}

/// `y += alpha * x`.
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    if y.len() >= PARALLEL_LEN {
        y.par_chunks_mut(CHUNK)
            .zip(x.par_chunks(CHUNK))
            .for_each(|(yc, xc)| {
                for (yi, &xi) in yc.iter_mut().zip(xc) {
                    *yi += alpha * xi;
                }
            });
    } else {
        for (yi, &xi) in y.iter_mut().zip(x) {
            *yi += alpha * xi;
        }
    }
}

pub fn scale<T: Real>(alpha: T, x: &mut [T]) {
    x.iter_mut().for_each(|v| *v *= alpha);
}

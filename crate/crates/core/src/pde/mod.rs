//! Dirichlet Laplacian assembly, torsion and eigenvalue solves, and the
//! torsion energy and γ-distance built on them.

mod eigen;
mod operator;
mod torsion;

pub use eigen::{eigs_smallest, eigs_smallest_from, EigenPair, MAX_EIGENPAIRS};
pub use operator::{assemble, BoundaryMode, LaplaceOperator, Preconditioning, Region, SolverConfig};
pub use torsion::{gamma_distance, solve_torsion, torsion_energy, TorsionField};

use crate::error::Result;
use crate::grid::IndicatorSet;
use crate::scalar::Real;

/// Exact-mode torsion function of `set`; the zero field for an empty set.
pub fn torsion_of_set<T: Real>(set: &IndicatorSet<T>, config: SolverConfig<T>) -> Result<TorsionField<T>> {
    if set.is_empty() {
        return Ok(TorsionField::zero(set.domain().clone(), 0));
    }
    let op = assemble(Region::Support(set), BoundaryMode::Exact, config)?;
    solve_torsion(&op)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::error::Error;
    use crate::grid::{build_domain, BoxSpec, GridDomain, PhaseField};

    fn unit(n: usize) -> Arc<GridDomain<f64>> {
        Arc::new(build_domain(&BoxSpec::unit(2, n), None).unwrap())
    }

    #[test]
    fn full_square_is_five_point_stencil() {
        let d = unit(8);
        let op = assemble(Region::Support(&IndicatorSet::full(d.clone())), BoundaryMode::Exact, SolverConfig::default()).unwrap();
        let a = op.matrix();
        let inv_h2 = 64.0;
        let interior = d.index([3, 4, 0]);
        let (cols, vals) = a.row(interior);
        assert_eq!(cols.len(), 5);
        for (&c, &v) in cols.iter().zip(vals) {
            let expect = if c == interior { 4.0 * inv_h2 } else { -inv_h2 };
            assert_eq!(v, expect);
        }
        let (cols, _) = a.row(d.index([0, 0, 0]));
        assert_eq!(cols.len(), 3);
    }

    #[test]
    fn full_density_matches_exact_operator() {
        let d = unit(16);
        let exact = assemble(Region::Support(&IndicatorSet::full(d.clone())), BoundaryMode::Exact, SolverConfig::default()).unwrap();
        let phi = PhaseField::constant(d.clone(), 1.0, 0).unwrap();
        let pen = assemble(Region::Density(&phi), BoundaryMode::Penalized { mu: 1e4 }, SolverConfig::default()).unwrap();
        assert_eq!(exact.matrix().to_dense(), pen.matrix().to_dense());
    }

    #[test]
    fn void_density_spectrum_exceeds_mu() {
        let d = unit(32);
        let phi = PhaseField::constant(d.clone(), 0.0, 0).unwrap();
        let op = assemble(Region::Density(&phi), BoundaryMode::Penalized { mu: 1e4 }, SolverConfig::default()).unwrap();
        let pairs = eigs_smallest(&op, 1).unwrap();
        assert!(pairs[0].lambda >= 1e4);
    }

    #[test]
    fn empty_support_is_rejected() {
        let d = unit(8);
        let err = assemble(Region::Support(&IndicatorSet::empty(d)), BoundaryMode::Exact, SolverConfig::default());
        assert!(matches!(err, Err(Error::EmptyOperator)));
        let d = unit(8);
        let phi = PhaseField::constant(d, 0.5, 0).unwrap();
        let err = assemble(Region::Density(&phi), BoundaryMode::Penalized { mu: 0.0 }, SolverConfig::default());
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn torsion_is_translation_invariant() {
        let d = unit(64);
        let set = IndicatorSet::from_fn(d.clone(), |x| (x[0] - 0.3).powi(2) + (x[1] - 0.4).powi(2) < 0.04);
        let moved = set.shifted([10, 7, 0]);
        let w = torsion_of_set(&set, SolverConfig::default()).unwrap();
        let wm = torsion_of_set(&moved, SolverConfig::default()).unwrap();
        for idx in set.indices() {
            let c = d.coords(idx);
            let j = d.index([c[0] + 10, c[1] + 7, 0]);
            assert!((w.values()[idx] - wm.values()[j]).abs() < 1e-9 * w.max());
        }
        assert!((w.energy() - wm.energy()).abs() < 1e-9 * w.energy().abs());
    }

    #[test]
    fn preconditioners_agree() {
        let d = unit(48);
        let set = IndicatorSet::from_fn(d.clone(), |x| x[0] + 0.5 * x[1] < 0.9);
        let mut jac = SolverConfig::default();
        jac.preconditioner = Preconditioning::Jacobi;
        let a = torsion_of_set(&set, SolverConfig::default()).unwrap();
        let b = torsion_of_set(&set, jac).unwrap();
        assert!(gamma_distance(&a, &b).unwrap() < 1e-9 * a.energy().abs());
        let oa = assemble(Region::Support(&set), BoundaryMode::Exact, SolverConfig::default()).unwrap();
        let ob = assemble(Region::Support(&set), BoundaryMode::Exact, jac).unwrap();
        let ea = eigs_smallest(&oa, 2).unwrap();
        let eb = eigs_smallest(&ob, 2).unwrap();
        for (p, q) in ea.iter().zip(&eb) {
            assert!((p.lambda - q.lambda).abs() < 1e-8 * p.lambda);
        }
    }

    #[test]
    fn eigenfunctions_are_orthonormal() {
        let d = unit(40);
        let op = assemble(Region::Support(&IndicatorSet::full(d.clone())), BoundaryMode::Exact, SolverConfig::default()).unwrap();
        let pairs = eigs_smallest(&op, 4).unwrap();
        let hd = d.cell_volume();
        for p in &pairs {
            assert!(p.residual <= 1e-8);
            for q in &pairs {
                let ip: f64 = hd * p.u.iter().zip(&q.u).map(|(a, b)| a * b).sum::<f64>();
                let target = if p.index == q.index { 1.0 } else { 0.0 };
                assert!((ip - target).abs() < 1e-8);
            }
        }
        assert!(pairs.windows(2).all(|w| w[0].lambda <= w[1].lambda));
        let warm = eigs_smallest_from(&op, 4, Some(&pairs)).unwrap();
        assert!((warm[0].lambda - pairs[0].lambda).abs() < 1e-10 * pairs[0].lambda);
    }

    #[test]
    fn gamma_distance_of_nested_disks() {
        // w_R = (R² - |x|²)/4, so ∫ (w₂ - w₁) over radii 1 ⊂ 2 is 15π/8.
        let d = Arc::new(build_domain(&BoxSpec::new(&[-2.1, -2.1], &[2.1, 2.1], &[256, 256]), None).unwrap());
        let disk = |r: f64| IndicatorSet::from_fn(d.clone(), move |x| x[0] * x[0] + x[1] * x[1] < r * r);
        let w1 = torsion_of_set(&disk(1.0), SolverConfig::default()).unwrap();
        let w2 = torsion_of_set(&disk(2.0), SolverConfig::default()).unwrap();
        let dist = gamma_distance(&w1, &w2).unwrap();
        let target = 15.0 * std::f64::consts::PI / 8.0;
        assert!((dist - target).abs() < 0.02 * target, "{dist}");
        assert!((dist - 2.0 * (w1.energy() - w2.energy())).abs() < 1e-9 * dist);
        assert_eq!(dist, gamma_distance(&w2, &w1).unwrap());
    }

    #[test]
    fn gamma_distance_requires_same_grid() {
        let a = torsion_of_set(&IndicatorSet::full(unit(8)), SolverConfig::default()).unwrap();
        let b = torsion_of_set(&IndicatorSet::full(unit(16)), SolverConfig::default()).unwrap();
        assert!(matches!(gamma_distance(&a, &b), Err(Error::DomainMismatch)));
        assert_eq!(gamma_distance(&a, &a).unwrap(), 0.0);
    }
}

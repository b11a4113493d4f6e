use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{check_same_domain, GridDomain, IndicatorSet};
use crate::linalg::cg::pcg;
use crate::pde::operator::{BoundaryMode, LaplaceOperator};
use crate::scalar::Real;

/// Discrete torsion function: the solution of `A w = 1` on the operator's unknowns.
#[derive(Clone, Debug)]
pub struct TorsionField<T> {
    domain: Arc<GridDomain<T>>,
    w: Vec<T>,
    phase_id: usize,
    mode: BoundaryMode<T>,
    iterations: usize,
    residual: T,
}

impl<T: Real> TorsionField<T> {
    /// Wraps a precomputed field (e.g. read from disk). Negative values are rejected.
    pub fn from_values(
        domain: Arc<GridDomain<T>>,
        w: Vec<T>,
        phase_id: usize,
        mode: BoundaryMode<T>,
    ) -> Result<Self> {
        if w.len() != domain.len() {
            return Err(Error::InvalidInput(format!(
                "torsion field has {} entries, grid has {} cells",
                w.len(),
                domain.len()
            )));
        }
        if let Some(v) = w.iter().find(|v| !(**v >= T::zero())) {
            return Err(Error::InvalidInput(format!("torsion value {v} is not >= 0")));
        }
        Ok(Self {
            domain,
            w,
            phase_id,
            mode,
            iterations: 0,
            residual: T::zero(),
        })
    }

    /// The zero field (torsion function of the empty set).
    pub fn zero(domain: Arc<GridDomain<T>>, phase_id: usize) -> Self {
        let w = vec![T::zero(); domain.len()];
        Self {
            domain,
            w,
            phase_id,
            mode: BoundaryMode::Exact,
            iterations: 0,
            residual: T::zero(),
        }
    }

    pub fn domain(&self) -> &Arc<GridDomain<T>> {
        &self.domain
    }

    /// Full-grid values, zero on cells without an unknown.
    pub fn values(&self) -> &[T] {
        &self.w
    }

    pub fn phase_id(&self) -> usize {
        self.phase_id
    }

    pub fn mode(&self) -> BoundaryMode<T> {
        self.mode
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Relative residual reported by the linear solver.
    pub fn residual(&self) -> T {
        self.residual
    }

    pub fn max(&self) -> T {
        self.w.iter().copied().fold(T::zero(), T::max)
    }

    /// Cells with `w > 0`.
    pub fn positivity_set(&self) -> IndicatorSet<T> {
        let support = self.w.iter().map(|&v| v > T::zero()).collect();
        IndicatorSet::new(self.domain.clone(), support).expect("same grid")
    }

    pub fn energy(&self) -> T {
        torsion_energy(self)
    }
}

/// Solves `A w = 1` by preconditioned conjugate gradients.
///
/// The exact solution is nonnegative (the operator is an M-matrix); solver
/// round-off below zero, which only occurs where `w` is negligibly small in
/// penalized regions, is clipped.
pub fn solve_torsion<T: Real>(op: &LaplaceOperator<T>) -> Result<TorsionField<T>> {
    let n = op.unknown_count();
    let b = vec![T::one(); n];
    let mut x = vec![T::zero(); n];
    let config = op.config();
    let outcome = pcg(
        op.matrix(),
        op.preconditioner(),
        &b,
        &mut x,
        config.cg_tol,
        config.cg_max_iter,
    );
    if !outcome.converged {
        return Err(Error::SolverNonConvergence {
            iterations: outcome.iterations,
            residual: outcome.relative_residual.as_f64(),
        });
    }
    x.iter_mut().for_each(|v| *v = v.max(T::zero()));
    Ok(TorsionField {
        domain: op.domain().clone(),
        w: op.scatter(&x),
        phase_id: op.phase_id(),
        mode: op.mode(),
        iterations: outcome.iterations,
        residual: outcome.relative_residual,
    })
}

/// `E = -1/2 h^dim Σ w`.
pub fn torsion_energy<T: Real>(w: &TorsionField<T>) -> T {
    -T::lit(0.5) * w.domain.cell_volume() * w.w.iter().copied().sum::<T>()
}

/// `d_γ = h^dim Σ |w1 - w2|`.
pub fn gamma_distance<T: Real>(w1: &TorsionField<T>, w2: &TorsionField<T>) -> Result<T> {
    check_same_domain(&w1.domain, &w2.domain)?;
    let total: T = w1.w.iter().zip(&w2.w).map(|(&a, &b)| (a - b).abs()).sum();
    Ok(w1.domain.cell_volume() * total)
}

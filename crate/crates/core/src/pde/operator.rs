use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::grid::{GridDomain, IndicatorSet, PhaseField};
use crate::linalg::cg::{Jacobi, Preconditioner};
use crate::linalg::csr::CsrMatrix;
use crate::linalg::multigrid::{LevelGeometry, Multigrid};
use crate::scalar::Real;

/// Sentinel in the cell-to-unknown map for cells that carry no unknown.
const NO_UNKNOWN: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preconditioning {
    Jacobi,
    Multigrid,
}

/// Tolerances and knobs shared by the torsion and eigenvalue solvers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig<T> {
    /// Relative residual of conjugate gradients.
    pub cg_tol: T,
    pub cg_max_iter: usize,
    /// Relative eigen-residual `||A u - λ u|| / (λ ||u||)`.
    pub eig_tol: T,
    pub eig_max_iter: usize,
    pub preconditioner: Preconditioning,
    /// Seed of the random eigensolver start block.
    pub seed: u64,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            cg_tol: T::tol_floor(1e-10),
            cg_max_iter: 5000,
            eig_tol: T::tol_floor(1e-8),
            eig_max_iter: 2000,
            preconditioner: Preconditioning::Multigrid,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundaryMode<T> {
    /// Homogeneous Dirichlet condition outside the support: those cells carry no unknown.
    Exact,
    /// Every masked-in cell is an unknown; `mu (1 - phi)` is added to the diagonal.
    Penalized { mu: T },
}

/// What an operator is assembled on.
#[derive(Clone, Copy, Debug)]
pub enum Region<'a, T> {
    Support(&'a IndicatorSet<T>),
    Density(&'a PhaseField<T>),
}

impl<T: Real> Region<'_, T> {
    pub fn domain(&self) -> &Arc<GridDomain<T>> {
        match self {
            Region::Support(s) => s.domain(),
            Region::Density(p) => p.domain(),
        }
    }
}

/// Finite-difference Dirichlet Laplacian `(-Δ_h [+ μ(1-φ)])` restricted to its unknowns.
///
/// Neighbors without an unknown (outside the support in exact mode, outside
/// the mask or the box in either mode) contribute a zero ghost value at their
/// cell center.
pub struct LaplaceOperator<T: Real> {
    domain: Arc<GridDomain<T>>,
    mode: BoundaryMode<T>,
    phase_id: usize,
    unknowns: Vec<usize>,
    lookup: Vec<usize>,
    matrix: CsrMatrix<T>,
    config: SolverConfig<T>,
    multigrid: OnceLock<Multigrid<T>>,
    jacobi: OnceLock<Jacobi<T>>,
}

/// Assembles the operator of `region` in the given boundary mode.
///
/// In exact mode a density region uses its positivity set as support; in
/// penalized mode a support region is read as a 0/1 density.
pub fn assemble<T: Real>(
    region: Region<'_, T>,
    mode: BoundaryMode<T>,
    config: SolverConfig<T>,
) -> Result<LaplaceOperator<T>> {
    let domain = region.domain().clone();
    let phase_id = match region {
        Region::Support(_) => 0,
        Region::Density(p) => p.phase_id(),
    };
    let (unknown_flags, potential): (Vec<bool>, Vec<T>) = match mode {
        BoundaryMode::Exact => {
            let flags = match region {
                Region::Support(s) => s.support().to_vec(),
                Region::Density(p) => p.values().iter().map(|&v| v > T::zero()).collect(),
            };
            let potential = vec![T::zero(); domain.len()];
            (flags, potential)
        }
        BoundaryMode::Penalized { mu } => {
            if !(mu > T::zero()) || !mu.is_finite() {
                return Err(Error::Config(format!(
                    "penalization strength must be positive, got {mu}"
                )));
            }
            let potential = match region {
                Region::Support(s) => s
                    .support()
                    .iter()
                    .map(|&inside| if inside { T::zero() } else { mu })
                    .collect(),
                Region::Density(p) => p.values().iter().map(|&v| mu * (T::one() - v)).collect(),
            };
            (domain.mask().to_vec(), potential)
        }
    };

    let mut lookup = vec![NO_UNKNOWN; domain.len()];
    let mut unknowns = Vec::new();
    for (idx, &flag) in unknown_flags.iter().enumerate() {
        if flag && domain.in_mask(idx) {
            lookup[idx] = unknowns.len();
            unknowns.push(idx);
        }
    }
    if unknowns.is_empty() {
        return Err(Error::EmptyOperator);
    }

    let h = domain.h();
    let inv_h2 = T::one() / (h * h);
    let center = T::of_usize(2 * domain.dim()) * inv_h2;
    let rows = unknowns
        .iter()
        .map(|&idx| {
            let mut row = Vec::with_capacity(2 * domain.dim() + 1);
            row.push((lookup[idx], center + potential[idx]));
            domain.for_each_face(idx, |n| {
                if let Some(n) = n {
                    if lookup[n] != NO_UNKNOWN {
                        row.push((lookup[n], -inv_h2));
                    }
                }
            });
            row
        })
        .collect();
    let matrix = CsrMatrix::from_rows(unknowns.len(), rows);

    Ok(LaplaceOperator {
        domain,
        mode,
        phase_id,
        unknowns,
        lookup,
        matrix,
        config,
        multigrid: OnceLock::new(),
        jacobi: OnceLock::new(),
    })
}

impl<T: Real> LaplaceOperator<T> {
    pub fn domain(&self) -> &Arc<GridDomain<T>> {
        &self.domain
    }

    pub fn mode(&self) -> BoundaryMode<T> {
        self.mode
    }

    pub fn phase_id(&self) -> usize {
        self.phase_id
    }

    pub fn with_phase_id(mut self, phase_id: usize) -> Self {
        self.phase_id = phase_id;
        self
    }

    pub fn config(&self) -> &SolverConfig<T> {
        &self.config
    }

    /// Box index of every unknown, in unknown order.
    pub fn unknowns(&self) -> &[usize] {
        &self.unknowns
    }

    pub fn unknown_count(&self) -> usize {
        self.unknowns.len()
    }

    /// Unknown number of box cell `idx`, if it carries one.
    pub fn unknown_of(&self, idx: usize) -> Option<usize> {
        let u = self.lookup[idx];
        (u != NO_UNKNOWN).then_some(u)
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.matrix
    }

    /// Expands an unknown vector to a full-grid field, zero elsewhere.
    pub fn scatter(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.domain.len()];
        for (&idx, &v) in self.unknowns.iter().zip(x) {
            out[idx] = v;
        }
        out
    }

    /// Restricts a full-grid field to the unknowns.
    pub fn gather(&self, field: &[T]) -> Vec<T> {
        self.unknowns.iter().map(|&idx| field[idx]).collect()
    }

    /// `A x` on full-grid fields.
    pub fn apply(&self, field: &[T]) -> Vec<T> {
        let x = self.gather(field);
        let mut y = vec![T::zero(); x.len()];
        self.matrix.mul_vec(&x, &mut y);
        self.scatter(&y)
    }

    /// The configured preconditioner; the multigrid hierarchy is built on first use.
    pub fn preconditioner(&self) -> &dyn Preconditioner<T> {
        match self.config.preconditioner {
            Preconditioning::Multigrid => self.multigrid.get_or_init(|| {
                let geometry = LevelGeometry {
                    dim: self.domain.dim(),
                    shape: self.domain.shape(),
                    cells: self.unknowns.clone(),
                };
                Multigrid::new(self.matrix.clone(), geometry)
            }),
            Preconditioning::Jacobi => self.jacobi.get_or_init(|| Jacobi::new(&self.matrix)),
        }
    }
}

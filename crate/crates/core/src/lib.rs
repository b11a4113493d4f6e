//! Grid-based multiphase shape optimization for Dirichlet eigenvalues and
//! torsional energy, with numerical checks of the free-boundary regularity
//! estimates satisfied by optimal cells.
//!
//! Everything numerical is generic over [`scalar::Real`] (`f32` or `f64`);
//! the aliases below fix the scalar for the common cases.

pub mod error;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod optimize;
pub mod pde;
pub mod scalar;
pub mod shapefn;
pub mod theory;

pub use error::{Error, Result};
pub use scalar::Real;

pub type GridDomainF64 = grid::GridDomain<f64>;
pub type GridDomainF32 = grid::GridDomain<f32>;
pub type IndicatorSetF64 = grid::IndicatorSet<f64>;
pub type IndicatorSetF32 = grid::IndicatorSet<f32>;
pub type PhaseFieldF64 = grid::PhaseField<f64>;
pub type PhaseFieldF32 = grid::PhaseField<f32>;
pub type TorsionFieldF64 = pde::TorsionField<f64>;
pub type TorsionFieldF32 = pde::TorsionField<f32>;
pub type EigenPairF64 = pde::EigenPair<f64>;
pub type EigenPairF32 = pde::EigenPair<f32>;
pub type SolverConfigF64 = pde::SolverConfig<f64>;
pub type SolverConfigF32 = pde::SolverConfig<f32>;
pub type ObjectiveSpecF64 = shapefn::ObjectiveSpec<f64>;
pub type ObjectiveSpecF32 = shapefn::ObjectiveSpec<f32>;
pub type OptimizerConfigF64 = optimize::OptimizerConfig<f64>;
pub type OptimizerConfigF32 = optimize::OptimizerConfig<f32>;
pub type OptimizationResultF64 = optimize::OptimizationResult<f64>;
pub type OptimizationResultF32 = optimize::OptimizationResult<f32>;

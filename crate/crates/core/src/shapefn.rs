//! Shape functionals (eigenvalues, torsion energy), the aggregator `g`, the
//! composite objective `g(F_1, ..., F_h) + m Σ |Ω_i|`, and density gradients.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridDomain, IndicatorSet, PhaseField};
use crate::pde::{
    assemble, eigs_smallest_from, gamma_distance, solve_torsion, torsion_of_set, BoundaryMode, EigenPair, Region,
    SolverConfig, TorsionField,
};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FunctionalSpec {
    /// `λ_k`, 1-based.
    Eigenvalue { k: usize },
    /// `E = -1/2 ∫ w`.
    TorsionEnergy,
}

impl FunctionalSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FunctionalSpec::Eigenvalue { k } if k == 0 || k > crate::pde::MAX_EIGENPAIRS - 1 => Err(Error::Config(
                format!("eigenvalue index must be in 1..={}, got {k}", crate::pde::MAX_EIGENPAIRS - 1),
            )),
            _ => Ok(()),
        }
    }
}

/// Relative tolerance below which values count as tied for `max`.
const TIE_TOL: f64 = 1e-12;

/// The increasing aggregator `g`.
#[derive(Clone, Debug, PartialEq)]
pub enum Aggregator<T> {
    Sum,
    Max,
    WeightedSum(Vec<T>),
}

impl<T: Real> Aggregator<T> {
    pub fn validate(&self, phases: usize) -> Result<()> {
        if let Aggregator::WeightedSum(w) = self {
            if w.len() != phases {
                return Err(Error::Config(format!(
                    "{} weights given for {phases} phases",
                    w.len()
                )));
            }
            if let Some(bad) = w.iter().find(|&&v| !(v > T::zero()) || !v.is_finite()) {
                return Err(Error::Config(format!("weights must be positive, got {bad}")));
            }
        }
        Ok(())
    }

    pub fn apply(&self, values: &[T]) -> T {
        match self {
            Aggregator::Sum => values.iter().copied().sum(),
            Aggregator::Max => values.iter().copied().fold(T::neg_infinity(), T::max),
            Aggregator::WeightedSum(w) => values.iter().zip(w).map(|(&v, &c)| v * c).sum(),
        }
    }

    /// A (sub)gradient of `g` at `values`; for `max`, tied maxima share the weight equally.
    pub fn weights(&self, values: &[T]) -> Vec<T> {
        match self {
            Aggregator::Sum => vec![T::one(); values.len()],
            Aggregator::WeightedSum(w) => w.clone(),
            Aggregator::Max => {
                let top = self.apply(values);
                let tol = T::lit(TIE_TOL) * top.abs().max(T::one());
                let tied: Vec<bool> = values.iter().map(|&v| top - v <= tol).collect();
                let count = T::of_usize(tied.iter().filter(|&&t| t).count());
                tied.into_iter()
                    .map(|t| if t { T::one() / count } else { T::zero() })
                    .collect()
            }
        }
    }

    /// Lipschitz constant of `g` with respect to a change in one argument.
    pub fn lipschitz(&self) -> T {
        match self {
            Aggregator::Sum | Aggregator::Max => T::one(),
            Aggregator::WeightedSum(w) => w.iter().copied().fold(T::zero(), T::max),
        }
    }
}

/// Problem data: `g`, one functional per phase and the measure penalty `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveSpec<T> {
    pub g: Aggregator<T>,
    pub functionals: Vec<FunctionalSpec>,
    pub m: T,
}

impl<T: Real> ObjectiveSpec<T> {
    pub fn phases(&self) -> usize {
        self.functionals.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.functionals.is_empty() {
            return Err(Error::Config("at least one phase is required".into()));
        }
        if !(self.m >= T::zero()) || !self.m.is_finite() {
            return Err(Error::Config(format!("measure penalty must be >= 0, got {}", self.m)));
        }
        for f in &self.functionals {
            f.validate()?;
        }
        self.g.validate(self.functionals.len())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveValue<T> {
    pub values: Vec<T>,
    pub measures: Vec<T>,
    pub g: T,
    /// `g + m Σ measures`.
    pub total: T,
}

/// How functionals are evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions<T> {
    pub mode: BoundaryMode<T>,
    pub solver: SolverConfig<T>,
    /// Relative spectral gap below which `λ_k` is flagged as degenerate.
    pub gap_tol: T,
}

impl<T: Real> EvalOptions<T> {
    pub fn penalized(mu: T) -> Self {
        Self {
            mode: BoundaryMode::Penalized { mu },
            solver: SolverConfig::default(),
            gap_tol: T::lit(1e-6),
        }
    }

    pub fn exact() -> Self {
        Self {
            mode: BoundaryMode::Exact,
            solver: SolverConfig::default(),
            gap_tol: T::lit(1e-6),
        }
    }
}

/// Solver output retained for gradients and warm starts.
#[derive(Clone, Debug)]
pub enum FunctionalState<T> {
    /// Eigenpairs `1..=k` (and `k+1` when available, for the gap check).
    Eigen { k: usize, pairs: Vec<EigenPair<T>> },
    Torsion(TorsionField<T>),
}

#[derive(Clone, Debug)]
pub struct FunctionalEval<T> {
    pub spec: FunctionalSpec,
    pub value: T,
    pub state: FunctionalState<T>,
    pub mode: BoundaryMode<T>,
    pub phase_id: usize,
    pub domain: Arc<GridDomain<T>>,
    /// Set when `λ_k` is within `gap_tol` of a neighboring eigenvalue.
    pub degenerate: bool,
}

/// Evaluates one functional on a phase density.
///
/// `warm` may carry the state of a previous evaluation of the same functional
/// on the same grid; eigen solves then start from its eigenfunctions.
pub fn eval_functional<T: Real>(
    spec: FunctionalSpec,
    phase: &PhaseField<T>,
    options: &EvalOptions<T>,
    warm: Option<&FunctionalState<T>>,
) -> Result<FunctionalEval<T>> {
    spec.validate()?;
    if phase.is_zero() {
        return Err(Error::DegeneratePhase {
            phase: phase.phase_id(),
        });
    }
    let op = assemble(Region::Density(phase), options.mode, options.solver)?;
    match spec {
        FunctionalSpec::Eigenvalue { k } => {
            let wanted = (k + 1).min(op.unknown_count());
            if wanted < k {
                return Err(Error::DegeneratePhase {
                    phase: phase.phase_id(),
                });
            }
            let warm_pairs = match warm {
                Some(FunctionalState::Eigen { pairs, .. }) => Some(pairs.as_slice()),
                _ => None,
            };
            let pairs = eigs_smallest_from(&op, wanted, warm_pairs)?;
            let value = pairs[k - 1].lambda;
            let rel_gap = |a: T, b: T| (b - a).abs() / value.abs().max(T::min_positive_value());
            let below = k >= 2 && rel_gap(pairs[k - 2].lambda, value) < options.gap_tol;
            let above = pairs.len() > k && rel_gap(value, pairs[k].lambda) < options.gap_tol;
            let degenerate = below || above;
            if degenerate {
                log::warn!(
                    "phase {}: lambda_{k} = {value} is degenerate within relative gap {}",
                    phase.phase_id(),
                    options.gap_tol
                );
            }
            Ok(FunctionalEval {
                spec,
                value,
                state: FunctionalState::Eigen { k, pairs },
                mode: options.mode,
                phase_id: phase.phase_id(),
                domain: phase.domain().clone(),
                degenerate,
            })
        }
        FunctionalSpec::TorsionEnergy => {
            let w = solve_torsion(&op.with_phase_id(phase.phase_id()))?;
            Ok(FunctionalEval {
                spec,
                value: w.energy(),
                state: FunctionalState::Torsion(w),
                mode: options.mode,
                phase_id: phase.phase_id(),
                domain: phase.domain().clone(),
                degenerate: false,
            })
        }
    }
}

/// Exact Dirichlet evaluation on an indicator support.
pub fn eval_functional_on_set<T: Real>(
    spec: FunctionalSpec,
    set: &IndicatorSet<T>,
    solver: SolverConfig<T>,
    phase_id: usize,
) -> Result<FunctionalEval<T>> {
    let options = EvalOptions {
        mode: BoundaryMode::Exact,
        solver,
        gap_tol: T::lit(1e-6),
    };
    eval_functional(spec, &PhaseField::from_indicator(set, phase_id), &options, None)
}

#[derive(Clone, Debug)]
pub struct ObjectiveEval<T> {
    pub value: ObjectiveValue<T>,
    pub functionals: Vec<FunctionalEval<T>>,
}

/// Evaluates `g(F_1, ..., F_h) + m Σ |φ_i|`, with the phases solved concurrently.
pub fn eval_objective<T: Real>(
    spec: &ObjectiveSpec<T>,
    phases: &[PhaseField<T>],
    options: &EvalOptions<T>,
    warm: Option<&[FunctionalEval<T>]>,
) -> Result<ObjectiveEval<T>> {
    spec.validate()?;
    if phases.len() != spec.phases() {
        return Err(Error::InvalidInput(format!(
            "objective has {} phases, {} densities given",
            spec.phases(),
            phases.len()
        )));
    }
    let functionals: Vec<FunctionalEval<T>> = phases
        .par_iter()
        .zip(spec.functionals.par_iter())
        .enumerate()
        .map(|(i, (phase, &f))| {
            let warm_state = warm.and_then(|w| w.get(i)).map(|e| &e.state);
            eval_functional(f, phase, options, warm_state)
        })
        .collect::<Result<_>>()?;
    let values: Vec<T> = functionals.iter().map(|e| e.value).collect();
    let measures: Vec<T> = phases.iter().map(PhaseField::measure).collect();
    let g = spec.g.apply(&values);
    let total = g + spec.m * measures.iter().copied().sum::<T>();
    Ok(ObjectiveEval {
        value: ObjectiveValue {
            values,
            measures,
            g,
            total,
        },
        functionals,
    })
}

/// Per-cell derivative of a penalized functional with respect to the density.
#[derive(Clone, Debug)]
pub struct ShapeGradient<T> {
    pub values: Vec<T>,
    /// Copied from the evaluation: the eigenvector used may not be unique.
    pub degenerate: bool,
}

/// `∂λ_k/∂φ_j = -μ u_k(x_j)^2 h^dim` and `∂E/∂φ_j = -1/2 μ w(x_j)^2 h^dim`.
pub fn shape_gradient<T: Real>(eval: &FunctionalEval<T>) -> Result<ShapeGradient<T>> {
    let mu = match eval.mode {
        BoundaryMode::Penalized { mu } => mu,
        BoundaryMode::Exact => {
            return Err(Error::InvalidInput(
                "density gradients require a penalized evaluation".into(),
            ))
        }
    };
    let (field, factor) = match &eval.state {
        FunctionalState::Eigen { k, pairs } => (pairs[*k - 1].u.as_slice(), T::one()),
        FunctionalState::Torsion(w) => (w.values(), T::lit(0.5)),
    };
    let scale = -factor * mu * eval.domain.cell_volume();
    Ok(ShapeGradient {
        values: field.iter().map(|&v| scale * v * v).collect(),
        degenerate: eval.degenerate,
    })
}

/// Gradient of the full objective with respect to each phase density: the
/// `g`-weighted functional gradients plus `m h^dim` on masked-in cells.
pub fn objective_gradient<T: Real>(
    spec: &ObjectiveSpec<T>,
    phases: &[PhaseField<T>],
    eval: &ObjectiveEval<T>,
) -> Result<Vec<ShapeGradient<T>>> {
    let weights = spec.g.weights(&eval.value.values);
    phases
        .iter()
        .zip(&eval.functionals)
        .zip(weights)
        .map(|((phase, f), weight)| {
            let domain = phase.domain();
            let measure_term = spec.m * domain.cell_volume();
            let mut grad = if weight == T::zero() {
                ShapeGradient {
                    values: vec![T::zero(); domain.len()],
                    degenerate: f.degenerate,
                }
            } else {
                let mut g = shape_gradient(f)?;
                g.values.iter_mut().for_each(|v| *v *= weight);
                g
            };
            for (idx, v) in grad.values.iter_mut().enumerate() {
                if domain.in_mask(idx) {
                    *v += measure_term;
                } else {
                    *v = T::zero();
                }
            }
            Ok(grad)
        })
        .collect()
}

/// One inner perturbation `Ω̃ = Ω \ B_r(x)` of a γ-Lipschitz probe.
#[derive(Clone, Debug, PartialEq)]
pub struct LipSample<T> {
    pub center: Vec<T>,
    pub radius: T,
    pub delta_f: T,
    pub d_gamma: T,
    /// `|ΔF| / d_γ`.
    pub ratio: T,
}

/// Records `|F(Ω̃) - F(Ω)| / d_γ(Ω̃, Ω)` for ball removals `Ω̃ = Ω \ B_r(x)`.
/// Removals that empty the set or change nothing are skipped.
pub fn gamma_lip_probe<T: Real>(
    spec: FunctionalSpec,
    set: &IndicatorSet<T>,
    balls: &[(Vec<T>, T)],
    solver: SolverConfig<T>,
) -> Result<Vec<LipSample<T>>> {
    let base = eval_functional_on_set(spec, set, solver, 0)?;
    let w = torsion_of_set(set, solver)?;
    let domain: &Arc<_> = set.domain();
    let samples: Vec<Option<LipSample<T>>> = balls
        .par_iter()
        .map(|(center, radius)| -> Result<Option<LipSample<T>>> {
            let mut support = set.support().to_vec();
            let mut removed = 0usize;
            domain.for_each_in_ball(center, *radius, |idx, _| {
                if support[idx] {
                    support[idx] = false;
                    removed += 1;
                }
            });
            if removed == 0 {
                return Ok(None);
            }
            let inner = IndicatorSet::new(domain.clone(), support)?;
            if inner.is_empty() {
                return Ok(None);
            }
            let f = eval_functional_on_set(spec, &inner, solver, 0)?;
            let wi = torsion_of_set(&inner, solver)?;
            let d_gamma = gamma_distance(&w, &wi)?;
            let delta_f = (f.value - base.value).abs();
            Ok(Some(LipSample {
                center: center.clone(),
                radius: *radius,
                delta_f,
                d_gamma,
                ratio: delta_f / d_gamma,
            }))
        })
        .collect::<Result<_>>()?;
    Ok(samples.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_domain, BoxSpec, GridDomain};

    fn unit(n: usize) -> Arc<GridDomain<f64>> {
        Arc::new(build_domain(&BoxSpec::unit(2, n), None).unwrap())
    }

    fn smooth_density(d: &Arc<GridDomain<f64>>, phase_id: usize) -> PhaseField<f64> {
        let values = (0..d.len())
            .map(|idx| {
                let c = d.center(idx);
                0.8 + 0.2 * (6.0 * c[0]).sin() * (4.0 * c[1] + 0.3).cos()
            })
            .collect();
        PhaseField::new(d.clone(), values, phase_id).unwrap()
    }

    #[test]
    fn max_weights_average_ties() {
        let g = Aggregator::<f64>::Max;
        assert_eq!(g.apply(&[1.0, 3.0, 2.0]), 3.0);
        assert_eq!(g.weights(&[1.0, 3.0, 3.0]), vec![0.0, 0.5, 0.5]);
        assert_eq!(Aggregator::WeightedSum(vec![0.5, 2.0]).lipschitz(), 2.0);
        assert!(Aggregator::WeightedSum(vec![1.0, -1.0]).validate(2).is_err());
    }

    #[test]
    fn objective_sum_is_consistent() {
        let d = unit(24);
        let phases = vec![smooth_density(&d, 0), PhaseField::constant(d.clone(), 0.3, 1).unwrap()];
        let spec = ObjectiveSpec {
            g: Aggregator::Sum,
            functionals: vec![FunctionalSpec::Eigenvalue { k: 1 }, FunctionalSpec::TorsionEnergy],
            m: 1.5,
        };
        let options = EvalOptions::penalized(1e3);
        let eval = eval_objective(&spec, &phases, &options, None).unwrap();
        let separate: f64 = phases
            .iter()
            .zip(&spec.functionals)
            .map(|(p, &f)| eval_functional(f, p, &options, None).unwrap().value)
            .sum();
        let measures: f64 = phases.iter().map(|p| p.measure()).sum();
        let expect = separate + 1.5 * measures;
        assert!((eval.value.total - expect).abs() <= 1e-12 * expect.abs());
    }

    #[test]
    fn measure_gradient_is_m_h_d() {
        let d = unit(16);
        let phases = vec![smooth_density(&d, 0)];
        let base = ObjectiveSpec {
            g: Aggregator::Sum,
            functionals: vec![FunctionalSpec::TorsionEnergy],
            m: 0.0,
        };
        let with_m = ObjectiveSpec { m: 7.0, ..base.clone() };
        let options = EvalOptions::penalized(1e3);
        let e0 = eval_objective(&base, &phases, &options, None).unwrap();
        let e1 = eval_objective(&with_m, &phases, &options, None).unwrap();
        let g0 = objective_gradient(&base, &phases, &e0).unwrap();
        let g1 = objective_gradient(&with_m, &phases, &e1).unwrap();
        let hd = d.cell_volume();
        for (a, b) in g0[0].values.iter().zip(&g1[0].values) {
            assert!((b - a - 7.0 * hd).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let d = unit(16);
        let phase = smooth_density(&d, 0);
        let options = EvalOptions::penalized(1e3);
        for spec in [FunctionalSpec::Eigenvalue { k: 1 }, FunctionalSpec::TorsionEnergy] {
            let eval = eval_functional(spec, &phase, &options, None).unwrap();
            let grad = shape_gradient(&eval).unwrap();
            for &idx in &[17usize, 100, 130, 250] {
                let delta = 1e-4;
                let shifted = |s: f64| {
                    let mut v = phase.values().to_vec();
                    v[idx] += s;
                    let p = PhaseField::new(d.clone(), v, 0).unwrap();
                    eval_functional(spec, &p, &options, Some(&eval.state)).unwrap().value
                };
                let fd = (shifted(delta) - shifted(-delta)) / (2.0 * delta);
                assert!((fd - grad.values[idx]).abs() <= 1e-3 * grad.values[idx].abs(), "{spec:?} {fd} {}", grad.values[idx]);
            }
        }
    }

    #[test]
    fn disjoint_squares_double_first_eigenvalue() {
        let d = unit(64);
        let squares = IndicatorSet::from_fn(d.clone(), |x| {
            (0.1..0.4).contains(&x[1]) && ((0.1..0.4).contains(&x[0]) || (0.6..0.9).contains(&x[0]))
        });
        let one = IndicatorSet::from_fn(d.clone(), |x| (0.1..0.4).contains(&x[1]) && (0.1..0.4).contains(&x[0]));
        let solver = SolverConfig::default();
        let l2 = eval_functional_on_set(FunctionalSpec::Eigenvalue { k: 2 }, &squares, solver, 0).unwrap();
        let l1 = eval_functional_on_set(FunctionalSpec::Eigenvalue { k: 1 }, &one, solver, 0).unwrap();
        assert!((l2.value - l1.value).abs() < 1e-8 * l1.value);
        assert!(l2.degenerate);
    }

    #[test]
    fn vanished_phase_is_degenerate() {
        let d = unit(8);
        let zero = PhaseField::constant(d, 0.0, 3).unwrap();
        let err = eval_functional(FunctionalSpec::Eigenvalue { k: 1 }, &zero, &EvalOptions::penalized(1e3), None);
        assert!(matches!(err, Err(Error::DegeneratePhase { phase: 3 })));
    }

    #[test]
    fn lip_probe_ratios_are_finite() {
        let d = unit(32);
        let set = IndicatorSet::from_fn(d.clone(), |x| (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2) < 0.16);
        let balls = vec![(vec![0.5, 0.8], 0.08), (vec![0.3, 0.5], 0.12), (vec![0.0, 0.0], 0.05)];
        let samples = gamma_lip_probe(FunctionalSpec::Eigenvalue { k: 1 }, &set, &balls, SolverConfig::default()).unwrap();
        assert_eq!(samples.len(), 2);
        assert!(samples.iter().all(|s| s.ratio.is_finite() && s.ratio > 0.0));
    }
}

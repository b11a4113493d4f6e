//! Projected-gradient minimization of `g(F_1, ..., F_h) + m Σ |Ω_i|` over
//! phase densities with `φ_i >= 0`, `Σ_i φ_i <= 1`, followed by binarization
//! and exact Dirichlet re-evaluation.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridDomain, IndicatorSet, PhaseField};
use crate::pde::SolverConfig;
use crate::scalar::Real;
use crate::shapefn::{
    eval_functional_on_set, eval_objective, objective_gradient, Aggregator, EvalOptions, FunctionalSpec,
    ObjectiveEval, ObjectiveSpec, ObjectiveValue,
};

/// How the phase densities are initialized.
#[derive(Clone, Debug)]
pub enum InitMode<T> {
    /// Independent per-cell samples, uniform on `{y >= 0, Σ y <= 1}`.
    Random,
    /// One random seed cell per phase; every cell joins its nearest seed with density `0.9`.
    Voronoi,
    /// As `Voronoi` with density `1`, so the phases cover the whole domain.
    VoronoiFull,
    /// Caller-provided densities (projected before use).
    Given(Vec<PhaseField<T>>),
}

#[derive(Clone, Debug)]
pub struct OptimizerConfig<T> {
    /// Iteration cap per penalization stage.
    pub max_iters: usize,
    /// First trial step; `None` uses `1 / (μ h^dim)`.
    pub initial_step: Option<T>,
    pub backtrack: T,
    pub armijo: T,
    pub max_halvings: usize,
    /// Strictly increasing penalization strengths, one stage each.
    pub mu_schedule: Vec<T>,
    /// A stage ends once an accepted step that the line search could not
    /// enlarge decreases the objective by less than this, relatively.
    pub stop_tol: T,
    pub seed: u64,
    pub init: InitMode<T>,
    pub threshold: T,
    pub solver: SolverConfig<T>,
    pub gap_tol: T,
}

impl<T: Real> Default for OptimizerConfig<T> {
    fn default() -> Self {
        Self {
            max_iters: 300,
            initial_step: None,
            backtrack: T::lit(0.5),
            armijo: T::lit(1e-4),
            max_halvings: 30,
            mu_schedule: vec![T::lit(1e3), T::lit(1e4), T::lit(1e5)],
            stop_tol: T::tol_floor(1e-7),
            seed: 0,
            init: InitMode::Voronoi,
            threshold: T::lit(0.5),
            solver: SolverConfig::default(),
            gap_tol: T::lit(1e-6),
        }
    }
}

impl<T: Real> OptimizerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        if let Some(step) = self.initial_step {
            if !(step > T::zero()) {
                return Err(Error::Config(format!("initial step must be positive, got {step}")));
            }
        }
        if !(self.backtrack > T::zero() && self.backtrack < T::one()) {
            return Err(Error::Config(format!("backtracking factor must be in (0, 1), got {}", self.backtrack)));
        }
        if !(self.armijo > T::zero() && self.armijo < T::one()) {
            return Err(Error::Config(format!("Armijo constant must be in (0, 1), got {}", self.armijo)));
        }
        if self.mu_schedule.is_empty() {
            return Err(Error::Config("penalization schedule is empty".into()));
        }
        if self.mu_schedule.iter().any(|&mu| !(mu > T::zero())) || self.mu_schedule.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("penalization schedule must be positive and strictly increasing".into()));
        }
        if !(self.stop_tol > T::zero()) {
            return Err(Error::Config(format!("stop tolerance must be positive, got {}", self.stop_tol)));
        }
        if !(self.threshold > T::zero() && self.threshold < T::one()) {
            return Err(Error::Config(format!("threshold must be in (0, 1), got {}", self.threshold)));
        }
        Ok(())
    }
}

/// One row of the objective trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord<T> {
    /// Global counter across stages; each stage starts with the evaluation of its initial point.
    pub iteration: usize,
    pub stage: usize,
    pub mu: T,
    pub objective: T,
    pub measures: Vec<T>,
    /// Accepted step (zero for the stage's initial record).
    pub step: T,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// Evaluations whose `λ_k` was flagged as degenerate.
    pub degenerate_evaluations: usize,
    /// Iterations whose backtracking exhausted `max_halvings`.
    pub line_search_failures: usize,
    /// Stages whose very first line search failed.
    pub stalled_stages: Vec<usize>,
    /// Phases with an empty support after binarization.
    pub vanished_phases: Vec<usize>,
    /// Stages that reached `max_iters`.
    pub iteration_limited_stages: Vec<usize>,
}

impl Diagnostics {
    pub fn stalled(&self) -> bool {
        !self.stalled_stages.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct StageSnapshot<T> {
    pub mu: T,
    pub phases: Vec<PhaseField<T>>,
}

#[derive(Clone, Debug)]
pub struct OptimizationResult<T> {
    pub phases: Vec<PhaseField<T>>,
    pub sets: Vec<IndicatorSet<T>>,
    pub trace: Vec<TraceRecord<T>>,
    /// Final penalized objective (last stage's μ).
    pub penalized: ObjectiveValue<T>,
    /// Exact Dirichlet objective of the binarized supports.
    pub exact: ObjectiveValue<T>,
    pub stages: Vec<StageSnapshot<T>>,
    pub diagnostics: Diagnostics,
}

/// Euclidean projection of every cell's phase vector onto `{y >= 0, Σ y <= 1}`.
///
/// `stack[i][cell]` is the density of phase `i`.
pub fn project_constraint<T: Real>(stack: &mut [Vec<T>]) {
    let h = stack.len();
    if h == 0 {
        return;
    }
    let n = stack[0].len();
    let mut y = vec![T::zero(); h];
    for cell in 0..n {
        for (i, phase) in stack.iter().enumerate() {
            y[i] = phase[cell];
        }
        project_point(&mut y);
        for (i, phase) in stack.iter_mut().enumerate() {
            phase[cell] = y[i];
        }
    }
}

/// Projects one phase vector in place.
pub fn project_point<T: Real>(y: &mut [T]) {
    let positive: T = y.iter().map(|&v| v.max(T::zero())).sum();
    if positive <= T::one() {
        y.iter_mut().for_each(|v| *v = v.max(T::zero()));
        return;
    }
    // The sum constraint is active: project onto the probability simplex.
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumulative = T::zero();
    let mut theta = T::zero();
    for (j, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - T::one()) / T::of_usize(j + 1);
        if v - candidate > T::zero() {
            theta = candidate;
        }
    }
    y.iter_mut().for_each(|v| *v = (*v - theta).max(T::zero()));
}

/// Cells where `φ_i >= threshold`, ties going to the lowest phase id.
pub fn binarize<T: Real>(phases: &[PhaseField<T>], threshold: T) -> Result<Vec<IndicatorSet<T>>> {
    let Some(first) = phases.first() else {
        return Ok(Vec::new());
    };
    let domain = first.domain().clone();
    let mut order: Vec<usize> = (0..phases.len()).collect();
    order.sort_by_key(|&i| phases[i].phase_id());
    let mut owner = vec![usize::MAX; domain.len()];
    for &i in &order {
        crate::grid::check_same_domain(&domain, phases[i].domain())?;
        for (cell, &v) in phases[i].values().iter().enumerate() {
            if owner[cell] == usize::MAX && v >= threshold {
                owner[cell] = i;
            }
        }
    }
    (0..phases.len())
        .map(|i| IndicatorSet::new(domain.clone(), owner.iter().map(|&o| o == i).collect()))
        .collect()
}

/// Initial densities for `phases` phases.
pub fn initial_phases<T: Real>(
    domain: &Arc<GridDomain<T>>,
    phases: usize,
    init: &InitMode<T>,
    seed: u64,
) -> Result<Vec<PhaseField<T>>> {
    let n = domain.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stack: Vec<Vec<T>> = match init {
        InitMode::Given(fields) => {
            if fields.len() != phases {
                return Err(Error::Config(format!(
                    "{} initial densities given for {phases} phases",
                    fields.len()
                )));
            }
            for f in fields {
                crate::grid::check_same_domain(domain, f.domain())?;
            }
            fields.iter().map(|f| f.values().to_vec()).collect()
        }
        InitMode::Random => {
            let mut stack = vec![vec![T::zero(); n]; phases];
            let mut e = vec![0.0f64; phases + 1];
            for cell in 0..n {
                // Normalized exponentials give a uniform point of the simplex
                // with `phases + 1` vertices; dropping the slack coordinate
                // gives a uniform point of the partial simplex.
                for v in e.iter_mut() {
                    *v = -(1.0 - rng.gen::<f64>()).ln();
                }
                let total: f64 = e.iter().sum();
                for (i, phase) in stack.iter_mut().enumerate() {
                    phase[cell] = T::lit(e[i] / total);
                }
            }
            stack
        }
        InitMode::Voronoi | InitMode::VoronoiFull => {
            let active: Vec<usize> = (0..n).filter(|&i| domain.in_mask(i)).collect();
            if active.len() < phases {
                return Err(Error::Config("fewer masked-in cells than phases".into()));
            }
            let mut seeds: Vec<usize> = Vec::with_capacity(phases);
            while seeds.len() < phases {
                let c = active[rng.gen_range(0..active.len())];
                if !seeds.contains(&c) {
                    seeds.push(c);
                }
            }
            let centers: Vec<[T; 3]> = seeds.iter().map(|&s| domain.center(s)).collect();
            let level = if matches!(init, InitMode::VoronoiFull) { T::one() } else { T::lit(0.9) };
            let mut stack = vec![vec![T::zero(); n]; phases];
            for cell in 0..n {
                let nearest = centers
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (i, domain.dist2(cell, &c[..domain.dim()])))
                    .fold((0, T::infinity()), |best, cur| if cur.1 < best.1 { cur } else { best })
                    .0;
                stack[nearest][cell] = level;
            }
            stack
        }
    };
    project_constraint(&mut stack);
    stack
        .into_iter()
        .enumerate()
        .map(|(i, values)| PhaseField::new(domain.clone(), values, i))
        .collect()
}

/// Runs the optimizer; see [`run_with_observer`].
pub fn run<T: Real>(
    objective: &ObjectiveSpec<T>,
    domain: &Arc<GridDomain<T>>,
    config: &OptimizerConfig<T>,
) -> Result<OptimizationResult<T>> {
    run_with_observer(objective, domain, config, &mut |_| {})
}

/// Projected gradient with Armijo backtracking for each μ of the schedule,
/// each stage warm-started from the previous one. `observer` sees every trace
/// record as it is produced.
pub fn run_with_observer<T: Real>(
    objective: &ObjectiveSpec<T>,
    domain: &Arc<GridDomain<T>>,
    config: &OptimizerConfig<T>,
    observer: &mut dyn FnMut(&TraceRecord<T>),
) -> Result<OptimizationResult<T>> {
    objective.validate()?;
    config.validate()?;
    let h = objective.phases();
    let mut phases = initial_phases(domain, h, &config.init, config.seed)?;
    let mut trace = Vec::new();
    let mut diagnostics = Diagnostics::default();
    let mut stages = Vec::with_capacity(config.mu_schedule.len());
    let mut iteration = 0usize;
    let mut last_eval: Option<ObjectiveEval<T>> = None;
    let hd = domain.cell_volume();

    for (stage, &mu) in config.mu_schedule.iter().enumerate() {
        let options = EvalOptions {
            mode: crate::pde::BoundaryMode::Penalized { mu },
            solver: config.solver,
            gap_tol: config.gap_tol,
        };
        let mut eval = eval_objective(objective, &phases, &options, last_eval.as_ref().map(|e| e.functionals.as_slice()))?;
        diagnostics.degenerate_evaluations += count_degenerate(&eval);
        let record = TraceRecord {
            iteration,
            stage,
            mu,
            objective: eval.value.total,
            measures: eval.value.measures.clone(),
            step: T::zero(),
        };
        observer(&record);
        trace.push(record);

        let base_step = config.initial_step.unwrap_or_else(|| T::one() / (mu * hd));
        let max_step = base_step * T::lit(1024.0);
        let mut step = base_step;
        let mut converged = false;
        for stage_iter in 0..config.max_iters {
            let grads = objective_gradient(objective, &phases, &eval)?;
            let mut accepted = None;
            let mut trial = step;
            for _ in 0..=config.max_halvings {
                let mut stack: Vec<Vec<T>> = phases
                    .iter()
                    .zip(&grads)
                    .map(|(p, g)| p.values().iter().zip(&g.values).map(|(&v, &d)| v - trial * d).collect())
                    .collect();
                project_constraint(&mut stack);
                let predicted: T = phases
                    .iter()
                    .zip(&grads)
                    .zip(&stack)
                    .map(|((p, g), new)| {
                        p.values()
                            .iter()
                            .zip(&g.values)
                            .zip(new)
                            .map(|((&old, &d), &nv)| d * (nv - old))
                            .sum::<T>()
                    })
                    .sum();
                if !(predicted < T::zero()) {
                    // The projected step does not move: a stationary point.
                    accepted = Some(None);
                    break;
                }
                let candidate: Vec<PhaseField<T>> = stack
                    .into_iter()
                    .enumerate()
                    .map(|(i, values)| PhaseField::new(domain.clone(), values, i))
                    .collect::<Result<_>>()?;
                match eval_objective(objective, &candidate, &options, Some(&eval.functionals)) {
                    Ok(cand_eval) => {
                        diagnostics.degenerate_evaluations += count_degenerate(&cand_eval);
                        if cand_eval.value.total <= eval.value.total + config.armijo * predicted {
                            accepted = Some(Some((candidate, cand_eval)));
                            break;
                        }
                    }
                    Err(err) if err.is_solver_failure() || matches!(err, Error::DegeneratePhase { .. }) => {
                        log::debug!("rejected trial step {trial}: {err}");
                    }
                    Err(err) => return Err(err),
                }
                trial *= config.backtrack;
            }
            match accepted {
                None => {
                    diagnostics.line_search_failures += 1;
                    if stage_iter == 0 {
                        log::warn!("stage {stage} (mu = {mu}): first line search failed, stage stalled");
                        diagnostics.stalled_stages.push(stage);
                    }
                    converged = true;
                    break;
                }
                Some(None) => {
                    converged = true;
                    break;
                }
                Some(Some((candidate, cand_eval))) => {
                    let old = eval.value.total;
                    let new = cand_eval.value.total;
                    phases = candidate;
                    eval = cand_eval;
                    iteration += 1;
                    let record = TraceRecord {
                        iteration,
                        stage,
                        mu,
                        objective: new,
                        measures: eval.value.measures.clone(),
                        step: trial,
                    };
                    observer(&record);
                    trace.push(record);
                    // A small decrease only ends the stage once the step can no longer grow;
                    // otherwise the conservative first step of a warm-started stage would end it.
                    let saturated = trial < step || trial >= max_step;
                    step = (trial / config.backtrack).min(max_step);
                    if saturated && (old - new) <= config.stop_tol * old.abs() {
                        converged = true;
                        break;
                    }
                }
            }
        }
        if !converged {
            diagnostics.iteration_limited_stages.push(stage);
        }
        iteration += 1;
        stages.push(StageSnapshot {
            mu,
            phases: phases.clone(),
        });
        last_eval = Some(eval);
    }

    let penalized = last_eval.expect("at least one stage").value;
    let sets = binarize(&phases, config.threshold)?;
    let exact = exact_objective(objective, &sets, config.solver, &mut diagnostics)?;
    Ok(OptimizationResult {
        phases,
        sets,
        trace,
        penalized,
        exact,
        stages,
        diagnostics,
    })
}

fn count_degenerate<T: Real>(eval: &ObjectiveEval<T>) -> usize {
    eval.functionals.iter().filter(|f| f.degenerate).count()
}

/// Exact Dirichlet objective of indicator supports. An empty support has
/// `λ_k = +∞` and `E = 0`; such phases are recorded in `diagnostics`.
pub fn exact_objective<T: Real>(
    objective: &ObjectiveSpec<T>,
    sets: &[IndicatorSet<T>],
    solver: SolverConfig<T>,
    diagnostics: &mut Diagnostics,
) -> Result<ObjectiveValue<T>> {
    let values: Vec<T> = sets
        .par_iter()
        .zip(objective.functionals.par_iter())
        .enumerate()
        .map(|(i, (set, &f))| {
            if set.is_empty() {
                return Ok(match f {
                    FunctionalSpec::Eigenvalue { .. } => T::infinity(),
                    FunctionalSpec::TorsionEnergy => T::zero(),
                });
            }
            match eval_functional_on_set(f, set, solver, i) {
                Ok(e) => Ok(e.value),
                // Fewer cells than the eigenvalue index: the discrete spectrum has no λ_k.
                Err(Error::DegeneratePhase { .. }) => Ok(T::infinity()),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    for (i, set) in sets.iter().enumerate() {
        if set.is_empty() {
            log::warn!("phase {i} is empty after binarization");
            diagnostics.vanished_phases.push(i);
        }
    }
    let measures: Vec<T> = sets.iter().map(IndicatorSet::measure).collect();
    let g = objective.g.apply(&values);
    let total = g + objective.m * measures.iter().copied().sum::<T>();
    Ok(ObjectiveValue {
        values,
        measures,
        g,
        total,
    })
}

/// Outcome of re-optimizing one cell inside its separating neighborhood.
#[derive(Clone, Debug, PartialEq)]
pub struct CellProbe<T> {
    pub phase: usize,
    /// `F_i(Ω_i) + m |Ω_i|` before the probe.
    pub before: T,
    /// The same quantity after re-optimizing inside `D_i`.
    pub after: T,
    /// `(before - after) / |before|`, positive when the probe improved the cell.
    pub relative_improvement: T,
}

/// Freezes every phase except `phase` and re-runs a single-phase optimization
/// of `F_i + m |·|` inside `D_i`, the complement of the one-cell dilation of
/// the other phases, starting from the current cell.
pub fn constrained_cell_probe<T: Real>(
    objective: &ObjectiveSpec<T>,
    sets: &[IndicatorSet<T>],
    phase: usize,
    config: &OptimizerConfig<T>,
) -> Result<CellProbe<T>> {
    let set = sets
        .get(phase)
        .ok_or_else(|| Error::InvalidInput(format!("no phase {phase}")))?;
    let functional = objective.functionals[phase];
    let domain = set.domain();
    let mut others = IndicatorSet::empty(domain.clone());
    for (j, s) in sets.iter().enumerate() {
        if j != phase {
            others = others.union(s)?;
        }
    }
    let blocked = others.dilate(1);
    let mask: Vec<bool> = (0..domain.len())
        .map(|idx| domain.in_mask(idx) && !blocked.contains(idx))
        .collect();
    let sub_domain = Arc::new(domain.with_mask(mask)?);
    let start = IndicatorSet::new(sub_domain.clone(), set.support().to_vec())?;

    let single = ObjectiveSpec {
        g: Aggregator::Sum,
        functionals: vec![functional],
        m: objective.m,
    };
    let mut no_diag = Diagnostics::default();
    let before = exact_objective(&single, std::slice::from_ref(&start), config.solver, &mut no_diag)?.total;
    let probe_config = OptimizerConfig {
        init: InitMode::Given(vec![PhaseField::from_indicator(&start, 0)]),
        ..config.clone()
    };
    let result = run(&single, &sub_domain, &probe_config)?;
    let after = result.exact.total;
    Ok(CellProbe {
        phase,
        before,
        after,
        relative_improvement: (before - after) / before.abs().max(T::min_positive_value()),
    })
}

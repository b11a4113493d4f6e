use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{boundary_cells, IndicatorSet};
use crate::pde::{gamma_distance, torsion_of_set, SolverConfig};
use crate::scalar::Real;
use crate::shapefn::{gamma_lip_probe, FunctionalSpec};

/// How inner perturbations `Ω̃ ⊂ Ω` are drawn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerSpec<T> {
    /// Probability that a sample is a ball removal; the rest are local erosions.
    pub ball_fraction: f64,
    /// Smallest radius, in cells.
    pub min_radius_cells: T,
    /// Largest radius; `None` means `|Ω|^(1/dim) / 4`.
    pub max_radius: Option<T>,
}

impl<T: Real> Default for SamplerSpec<T> {
    fn default() -> Self {
        Self {
            ball_fraction: 0.7,
            min_radius_cells: T::lit(2.0),
            max_radius: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Perturbation<T> {
    /// `Ω̃ = Ω \ B_r(center)`.
    Ball { center: Vec<T>, radius: T },
    /// One-step erosion restricted to a ball: the boundary cells of `Ω`
    /// within `B_r(center)` are removed.
    Erosion { center: Vec<T>, radius: T },
}

impl<T: Real> Perturbation<T> {
    pub fn center(&self) -> &[T] {
        match self {
            Perturbation::Ball { center, .. } | Perturbation::Erosion { center, .. } => center,
        }
    }

    pub fn radius(&self) -> T {
        match self {
            Perturbation::Ball { radius, .. } | Perturbation::Erosion { radius, .. } => *radius,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Perturbation::Ball { .. } => "ball",
            Perturbation::Erosion { .. } => "erosion",
        }
    }

    /// The perturbed set.
    pub fn apply(&self, set: &IndicatorSet<T>) -> IndicatorSet<T> {
        let domain = set.domain();
        let mut support = set.support().to_vec();
        match self {
            Perturbation::Ball { center, radius } => {
                domain.for_each_in_ball(center, *radius, |idx, _| support[idx] = false);
            }
            Perturbation::Erosion { center, radius } => {
                let band = boundary_cells(set);
                domain.for_each_in_ball(center, *radius, |idx, _| {
                    if band.contains(idx) {
                        support[idx] = false;
                    }
                });
            }
        }
        IndicatorSet::new(domain.clone(), support).expect("same grid")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationRecord<T> {
    pub perturbation: Perturbation<T>,
    /// `E(Ω̃) - E(Ω)`.
    pub delta_energy: T,
    /// `|Ω| - |Ω̃|`.
    pub delta_measure: T,
    /// `ΔE - m Δ|·|`.
    pub margin: T,
    pub d_gamma: T,
    /// `2 m Δ|·| / d_γ`; `None` when `d_γ = 0`.
    pub ratio: Option<T>,
    /// Unperturbed set (`Ω̃ = Ω`), counted as a pass.
    pub trivial: bool,
}

#[derive(Clone, Debug)]
pub struct SubsolutionReport<T> {
    pub m: T,
    /// Perturbations drawn, including skipped ones.
    pub sampled: usize,
    pub records: Vec<PerturbationRecord<T>>,
    /// Reasons for perturbations that were drawn but not evaluated.
    pub skipped: Vec<String>,
    /// A record passes when `margin >= -slack`.
    pub slack: T,
    pub pass_fraction: T,
    /// Fraction with `margin >= 0`.
    pub strict_fraction: T,
    pub energy: T,
    pub measure: T,
}

impl<T: Real> SubsolutionReport<T> {
    pub fn worst_margin(&self) -> Option<T> {
        self.records.iter().map(|r| r.margin).reduce(T::min)
    }

    /// Largest `2 m Δ|·| / d_γ` over the records.
    pub fn max_ratio(&self) -> Option<T> {
        self.records.iter().filter_map(|r| r.ratio).reduce(T::max)
    }
}

/// Multiplier of the energy subsolution inequality satisfied by an optimal
/// cell of `F + m|·|`, where `F` changes by at most `lip_constant * d_γ` under
/// inner perturbations and the aggregator has Lipschitz constant
/// `aggregator_lipschitz`: `m / (2 C L)`.
pub fn energy_multiplier<T: Real>(m: T, lip_constant: T, aggregator_lipschitz: T) -> Result<T> {
    if !(lip_constant > T::zero()) || !(aggregator_lipschitz > T::zero()) {
        return Err(Error::InvalidInput(format!(
            "Lipschitz constants must be positive, got {lip_constant} and {aggregator_lipschitz}"
        )));
    }
    Ok(m / (T::lit(2.0) * lip_constant * aggregator_lipschitz))
}

/// Empirical γ-Lipschitz constant of `spec` at `set`: the largest
/// `|ΔF| / d_γ` over `count` ball removals drawn as in [`subsolution_test`].
pub fn estimate_lip_constant<T: Real>(
    spec: FunctionalSpec,
    set: &IndicatorSet<T>,
    sampler: &SamplerSpec<T>,
    count: usize,
    seed: u64,
    solver: SolverConfig<T>,
) -> Result<T> {
    if set.is_empty() {
        return Err(Error::InvalidInput("Lipschitz probe on an empty set".into()));
    }
    let domain = set.domain();
    let (r_min, r_max) = radius_range(set, sampler);
    let cells: Vec<usize> = set.indices().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let balls: Vec<(Vec<T>, T)> = (0..count)
        .map(|_| {
            let radius = log_uniform(&mut rng, r_min, r_max);
            let idx = cells[rng.gen_range(0..cells.len())];
            (domain.center(idx)[..domain.dim()].to_vec(), radius)
        })
        .collect();
    let samples = gamma_lip_probe(spec, set, &balls, solver)?;
    samples
        .iter()
        .map(|s| s.ratio)
        .reduce(T::max)
        .ok_or_else(|| Error::InvalidInput("no admissible ball removal for the Lipschitz probe".into()))
}

fn radius_range<T: Real>(set: &IndicatorSet<T>, sampler: &SamplerSpec<T>) -> (T, T) {
    let domain = set.domain();
    let r_min = sampler.min_radius_cells * domain.h();
    let r_max = sampler
        .max_radius
        .unwrap_or_else(|| set.measure().powf(T::one() / T::of_usize(domain.dim())) / T::lit(4.0))
        .max(r_min);
    (r_min, r_max)
}

fn log_uniform<T: Real>(rng: &mut ChaCha8Rng, lo: T, hi: T) -> T {
    let (lo, hi) = (lo.as_f64().ln(), hi.as_f64().ln());
    T::lit(if hi > lo { rng.gen_range(lo..=hi) } else { lo }.exp())
}

/// Tests `E(Ω) + m|Ω| <= E(Ω̃) + m|Ω̃|` on `count` random inner perturbations.
pub fn subsolution_test<T: Real>(
    set: &IndicatorSet<T>,
    m: T,
    sampler: &SamplerSpec<T>,
    count: usize,
    seed: u64,
    slack: T,
    solver: SolverConfig<T>,
) -> Result<SubsolutionReport<T>> {
    if !(m > T::zero()) {
        return Err(Error::InvalidInput(format!("m must be positive, got {m}")));
    }
    if set.is_empty() {
        return Err(Error::InvalidInput("subsolution test on an empty set".into()));
    }
    if !(0.0..=1.0).contains(&sampler.ball_fraction) {
        return Err(Error::Config(format!(
            "ball fraction must lie in [0, 1], got {}",
            sampler.ball_fraction
        )));
    }
    let domain = set.domain();
    let measure = set.measure();
    let (r_min, r_max) = radius_range(set, sampler);

    let cells: Vec<usize> = set.indices().collect();
    let band: Vec<usize> = boundary_cells(set).indices().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perturbations: Vec<Perturbation<T>> = (0..count)
        .map(|_| {
            let radius = log_uniform(&mut rng, r_min, r_max);
            if rng.gen_bool(sampler.ball_fraction) {
                let idx = cells[rng.gen_range(0..cells.len())];
                Perturbation::Ball {
                    center: domain.center(idx)[..domain.dim()].to_vec(),
                    radius,
                }
            } else {
                let idx = band[rng.gen_range(0..band.len())];
                Perturbation::Erosion {
                    center: domain.center(idx)[..domain.dim()].to_vec(),
                    radius,
                }
            }
        })
        .collect();

    let base = torsion_of_set(set, solver)?;
    let energy = base.energy();
    let outcomes: Vec<std::result::Result<PerturbationRecord<T>, String>> = perturbations
        .into_par_iter()
        .map(|p| -> Result<std::result::Result<PerturbationRecord<T>, String>> {
            let inner = p.apply(set);
            if inner.is_empty() {
                return Ok(Err(format!(
                    "{} at {:?} radius {} empties the set",
                    p.kind(),
                    p.center(),
                    p.radius()
                )));
            }
            let removed = set.count() - inner.count();
            let trivial = removed == 0;
            let w = if trivial { base.clone() } else { torsion_of_set(&inner, solver)? };
            let delta_energy = w.energy() - energy;
            let delta_measure = domain.cell_volume() * T::of_usize(removed);
            let d_gamma = gamma_distance(&base, &w)?;
            let ratio = (d_gamma > T::zero()).then(|| T::lit(2.0) * m * delta_measure / d_gamma);
            Ok(Ok(PerturbationRecord {
                perturbation: p,
                delta_energy,
                delta_measure,
                margin: delta_energy - m * delta_measure,
                d_gamma,
                ratio,
                trivial,
            }))
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(r) => records.push(r),
            Err(note) => {
                log::info!("subsolution test: {note}");
                skipped.push(note);
            }
        }
    }
    let fraction = |pred: &dyn Fn(&PerturbationRecord<T>) -> bool| {
        if records.is_empty() {
            T::zero()
        } else {
            T::of_usize(records.iter().filter(|r| pred(r)).count()) / T::of_usize(records.len())
        }
    };
    let pass_fraction = fraction(&|r| r.trivial || r.margin >= -slack);
    let strict_fraction = fraction(&|r| r.trivial || r.margin >= T::zero());
    Ok(SubsolutionReport {
        m,
        sampled: count,
        records,
        skipped,
        slack,
        pass_fraction,
        strict_fraction,
        energy,
        measure,
    })
}

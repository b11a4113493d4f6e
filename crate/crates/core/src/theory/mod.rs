//! Numerical counterparts of the free-boundary estimates: subsolution tests,
//! growth, density and perimeter checks, monotonicity profiles, the
//! Alt–Caffarelli inequality, junction scanning and phase separation.
//!
//! Every check here is a report. Callers decide which quantities to assert.

mod estimates;
mod junction;
mod monotonicity;
mod subsolution;

pub use estimates::{
    density_profile, growth_bounds, growth_profile, linear_growth_constant, lower_bound_check,
    perimeter_bound_check, scaling_spread, DensityProfile, GrowthBounds, GrowthProfile, GrowthRow,
    LinearGrowth, LowerBoundReport, PerimeterReport, ScalingSpread,
};
pub use junction::{
    junction_scan, separation_check, JunctionClass, JunctionPoint, JunctionReport, PairSeparation,
    SeparationReport,
};
pub use monotonicity::{
    alt_caffarelli_check, default_epsilon, epsilon_bound_2d, gradient_squared, halfplanes_preset,
    monotonicity_profile, sectors_preset, three_arc_sum, AltCaffarelli, DyadicRow,
    MonotonicityProfile, ProfileRow,
};
pub use subsolution::{
    energy_multiplier, estimate_lip_constant, subsolution_test, Perturbation, PerturbationRecord, SamplerSpec,
    SubsolutionReport,
};

use crate::grid::{ball_coverage, GridDomain};
use crate::scalar::Real;

/// Quadrature weights of the spherical shell `{ |x - x0| ∈ [r - h/2, r + h/2] }`:
/// the covered fraction of each cell. Summing `weight * h^dim` gives the
/// shell measure, which divided by `h` approximates `|∂B_r|`.
pub(crate) fn shell_weights<T: Real>(domain: &GridDomain<T>, x0: &[T], r: T) -> Vec<(usize, T)> {
    let half = domain.h() * T::lit(0.5);
    let outer = ball_coverage(domain, x0, r + half);
    let inner_r = r - half;
    let inner = if inner_r > T::zero() {
        ball_coverage(domain, x0, inner_r)
    } else {
        Vec::new()
    };
    // Both coverage lists come out in increasing cell index.
    let mut out = Vec::with_capacity(outer.len());
    let mut p = 0;
    for (idx, w) in outer {
        let mut v = w;
        while p < inner.len() && inner[p].0 < idx {
            p += 1;
        }
        if p < inner.len() && inner[p].0 == idx {
            v -= inner[p].1;
        }
        if v > T::zero() {
            out.push((idx, v));
        }
    }
    out
}

/// Mean of `values` over the shell of radius `r`, or `None` if the shell
/// contains no masked-in cell.
pub(crate) fn shell_mean<T: Real>(domain: &GridDomain<T>, values: &[T], x0: &[T], r: T) -> Option<T> {
    let mut total = T::zero();
    let mut weight = T::zero();
    for (idx, w) in shell_weights(domain, x0, r) {
        if domain.in_mask(idx) {
            total += w * values[idx];
            weight += w;
        }
    }
    (weight > T::zero()).then(|| total / weight)
}

/// Maximum of `values` over the discrete closed ball: cells whose centers lie
/// within `r + h/2`, so that it contains every cell of the shell of radius `r`.
pub(crate) fn ball_sup<T: Real>(domain: &GridDomain<T>, values: &[T], x0: &[T], r: T) -> T {
    let mut best = T::zero();
    domain.for_each_in_ball(x0, r + domain.h() * T::lit(0.5), |idx, _| {
        if domain.in_mask(idx) {
            best = best.max(values[idx]);
        }
    });
    best
}

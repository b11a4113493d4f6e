use crate::error::{Error, Result};
use crate::grid::{boundary_cells, density_ratio, perimeter, IndicatorSet, PerimeterMode};
use crate::pde::TorsionField;
use crate::scalar::Real;
use crate::theory::{ball_sup, shell_mean};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthRow<T> {
    pub r: T,
    /// `max w` over the discrete closed ball of radius `r`.
    pub sup: T,
    /// Mean of `w` over the shell of radius `r`.
    pub mean: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthProfile<T> {
    pub center: Vec<T>,
    pub rows: Vec<GrowthRow<T>>,
    /// Radii dropped because their shell held no masked-in cell.
    pub skipped: Vec<T>,
}

/// Ball supremum and spherical mean of `w` around `x0`.
pub fn growth_profile<T: Real>(w: &TorsionField<T>, x0: &[T], radii: &[T]) -> Result<GrowthProfile<T>> {
    let domain = w.domain();
    check_point(domain.dim(), x0)?;
    let minimum = domain.h() * T::lit(2.0);
    let mut rows = Vec::with_capacity(radii.len());
    let mut skipped = Vec::new();
    for &r in radii {
        if !(r >= minimum) {
            return Err(Error::DegenerateRadius {
                radius: r.as_f64(),
                minimum: minimum.as_f64(),
            });
        }
        match shell_mean(domain, w.values(), x0, r) {
            Some(mean) => rows.push(GrowthRow {
                r,
                sup: ball_sup(domain, w.values(), x0, r),
                mean,
            }),
            None => skipped.push(r),
        }
    }
    Ok(GrowthProfile {
        center: x0.to_vec(),
        rows,
        skipped,
    })
}

/// Both sides of `2^(-d-2) sup_{B_r} w <= mean_{∂B_2r} w <= sup_{B_2r} w`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthBounds<T> {
    /// Radii `r` at which both `r` and `2r` were evaluated.
    pub radii: Vec<T>,
    /// Right inequality at every radius.
    pub upper_holds: bool,
    /// Smallest `mean_{∂B_2r} w / sup_{B_r} w` over radii with `sup > 0`.
    pub worst_lower_constant: Option<T>,
    /// `2^(-d-2)`.
    pub reference_constant: T,
}

pub fn growth_bounds<T: Real>(w: &TorsionField<T>, x0: &[T], radii: &[T]) -> Result<GrowthBounds<T>> {
    let doubled: Vec<T> = radii.iter().map(|&r| r * T::lit(2.0)).collect();
    let inner = growth_profile(w, x0, radii)?;
    let outer = growth_profile(w, x0, &doubled)?;
    let mut used = Vec::new();
    let mut upper_holds = true;
    let mut worst: Option<T> = None;
    for row in &inner.rows {
        let Some(big) = outer.rows.iter().find(|o| o.r == row.r * T::lit(2.0)) else {
            continue;
        };
        used.push(row.r);
        upper_holds &= big.mean <= big.sup;
        if row.sup > T::zero() {
            let c = big.mean / row.sup;
            worst = Some(worst.map_or(c, |v| v.min(c)));
        }
    }
    let dim = w.domain().dim() as i32;
    Ok(GrowthBounds {
        radii: used,
        upper_holds,
        worst_lower_constant: worst,
        reference_constant: T::lit(2.0).powi(-dim - 2),
    })
}

/// Empirical constant of linear growth away from the free boundary: the
/// smallest `sup_{B_r(x0)} w / r` over boundary cells `x0` of `{w > 0}` and
/// the given radii.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGrowth<T> {
    pub constant: T,
    pub worst_center: Vec<T>,
    pub worst_radius: T,
    pub points: usize,
}

pub fn linear_growth_constant<T: Real>(w: &TorsionField<T>, radii: &[T]) -> Result<LinearGrowth<T>> {
    let domain = w.domain();
    let band = boundary_cells(&w.positivity_set());
    if band.is_empty() {
        return Err(Error::InvalidInput("torsion field has empty support".into()));
    }
    if radii.is_empty() {
        return Err(Error::InvalidInput("no radii given".into()));
    }
    let mut best = LinearGrowth {
        constant: T::infinity(),
        worst_center: Vec::new(),
        worst_radius: T::zero(),
        points: band.count(),
    };
    for idx in band.indices() {
        let x0 = &domain.center(idx)[..domain.dim()];
        for &r in radii {
            let mut sup = T::zero();
            domain.for_each_in_ball(x0, r, |j, _| sup = sup.max(w.values()[j]));
            let c = sup / r;
            if c < best.constant {
                best.constant = c;
                best.worst_center = x0.to_vec();
                best.worst_radius = r;
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityProfile<T> {
    pub center: Vec<T>,
    /// `(r, |Ω ∩ B_r| / |B_r|)`.
    pub rows: Vec<(T, T)>,
    /// Largest ratio: the finite-radius stand-in for the upper limit.
    pub max: T,
}

pub fn density_profile<T: Real>(set: &IndicatorSet<T>, x0: &[T], radii: &[T]) -> Result<DensityProfile<T>> {
    check_point(set.domain().dim(), x0)?;
    let rows = radii
        .iter()
        .map(|&r| density_ratio(set, x0, r).map(|d| (r, d)))
        .collect::<Result<Vec<_>>>()?;
    let max = rows.iter().map(|&(_, d)| d).fold(T::zero(), T::max);
    Ok(DensityProfile {
        center: x0.to_vec(),
        rows,
        max,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerimeterReport<T> {
    pub m: T,
    /// Smoothed perimeter estimate.
    pub perimeter: T,
    pub measure: T,
    /// `sqrt(m/2) P / |Ω|`.
    pub energy_ratio: T,
    /// `sqrt(m) P / (λ₁ |Ω|^(1/2))`, when `λ₁` was supplied.
    pub eigen_ratio: Option<T>,
    pub tolerance: T,
    pub energy_ok: bool,
    pub eigen_ok: Option<bool>,
}

/// Compares the smoothed perimeter against `|Ω|` and `λ₁ |Ω|^(1/2)`; a ratio
/// passes when it is at most `1 + tolerance`.
pub fn perimeter_bound_check<T: Real>(
    set: &IndicatorSet<T>,
    m: T,
    lambda1: Option<T>,
    tolerance: T,
) -> Result<PerimeterReport<T>> {
    if set.is_empty() {
        return Err(Error::InvalidInput("perimeter check on an empty set".into()));
    }
    let p = perimeter(set, PerimeterMode::Smoothed).value;
    let measure = set.measure();
    let energy_ratio = (m / T::lit(2.0)).sqrt() * p / measure;
    let eigen_ratio = lambda1.map(|l| m.sqrt() * p / (l * measure.sqrt()));
    let limit = T::one() + tolerance;
    Ok(PerimeterReport {
        m,
        perimeter: p,
        measure,
        energy_ratio,
        eigen_ratio,
        tolerance,
        energy_ok: energy_ratio <= limit,
        eigen_ok: eigen_ratio.map(|r| r <= limit),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowerBoundReport<T> {
    pub m: T,
    pub measure: T,
    pub lambda1: T,
    /// `|Ω| m^(-d/2)`.
    pub scaled_measure: T,
    /// `λ₁ m^(-2/(d+2))`.
    pub scaled_eigenvalue: T,
}

pub fn lower_bound_check<T: Real>(set: &IndicatorSet<T>, m: T, lambda1: T) -> Result<LowerBoundReport<T>> {
    if !(m > T::zero()) {
        return Err(Error::InvalidInput(format!("m must be positive, got {m}")));
    }
    let d = T::of_usize(set.domain().dim());
    let measure = set.measure();
    Ok(LowerBoundReport {
        m,
        measure,
        lambda1,
        scaled_measure: measure * m.powf(-d / T::lit(2.0)),
        scaled_eigenvalue: lambda1 * m.powf(-T::lit(2.0) / (d + T::lit(2.0))),
    })
}

/// Max/min ratios of the scaled quantities across an `m` sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingSpread<T> {
    pub measure_spread: T,
    pub eigen_spread: T,
    pub band: T,
    pub measure_within: bool,
    pub eigen_within: bool,
}

pub fn scaling_spread<T: Real>(reports: &[LowerBoundReport<T>], band: T) -> Result<ScalingSpread<T>> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("empty sweep".into()));
    }
    let spread = |f: &dyn Fn(&LowerBoundReport<T>) -> T| {
        let hi = reports.iter().map(f).fold(T::neg_infinity(), T::max);
        let lo = reports.iter().map(f).fold(T::infinity(), T::min);
        hi / lo
    };
    let measure_spread = spread(&|r| r.scaled_measure);
    let eigen_spread = spread(&|r| r.scaled_eigenvalue);
    Ok(ScalingSpread {
        measure_spread,
        eigen_spread,
        band,
        measure_within: measure_spread <= band,
        eigen_within: eigen_spread <= band,
    })
}

fn check_point<T: Real>(dim: usize, x0: &[T]) -> Result<()> {
    if x0.len() != dim {
        return Err(Error::InvalidInput(format!(
            "point has {} coordinates, domain has dimension {dim}",
            x0.len()
        )));
    }
    Ok(())
}

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ball_coverage, build_domain, BoxSpec, GridDomain};
use crate::scalar::Real;
use crate::theory::{shell_mean, shell_weights};

/// Relative pairwise overlap `Σ u_i u_j / (|u_i| |u_j|)` above which fields are
/// rejected as not having disjoint supports.
const OVERLAP_TOL: f64 = 1e-10;

/// `|∇u|²` per cell by finite differences.
///
/// Central differences inside `{u > 0}`; at a cell whose neighbor along an
/// axis has `u = 0` (or lies outside the box or mask) the second-order
/// one-sided difference toward the other side is used (first order when only
/// one cell is available there), and zero if both neighbors are outside.
/// Cells with `u = 0` get zero.
pub fn gradient_squared<T: Real>(domain: &GridDomain<T>, u: &[T]) -> Vec<T> {
    let h = domain.h();
    let positive = |n: Option<usize>| n.filter(|&n| domain.in_mask(n) && u[n] > T::zero());
    (0..domain.len())
        .into_par_iter()
        .map(|idx| {
            if !domain.in_mask(idx) || !(u[idx] > T::zero()) {
                return T::zero();
            }
            let mut g2 = T::zero();
            for axis in 0..domain.dim() {
                let back = positive(domain.neighbor(idx, axis, false));
                let fwd = positive(domain.neighbor(idx, axis, true));
                let one_sided = |near: usize, forward: bool| {
                    let sign = if forward { T::one() } else { -T::one() };
                    match positive(domain.neighbor(near, axis, forward)) {
                        Some(far) => sign * (T::lit(4.0) * u[near] - u[far] - T::lit(3.0) * u[idx]) / (h + h),
                        None => sign * (u[near] - u[idx]) / h,
                    }
                };
                let d = match (back, fwd) {
                    (Some(b), Some(f)) => (u[f] - u[b]) / (h + h),
                    (Some(b), None) => one_sided(b, false),
                    (None, Some(f)) => one_sided(f, true),
                    (None, None) => T::zero(),
                };
                g2 += d * d;
            }
            g2
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileRow<T> {
    pub r: T,
    /// `A_i(r) = ∫_{B_r} |∇u_i|² |x - x0|^(2-d)`.
    pub a: Vec<T>,
    /// `b_i(r) = A_i(r) / r⁴`.
    pub b: Vec<T>,
    /// `B_i(r) = ∫_{∂B_r} |∇u_i|²`.
    pub boundary: Vec<T>,
    /// `A_1 A_2 / r⁴`.
    pub phi2: T,
    /// `A_1 A_2 A_3 / r^(6 + 3ε)`, for three fields.
    pub phi3: Option<T>,
    /// `Π_i r^(-3) ∫_{B_r} |∇u_i|²`, for three fields in dimension 2.
    pub phi_ctv: Option<T>,
}

/// Profile quantities at `r = 4^(-k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicRow<T> {
    pub k: u32,
    pub r: T,
    pub a: Vec<T>,
    /// `4^(4k) A_i^k`.
    pub b: Vec<T>,
    /// `Σ_i 1 / sqrt(b_i^k)` (the dimensional constant is taken as 1).
    pub delta: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityProfile<T> {
    pub center: Vec<T>,
    pub epsilon: T,
    pub rows: Vec<ProfileRow<T>>,
    pub dyadic: Vec<DyadicRow<T>>,
    /// Requested radii outside `[4h, dist(x0, ∂D) / 2]`.
    pub skipped: Vec<T>,
}

impl<T: Real> MonotonicityProfile<T> {
    pub fn radii(&self) -> Vec<T> {
        self.rows.iter().map(|r| r.r).collect()
    }

    /// `max / min` of a positive column; 1 means constant.
    pub fn spread(&self, column: impl Fn(&ProfileRow<T>) -> Option<T>) -> Option<T> {
        let values: Vec<T> = self.rows.iter().filter_map(column).collect();
        if values.is_empty() {
            return None;
        }
        let hi = values.iter().copied().fold(T::neg_infinity(), T::max);
        let lo = values.iter().copied().fold(T::infinity(), T::min);
        Some(hi / lo)
    }

    /// Largest relative drop `(prev - next) / prev` of a column along increasing `r`.
    pub fn worst_decrease(&self, column: impl Fn(&ProfileRow<T>) -> Option<T>) -> Option<T> {
        let values: Vec<T> = self.rows.iter().filter_map(column).collect();
        values
            .windows(2)
            .map(|w| ((w[0] - w[1]) / w[0]).max(T::zero()))
            .reduce(T::max)
    }
}

/// Default ε of the three-phase formula: half of [`epsilon_bound_2d`] in
/// dimension 2, and 0.25 otherwise.
pub fn default_epsilon<T: Real>(dim: usize) -> T {
    if dim == 2 {
        T::lit(epsilon_bound_2d() * 0.5)
    } else {
        T::lit(0.25)
    }
}

/// Weighted Dirichlet integrals and monotonicity products of 2 or 3
/// nonnegative fields with disjoint supports around `x0`.
pub fn monotonicity_profile<T: Real>(
    domain: &GridDomain<T>,
    fields: &[&[T]],
    x0: &[T],
    radii: &[T],
    epsilon: T,
) -> Result<MonotonicityProfile<T>> {
    let n = fields.len();
    if !(2..=3).contains(&n) {
        return Err(Error::InvalidInput(format!("monotonicity profile needs 2 or 3 fields, got {n}")));
    }
    if x0.len() != domain.dim() {
        return Err(Error::InvalidInput(format!(
            "center has {} coordinates, domain has dimension {}",
            x0.len(),
            domain.dim()
        )));
    }
    for (i, u) in fields.iter().enumerate() {
        if u.len() != domain.len() {
            return Err(Error::InvalidInput(format!(
                "field {} has {} entries, grid has {} cells",
                i + 1,
                u.len(),
                domain.len()
            )));
        }
        if let Some(v) = u.iter().find(|v| !(**v >= T::zero())) {
            return Err(Error::InvalidInput(format!("field {} has value {v} < 0", i + 1)));
        }
    }
    check_disjoint(fields)?;

    let grads: Vec<Vec<T>> = fields.iter().map(|u| gradient_squared(domain, u)).collect();
    let h = domain.h();
    let r_lo = h * T::lit(4.0);
    let r_hi = domain.distance_to_box_edge(x0) * T::lit(0.5);
    let admissible = |r: T| r >= r_lo && r <= r_hi;

    let mut skipped = Vec::new();
    let mut kept = Vec::new();
    for &r in radii {
        if admissible(r) {
            kept.push(r);
        } else {
            skipped.push(r);
        }
    }
    let three = n == 3;
    let ctv = three && domain.dim() == 2;
    let rows: Vec<ProfileRow<T>> = kept
        .par_iter()
        .map(|&r| {
            let a = weighted_integrals(domain, &grads, x0, r);
            let b: Vec<T> = a.iter().map(|&v| v / r.powi(4)).collect();
            let boundary = shell_integrals(domain, &grads, x0, r);
            let phi2 = a[0] * a[1] / r.powi(4);
            let phi3 = three.then(|| a[0] * a[1] * a[2] / r.powf(T::lit(6.0) + T::lit(3.0) * epsilon));
            let phi_ctv = ctv.then(|| a.iter().fold(T::one(), |p, &v| p * v / r.powi(3)));
            ProfileRow {
                r,
                a,
                b,
                boundary,
                phi2,
                phi3,
                phi_ctv,
            }
        })
        .collect();

    let mut dyadic = Vec::new();
    for k in 0u32.. {
        let r = T::lit(0.25).powi(k as i32);
        if r < r_lo {
            break;
        }
        if !admissible(r) {
            continue;
        }
        let a = weighted_integrals(domain, &grads, x0, r);
        let scale = T::lit(4.0).powi(4 * k as i32);
        let b: Vec<T> = a.iter().map(|&v| v * scale).collect();
        let delta = b.iter().map(|&v| T::one() / v.sqrt()).sum();
        dyadic.push(DyadicRow { k, r, a, b, delta });
    }

    Ok(MonotonicityProfile {
        center: x0.to_vec(),
        epsilon,
        rows,
        dyadic,
        skipped,
    })
}

fn check_disjoint<T: Real>(fields: &[&[T]]) -> Result<()> {
    let norms: Vec<T> = fields
        .iter()
        .map(|u| u.iter().map(|&v| v * v).sum::<T>().sqrt())
        .collect();
    for i in 0..fields.len() {
        for j in i + 1..fields.len() {
            let dot: T = fields[i].iter().zip(fields[j]).map(|(&a, &b)| a * b).sum();
            let denom = norms[i] * norms[j];
            let overlap = if denom > T::zero() { dot / denom } else { T::zero() };
            if overlap > T::lit(OVERLAP_TOL) {
                return Err(Error::OverlappingSupports {
                    first: i + 1,
                    second: j + 1,
                    overlap: overlap.as_f64(),
                });
            }
        }
    }
    Ok(())
}

/// `∫_{B_r} g |x - x0|^(2-d)` per field, with fractional ball coverage and the
/// weight at cell centers capped at `(h/2)^(2-d)`.
fn weighted_integrals<T: Real>(domain: &GridDomain<T>, grads: &[Vec<T>], x0: &[T], r: T) -> Vec<T> {
    let dim = domain.dim();
    let floor = domain.h() * T::lit(0.5);
    let mut acc = vec![T::zero(); grads.len()];
    for (idx, cov) in ball_coverage(domain, x0, r) {
        let weight = if dim == 2 {
            cov
        } else {
            cov * domain.dist2(idx, x0).sqrt().max(floor).powi(2 - dim as i32)
        };
        for (a, g) in acc.iter_mut().zip(grads) {
            *a += weight * g[idx];
        }
    }
    let hd = domain.cell_volume();
    acc.into_iter().map(|v| v * hd).collect()
}

fn shell_integrals<T: Real>(domain: &GridDomain<T>, grads: &[Vec<T>], x0: &[T], r: T) -> Vec<T> {
    let mut acc = vec![T::zero(); grads.len()];
    for (idx, w) in shell_weights(domain, x0, r) {
        for (a, g) in acc.iter_mut().zip(grads) {
            *a += w * g[idx];
        }
    }
    let scale = domain.cell_volume() / domain.h();
    acc.into_iter().map(|v| v * scale).collect()
}

/// `(π/L₁) + (π/L₂) + (π/(2π - L₁ - L₂))`: the sum of the homogeneity exponents
/// of the first eigenfunctions of three arcs partitioning the unit circle.
/// `+∞` outside the admissible triangle.
pub fn three_arc_sum(l1: f64, l2: f64) -> f64 {
    let l3 = 2.0 * std::f64::consts::PI - l1 - l2;
    if l1 <= 0.0 || l2 <= 0.0 || l3 <= 0.0 {
        return f64::INFINITY;
    }
    std::f64::consts::PI * (1.0 / l1 + 1.0 / l2 + 1.0 / l3)
}

/// Largest ε with `6 + 3ε <= 2 min Σ α_i` over three-arc partitions of the
/// unit circle, the minimum found by Nelder–Mead over `(L₁, L₂)`.
pub fn epsilon_bound_2d() -> f64 {
    let f = |p: [f64; 2]| three_arc_sum(p[0], p[1]);
    let min = nelder_mead(f, [1.5, 2.5], 0.5, 1e-15, 5000);
    (2.0 * min - 6.0) / 3.0
}

fn nelder_mead(f: impl Fn([f64; 2]) -> f64, start: [f64; 2], step: f64, tol: f64, max_iter: usize) -> f64 {
    let mut simplex = [start, [start[0] + step, start[1]], [start[0], start[1] + step]];
    let mut values = simplex.map(|p| f(p));
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for _ in 0..max_iter {
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);
        if values[2] - values[0] <= tol * values[0].abs().max(1.0) {
            break;
        }
        let centroid = lerp(simplex[0], simplex[1], 0.5);
        let reflected = lerp(centroid, simplex[2], -1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = lerp(centroid, simplex[2], -2.0);
            let fe = f(expanded);
            (simplex[2], values[2]) = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < values[1] {
            (simplex[2], values[2]) = (reflected, fr);
        } else {
            let contracted = if fr < values[2] {
                lerp(centroid, reflected, 0.5)
            } else {
                lerp(centroid, simplex[2], 0.5)
            };
            let fc = f(contracted);
            if fc < values[2].min(fr) {
                (simplex[2], values[2]) = (contracted, fc);
            } else {
                for i in 1..3 {
                    simplex[i] = lerp(simplex[0], simplex[i], 0.5);
                    values[i] = f(simplex[i]);
                }
            }
        }
    }
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AltCaffarelli<T> {
    pub r: T,
    /// `|{u = 0} ∩ B_r|`.
    pub zero_measure: T,
    /// Mean of `u` over `∂B_r`.
    pub shell_mean: T,
    /// `r^(-2) |{u = 0} ∩ B_r| (mean_{∂B_r} u)²`.
    pub lhs: T,
    /// `∫_{B_r} |∇u|²`.
    pub rhs: T,
    /// `lhs / rhs`; `None` when `rhs = 0`.
    pub ratio: Option<T>,
}

/// Both sides of `r^(-2) |{u=0} ∩ B_r| (mean_{∂B_r} u)² <= C ∫_{B_r} |∇u|²`
/// (without the constant).
pub fn alt_caffarelli_check<T: Real>(domain: &GridDomain<T>, u: &[T], x0: &[T], r: T) -> Result<AltCaffarelli<T>> {
    if u.len() != domain.len() || x0.len() != domain.dim() {
        return Err(Error::InvalidInput("field or center does not match the grid".into()));
    }
    let minimum = domain.h() * T::lit(4.0);
    if !(r >= minimum) {
        return Err(Error::DegenerateRadius {
            radius: r.as_f64(),
            minimum: minimum.as_f64(),
        });
    }
    let mean = shell_mean(domain, u, x0, r)
        .ok_or_else(|| Error::Domain(format!("shell of radius {r} holds no cell of the domain")))?;
    let grads = gradient_squared(domain, u);
    let hd = domain.cell_volume();
    let mut zero = T::zero();
    let mut rhs = T::zero();
    for (idx, cov) in ball_coverage(domain, x0, r) {
        if !domain.in_mask(idx) {
            continue;
        }
        if u[idx] == T::zero() {
            zero += cov * hd;
        }
        rhs += cov * hd * grads[idx];
    }
    let lhs = zero * mean * mean / (r * r);
    Ok(AltCaffarelli {
        r,
        zero_measure: zero,
        shell_mean: mean,
        lhs,
        rhs,
        ratio: (rhs > T::zero()).then(|| lhs / rhs),
    })
}

/// Grid on `[-1, 1]²` with spacing `h`, the analytic presets' domain.
fn preset_domain<T: Real>(h: T) -> Result<Arc<GridDomain<T>>> {
    let n = (T::lit(2.0) / h).round().to_usize().unwrap_or(0);
    if n < 8 {
        return Err(Error::InvalidInput(format!("preset spacing {h} is too coarse")));
    }
    let spec = BoxSpec::new(&[-T::one(), -T::one()], &[T::one(), T::one()], &[n, n]);
    Ok(Arc::new(build_domain(&spec, None)?))
}

/// `u₁ = max(x, 0)`, `u₂ = max(-x, 0)` on `[-1, 1]²`; the center is the origin.
pub fn halfplanes_preset<T: Real>(h: T) -> Result<(Arc<GridDomain<T>>, Vec<Vec<T>>)> {
    let domain = preset_domain(h)?;
    let x = |idx: usize| domain.center(idx)[0];
    let u1 = (0..domain.len()).map(|i| x(i).max(T::zero())).collect();
    let u2 = (0..domain.len()).map(|i| (-x(i)).max(T::zero())).collect();
    Ok((domain, vec![u1, u2]))
}

/// `u_i = ρ^(3/2) cos(3(θ - θ_i)/2)` on the 120° sector around
/// `θ_i = π/2 + 2πi/3`, zero elsewhere, on `[-1, 1]²`.
pub fn sectors_preset<T: Real>(h: T) -> Result<(Arc<GridDomain<T>>, Vec<Vec<T>>)> {
    let domain = preset_domain(h)?;
    let pi = T::PI();
    let third = pi / T::lit(3.0);
    let fields = (0..3)
        .map(|i| {
            let theta_i = pi / T::lit(2.0) + T::lit(2.0) * pi * T::of_usize(i) / T::lit(3.0);
            (0..domain.len())
                .map(|idx| {
                    let c = domain.center(idx);
                    let rho = (c[0] * c[0] + c[1] * c[1]).sqrt();
                    let mut t = c[1].atan2(c[0]) - theta_i;
                    while t > pi {
                        t -= pi + pi;
                    }
                    while t < -pi {
                        t += pi + pi;
                    }
                    if t.abs() < third {
                        (rho.powf(T::lit(1.5)) * (T::lit(1.5) * t).cos()).max(T::zero())
                    } else {
                        T::zero()
                    }
                })
                .collect()
        })
        .collect();
    Ok((domain, fields))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn log_radii(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn halfplanes_product_is_constant() {
        let h = 1.0 / 128.0;
        let (d, f) = halfplanes_preset(h).unwrap();
        let fields: Vec<&[f64]> = f.iter().map(|v| v.as_slice()).collect();
        let p = monotonicity_profile(&d, &fields, &[0.0, 0.0], &log_radii(8.0 * h, 0.4, 10), 0.5).unwrap();
        assert_eq!(p.rows.len(), 10);
        for row in &p.rows {
            assert!((row.a[0] - PI * row.r * row.r / 2.0).abs() < 1e-9 * row.r * row.r);
            assert!((row.phi2 - PI * PI / 4.0).abs() < 1e-8);
            // |∇u| = 1 on a half circle of length πr.
            assert!((row.boundary[0] / (PI * row.r) - 1.0).abs() < 0.02);
            assert!(row.phi3.is_none() && row.phi_ctv.is_none());
        }
    }

    #[test]
    fn sectors_ctv_product_is_constant() {
        let h = 1.0 / 256.0;
        let (d, f) = sectors_preset(h).unwrap();
        let fields: Vec<&[f64]> = f.iter().map(|v| v.as_slice()).collect();
        let p = monotonicity_profile(&d, &fields, &[0.0, 0.0], &log_radii(8.0 * h, 0.4, 8), 0.5).unwrap();
        let oracle = (PI / 2.0).powi(3);
        for row in &p.rows {
            let c = row.phi_ctv.unwrap();
            assert!((c / oracle - 1.0).abs() < 0.02, "r={} ctv={c}", row.r);
        }
        assert!(p.spread(|r| r.phi_ctv).unwrap() < 1.02);
        assert!(p.worst_decrease(|r| r.phi3).unwrap() < 0.02);
    }

    #[test]
    fn overlap_and_radius_limits() {
        let h = 1.0 / 32.0;
        let (d, f) = halfplanes_preset(h).unwrap();
        let both: Vec<&[f64]> = vec![&f[0], &f[0]];
        assert!(matches!(
            monotonicity_profile(&d, &both, &[0.0, 0.0], &[0.2], 0.5),
            Err(Error::OverlappingSupports { first: 1, second: 2, .. })
        ));
        let fields: Vec<&[f64]> = f.iter().map(|v| v.as_slice()).collect();
        let p = monotonicity_profile(&d, &fields, &[0.0, 0.0], &[h, 0.2, 0.6], 0.5).unwrap();
        assert_eq!(p.skipped, vec![h, 0.6]);
        assert_eq!(p.rows.len(), 1);
    }

    #[test]
    fn dyadic_rows_match_direct_profile() {
        let h = 1.0 / 64.0;
        let (d, f) = sectors_preset(h).unwrap();
        let fields: Vec<&[f64]> = f.iter().map(|v| v.as_slice()).collect();
        let radii = [0.25, 0.0625];
        let p = monotonicity_profile(&d, &fields, &[0.0, 0.0], &radii, 0.5).unwrap();
        assert_eq!(p.dyadic.iter().map(|r| r.k).collect::<Vec<_>>(), vec![1, 2]);
        for (row, dy) in p.rows.iter().zip(&p.dyadic) {
            for i in 0..3 {
                assert!((row.a[i] - dy.a[i]).abs() <= 1e-10 * row.a[i]);
                assert!((dy.b[i] - 4f64.powi(4 * dy.k as i32) * dy.a[i]).abs() <= 1e-10 * dy.b[i]);
            }
            let delta: f64 = dy.b.iter().map(|b| 1.0 / b.sqrt()).sum();
            assert!((dy.delta - delta).abs() < 1e-12);
        }
    }

    #[test]
    fn a_is_nondecreasing() {
        let h = 1.0 / 64.0;
        let (d, f) = sectors_preset(h).unwrap();
        let fields: Vec<&[f64]> = f.iter().map(|v| v.as_slice()).collect();
        let p = monotonicity_profile(&d, &fields, &[0.1, -0.05], &log_radii(4.0 * h, 0.4, 15), 0.5).unwrap();
        for w in p.rows.windows(2) {
            for i in 0..3 {
                assert!(w[1].a[i] >= w[0].a[i]);
            }
        }
    }

    #[test]
    fn equal_arcs_minimize() {
        assert!((three_arc_sum(2.0 * PI / 3.0, 2.0 * PI / 3.0) - 4.5).abs() < 1e-14);
        assert!((epsilon_bound_2d() - 1.0).abs() < 1e-6);
        assert!((default_epsilon::<f64>(2) - 0.5).abs() < 1e-6);
        assert_eq!(default_epsilon::<f64>(3), 0.25);
        assert_eq!(three_arc_sum(0.0, 1.0), f64::INFINITY);
    }

    #[test]
    fn alt_caffarelli_ramp() {
        let h = 1.0 / 128.0;
        let (d, f) = halfplanes_preset(h).unwrap();
        for r in [0.1, 0.2, 0.4] {
            let ac = alt_caffarelli_check(&d, &f[0], &[0.0, 0.0], r).unwrap();
            assert!((ac.ratio.unwrap() * PI * PI - 1.0).abs() < 0.02, "r={r} {:?}", ac);
        }
        let zero = vec![0.0; d.len()];
        let ac = alt_caffarelli_check(&d, &zero, &[0.0, 0.0], 0.2).unwrap();
        assert_eq!(ac.lhs, 0.0);
        assert!(ac.ratio.is_none());
        let positive = vec![1.0; d.len()];
        assert_eq!(alt_caffarelli_check(&d, &positive, &[0.0, 0.0], 0.2).unwrap().lhs, 0.0);
        assert!(alt_caffarelli_check(&d, &positive, &[0.0, 0.0], h).is_err());
    }
}

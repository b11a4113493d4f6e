//! Uniform cell-centered grids over a box, phase densities, indicator sets,
//! and the measure-theoretic quantities computed on them.
//!
//! Cells are stored x-fastest: `idx = i + nx * (j + ny * k)`. Two-dimensional
//! grids carry `nz = 1`. Cell `(i, j, k)` has its center at
//! `lower + (i + 1/2, j + 1/2, k + 1/2) h`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Axis-aligned box with a resolution, the input of [`build_domain`].
#[derive(Clone, Debug, PartialEq)]
pub struct BoxSpec<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub cells: Vec<usize>,
}

impl<T: Real> BoxSpec<T> {
    pub fn new(lower: &[T], upper: &[T], cells: &[usize]) -> Self {
        Self {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            cells: cells.to_vec(),
        }
    }

    /// `[0, 1]^dim` with `n` cells per axis.
    pub fn unit(dim: usize, n: usize) -> Self {
        Self {
            lower: vec![T::zero(); dim],
            upper: vec![T::one(); dim],
            cells: vec![n; dim],
        }
    }
}

/// The discretized ambient box `D` with its cell mask.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDomain<T> {
    dim: usize,
    lower: [T; 3],
    shape: [usize; 3],
    h: T,
    mask: Vec<bool>,
    active: usize,
}

/// Builds a domain from a box and an optional mask predicate evaluated at cell centers.
pub fn build_domain<T: Real>(
    spec: &BoxSpec<T>,
    mask: Option<&dyn Fn(&[T]) -> bool>,
) -> Result<GridDomain<T>> {
    let dim = spec.cells.len();
    if !(2..=3).contains(&dim) {
        return Err(Error::Config(format!("dimension must be 2 or 3, got {dim}")));
    }
    if spec.lower.len() != dim || spec.upper.len() != dim {
        return Err(Error::Config(
            "box bounds and resolution have different lengths".into(),
        ));
    }
    let mut lower = [T::zero(); 3];
    let mut shape = [1usize; 3];
    let mut h = T::zero();
    for axis in 0..dim {
        let extent = spec.upper[axis] - spec.lower[axis];
        if !(extent > T::zero()) {
            return Err(Error::Config(format!(
                "extent along axis {axis} must be positive, got {extent}"
            )));
        }
        if spec.cells[axis] < 4 {
            return Err(Error::Config(format!(
                "resolution along axis {axis} must be at least 4, got {}",
                spec.cells[axis]
            )));
        }
        let spacing = extent / T::of_usize(spec.cells[axis]);
        if axis == 0 {
            h = spacing;
        } else if ((spacing - h) / h).abs() > T::tol_floor(1e-9) {
            return Err(Error::Config(format!(
                "spacing must be uniform: axis 0 has {h}, axis {axis} has {spacing}"
            )));
        }
        lower[axis] = spec.lower[axis];
        shape[axis] = spec.cells[axis];
    }
    let mut domain = GridDomain {
        dim,
        lower,
        shape,
        h,
        mask: vec![true; shape[0] * shape[1] * shape[2]],
        active: shape[0] * shape[1] * shape[2],
    };
    if let Some(pred) = mask {
        let mask: Vec<bool> = (0..domain.len())
            .map(|idx| pred(&domain.center(idx)[..dim]))
            .collect();
        domain = domain.with_mask(mask)?;
    }
    Ok(domain)
}

impl<T: Real> GridDomain<T> {
    /// Same box and spacing with a replacement mask.
    pub fn with_mask(&self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "mask has {} entries, grid has {} cells",
                mask.len(),
                self.len()
            )));
        }
        let active = mask.iter().filter(|&&m| m).count();
        Ok(Self {
            mask,
            active,
            ..self.clone()
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn h(&self) -> T {
        self.h
    }

    /// Cells per axis; unused axes report 1.
    #[inline]
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower[..self.dim]
    }

    pub fn upper(&self) -> Vec<T> {
        (0..self.dim)
            .map(|a| self.lower[a] + T::of_usize(self.shape[a]) * self.h)
            .collect()
    }

    #[inline]
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn in_mask(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    /// Number of masked-in cells.
    #[inline]
    pub fn active_count(&self) -> usize {
        self.active
    }

    /// `h^dim`.
    #[inline]
    pub fn cell_volume(&self) -> T {
        self.h.powi(self.dim as i32)
    }

    /// `|D| = h^dim * (masked-in cells)`.
    pub fn measure(&self) -> T {
        self.cell_volume() * T::of_usize(self.active)
    }

    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.shape[0] * (ijk[1] + self.shape[1] * ijk[2])
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.shape[0];
        let rest = idx / self.shape[0];
        [i, rest % self.shape[1], rest / self.shape[1]]
    }

    /// Cell center; unused coordinates are zero.
    #[inline]
    pub fn center(&self, idx: usize) -> [T; 3] {
        let c = self.coords(idx);
        let half = T::lit(0.5);
        let mut x = [T::zero(); 3];
        for axis in 0..self.dim {
            x[axis] = self.lower[axis] + (T::of_usize(c[axis]) + half) * self.h;
        }
        x
    }

    /// Face neighbor along `axis` in direction `forward`; `None` outside the box.
    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, forward: bool) -> Option<usize> {
        let c = self.coords(idx);
        let stride = match axis {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[0] * self.shape[1],
        };
        if forward {
            (c[axis] + 1 < self.shape[axis]).then(|| idx + stride)
        } else {
            (c[axis] > 0).then(|| idx - stride)
        }
    }

    /// Visits every face neighbor slot of `idx`: `Some(n)` inside the box, `None` across the box edge.
    pub fn for_each_face(&self, idx: usize, mut f: impl FnMut(Option<usize>)) {
        for axis in 0..self.dim {
            f(self.neighbor(idx, axis, false));
            f(self.neighbor(idx, axis, true));
        }
    }

    /// Cell containing `point`, if inside the box.
    pub fn cell_at(&self, point: &[T]) -> Option<usize> {
        let mut ijk = [0usize; 3];
        for axis in 0..self.dim {
            let s = ((point[axis] - self.lower[axis]) / self.h).floor();
            if s < T::zero() {
                return None;
            }
            let s = s.to_usize()?;
            if s >= self.shape[axis] {
                return None;
            }
            ijk[axis] = s;
        }
        Some(self.index(ijk))
    }

    /// Box diameter.
    pub fn diameter(&self) -> T {
        (0..self.dim)
            .map(|a| {
                let e = T::of_usize(self.shape[a]) * self.h;
                e * e
            })
            .sum::<T>()
            .sqrt()
    }

    /// Distance from `point` to the nearest box face (zero or negative outside).
    pub fn distance_to_box_edge(&self, point: &[T]) -> T {
        let mut best = T::infinity();
        for axis in 0..self.dim {
            let lo = point[axis] - self.lower[axis];
            let hi = self.lower[axis] + T::of_usize(self.shape[axis]) * self.h - point[axis];
            best = best.min(lo).min(hi);
        }
        best
    }

    /// Calls `f(idx, squared distance)` for every cell (masked or not) whose
    /// center lies within `r` of `center`.
    pub fn for_each_in_ball(&self, center: &[T], r: T, mut f: impl FnMut(usize, T)) {
        let (lo, hi) = self.index_range(center, r);
        let r2 = r * r;
        for k in lo[2]..hi[2] {
            for j in lo[1]..hi[1] {
                for i in lo[0]..hi[0] {
                    let idx = self.index([i, j, k]);
                    let d2 = self.dist2(idx, center);
                    if d2 <= r2 {
                        f(idx, d2);
                    }
                }
            }
        }
    }

    /// Half-open per-axis index ranges of the cells overlapping the cube of side `2r` around `center`.
    pub(crate) fn index_range(&self, center: &[T], r: T) -> ([usize; 3], [usize; 3]) {
        let mut lo = [0usize; 3];
        let mut hi = [1usize; 3];
        for axis in 0..self.dim {
            let a = ((center[axis] - r - self.lower[axis]) / self.h).floor();
            let b = ((center[axis] + r - self.lower[axis]) / self.h).ceil();
            let n = self.shape[axis] as i64;
            let a = a.to_i64().unwrap_or(0).clamp(0, n);
            let b = b.to_i64().unwrap_or(n).clamp(0, n);
            lo[axis] = a as usize;
            hi[axis] = b.max(a) as usize;
        }
        (lo, hi)
    }

    #[inline]
    pub fn dist2(&self, idx: usize, point: &[T]) -> T {
        let c = self.center(idx);
        let mut s = T::zero();
        for axis in 0..self.dim {
            let d = c[axis] - point[axis];
            s += d * d;
        }
        s
    }
}

/// Per-cell boolean support on a domain: the grid proxy of a measurable set.
#[derive(Clone, Debug)]
pub struct IndicatorSet<T> {
    domain: Arc<GridDomain<T>>,
    support: Vec<bool>,
}

impl<T: Real> IndicatorSet<T> {
    /// Support is intersected with the domain mask.
    pub fn new(domain: Arc<GridDomain<T>>, mut support: Vec<bool>) -> Result<Self> {
        if support.len() != domain.len() {
            return Err(Error::InvalidInput(format!(
                "support has {} entries, grid has {} cells",
                support.len(),
                domain.len()
            )));
        }
        for (s, &m) in support.iter_mut().zip(domain.mask()) {
            *s &= m;
        }
        Ok(Self { domain, support })
    }

    pub fn empty(domain: Arc<GridDomain<T>>) -> Self {
        let support = vec![false; domain.len()];
        Self { domain, support }
    }

    /// All masked-in cells.
    pub fn full(domain: Arc<GridDomain<T>>) -> Self {
        let support = domain.mask().to_vec();
        Self { domain, support }
    }

    /// Cells whose centers satisfy `pred`.
    pub fn from_fn(domain: Arc<GridDomain<T>>, pred: impl Fn(&[T]) -> bool) -> Self {
        let dim = domain.dim();
        let support = (0..domain.len())
            .map(|idx| domain.in_mask(idx) && pred(&domain.center(idx)[..dim]))
            .collect();
        Self { domain, support }
    }

    pub fn domain(&self) -> &Arc<GridDomain<T>> {
        &self.domain
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    #[inline]
    pub fn contains(&self, idx: usize) -> bool {
        self.support[idx]
    }

    pub fn count(&self) -> usize {
        self.support.iter().filter(|&&s| s).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.support.iter().any(|&s| s)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.support
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| s.then_some(i))
    }

    pub fn measure(&self) -> T {
        measure(self)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Result<Self> {
        check_same_domain(&self.domain, &other.domain)?;
        let support = self
            .support
            .iter()
            .zip(&other.support)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::new(self.domain.clone(), support)
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a && !b)
    }

    /// Masked-in cells not in the set.
    pub fn complement(&self) -> Self {
        let support = self
            .support
            .iter()
            .zip(self.domain.mask())
            .map(|(&s, &m)| m && !s)
            .collect();
        Self {
            domain: self.domain.clone(),
            support,
        }
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.support
            .iter()
            .zip(&other.support)
            .all(|(&a, &b)| !a || b)
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.support
            .iter()
            .zip(&other.support)
            .all(|(&a, &b)| !(a && b))
    }

    /// Face-adjacency dilation by `steps` cells (restricted to the mask).
    pub fn dilate(&self, steps: usize) -> Self {
        let mut current = self.support.clone();
        for _ in 0..steps {
            let mut next = current.clone();
            for (idx, &inside) in current.iter().enumerate() {
                if inside {
                    self.domain.for_each_face(idx, |n| {
                        if let Some(n) = n {
                            next[n] = true;
                        }
                    });
                }
            }
            current = next;
        }
        Self::new(self.domain.clone(), current).expect("same grid")
    }

    /// Translation by whole cells; cells leaving the box are dropped.
    pub fn shifted(&self, offset: [i64; 3]) -> Self {
        let shape = self.domain.shape();
        let mut support = vec![false; self.domain.len()];
        for idx in self.indices() {
            let c = self.domain.coords(idx);
            let mut ijk = [0usize; 3];
            let mut inside = true;
            for axis in 0..3 {
                let v = c[axis] as i64 + offset[axis];
                if v < 0 || v >= shape[axis] as i64 {
                    inside = false;
                    break;
                }
                ijk[axis] = v as usize;
            }
            if inside {
                support[self.domain.index(ijk)] = true;
            }
        }
        Self::new(self.domain.clone(), support).expect("same grid")
    }
}

/// Per-cell density in `[0, 1]` for one phase.
#[derive(Clone, Debug)]
pub struct PhaseField<T> {
    domain: Arc<GridDomain<T>>,
    values: Vec<T>,
    phase_id: usize,
}

impl<T: Real> PhaseField<T> {
    /// Values must lie in `[0, 1]`; masked-out cells are zeroed.
    pub fn new(domain: Arc<GridDomain<T>>, mut values: Vec<T>, phase_id: usize) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::InvalidInput(format!(
                "density has {} entries, grid has {} cells",
                values.len(),
                domain.len()
            )));
        }
        let slack = T::tol_floor(1e-12);
        for (idx, v) in values.iter_mut().enumerate() {
            if !v.is_finite() || *v < -slack || *v > T::one() + slack {
                return Err(Error::InvalidInput(format!(
                    "density of phase {phase_id} at cell {idx} is {v}, outside [0, 1]"
                )));
            }
            *v = v.max(T::zero()).min(T::one());
            if !domain.in_mask(idx) {
                *v = T::zero();
            }
        }
        Ok(Self {
            domain,
            values,
            phase_id,
        })
    }

    pub fn constant(domain: Arc<GridDomain<T>>, value: T, phase_id: usize) -> Result<Self> {
        let values = vec![value; domain.len()];
        Self::new(domain, values, phase_id)
    }

    pub fn from_indicator(set: &IndicatorSet<T>, phase_id: usize) -> Self {
        let values = set
            .support()
            .iter()
            .map(|&s| if s { T::one() } else { T::zero() })
            .collect();
        Self {
            domain: set.domain().clone(),
            values,
            phase_id,
        }
    }

    pub fn domain(&self) -> &Arc<GridDomain<T>> {
        &self.domain
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn phase_id(&self) -> usize {
        self.phase_id
    }

    /// `h^dim * sum(phi)`.
    pub fn measure(&self) -> T {
        self.domain.cell_volume() * self.values.iter().copied().sum::<T>()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == T::zero())
    }

    /// Cells with `phi >= threshold`.
    pub fn threshold(&self, threshold: T) -> IndicatorSet<T> {
        let support = self.values.iter().map(|&v| v >= threshold).collect();
        IndicatorSet::new(self.domain.clone(), support).expect("same grid")
    }
}

pub fn check_same_domain<T: Real>(a: &Arc<GridDomain<T>>, b: &Arc<GridDomain<T>>) -> Result<()> {
    if Arc::ptr_eq(a, b) || a == b {
        Ok(())
    } else {
        Err(Error::DomainMismatch)
    }
}

/// `h^dim * count`.
pub fn measure<T: Real>(set: &IndicatorSet<T>) -> T {
    set.domain().cell_volume() * T::of_usize(set.count())
}

/// Masked-in cells whose centers lie within distance `r` of `center`.
pub fn ball_cells<T: Real>(
    domain: &Arc<GridDomain<T>>,
    center: &[T],
    r: T,
) -> Result<IndicatorSet<T>> {
    if !(r >= domain.h()) {
        return Err(Error::DegenerateRadius {
            radius: r.as_f64(),
            minimum: domain.h().as_f64(),
        });
    }
    let mut support = vec![false; domain.len()];
    domain.for_each_in_ball(center, r, |idx, _| support[idx] = domain.in_mask(idx));
    IndicatorSet::new(domain.clone(), support)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerimeterMode {
    /// `h^(dim-1)` times the number of faces between the set and its complement
    /// (L1-type, exact for axis-aligned boxes).
    FaceCount,
    /// Total variation of the indicator mollified by a Gaussian of width `2h`.
    Smoothed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerimeterEstimate<T> {
    pub value: T,
    /// Set when the input set was empty.
    pub empty: bool,
}

pub fn perimeter<T: Real>(set: &IndicatorSet<T>, mode: PerimeterMode) -> PerimeterEstimate<T> {
    if set.is_empty() {
        log::warn!("perimeter of an empty set requested");
        return PerimeterEstimate {
            value: T::zero(),
            empty: true,
        };
    }
    let value = match mode {
        PerimeterMode::FaceCount => face_count_perimeter(set),
        PerimeterMode::Smoothed => smoothed_perimeter(set),
    };
    PerimeterEstimate {
        value,
        empty: false,
    }
}

fn face_count_perimeter<T: Real>(set: &IndicatorSet<T>) -> T {
    let domain = set.domain();
    let mut faces = 0usize;
    for idx in set.indices() {
        domain.for_each_face(idx, |n| {
            if !n.is_some_and(|n| set.contains(n)) {
                faces += 1;
            }
        });
    }
    domain.h().powi(domain.dim() as i32 - 1) * T::of_usize(faces)
}

/// Gaussian width in cells used by [`PerimeterMode::Smoothed`].
const SMOOTHING_WIDTH_CELLS: f64 = 2.0;

fn smoothed_perimeter<T: Real>(set: &IndicatorSet<T>) -> T {
    let domain = set.domain();
    let dim = domain.dim();
    let sigma = SMOOTHING_WIDTH_CELLS;
    let radius = (4.0 * sigma).ceil() as usize;
    let kernel: Vec<T> = {
        let raw: Vec<f64> = (0..=2 * radius)
            .map(|k| {
                let x = k as f64 - radius as f64;
                (-x * x / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| T::lit(v / total)).collect()
    };

    // Padded copy so the mollifier and the difference stencil never leave the array.
    let pad = radius + 1;
    let shape = domain.shape();
    let mut pshape = [1usize; 3];
    for axis in 0..dim {
        pshape[axis] = shape[axis] + 2 * pad;
    }
    let pidx = |i: usize, j: usize, k: usize| i + pshape[0] * (j + pshape[1] * k);
    let mut field = vec![T::zero(); pshape[0] * pshape[1] * pshape[2]];
    let off = |axis: usize| if axis < dim { pad } else { 0 };
    for idx in set.indices() {
        let c = domain.coords(idx);
        field[pidx(c[0] + off(0), c[1] + off(1), c[2] + off(2))] = T::one();
    }

    let strides = [1, pshape[0], pshape[0] * pshape[1]];
    let mut scratch = vec![T::zero(); field.len()];
    for axis in 0..dim {
        let stride = strides[axis];
        let n = pshape[axis];
        for (p, out) in scratch.iter_mut().enumerate() {
            let pos = (p / stride) % n;
            let mut acc = T::zero();
            for (t, &w) in kernel.iter().enumerate() {
                let q = pos as i64 + t as i64 - radius as i64;
                if q >= 0 && (q as usize) < n {
                    acc += w * field[(p as i64 + (t as i64 - radius as i64) * stride as i64) as usize];
                }
            }
            *out = acc;
        }
        std::mem::swap(&mut field, &mut scratch);
    }

    let half = T::lit(0.5);
    let mut total = T::zero();
    for k in 0..pshape[2] {
        for j in 0..pshape[1] {
            for i in 0..pshape[0] {
                let c = [i, j, k];
                let p = pidx(i, j, k);
                let mut g2 = T::zero();
                for axis in 0..dim {
                    let lo = if c[axis] > 0 { field[p - strides[axis]] } else { T::zero() };
                    let hi = if c[axis] + 1 < pshape[axis] { field[p + strides[axis]] } else { T::zero() };
                    let d = (hi - lo) * half;
                    g2 += d * d;
                }
                total += g2.sqrt();
            }
        }
    }
    // |grad| = (cell difference) / h, integrated with weight h^dim.
    total * domain.h().powi(dim as i32 - 1)
}

/// `|set ∩ B_r(x0)| / |B_r(x0)|`, both restricted to the mask.
pub fn density_ratio<T: Real>(set: &IndicatorSet<T>, x0: &[T], r: T) -> Result<T> {
    let domain = set.domain();
    let minimum = domain.h() * T::lit(2.0);
    if !(r >= minimum) {
        return Err(Error::DegenerateRadius {
            radius: r.as_f64(),
            minimum: minimum.as_f64(),
        });
    }
    let mut inside = 0usize;
    let mut total = 0usize;
    domain.for_each_in_ball(x0, r, |idx, _| {
        if domain.in_mask(idx) {
            total += 1;
            if set.contains(idx) {
                inside += 1;
            }
        }
    });
    if total == 0 {
        return Err(Error::Domain("ball lies entirely outside the domain mask".into()));
    }
    Ok(T::of_usize(inside) / T::of_usize(total))
}

/// Cells of the set with a face neighbor outside it (complement, masked-out
/// cells, or the box exterior).
pub fn boundary_cells<T: Real>(set: &IndicatorSet<T>) -> IndicatorSet<T> {
    let domain = set.domain();
    let mut band = vec![false; domain.len()];
    for idx in set.indices() {
        let mut edge = false;
        domain.for_each_face(idx, |n| {
            if !n.is_some_and(|n| set.contains(n)) {
                edge = true;
            }
        });
        band[idx] = edge;
    }
    IndicatorSet::new(domain.clone(), band).expect("same grid")
}

/// Fraction of each cell covered by the closed ball `B_r(center)`, for cells
/// with nonzero coverage. Exact in 2D; 3D uses 8^3 sub-samples on cells cut by the sphere.
pub fn ball_coverage<T: Real>(domain: &GridDomain<T>, center: &[T], r: T) -> Vec<(usize, T)> {
    let (lo, hi) = domain.index_range(center, r);
    let h = domain.h();
    let half = h * T::lit(0.5);
    let diag = half * T::lit(domain.dim() as f64).sqrt();
    let mut out = Vec::new();
    for k in lo[2]..hi[2] {
        for j in lo[1]..hi[1] {
            for i in lo[0]..hi[0] {
                let idx = domain.index([i, j, k]);
                let d = domain.dist2(idx, center).sqrt();
                if d + diag <= r {
                    out.push((idx, T::one()));
                    continue;
                }
                if d - diag > r {
                    continue;
                }
                let c = domain.center(idx);
                let w = if domain.dim() == 2 {
                    disk_rect_area(
                        c[0] - half - center[0],
                        c[0] + half - center[0],
                        c[1] - half - center[1],
                        c[1] + half - center[1],
                        r,
                    ) / (h * h)
                } else {
                    sampled_cell_fraction(&c, center, h, r)
                };
                if w > T::zero() {
                    out.push((idx, w.min(T::one())));
                }
            }
        }
    }
    out
}

/// Area of `{x0 <= x <= x1, y0 <= y <= y1} ∩ {x^2 + y^2 <= r^2}`.
fn disk_rect_area<T: Real>(x0: T, x1: T, y0: T, y1: T, r: T) -> T {
    quadrant(x1, y1, r) - quadrant(x0, y1, r) - quadrant(x1, y0, r) + quadrant(x0, y0, r)
}

/// Signed area of the disk over `[0, x] × [0, y]`.
fn quadrant<T: Real>(x: T, y: T, r: T) -> T {
    let sign = x.signum() * y.signum();
    let a = x.abs().min(r);
    let b = y.abs().min(r);
    if a == T::zero() || b == T::zero() {
        return T::zero();
    }
    if a * a + b * b <= r * r {
        return sign * a * b;
    }
    // Columns s in [0, s_star] are capped by b; beyond that the arc bounds them.
    let s_star = (r * r - b * b).max(T::zero()).sqrt();
    let prim = |s: T| {
        let s = s.min(r);
        T::lit(0.5) * (s * (r * r - s * s).max(T::zero()).sqrt() + r * r * (s / r).asin())
    };
    let area = b * s_star.min(a) + if a > s_star { prim(a) - prim(s_star) } else { T::zero() };
    sign * area
}

fn sampled_cell_fraction<T: Real>(c: &[T; 3], center: &[T], h: T, r: T) -> T {
    const N: usize = 8;
    let r2 = r * r;
    let mut hits = 0usize;
    let step = h / T::of_usize(N);
    let start = |axis: usize| c[axis] - h * T::lit(0.5) + step * T::lit(0.5) - center[axis];
    for a in 0..N {
        let dx = start(0) + step * T::of_usize(a);
        for b in 0..N {
            let dy = start(1) + step * T::of_usize(b);
            for e in 0..N {
                let dz = start(2) + step * T::of_usize(e);
                if dx * dx + dy * dy + dz * dz <= r2 {
                    hits += 1;
                }
            }
        }
    }
    T::of_usize(hits) / T::of_usize(N * N * N)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit(n: usize) -> Arc<GridDomain<f64>> {
        Arc::new(build_domain(&BoxSpec::unit(2, n), None).unwrap())
    }

    fn square(domain: &Arc<GridDomain<f64>>, lo: usize, side: usize) -> IndicatorSet<f64> {
        let support = (0..domain.len())
            .map(|idx| {
                let c = domain.coords(idx);
                (lo..lo + side).contains(&c[0]) && (lo..lo + side).contains(&c[1])
            })
            .collect();
        IndicatorSet::new(domain.clone(), support).unwrap()
    }

    #[test]
    fn unit_square_domain() {
        let d = unit(128);
        assert_eq!(d.len(), 16384);
        assert_eq!(d.active_count(), 16384);
        assert_relative_eq!(d.h(), 1.0 / 128.0);
        assert_relative_eq!(d.measure(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rectangle_has_uniform_spacing() {
        let spec = BoxSpec::new(&[0.0, 0.0], &[2.0, 1.0], &[256, 128]);
        let d = build_domain(&spec, None).unwrap();
        assert_relative_eq!(d.h(), 1.0 / 128.0);
        assert_eq!(d.shape(), [256, 128, 1]);
    }

    #[test]
    fn rejects_bad_boxes() {
        let bad_extent = BoxSpec::new(&[0.0, 0.0], &[0.0, 1.0], &[8, 8]);
        assert!(matches!(build_domain(&bad_extent, None), Err(Error::Config(_))));
        let bad_res = BoxSpec::new(&[0.0, 0.0], &[1.0, 1.0], &[3, 8]);
        assert!(matches!(build_domain(&bad_res, None), Err(Error::Config(_))));
        let anisotropic = BoxSpec::new(&[0.0, 0.0], &[1.0, 1.0], &[8, 16]);
        assert!(matches!(build_domain(&anisotropic, None), Err(Error::Config(_))));
    }

    #[test]
    fn disk_mask_cell_count() {
        let pred = |x: &[f64]| (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2) <= 0.25;
        let d = build_domain(&BoxSpec::unit(2, 128), Some(&pred)).unwrap();
        // Oracle: direct count of centers inside the disk.
        let mut oracle = 0usize;
        for j in 0..128 {
            for i in 0..128 {
                let x = (i as f64 + 0.5) / 128.0 - 0.5;
                let y = (j as f64 + 0.5) / 128.0 - 0.5;
                if x * x + y * y <= 0.25 {
                    oracle += 1;
                }
            }
        }
        assert_eq!(d.active_count(), oracle);
        let target = std::f64::consts::FRAC_PI_4 * 128.0 * 128.0;
        assert!((d.active_count() as f64 / target - 1.0).abs() < 0.01);
    }

    #[test]
    fn indexing_round_trips() {
        let spec = BoxSpec::new(&[0.0, 0.0, 0.0], &[1.0, 0.5, 0.5], &[8, 4, 4]);
        let d = build_domain(&spec, None).unwrap();
        for idx in 0..d.len() {
            assert_eq!(d.index(d.coords(idx)), idx);
            assert_eq!(d.cell_at(&d.center(idx)), Some(idx));
        }
    }

    #[test]
    fn measures() {
        let d = unit(128);
        assert_eq!(measure(&IndicatorSet::empty(d.clone())), 0.0);
        let s = square(&d, 10, 32);
        assert_relative_eq!(measure(&s), 0.0625, epsilon = 1e-14);
    }

    #[test]
    fn ball_measures() {
        let d = unit(256);
        let b = ball_cells(&d, &[0.5, 0.5], 0.25).unwrap();
        let target = std::f64::consts::PI / 16.0;
        assert!((b.measure() / target - 1.0).abs() < 0.02);
        let all = ball_cells(&d, &[0.5, 0.5], 10.0).unwrap();
        assert_eq!(all.count(), d.active_count());
        let tiny = ball_cells(&d, &d.center(100)[..2], d.h()).unwrap();
        assert!(tiny.count() >= 1);
        assert!(matches!(
            ball_cells(&d, &[0.5, 0.5], d.h() * 0.5),
            Err(Error::DegenerateRadius { .. })
        ));
    }

    #[test]
    fn face_count_square_is_exact() {
        let d = unit(128);
        let s = square(&d, 20, 32);
        let p = perimeter(&s, PerimeterMode::FaceCount);
        assert_relative_eq!(p.value, 4.0 * 32.0 / 128.0, epsilon = 1e-14);
        assert!(!p.empty);
    }

    #[test]
    fn face_count_disk_tends_to_l1_perimeter() {
        // Oracle: 8R, the perimeter of a disk in the l1 face-counting metric.
        let r = 0.3;
        let mut errs = vec![];
        for n in [64, 128, 256, 512] {
            let d = unit(n);
            let disk = IndicatorSet::from_fn(d, |x| (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2) <= r * r);
            let p = perimeter(&disk, PerimeterMode::FaceCount).value;
            errs.push((p - 8.0 * r).abs() / (8.0 * r));
        }
        assert!(errs[3] < 0.01, "{errs:?}");
        assert!(errs[3] < errs[0]);
    }

    #[test]
    fn smoothed_disk_perimeter_is_isotropic() {
        let r = 0.3;
        let d = unit(256);
        let disk = IndicatorSet::from_fn(d, |x| (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2) <= r * r);
        let p = perimeter(&disk, PerimeterMode::Smoothed).value;
        let exact = 2.0 * std::f64::consts::PI * r;
        assert!((p / exact - 1.0).abs() < 0.05, "{p} vs {exact}");
    }

    #[test]
    fn empty_perimeter_flags() {
        let d = unit(16);
        let p = perimeter(&IndicatorSet::empty(d), PerimeterMode::Smoothed);
        assert!(p.empty);
        assert_eq!(p.value, 0.0);
    }

    #[test]
    fn density_ratio_examples() {
        let d = unit(256);
        let full = IndicatorSet::full(d.clone());
        assert_eq!(density_ratio(&full, &[0.5, 0.5], 0.1).unwrap(), 1.0);
        let small = square(&d, 0, 16);
        assert_eq!(density_ratio(&small, &[0.7, 0.7], 0.1).unwrap(), 0.0);
        let half = IndicatorSet::from_fn(d.clone(), |x| x[0] < 0.5);
        let r = 0.1;
        let ratio = density_ratio(&half, &[0.5, 0.5], r).unwrap();
        assert!((ratio - 0.5).abs() <= 2.0 * d.h() / r);
    }

    #[test]
    fn boundary_band_examples() {
        let d = unit(128);
        let s = square(&d, 30, 32);
        let band = boundary_cells(&s);
        assert_eq!(band.count(), 4 * 32 - 4);
        assert!(band.is_subset(&s));

        let single = square(&d, 5, 1);
        assert_eq!(boundary_cells(&single).count(), 1);

        let full = IndicatorSet::full(d.clone());
        assert_eq!(boundary_cells(&full).count(), 4 * 128 - 4);
        assert!(boundary_cells(&IndicatorSet::empty(d)).is_empty());
    }

    #[test]
    fn coverage_sums_to_disk_area() {
        let d = build_domain(&BoxSpec::new(&[-1.0, -1.0], &[1.0, 1.0], &[64, 64]), None).unwrap();
        for r in [0.13, 0.25, 0.5, 0.77] {
            let area: f64 = ball_coverage(&d, &[0.01, -0.02], r)
                .iter()
                .map(|&(_, w)| w * d.cell_volume())
                .sum();
            assert_relative_eq!(area, std::f64::consts::PI * r * r, max_relative = 1e-10);
        }
    }

    #[test]
    fn three_dimensional_smoke() {
        let spec = BoxSpec::unit(3, 16);
        let d = Arc::new(build_domain(&spec, None).unwrap());
        let ball = ball_cells(&d, &[0.5, 0.5, 0.5], 0.3).unwrap();
        let target = 4.0 / 3.0 * std::f64::consts::PI * 0.027;
        assert!((ball.measure() / target - 1.0).abs() < 0.1);
        assert!(perimeter(&ball, PerimeterMode::Smoothed).value > 0.0);
        assert!(boundary_cells(&ball).count() > 0);
    }
}

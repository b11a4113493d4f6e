use crate::error::{Error, Result};
use crate::grid::{boundary_cells, check_same_domain, IndicatorSet};
use crate::pde::TorsionField;
use crate::scalar::Real;

/// Classification of a boundary-band cell at a fixed scan radius.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum JunctionClass {
    /// Only one phase's band within the radius.
    Simple,
    /// Two bands, and the ball lies inside the union of the two phases.
    InternalDouble,
    /// Two bands with void in the ball.
    BoundaryDouble,
    /// Three or more bands within the radius.
    Triple,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JunctionPoint<T> {
    pub cell: usize,
    pub center: Vec<T>,
    /// Zero-based ids of the phases whose bands meet the ball.
    pub phases: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JunctionReport<T> {
    pub radius: T,
    pub triple_candidates: Vec<JunctionPoint<T>>,
    pub simple: usize,
    pub internal_double: usize,
    pub boundary_double: usize,
    /// Total number of boundary-band cells; equals the sum of the four classes.
    pub band_cells: usize,
}

/// Classifies every cell of every phase's boundary band by the number of
/// distinct bands meeting `B_r(cell)`.
pub fn junction_scan<T: Real>(partition: &[IndicatorSet<T>], r: T) -> Result<JunctionReport<T>> {
    let Some(first) = partition.first() else {
        return Err(Error::InvalidInput("empty partition".into()));
    };
    if partition.len() > 64 {
        return Err(Error::InvalidInput(format!("at most 64 phases, got {}", partition.len())));
    }
    let domain = first.domain();
    for (i, set) in partition.iter().enumerate() {
        check_same_domain(domain, set.domain())?;
        for (j, other) in partition.iter().enumerate().skip(i + 1) {
            if !set.is_disjoint(other) {
                return Err(Error::InvalidInput(format!("phases {} and {} overlap", i + 1, j + 1)));
            }
        }
    }
    let minimum = domain.h() * T::lit(2.0);
    if !(r >= minimum) {
        return Err(Error::DegenerateRadius {
            radius: r.as_f64(),
            minimum: minimum.as_f64(),
        });
    }

    let mut bands = vec![0u64; domain.len()];
    let mut owner = vec![u8::MAX; domain.len()];
    for (p, set) in partition.iter().enumerate() {
        for idx in boundary_cells(set).indices() {
            bands[idx] |= 1 << p;
        }
        for idx in set.indices() {
            owner[idx] = p as u8;
        }
    }

    let mut report = JunctionReport {
        radius: r,
        triple_candidates: Vec::new(),
        simple: 0,
        internal_double: 0,
        boundary_double: 0,
        band_cells: 0,
    };
    for idx in 0..domain.len() {
        if bands[idx] == 0 {
            continue;
        }
        report.band_cells += 1;
        let center = &domain.center(idx)[..domain.dim()];
        let mut seen = 0u64;
        domain.for_each_in_ball(center, r, |j, _| seen |= bands[j]);
        match seen.count_ones() {
            0 | 1 => report.simple += 1,
            2 => {
                let mut void = false;
                domain.for_each_in_ball(center, r, |j, _| {
                    if domain.in_mask(j) && (owner[j] == u8::MAX || seen & (1 << owner[j]) == 0) {
                        void = true;
                    }
                });
                if void {
                    report.boundary_double += 1;
                } else {
                    report.internal_double += 1;
                }
            }
            _ => report.triple_candidates.push(JunctionPoint {
                cell: idx,
                center: center.to_vec(),
                phases: (0..partition.len()).filter(|p| seen & (1 << p) != 0).collect(),
            }),
        }
    }
    Ok(report)
}

impl<T> JunctionReport<T> {
    pub fn class_counts(&self) -> [(JunctionClass, usize); 4] {
        [
            (JunctionClass::Simple, self.simple),
            (JunctionClass::InternalDouble, self.internal_double),
            (JunctionClass::BoundaryDouble, self.boundary_double),
            (JunctionClass::Triple, self.triple_candidates.len()),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairSeparation<T> {
    /// Zero-based phase ids.
    pub i: usize,
    pub j: usize,
    /// Cells outside `Ω_i` adjacent to it and within one cell of `Ω_j`'s band.
    pub interface_cells: usize,
    /// `max w_i` over the interface cells, relative to `max w_i`.
    pub interface_relative: T,
    /// `max w_i` over the cells of `Ω_i`'s own band within one cell of
    /// `Ω_j`'s band, relative to `max w_i`: the first-cell value next to the
    /// interface, which is `O(h)`.
    pub inner_relative: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationReport<T> {
    pub pairs: Vec<PairSeparation<T>>,
    /// Per phase: `Ω_i ⊆ D_i` and `Ω_j ∩ D_i = ∅`, with `D_i` the complement of
    /// the one-cell dilation of `∪_{j≠i} Ω_j`.
    pub separated: Vec<bool>,
    pub max_interface_relative: T,
    pub max_inner_relative: T,
}

/// Checks that each torsion function vanishes on the common boundary with
/// the other phases and that the phases admit separating neighborhoods.
pub fn separation_check<T: Real>(
    partition: &[IndicatorSet<T>],
    fields: &[TorsionField<T>],
) -> Result<SeparationReport<T>> {
    if partition.len() != fields.len() {
        return Err(Error::InvalidInput(format!(
            "{} phases but {} torsion fields",
            partition.len(),
            fields.len()
        )));
    }
    let Some(first) = partition.first() else {
        return Err(Error::InvalidInput("empty partition".into()));
    };
    let domain = first.domain();
    for (set, w) in partition.iter().zip(fields) {
        check_same_domain(domain, set.domain())?;
        check_same_domain(domain, w.domain())?;
    }
    for i in 0..partition.len() {
        for j in i + 1..partition.len() {
            if !partition[i].is_disjoint(&partition[j]) {
                return Err(Error::InvalidInput(format!("phases {} and {} overlap", i + 1, j + 1)));
            }
        }
    }

    let bands: Vec<IndicatorSet<T>> = partition.iter().map(boundary_cells).collect();
    let near_band: Vec<IndicatorSet<T>> = bands.iter().map(|b| b.dilate(1)).collect();
    let outer: Vec<IndicatorSet<T>> = partition
        .iter()
        .map(|s| s.dilate(1).difference(s).expect("same grid"))
        .collect();

    let mut pairs = Vec::new();
    for i in 0..partition.len() {
        let w = fields[i].values();
        let wmax = fields[i].max();
        let relative = |cells: &IndicatorSet<T>| {
            let m = cells.indices().map(|k| w[k]).fold(T::zero(), T::max);
            if wmax > T::zero() {
                m / wmax
            } else {
                T::zero()
            }
        };
        for j in 0..partition.len() {
            if i == j {
                continue;
            }
            let interface = outer[i].intersection(&near_band[j]).expect("same grid");
            let inner = bands[i].intersection(&near_band[j]).expect("same grid");
            pairs.push(PairSeparation {
                i,
                j,
                interface_cells: interface.count(),
                interface_relative: relative(&interface),
                inner_relative: if interface.is_empty() { T::zero() } else { relative(&inner) },
            });
        }
    }

    let separated = (0..partition.len())
        .map(|i| {
            let mut others = IndicatorSet::empty(domain.clone());
            for (j, s) in partition.iter().enumerate() {
                if j != i {
                    others = others.union(s).expect("same grid");
                }
            }
            let d_i = others.dilate(1).complement();
            partition[i].is_subset(&d_i) && others.is_disjoint(&d_i)
        })
        .collect();

    let max_of = |f: &dyn Fn(&PairSeparation<T>) -> T| pairs.iter().map(f).fold(T::zero(), T::max);
    let max_interface_relative = max_of(&|p| p.interface_relative);
    let max_inner_relative = max_of(&|p| p.inner_relative);
    Ok(SeparationReport {
        pairs,
        separated,
        max_interface_relative,
        max_inner_relative,
    })
}

use std::sync::Arc;

use multiphase::grid::{build_domain, density_ratio, BoxSpec, GridDomain, IndicatorSet, PhaseField};
use multiphase::io::{parse_report, read_spfield, write_spfield, Encoding, Report, SpField};
use multiphase::optimize::{binarize, project_constraint};
use multiphase::pde::{gamma_distance, torsion_of_set, SolverConfig};
use multiphase::shapefn::Aggregator;
use multiphase::theory::monotonicity_profile;
use proptest::prelude::*;

fn unit(n: usize) -> Arc<GridDomain<f64>> {
    Arc::new(build_domain(&BoxSpec::unit(2, n), None).unwrap())
}

fn set_from(d: &Arc<GridDomain<f64>>, bits: &[bool]) -> IndicatorSet<f64> {
    IndicatorSet::new(d.clone(), bits.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn measure_is_additive(a in prop::collection::vec(any::<bool>(), 64), b in prop::collection::vec(any::<bool>(), 64)) {
        let d = unit(8);
        let (a, b) = (set_from(&d, &a), set_from(&d, &b));
        let lhs = a.union(&b).unwrap().measure() + a.intersection(&b).unwrap().measure();
        prop_assert!((lhs - a.measure() - b.measure()).abs() < 1e-12);
        prop_assert!((a.measure() + a.complement().measure() - d.measure()).abs() < 1e-12);
        prop_assert!(a.is_subset(&a.dilate(1)));
    }

    #[test]
    fn projection_is_feasible_and_idempotent(
        cells in prop::collection::vec(prop::collection::vec(-1.0f64..2.0, 3), 1..20)
    ) {
        let mut stack: Vec<Vec<f64>> = (0..3).map(|i| cells.iter().map(|c| c[i]).collect()).collect();
        project_constraint(&mut stack);
        for j in 0..cells.len() {
            let sum: f64 = stack.iter().map(|p| p[j]).sum();
            prop_assert!(sum <= 1.0 + 1e-12);
            prop_assert!(stack.iter().all(|p| p[j] >= -1e-12));
        }
        let again = {
            let mut s = stack.clone();
            project_constraint(&mut s);
            s
        };
        for (x, y) in stack.iter().flatten().zip(again.iter().flatten()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn binarized_phases_are_disjoint(raw in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 64)) {
        let d = unit(8);
        let mut stack: Vec<Vec<f64>> = (0..3).map(|i| raw.iter().map(|c| c[i]).collect()).collect();
        project_constraint(&mut stack);
        let phases: Vec<PhaseField<f64>> = stack
            .into_iter()
            .enumerate()
            .map(|(i, v)| PhaseField::new(d.clone(), v, i).unwrap())
            .collect();
        let sets = binarize(&phases, 0.5).unwrap();
        for i in 0..3 {
            for j in i + 1..3 {
                prop_assert!(sets[i].is_disjoint(&sets[j]));
            }
        }
    }

    #[test]
    fn aggregators_are_monotone(
        values in prop::collection::vec(-50.0f64..50.0, 1..6),
        bump in 0.0f64..10.0,
        which in 0usize..6,
    ) {
        let i = which % values.len();
        let mut raised = values.clone();
        raised[i] += bump;
        let weights = (0..values.len()).map(|k| 0.5 + k as f64).collect();
        for g in [Aggregator::Sum, Aggregator::Max, Aggregator::WeightedSum(weights)] {
            prop_assert!(g.apply(&raised) >= g.apply(&values));
        }
    }

    #[test]
    fn density_ratio_is_a_fraction(bits in prop::collection::vec(any::<bool>(), 256), x in 0.0f64..1.0, y in 0.0f64..1.0, r in 0.125f64..0.6) {
        let d = unit(16);
        let s = set_from(&d, &bits);
        let ratio = density_ratio(&s, &[x, y], r).unwrap();
        prop_assert!((0.0..=1.0).contains(&ratio));
    }

    #[test]
    fn weighted_dirichlet_integrals_grow_with_radius(
        a in prop::collection::vec(0.0f64..1.0, 1024),
        b in prop::collection::vec(0.0f64..1.0, 1024),
    ) {
        let d = Arc::new(build_domain(&BoxSpec::new(&[-1.0, -1.0], &[1.0, 1.0], &[32, 32]), None).unwrap());
        // Disjoint supports: left and right half of the box.
        let left: Vec<f64> = (0..d.len()).map(|i| if d.center(i)[0] < 0.0 { a[i] } else { 0.0 }).collect();
        let right: Vec<f64> = (0..d.len()).map(|i| if d.center(i)[0] > 0.0 { b[i] } else { 0.0 }).collect();
        let radii = [0.125, 0.2, 0.3, 0.4, 0.5];
        let profile = monotonicity_profile(&d, &[&left, &right], &[0.0, 0.0], &radii, 0.5).unwrap();
        for w in profile.rows.windows(2) {
            for i in 0..2 {
                prop_assert!(w[1].a[i] >= w[0].a[i]);
            }
        }
    }

    #[test]
    fn spfield_round_trips(values in prop::collection::vec(-1e6f64..1e6, 48), binary in any::<bool>()) {
        let d = Arc::new(build_domain(&BoxSpec::new(&[0.0, 0.0], &[1.0, 0.75], &[8, 6]), None).unwrap());
        let field = SpField::from_domain(&d, &values).unwrap();
        let mut buf = Vec::new();
        let encoding = if binary { Encoding::Binary } else { Encoding::Ascii };
        write_spfield(&mut buf, &field, encoding).unwrap();
        let back = read_spfield(buf.as_slice()).unwrap();
        prop_assert_eq!(back.values_on(&d).unwrap(), values);
    }

    #[test]
    fn reports_round_trip(entries in prop::collection::vec(("[a-z][a-z0-9_.]{0,8}", "[ -~]{0,12}"), 0..8)) {
        let mut r = Report::new();
        for (k, v) in &entries {
            r.put(k, v);
        }
        prop_assert_eq!(parse_report(&r.to_string()).unwrap(), r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn torsion_is_nonnegative_and_translation_invariant(
        bits in prop::collection::vec(any::<bool>(), 144),
        dx in 0i64..4,
        dy in 0i64..4,
    ) {
        // Random support confined to the lower-left 12x12 block of a 16x16 grid.
        let d = unit(16);
        let support: Vec<bool> = (0..d.len())
            .map(|i| {
                let [x, y, _] = d.coords(i);
                x < 12 && y < 12 && bits[x + 12 * y]
            })
            .collect();
        let s = set_from(&d, &support);
        prop_assume!(!s.is_empty());
        let w = torsion_of_set(&s, SolverConfig::default()).unwrap();
        prop_assert!(w.values().iter().all(|&v| v >= 0.0));
        prop_assert!(w.values().iter().enumerate().all(|(i, &v)| s.contains(i) || v == 0.0));

        let moved = torsion_of_set(&s.shifted([dx, dy, 0]), SolverConfig::default()).unwrap();
        for i in s.indices() {
            let [x, y, _] = d.coords(i);
            let j = d.index([x + dx as usize, y + dy as usize, 0]);
            prop_assert!((moved.values()[j] - w.values()[i]).abs() <= 1e-8 * w.max().max(1e-12));
        }
        prop_assert!(gamma_distance(&w, &w).unwrap() == 0.0);
    }

    #[test]
    fn gamma_distance_is_symmetric(a in prop::collection::vec(any::<bool>(), 64), b in prop::collection::vec(any::<bool>(), 64)) {
        let d = unit(8);
        let wa = torsion_of_set(&set_from(&d, &a), SolverConfig::default()).unwrap();
        let wb = torsion_of_set(&set_from(&d, &b), SolverConfig::default()).unwrap();
        let ab = gamma_distance(&wa, &wb).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - gamma_distance(&wb, &wa).unwrap()).abs() <= 1e-15);
    }
}

use fdlab_core::discretization::{build_grid, Spacing};
use fdlab_core::flow::{run_flow, squeezed_datum, uniform_samples, FlowState, FunctionalSet, StepperSettings, Variables};
use fdlab_core::functionals::{gn_deficit_with, relative_values};
use fdlab_core::params::{beta_fs, classify_region, optimal_gn_constant, ParamSet, RegionClass};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn relative_entropy_decays_and_mass_is_kept(m in 0.7f64..0.85, a in -0.5f64..2.0, weighted in any::<bool>()) {
        let ps = if weighted { ParamSet::from_m(3, -1.0, -2.0, m) } else { ParamSet::unweighted_from_m(3, m) }.unwrap();
        let grid = build_grid(&ps, 20.0, 160, Spacing::Uniform).unwrap();
        let u0 = squeezed_datum(&grid, &ps, a).unwrap();
        let s0 = FlowState::new(u0, 0.0, Variables::SelfSimilar, ps).unwrap();
        let trace = run_flow(&s0, 1.0, &uniform_samples(1.0, 10), &FunctionalSet::all(), &StepperSettings::default())
            .map_err(|f| f.error)
            .unwrap();
        let m0 = trace.rows[0].mass;
        for w in trace.rows.windows(2) {
            prop_assert!(w[1].e_rel <= w[0].e_rel * (1.0 + 1e-12));
            prop_assert!((w[1].mass - m0).abs() <= 1e-11 * m0);
            prop_assert!(w[1].i_rel >= 0.0);
        }
    }

    #[test]
    fn gn_deficit_nonnegative(tail in 0.3f64..3.0, bump in 0.0f64..2.0, center in 0.0f64..3.0, width in 0.3f64..2.0) {
        let ps = ParamSet::unweighted_from_m(3, 0.8).unwrap();
        let grid = build_grid(&ps, 2000.0, 20000, Spacing::geometric_with_first_cell(2000.0, 20000, 2e-3).unwrap()).unwrap();
        let c = optimal_gn_constant(&ps).unwrap().c_gn;
        let k = (ps.m - 0.5) / (1.0 - ps.m);
        let w = grid.sample(|r| (1.0 + (r / tail).powi(2)).powf(-1.5 * k) + bump * (-((r - center) / width).powi(2)).exp());
        let rel = gn_deficit_with(&w, &ps, c).unwrap().term("relative").unwrap();
        prop_assert!(rel >= -1e-6, "relative deficit {rel}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn classification_follows_the_curve(gamma in -3.0f64..-0.05, beta in -3.0f64..0.0, p in 1.1f64..4.0) {
        if let Ok(ps) = ParamSet::new(3, beta, gamma, p) {
            let bfs = beta_fs(3, gamma).unwrap();
            let class = classify_region(&ps);
            if (beta - bfs).abs() > 1e-9 {
                prop_assert_eq!(class == RegionClass::SymmetryBreaking, beta > bfs);
            }
        }
    }

    #[test]
    fn barenblatt_has_zero_relative_entropy(m in 0.68f64..0.95) {
        let ps = ParamSet::unweighted_from_m(3, m).unwrap();
        let grid = build_grid(&ps, 20.0, 64, Spacing::Uniform).unwrap();
        let b = fdlab_core::flow::barenblatt_alpha_field(&grid, &ps);
        let (e_rel, i_rel) = relative_values(&b, &ps);
        prop_assert!(e_rel.abs() < 1e-12 && i_rel.abs() < 1e-10, "{e_rel} {i_rel}");
    }
}

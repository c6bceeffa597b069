use proptest::prelude::*;
use wiedlab_core::parabolic::solve_parabolic;
use wiedlab_core::wied::{solve_linear_wied, solve_wied};
use wiedlab_core::{CombustionModel, ForcingSpec, GridSpec, ParabolicConfig, WeightedGrid, WiedConfig};

fn grid(a: f64) -> WeightedGrid {
    WeightedGrid::new(GridSpec {
        d: 1,
        a,
        half_width: 1.0,
        height: 1.0,
        horizon: 0.4,
        nx: 6,
        ny: 5,
        nt: 8,
        grading: None,
    })
    .unwrap()
}

const NS: usize = 7 * 6;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solutions_stay_in_unit_interval(
        a in -0.8f64..0.8,
        u0 in prop::collection::vec(0.0f64..=1.0, NS),
        peak in 0.2f64..0.8,
    ) {
        let g = grid(a);
        for model in [CombustionModel::polynomial_bump(), CombustionModel::hat(peak).unwrap()] {
            let p = solve_parabolic(&g, &model, &ParabolicConfig::default(), &u0).unwrap();
            prop_assert!(p.min() >= -1e-10 && p.max() <= 1.0 + 1e-10);
            let w = solve_wied(&g, &model, &WiedConfig { eps: 0.02, ..Default::default() }, &u0).unwrap();
            prop_assert!(w.field.min() >= -1e-8 && w.field.max() <= 1.0 + 1e-8);
        }
    }

    #[test]
    fn linear_solutions_are_ordered(
        a in -0.8f64..0.8,
        u0 in prop::collection::vec(-1.0f64..1.0, NS),
        bump in prop::collection::vec(0.0f64..0.5, NS),
    ) {
        let g = grid(a);
        let v0: Vec<f64> = u0.iter().zip(&bump).map(|(u, b)| u + b).collect();
        let inert = CombustionModel::inert();
        let (pu, pv) = (
            solve_parabolic(&g, &inert, &ParabolicConfig::default(), &u0).unwrap(),
            solve_parabolic(&g, &inert, &ParabolicConfig::default(), &v0).unwrap(),
        );
        prop_assert!(pu.values().iter().zip(pv.values()).all(|(x, y)| *x <= y + 1e-10));
        let (wu, wv) = (
            solve_linear_wied(&g, 0.03, &ForcingSpec::none(), &u0).unwrap(),
            solve_linear_wied(&g, 0.03, &ForcingSpec::none(), &v0).unwrap(),
        );
        prop_assert!(wu.values().iter().zip(wv.values()).all(|(x, y)| *x <= y + 1e-9));
    }

    // Inert evolution contracts the weighted L^2 distance layer by layer.
    #[test]
    fn inert_evolution_is_l2_stable(
        a in -0.8f64..0.8,
        u0 in prop::collection::vec(-1.0f64..1.0, NS),
        v0 in prop::collection::vec(-1.0f64..1.0, NS),
    ) {
        let g = grid(a);
        let inert = CombustionModel::inert();
        let pu = solve_parabolic(&g, &inert, &ParabolicConfig::default(), &u0).unwrap();
        let pv = solve_parabolic(&g, &inert, &ParabolicConfig::default(), &v0).unwrap();
        let dist = |n: usize| -> f64 {
            pu.layer(n).iter().zip(pv.layer(n)).zip(g.node_mass()).map(|((x, y), m)| m * (x - y) * (x - y)).sum()
        };
        for n in 1..g.n_layers() {
            prop_assert!(dist(n) <= dist(n - 1) * (1.0 + 1e-12) + 1e-20);
        }
    }
}

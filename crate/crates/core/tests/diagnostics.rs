use proptest::prelude::*;
use wiedlab_core::diagnostics::{fit_holder, level_set_measures, no_spikes_iteration, oscillation_table, OscillationRow};
use wiedlab_core::{Cylinder, Field, GridSpec, WeightedGrid};

fn grid(a: f64) -> WeightedGrid {
    WeightedGrid::new(GridSpec {
        d: 1,
        a,
        half_width: 1.0,
        height: 1.0,
        horizon: 1.0,
        nx: 8,
        ny: 6,
        nt: 8,
        grading: None,
    })
    .unwrap()
}

fn field(g: &WeightedGrid, vals: &[f64]) -> Field {
    Field::from_values(g.n_layers(), g.n_spatial(), vals[..g.n_space_time()].to_vec()).unwrap()
}

const LEN: usize = 9 * 7 * 9;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn level_sets_partition_the_cylinder(
        a in -0.9f64..0.9,
        vals in prop::collection::vec(-1.0f64..1.5, LEN),
        r in 0.2f64..0.5,
    ) {
        let g = grid(a);
        let u = field(&g, &vals);
        let c = Cylinder::new([0.0, 0.0], 0.0, 0.5, r);
        let rep = level_set_measures(&g, &u, &c).unwrap();
        prop_assert!(rep.partition_defect() <= 1e-12 * rep.total.max(1e-300));
    }

    #[test]
    fn truncation_energies_do_not_increase(
        a in -0.9f64..0.9,
        vals in prop::collection::vec(-1.0f64..1.5, LEN),
    ) {
        let g = grid(a);
        let u = field(&g, &vals);
        let rep = no_spikes_iteration(&g, &u, &Cylinder::new([0.0, 0.0], 0.0, 0.5, 0.7)).unwrap();
        prop_assert!(rep.energies.iter().all(|e| *e >= 0.0));
        prop_assert!(rep.energies.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn oscillations_do_not_increase(
        a in -0.9f64..0.9,
        vals in prop::collection::vec(-1.0f64..1.5, LEN),
    ) {
        let g = grid(a);
        let u = field(&g, &vals);
        let rep = oscillation_table(&g, &u, &Cylinder::new([0.0, 0.0], 0.0, 0.5, 0.7), 3).unwrap();
        prop_assert!(rep.rows.windows(2).all(|w| w[1].osc <= w[0].osc));
    }

    #[test]
    fn noisy_geometric_tables_recover_alpha(
        alpha in 0.2f64..1.0,
        noise in prop::collection::vec(-0.05f64..0.05, 6),
    ) {
        let rows: Vec<OscillationRow> = noise
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let n = k + 1;
                OscillationRow { n, radius: 4f64.powi(-(k as i32)), osc: 2.0 * 4f64.powf(-alpha * n as f64) * (1.0 + e) }
            })
            .collect();
        let fit = fit_holder(&rows).unwrap();
        prop_assert!((fit.alpha - alpha).abs() <= 0.05, "{} vs {alpha}", fit.alpha);
    }
}

use wiedlab_core::assembly::DiscreteOperators;
use wiedlab_core::wied::solve_linear_wied;
use wiedlab_core::{Field, ForcingSpec, GridSpec, WeightedGrid};

fn grid(a: f64) -> WeightedGrid {
    WeightedGrid::new(GridSpec {
        d: 1,
        a,
        half_width: 1.0,
        height: 1.5,
        horizon: 0.5,
        nx: 6,
        ny: 9,
        nt: 10,
        grading: None,
    })
    .unwrap()
}

fn flux_potential(a: f64, y: f64) -> f64 {
    y.powf(1.0 - a) / (1.0 - a)
}

fn profile(a: f64, y: f64) -> f64 {
    1.0 + flux_potential(a, y)
}

// U = 1 + y^{1-a}/(1-a) carries the weighted flux y^a U_y = 1 through every
// horizontal face, so the stiffness operator sees it only at y = 0 and y = Y.
#[test]
fn weighted_flux_is_exact_on_every_face() {
    for a in [-0.6, -0.2, 0.0, 0.3, 0.8] {
        let g = grid(a);
        let ops = DiscreteOperators::new(&g);
        // without the offset, which would round away the increments near y = 0
        let u = Field::spatial_from_fn(&g, |_, y| flux_potential(a, y)).into_values();
        let ku = ops.stiffness().spmv(&u).unwrap();
        for (s, v) in ku.iter().enumerate() {
            let (ix, j) = g.split_spatial(s);
            let expect = if j == 0 {
                -g.x_volume(ix)
            } else if j == g.n_y_nodes() - 1 {
                g.x_volume(ix)
            } else {
                0.0
            };
            assert!((v - expect).abs() < 1e-11, "a = {a}, node ({ix}, {j}): {v} vs {expect}");
        }
    }
}

// The same profile, frozen in time, solves the forced space-time problem with
// trace datum f = -1 and a bulk source that balances the top-face flux.
#[test]
fn steady_profile_solves_forced_problem() {
    for a in [-0.5, 0.0, 0.5] {
        let g = grid(a);
        let u0 = Field::spatial_from_fn(&g, |_, y| profile(a, y)).into_values();
        let top = g.n_y_nodes() - 1;
        let mut layer = vec![0.0; g.n_spatial()];
        for ix in 0..g.n_x_nodes() {
            let s = g.spatial_index(ix, top);
            layer[s] = g.x_volume(ix) / g.node_mass()[s];
        }
        let bulk = Field::extend_in_time(&layer, g.n_layers());
        let trace = Field::constant(g.n_layers(), g.n_x_nodes(), -1.0);
        let forcing = ForcingSpec { bulk: Some(bulk), trace: Some(trace), p: None, q: None };
        let u = solve_linear_wied(&g, 0.05, &forcing, &u0).unwrap();
        for n in 0..g.n_layers() {
            let err = u.layer(n).iter().zip(&u0).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8, "a = {a}, layer {n}: {err}");
        }
    }
}

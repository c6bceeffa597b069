//! Shared fixtures for the kernel benchmarks.

use wiedlab_core::{CombustionModel, Field, GridSpec, WeightedGrid};

pub fn grid(d: usize, n: usize, nt: usize) -> WeightedGrid {
    WeightedGrid::new(GridSpec {
        d,
        a: 0.5,
        half_width: 2.0,
        height: 2.0,
        horizon: 1.0,
        nx: n,
        ny: n,
        nt,
        grading: None,
    })
    .expect("benchmark grid is valid")
}

pub fn model() -> CombustionModel {
    CombustionModel::polynomial_bump()
}

/// Radial bump of height 0.9 centred at the origin.
pub fn initial_layer(grid: &WeightedGrid) -> Vec<f64> {
    Field::spatial_from_fn(grid, |x, y| {
        let r2: f64 = x.iter().map(|v| v * v).sum::<f64>() + y * y;
        0.9 * (-2.0 * r2).exp()
    })
    .into_values()
}

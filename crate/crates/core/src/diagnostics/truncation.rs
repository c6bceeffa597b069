//! One-sided check that truncations `(U - l)_+` of a linear solution with
//! nonnegative forcing are discrete subsolutions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_linear_system, unknowns, DiscreteOperators, ForcingSpec};
use crate::error::{Result, WiedError};
use crate::field::Field;
use crate::grid::WeightedGrid;
use crate::linalg::{dot, norm2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub level: f64,
    /// `<A W - b, eta> / (|eta| (|b| + |A W|))` for each test field `eta >= 0`.
    pub pairings: Vec<f64>,
    pub max_pairing: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Tests `W = (U - level)_+` against `tests` random nonnegative fields, where
/// `U` solves the linear Euler-Lagrange system for `eps`, `forcing` and the
/// initial layer of `u`.
pub fn truncation_subsolution_check(
    grid: &WeightedGrid,
    eps: f64,
    forcing: &ForcingSpec,
    u: &Field,
    level: f64,
    tests: usize,
    seed: u64,
    tolerance: f64,
) -> Result<TruncationReport> {
    if u.n_layers() != grid.n_layers() || u.n_spatial() != grid.n_spatial() {
        return Err(WiedError::ShapeMismatch { expected: grid.n_space_time(), got: u.values().len() });
    }
    let ops = DiscreteOperators::new(grid);
    let w = u.map(|v| (v - level).max(0.0));
    let system = assemble_linear_system(grid, &ops, eps, forcing, w.layer(0))?;
    let x = unknowns(&w);
    let aw = system.matrix.spmv(x)?;
    let r: Vec<f64> = aw.iter().zip(&system.rhs).map(|(a, b)| a - b).collect();
    let scale = norm2(&system.rhs) + norm2(&aw);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairings: Vec<f64> = (0..tests)
        .map(|_| {
            let eta: Vec<f64> = (0..x.len()).map(|_| rng.gen::<f64>()).collect();
            let den = norm2(&eta) * scale;
            if den > 0.0 {
                dot(&eta, &r) / den
            } else {
                0.0
            }
        })
        .collect();
    let max_pairing = pairings.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(TruncationReport { level, pass: max_pairing <= tolerance, pairings, max_pairing, tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::wied::solve_linear_wied;

    #[test]
    fn truncations_of_forced_solution_are_subsolutions() {
        let g = WeightedGrid::new(GridSpec {
            d: 1,
            a: 0.3,
            half_width: 1.0,
            height: 1.0,
            horizon: 0.5,
            nx: 8,
            ny: 6,
            nt: 10,
            grading: None,
        })
        .unwrap();
        let eps = 0.05;
        let bulk = Field::from_fn(&g, |x, y, t| (1.0 + x[0]) * (1.0 - y).max(0.0) * (1.0 + t));
        let trace = Field::from_values(g.n_layers(), g.n_x_nodes(), vec![0.3; g.n_layers() * g.n_x_nodes()]).unwrap();
        let forcing = ForcingSpec { bulk: Some(bulk), trace: Some(trace), p: None, q: None };
        let u0 = Field::spatial_from_fn(&g, |x, y| (x[0] * 2.0).sin() * (1.0 - y)).into_values();
        let u = solve_linear_wied(&g, eps, &forcing, &u0).unwrap();
        for level in [-0.2, 0.0, 0.1, 0.4] {
            let rep = truncation_subsolution_check(&g, eps, &forcing, &u, level, 10, 7, 1e-10).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
    }
}

//! Discrete ratios for the weighted trace inequality (with the splitting
//! parameter `A = 2`) and the parabolic Sobolev inequality, evaluated on a
//! spatial slice extended constantly in time.

use serde::{Deserialize, Serialize};

use super::level_sets::ball_gradient_energy;
use crate::error::{Result, WiedError};
use crate::field::Field;
use crate::grid::{Cylinder, Domain, WeightedGrid};

const SPLIT: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    /// Trace exponent `N / (N - 1 + a)`.
    pub sigma_tilde: f64,
    /// Parabolic exponent `1 + 2 / (N + 1 + a)`.
    pub gamma: f64,
    pub trace_lhs: f64,
    pub trace_rhs: f64,
    pub trace_ratio: f64,
    pub sobolev_lhs: f64,
    pub sobolev_rhs: f64,
    pub sobolev_ratio: f64,
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    }
}

pub fn embedding_ratio_check(grid: &WeightedGrid, slice: &Field, ball: &Cylinder) -> Result<EmbeddingReport> {
    let n = grid.dim() as f64;
    let a = grid.a();
    if !(n - 1.0 + a > 0.0) {
        return Err(WiedError::NotApplicable(format!("embedding exponents need N - 1 + a > 0 (N = {n}, a = {a})")));
    }
    if slice.n_layers() != 1 {
        return Err(WiedError::InvalidConfig("embedding check expects a spatial slice".into()));
    }
    let ball = Cylinder { center_t: 0.0, ..*ball };
    let r = ball.radius;
    let sigma_tilde = n / (n - 1.0 + a);
    let gamma = 1.0 + 2.0 / (n + 1.0 + a);
    let u = slice.values();
    let w = grid.node_weights(slice, &Domain::Cylinder(ball))?;
    let mass: f64 = w.iter().zip(u).map(|(w, v)| w * v * v).sum();
    let power: f64 = w.iter().zip(u).map(|(w, v)| w * v.abs().powf(2.0 * gamma)).sum();
    let grad = ball_gradient_energy(grid, u, &ball);
    let d = grid.dim();
    let trace_lhs: f64 = (0..grid.n_x_nodes())
        .filter(|&ix| {
            let x = grid.x_coords(ix);
            (0..d).all(|k| (x[k] - ball.center_x[k]).abs() <= r * (1.0 + 1e-12))
        })
        .map(|ix| grid.x_volume(ix) * u[grid.spatial_index(ix, 0)].powi(2))
        .sum();
    let trace_rhs = SPLIT.powf((1.0 + a) / 2.0) * mass + SPLIT.powf(-(1.0 - a) / 2.0) * grad;
    let duration = 2.0 * r * r;
    let sobolev_lhs = duration * power;
    let sobolev_rhs = duration * (mass / (r * r) + grad) * mass.powf(gamma - 1.0);
    Ok(EmbeddingReport {
        sigma_tilde,
        gamma,
        trace_lhs,
        trace_rhs,
        trace_ratio: ratio(trace_lhs, trace_rhs),
        sobolev_lhs,
        sobolev_rhs,
        sobolev_ratio: ratio(sobolev_lhs, sobolev_rhs),
    })
}

//! Energy decomposition in the rescaled time `tau = t / eps`.
//!
//! With `V(X, tau) = U(X, eps tau)` and the half-space doubled by reflection,
//! the layer quantities are
//!
//! ```text
//! I_n = 2 eps^2 |U^{n+1} - U^n|_M^2 / dt^2        (per time cell)
//! R_n = 2 eps (U^T K U + int Phi(u) dx)           (per layer)
//! X_n = I_n + (R_n + R_{n+1}) / 2
//! E_n = (1 - e^{-h}) X_n + e^{-h} E_{n+1},  E_nt = R_nt,  h = dt / eps
//! ```
//!
//! so that `E_0 = 2 eps F_eps(U) + e^{-T/eps} R_nt`. The identity residual is
//! `sum_n |E_{n+1} - E_n + 2 h I_n|`, the discrete `|E' + 2I|_1`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fmt, write_rows};
use crate::assembly::DiscreteOperators;
use crate::combustion::CombustionModel;
use crate::error::{Result, WiedError};
use crate::field::Field;
use crate::grid::WeightedGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub eps: f64,
    /// Rescaled time step `dt / eps`.
    pub h: f64,
    /// Rescaled layer times `t_n / eps`.
    pub tau: Vec<f64>,
    /// `I` per time cell.
    pub inertia: Vec<f64>,
    /// `R` per layer.
    pub potential: Vec<f64>,
    /// `E` per layer.
    pub energy: Vec<f64>,
    /// Reflected gradient energy `2 U^T K U` per layer (original time).
    pub gradient: Vec<f64>,
    /// `int Phi(u) dx` per layer.
    pub phi: Vec<f64>,
    /// `e^{-T/eps} R_nt`: the part of `E_0` coming from beyond the horizon.
    pub tail_bound: f64,
    /// `2 int int y^a |U_t|^2` over the whole run.
    pub dt_energy: f64,
    pub identity_residual: f64,
    /// `identity_residual / E_0` (or the absolute value when `E_0 = 0`).
    pub identity_relative: f64,
}

pub fn energy_decomposition(grid: &WeightedGrid, model: &CombustionModel, eps: f64, u: &Field) -> Result<EnergyReport> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(WiedError::InvalidConfig(format!("eps = {eps} must be positive")));
    }
    grid.check_field(u)?;
    if u.n_layers() != grid.n_layers() {
        return Err(WiedError::ShapeMismatch { expected: grid.n_space_time(), got: u.values().len() });
    }
    let ops = DiscreteOperators::new(grid);
    let nt = grid.n_layers() - 1;
    let dt = grid.dt();
    let h = dt / eps;
    let (gradient, phi): (Vec<f64>, Vec<f64>) = (0..=nt)
        .into_par_iter()
        .map(|n| (2.0 * ops.stiffness_energy(u.layer(n)), ops.potential(model, u.layer(n))))
        .unzip();
    let jumps: Vec<f64> = (0..nt)
        .into_par_iter()
        .map(|n| {
            let (a, b) = (u.layer(n), u.layer(n + 1));
            a.iter().zip(b).zip(ops.mass()).map(|((x, y), m)| m * (y - x) * (y - x)).sum::<f64>()
        })
        .collect();
    let inertia: Vec<f64> = jumps.iter().map(|j| 2.0 * eps * eps * j / (dt * dt)).collect();
    let potential: Vec<f64> = gradient.iter().zip(&phi).map(|(g, p)| eps * (g + 2.0 * p)).collect();
    let q = (-h).exp();
    let one_minus_q = -(-h).exp_m1();
    let mut energy = vec![0.0; nt + 1];
    energy[nt] = potential[nt];
    for n in (0..nt).rev() {
        let x = inertia[n] + 0.5 * (potential[n] + potential[n + 1]);
        energy[n] = one_minus_q * x + q * energy[n + 1];
    }
    let identity_residual: f64 = (0..nt).map(|n| (energy[n + 1] - energy[n] + 2.0 * h * inertia[n]).abs()).sum();
    let identity_relative = if energy[0] > 0.0 { identity_residual / energy[0] } else { identity_residual };
    Ok(EnergyReport {
        eps,
        h,
        tau: grid.t_nodes().iter().map(|t| t / eps).collect(),
        inertia,
        tail_bound: (-grid.spec().horizon / eps).exp() * potential[nt],
        potential,
        energy,
        gradient,
        phi,
        dt_energy: 2.0 * jumps.iter().sum::<f64>() / dt,
        identity_residual,
        identity_relative,
    })
}

impl EnergyReport {
    pub fn initial_energy(&self) -> f64 {
        self.energy[0]
    }

    /// Whether `E` never increases by more than `tol` between layers.
    pub fn is_non_increasing(&self, tol: f64) -> bool {
        self.energy.windows(2).all(|w| w[1] <= w[0] + tol)
    }

    /// `(int_0^R int y^a |grad U|^2 + int_0^R int Phi(u)) / R` in original
    /// time, trapezoidal in time with a linear partial last cell.
    pub fn windowed(&self, t_nodes: &[f64], window: f64) -> f64 {
        let g: Vec<f64> = self.gradient.iter().zip(&self.phi).map(|(a, b)| a + b).collect();
        let mut acc = 0.0;
        for n in 0..g.len() - 1 {
            let (t0, t1) = (t_nodes[n], t_nodes[n + 1]);
            if t0 >= window {
                break;
            }
            let dt = t1 - t0;
            if t1 <= window * (1.0 + 1e-12) {
                acc += 0.5 * dt * (g[n] + g[n + 1]);
            } else {
                let s = (window - t0) / dt;
                let gw = g[n] + s * (g[n + 1] - g[n]);
                acc += 0.5 * (window - t0) * (g[n] + gw);
            }
        }
        acc / window
    }

    /// One row per layer: `tau,I,R,E` (`I` is blank on the last layer).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows = (0..self.energy.len()).map(|n| {
            vec![
                fmt(self.tau[n]),
                self.inertia.get(n).map_or_else(String::new, |v| fmt(*v)),
                fmt(self.potential[n]),
                fmt(self.energy[n]),
            ]
        });
        write_rows(path, &["tau", "I", "R", "E"], rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::functional_value;
    use crate::grid::GridSpec;

    fn grid() -> WeightedGrid {
        WeightedGrid::new(GridSpec {
            d: 1,
            a: 0.25,
            half_width: 1.0,
            height: 1.0,
            horizon: 0.5,
            nx: 6,
            ny: 5,
            nt: 20,
            grading: None,
        })
        .unwrap()
    }

    #[test]
    fn constant_inert_field_has_no_energy() {
        let g = grid();
        let u = Field::constant(g.n_layers(), g.n_spatial(), 0.3);
        let r = energy_decomposition(&g, &CombustionModel::inert(), 0.1, &u).unwrap();
        assert!(r.inertia.iter().chain(&r.potential).chain(&r.energy).all(|v| *v == 0.0));
        assert_eq!(r.identity_residual, 0.0);
    }

    #[test]
    fn initial_energy_is_twice_eps_functional_plus_tail() {
        let g = grid();
        let model = CombustionModel::polynomial_bump();
        let u = Field::from_fn(&g, |x, y, t| 0.8 * (-(x[0] * x[0] + y * y) * 3.0 - t).exp());
        let eps = 0.05;
        let r = energy_decomposition(&g, &model, eps, &u).unwrap();
        let ops = DiscreteOperators::new(&g);
        let f = functional_value(&g, &ops, &model, eps, &u, u.layer(0)).unwrap();
        let expect = 2.0 * eps * f + r.tail_bound;
        assert!((r.initial_energy() - expect).abs() <= 1e-12 * expect, "{} vs {expect}", r.initial_energy());
        assert!(r.inertia.iter().chain(&r.potential).chain(&r.energy).all(|v| *v >= 0.0));
    }

    #[test]
    fn recursion_matches_closed_form_profile() {
        let g = grid();
        let eps = 0.5;
        // U = c(t) constant in space, inert: I = 2 eps^2 |c'|^2 vol, R = 0.
        let vol: f64 = g.node_mass().iter().sum();
        let u = Field::from_fn(&g, |_, _, t| t);
        let r = energy_decomposition(&g, &CombustionModel::inert(), eps, &u).unwrap();
        let i_exact = 2.0 * eps * eps * vol;
        assert!(r.inertia.iter().all(|v| (v - i_exact).abs() < 1e-10 * i_exact));
        // E(tau) = e^tau int_tau^{T/eps} e^{-s} I ds = I (1 - e^{-(T/eps - tau)}).
        let tt = g.spec().horizon / eps;
        for (n, e) in r.energy.iter().enumerate() {
            let exact = i_exact * (1.0 - (-(tt - r.tau[n])).exp());
            assert!((e - exact).abs() < 1e-12 * i_exact, "{n}: {e} vs {exact}");
        }
    }

    #[test]
    fn windowed_average_of_constant_profile() {
        let g = grid();
        let u = Field::from_fn(&g, |x, _, _| x[0]);
        let r = energy_decomposition(&g, &CombustionModel::inert(), 0.1, &u).unwrap();
        for w in [0.1, 0.125, 0.33, 0.5] {
            assert!((r.windowed(g.t_nodes(), w) - r.gradient[0]).abs() < 1e-12 * r.gradient[0]);
        }
    }
}

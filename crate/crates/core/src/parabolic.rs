//! Implicit Euler reference solver for the limit problem
//! `y^a U_t - div(y^a grad U) = 0`, `-d_y^a U = -beta(u)` on `y = 0`.
//!
//! Uses the same spatial operators as the space-time solver. The reaction
//! term is handled by a stabilized Picard iteration
//! `(M/dt + K + sigma B B^T) U^{k+1} = M U^n / dt + B (sigma u^k - beta(u^k))`,
//! which keeps iterates inside `[0, 1]` when `sigma >= Lip(beta)`.

use serde::{Deserialize, Serialize};

use crate::assembly::DiscreteOperators;
use crate::combustion::CombustionModel;
use crate::error::{Result, WiedError};
use crate::field::Field;
use crate::grid::WeightedGrid;
use crate::linalg::{norm2, pcg_solve, CsrMatrix, Jacobi, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParabolicConfig {
    /// Time step; must divide the grid's time spacing. Defaults to it.
    pub dt: Option<f64>,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub linear_tol: f64,
}

impl Default for ParabolicConfig {
    fn default() -> Self {
        Self { dt: None, picard_tol: 1e-11, picard_max_iter: 200, linear_tol: 1e-13 }
    }
}

impl ParabolicConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(WiedError::InvalidConfig(format!("parabolic dt = {dt} must be positive")));
            }
        }
        if !(self.picard_tol > 0.0 && self.linear_tol > 0.0) || self.picard_max_iter == 0 {
            return Err(WiedError::InvalidConfig("parabolic tolerances and limits must be positive".into()));
        }
        Ok(())
    }

    /// Number of substeps per grid time cell.
    pub fn substeps(&self, grid: &WeightedGrid) -> Result<usize> {
        let Some(dt) = self.dt else { return Ok(1) };
        let ratio = grid.dt() / dt;
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio {
            return Err(WiedError::InvalidConfig(format!(
                "parabolic dt = {dt} must divide the grid time step {}",
                grid.dt()
            )));
        }
        Ok(k as usize)
    }
}

/// Implicit Euler stepper for a fixed step size.
pub struct Stepper<'a> {
    ops: &'a DiscreteOperators,
    model: &'a CombustionModel,
    cfg: ParabolicConfig,
    dt: f64,
    matrix: CsrMatrix,
    precond: Jacobi,
}

impl<'a> Stepper<'a> {
    pub fn new(ops: &'a DiscreteOperators, model: &'a CombustionModel, cfg: &ParabolicConfig, dt: f64) -> Self {
        let sigma = model.lipschitz();
        let mut diag: Vec<f64> = ops.mass().iter().map(|m| m / dt).collect();
        for (&s, &w) in ops.trace_nodes().iter().zip(ops.trace_weights()) {
            diag[s] += sigma * w;
        }
        let matrix = ops.stiffness().add_diagonal(&diag);
        let precond = Jacobi::new(&matrix);
        Self { ops, model, cfg: cfg.clone(), dt, matrix, precond }
    }

    /// Residual `(M/dt + K) U + B beta(u) - M U^n / dt`, relative to the
    /// sum of the magnitudes of its terms. The graded mesh makes `K` large
    /// near `y = 0`, and a norm of `M U^n / dt` alone would sit below the
    /// rounding floor of `K U`.
    pub fn residual(&self, un: &[f64], u: &[f64]) -> f64 {
        let k = self.ops.stiffness();
        let mut r = vec![0.0; u.len()];
        let mut scale = vec![0.0; u.len()];
        for s in 0..u.len() {
            let (mut ku, mut ak) = (0.0, 0.0);
            for (j, v) in k.row(s) {
                ku += v * u[j];
                ak += (v * u[j]).abs();
            }
            let m = self.ops.mass()[s] / self.dt;
            r[s] = ku + m * (u[s] - un[s]);
            scale[s] = ak + m * (u[s].abs() + un[s].abs());
        }
        self.ops.add_trace_source(u, |v| self.model.beta(v), &mut r);
        self.ops.add_trace_source(u, |v| self.model.beta(v).abs(), &mut scale);
        let (n, d) = (norm2(&r), norm2(&scale));
        if d > 0.0 {
            n / d
        } else {
            n
        }
    }

    fn picard_map(&self, un: &[f64], u: &[f64], opts: SolverOptions) -> Result<Vec<f64>> {
        let sigma = self.model.lipschitz();
        let mut rhs: Vec<f64> = un.iter().zip(self.ops.mass()).map(|(v, m)| v * m / self.dt).collect();
        self.ops.add_trace_source(u, |v| sigma * v - self.model.beta(v), &mut rhs);
        Ok(pcg_solve(&self.matrix, &rhs, Some(u), &self.precond, opts)?.require_converged("implicit step")?.x)
    }

    /// One implicit Euler step; returns the new layer and the Picard count.
    pub fn step(&self, un: &[f64]) -> Result<(Vec<f64>, usize)> {
        let opts = SolverOptions { tol: self.cfg.linear_tol, max_iter: 20 * un.len().max(50) };
        let mut u = un.to_vec();
        for it in 1..=self.cfg.picard_max_iter {
            u = self.picard_map(un, &u, opts)?;
            if self.model.is_inert() || self.residual(un, &u) <= self.cfg.picard_tol {
                return Ok((u, it));
            }
        }
        Err(WiedError::NonConvergence {
            iterations: self.cfg.picard_max_iter,
            residual: self.residual(un, &u),
            residual_history: Vec::new(),
            last_iterate: u,
        })
    }
}

/// Single implicit step with the grid's time spacing (or `cfg.dt`).
pub fn step_implicit(
    grid: &WeightedGrid,
    model: &CombustionModel,
    cfg: &ParabolicConfig,
    un: &[f64],
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let ops = DiscreteOperators::new(grid);
    let dt = cfg.dt.unwrap_or(grid.dt());
    Ok(Stepper::new(&ops, model, cfg, dt).step(un)?.0)
}

/// Trajectory on the grid's time layers, with optional integer substepping.
pub fn solve_parabolic(grid: &WeightedGrid, model: &CombustionModel, cfg: &ParabolicConfig, u0: &[f64]) -> Result<Field> {
    cfg.validate()?;
    if u0.len() != grid.n_spatial() {
        return Err(WiedError::ShapeMismatch { expected: grid.n_spatial(), got: u0.len() });
    }
    let sub = cfg.substeps(grid)?;
    let ops = DiscreteOperators::new(grid);
    let stepper = Stepper::new(&ops, model, cfg, grid.dt() / sub as f64);
    let mut layers = vec![u0.to_vec()];
    for n in 1..grid.n_layers() {
        let mut u = layers[n - 1].clone();
        for _ in 0..sub {
            u = match stepper.step(&u) {
                Ok((next, _)) => next,
                Err(e) => return Err(WiedError::StepFailed { step: n, source: Box::new(e), completed: layers }),
            };
        }
        layers.push(u);
    }
    Field::from_layers(&layers)
}

/// Free heat evolution of the Gaussian `exp(-|X|^2 / (4 w))` in `point.len()`
/// dimensions: `(1 + t/w)^{-D/2} exp(-|X|^2 / (4 (w + t)))`.
pub fn analytic_heat_oracle(point: &[f64], t: f64, width: f64) -> f64 {
    let r2: f64 = point.iter().map(|x| x * x).sum();
    (1.0 + t / width).powf(-(point.len() as f64) / 2.0) * (-r2 / (4.0 * (width + t))).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn grid(a: f64) -> WeightedGrid {
        WeightedGrid::new(GridSpec {
            d: 1,
            a,
            half_width: 1.0,
            height: 1.0,
            horizon: 0.5,
            nx: 8,
            ny: 6,
            nt: 10,
            grading: None,
        })
        .unwrap()
    }

    #[test]
    fn oracle_closed_forms() {
        assert_eq!(analytic_heat_oracle(&[0.3, 0.4], 0.0, 1.0), (-0.25f64 / 4.0).exp());
        assert!((analytic_heat_oracle(&[0.0, 0.0], 0.7, 1.0) - 1.0 / 1.7).abs() < 1e-15);
    }

    #[test]
    fn constants_stay_constant() {
        let g = grid(0.4);
        let u0 = vec![0.6; g.n_spatial()];
        let traj = solve_parabolic(&g, &CombustionModel::inert(), &ParabolicConfig::default(), &u0).unwrap();
        assert!(traj.values().iter().all(|v| (v - 0.6).abs() < 1e-12));
    }

    #[test]
    fn mass_balance() {
        let g = grid(-0.3);
        let u0 = Field::spatial_from_fn(&g, |x, y| (-(x[0] * x[0] + y * y) * 4.0).exp()).into_values();
        let m = g.node_mass();
        let mass = |u: &[f64]| u.iter().zip(m).map(|(a, b)| a * b).sum::<f64>();
        let inert = step_implicit(&g, &CombustionModel::inert(), &ParabolicConfig::default(), &u0).unwrap();
        assert!((mass(&inert) - mass(&u0)).abs() < 1e-10);
        let burnt = step_implicit(&g, &CombustionModel::polynomial_bump(), &ParabolicConfig::default(), &u0).unwrap();
        assert!(mass(&burnt) <= mass(&u0) + 1e-14);
    }

    #[test]
    fn substeps_must_divide() {
        let g = grid(0.0);
        let cfg = ParabolicConfig { dt: Some(0.03), ..Default::default() };
        assert!(cfg.substeps(&g).is_err());
        let cfg = ParabolicConfig { dt: Some(0.0125), ..Default::default() };
        assert_eq!(cfg.substeps(&g).unwrap(), 4);
    }
}

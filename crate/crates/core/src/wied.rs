//! Minimizers of the discrete weighted inertia-energy functional.
//!
//! The normalized Euler-Lagrange system of [`crate::assembly`] is solved
//! either by a majorize-minimize Picard iteration on the reaction term or by
//! Newton's method. Both use BiCGStab preconditioned by an exact solver for
//! the space-time operator with a constant trace shift `sigma B B^T`: the
//! spatial operator is diagonalized once (`K + sigma B B^T = M V L V^T M`),
//! after which every spatial mode is a tridiagonal system in time.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{
    self, el_residual, functional_value, reaction_source, DiscreteOperators, ForcingSpec,
    LinearSystem, TimeCoefficients,
};
use crate::combustion::CombustionModel;
use crate::error::{Result, WiedError};
use crate::field::Field;
use crate::grid::WeightedGrid;
use crate::linalg::{bicgstab_solve, CsrMatrix, Preconditioner, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OuterMethod {
    #[default]
    Picard,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WiedConfig {
    pub eps: f64,
    pub outer: OuterMethod,
    /// Tolerance on the relative Euler-Lagrange residual.
    pub tol: f64,
    pub max_outer: usize,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub damping: f64,
}

impl Default for WiedConfig {
    fn default() -> Self {
        Self {
            eps: 0.1,
            outer: OuterMethod::Picard,
            tol: 1e-8,
            max_outer: 500,
            inner_tol: 1e-11,
            inner_max_iter: 400,
            damping: 1.0,
        }
    }
}

impl WiedConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(WiedError::InvalidConfig(m));
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad(format!("eps = {} must lie in (0, 1)", self.eps));
        }
        if !(self.tol > 0.0 && self.inner_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping {} must lie in (0, 1]", self.damping));
        }
        if self.max_outer == 0 || self.inner_max_iter == 0 {
            return bad("iteration limits must be positive".into());
        }
        Ok(())
    }
}

/// Geometric schedule `eps_k = eps0 * ratio^k`, `k < count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub eps0: f64,
    pub ratio: f64,
    pub count: usize,
}

impl EpsilonSchedule {
    pub fn levels(&self) -> Vec<f64> {
        (0..self.count).map(|k| self.eps0 * self.ratio.powi(k as i32)).collect()
    }

    /// Checks the schedule against a time horizon: every level in `(0, 1)` and
    /// `eps0 <= T / 20` so the truncated tail weight stays below `e^{-20}`.
    pub fn validate(&self, horizon: f64) -> Result<()> {
        let bad = |m: String| Err(WiedError::InvalidConfig(m));
        if self.count == 0 {
            return bad("schedule needs at least one level".into());
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return bad(format!("schedule ratio {} must lie in (0, 1)", self.ratio));
        }
        if !(self.eps0 > 0.0 && self.eps0 < 1.0) {
            return bad(format!("eps0 = {} must lie in (0, 1)", self.eps0));
        }
        if self.eps0 > horizon / 20.0 * (1.0 + 1e-12) {
            return bad(format!("eps0 = {} exceeds T/20 = {}", self.eps0, horizon / 20.0));
        }
        Ok(())
    }
}

/// Spatial eigenbasis of `K + sigma B B^T` in the `M` inner product.
pub struct ModalBasis {
    /// Columns are the `M`-orthonormal eigenvectors.
    vectors: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    sigma: f64,
}

impl ModalBasis {
    pub fn new(ops: &DiscreteOperators, sigma: f64) -> Self {
        let ns = ops.n_spatial();
        let inv_sqrt: Vec<f64> = ops.mass().iter().map(|m| 1.0 / m.sqrt()).collect();
        let mut dense = DMatrix::<f64>::zeros(ns, ns);
        for i in 0..ns {
            for (j, v) in ops.stiffness().row(i) {
                dense[(i, j)] = v * inv_sqrt[i] * inv_sqrt[j];
            }
        }
        for (&s, &w) in ops.trace_nodes().iter().zip(ops.trace_weights()) {
            dense[(s, s)] += sigma * w * inv_sqrt[s] * inv_sqrt[s];
        }
        let eig = SymmetricEigen::new(dense);
        let mut vectors = eig.eigenvectors;
        for (i, mut row) in vectors.row_iter_mut().enumerate() {
            row *= inv_sqrt[i];
        }
        Self { vectors, eigenvalues: eig.eigenvalues.iter().copied().collect(), sigma }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
}

/// Exact inverse of `A + sigma B B^T` for one set of time coefficients.
pub struct ModalPreconditioner {
    basis: Arc<ModalBasis>,
    tc: TimeCoefficients,
    nt: usize,
}

impl ModalPreconditioner {
    pub fn new(basis: Arc<ModalBasis>, tc: TimeCoefficients, nt: usize) -> Self {
        Self { basis, tc, nt }
    }
}

impl Preconditioner for ModalPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let ns = self.basis.eigenvalues.len();
        let nt = self.nt;
        let rm = DMatrix::from_column_slice(ns, nt, r);
        // Row k of the transposed product is the time series of mode k.
        let mut modal = rm.tr_mul(&self.basis.vectors);
        let tc = self.tc;
        modal.as_mut_slice().par_chunks_mut(nt).zip(self.basis.eigenvalues.par_iter()).for_each(|(col, &lam)| {
            solve_time_tridiagonal(&tc, nt, lam, col);
        });
        let x = &self.basis.vectors * modal.transpose();
        z.copy_from_slice(x.as_slice());
    }
}

/// Thomas algorithm for the time stencil of one mode with eigenvalue `lam`.
fn solve_time_tridiagonal(tc: &TimeCoefficients, nt: usize, lam: f64, rhs: &mut [f64]) {
    let mut upper = vec![0.0; nt];
    let mut prev_upper = 0.0;
    for n in 1..=nt {
        let (lo, diag, up) = tc.stencil(n, nt);
        let k = n - 1;
        let (l, prev) = if n > 1 { (lo, rhs[k - 1]) } else { (0.0, 0.0) };
        let denom = diag + lam - l * prev_upper;
        upper[k] = up / denom;
        rhs[k] = (rhs[k] - l * prev) / denom;
        prev_upper = upper[k];
    }
    for k in (0..nt - 1).rev() {
        rhs[k] -= upper[k] * rhs[k + 1];
    }
}

/// Tridiagonal-in-time solve per spatial node, with the spatial operator
/// reduced to its diagonal. Used when the spatial eigenbasis is too large.
pub struct TimeLinePreconditioner {
    diag_spatial: Vec<f64>,
    mass: Vec<f64>,
    tc: TimeCoefficients,
    nt: usize,
}

impl TimeLinePreconditioner {
    pub fn new(ops: &DiscreteOperators, sigma: f64, tc: TimeCoefficients, nt: usize) -> Self {
        let mut diag_spatial = ops.stiffness().diagonal();
        for (&s, &w) in ops.trace_nodes().iter().zip(ops.trace_weights()) {
            diag_spatial[s] += sigma * w;
        }
        Self { diag_spatial, mass: ops.mass().to_vec(), tc, nt }
    }
}

impl Preconditioner for TimeLinePreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let ns = self.mass.len();
        let nt = self.nt;
        let lines: Vec<Vec<f64>> = (0..ns)
            .into_par_iter()
            .map(|s| {
                let m = self.mass[s];
                let mut col: Vec<f64> = (0..nt).map(|k| r[k * ns + s] / m).collect();
                solve_time_tridiagonal(&self.tc, nt, self.diag_spatial[s] / m, &mut col);
                col
            })
            .collect();
        for (s, col) in lines.iter().enumerate() {
            for (k, v) in col.iter().enumerate() {
                z[k * ns + s] = *v;
            }
        }
    }
}

/// Spatial grids up to this many nodes use the exact modal preconditioner.
const MODAL_LIMIT: usize = 2500;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WiedStats {
    pub eps: f64,
    pub method: OuterMethod,
    pub iterations: usize,
    pub el_residual: f64,
    pub residual_history: Vec<f64>,
    pub functional_history: Vec<f64>,
    pub linear_iterations: usize,
    /// `e^{-T/eps}`, the weight of the truncated tail.
    pub tail_weight: f64,
}

#[derive(Debug, Clone)]
pub struct WiedSolution {
    pub field: Field,
    pub stats: WiedStats,
}

/// Caches the spatial operators and eigenbasis across solves on one grid.
pub struct WiedSolver<'g> {
    grid: &'g WeightedGrid,
    ops: DiscreteOperators,
    model: CombustionModel,
    basis: Option<Arc<ModalBasis>>,
}

impl<'g> WiedSolver<'g> {
    pub fn new(grid: &'g WeightedGrid, model: &CombustionModel) -> Self {
        let ops = DiscreteOperators::new(grid);
        let basis = (ops.n_spatial() <= MODAL_LIMIT).then(|| Arc::new(ModalBasis::new(&ops, model.lipschitz())));
        Self { grid, ops, model: model.clone(), basis }
    }

    pub fn operators(&self) -> &DiscreteOperators {
        &self.ops
    }

    pub fn model(&self) -> &CombustionModel {
        &self.model
    }

    fn preconditioner(&self, tc: TimeCoefficients) -> Box<dyn Preconditioner + '_> {
        let nt = self.grid.n_layers() - 1;
        match &self.basis {
            Some(b) => Box::new(ModalPreconditioner::new(b.clone(), tc, nt)),
            None => Box::new(TimeLinePreconditioner::new(&self.ops, self.model.lipschitz(), tc, nt)),
        }
    }

    fn shifted_matrix(&self, system: &LinearSystem, shift: impl Fn(usize) -> f64) -> CsrMatrix {
        let ns = self.ops.n_spatial();
        let mut d = vec![0.0; system.rhs.len()];
        for (layer, chunk) in d.chunks_mut(ns).enumerate() {
            for (&s, &w) in self.ops.trace_nodes().iter().zip(self.ops.trace_weights()) {
                chunk[s] = w * shift(layer * ns + s);
            }
        }
        system.matrix.add_diagonal(&d)
    }

    fn linear_solve(
        &self,
        a: &CsrMatrix,
        b: &[f64],
        x0: &[f64],
        precond: &dyn Preconditioner,
        cfg: &WiedConfig,
    ) -> Result<(Vec<f64>, usize)> {
        let opts = SolverOptions { tol: cfg.inner_tol, max_iter: cfg.inner_max_iter };
        let res = bicgstab_solve(a, b, Some(x0), precond, opts)?.require_converged("space-time solve")?;
        Ok((res.x, res.iterations))
    }

    /// Solves the Euler-Lagrange system for `cfg.eps`, starting from
    /// `initial_guess` (a space-time field) or the time-constant extension of `u0`.
    pub fn solve(&self, cfg: &WiedConfig, u0: &[f64], initial_guess: Option<&Field>) -> Result<WiedSolution> {
        cfg.validate()?;
        if u0.len() != self.grid.n_spatial() || u0.iter().any(|v| !v.is_finite()) {
            return Err(WiedError::InvalidConfig("initial datum has wrong size or non-finite values".into()));
        }
        let system = assembly::assemble_linear_system(self.grid, &self.ops, cfg.eps, &ForcingSpec::none(), u0)?;
        let tc = system.coefficients;
        let precond = self.preconditioner(tc);
        let sigma = self.model.lipschitz();
        let picard_matrix = self.shifted_matrix(&system, |_| sigma);

        let mut x = match initial_guess {
            Some(g) => {
                self.grid.check_field(g)?;
                if g.n_layers() != self.grid.n_layers() {
                    return Err(WiedError::ShapeMismatch { expected: self.grid.n_space_time(), got: g.values().len() });
                }
                assembly::unknowns(g).to_vec()
            }
            None => Field::extend_in_time(u0, self.grid.n_layers() - 1).into_values(),
        };
        let energy = |x: &[f64]| functional_value(self.grid, &self.ops, &self.model, cfg.eps, &assembly::with_initial(u0, x), u0);

        let (_, mut rel) = el_residual(&system, &self.ops, &self.model, &x)?;
        let mut stats = WiedStats {
            eps: cfg.eps,
            method: cfg.outer,
            iterations: 0,
            el_residual: rel,
            residual_history: vec![rel],
            functional_history: vec![energy(&x)?],
            linear_iterations: 0,
            tail_weight: (-self.grid.spec().horizon / cfg.eps).exp(),
        };
        while rel > cfg.tol {
            if stats.iterations >= cfg.max_outer {
                return Err(WiedError::NonConvergence {
                    iterations: stats.iterations,
                    residual: rel,
                    residual_history: stats.residual_history,
                    last_iterate: assembly::with_initial(u0, &x).into_values(),
                });
            }
            let candidate = match cfg.outer {
                OuterMethod::Picard => None,
                OuterMethod::Newton => self.newton_step(&system, &x, rel, precond.as_ref(), cfg, &mut stats)?,
            };
            x = match candidate {
                Some(next) => next,
                None => self.picard_step(&system, &picard_matrix, &x, precond.as_ref(), cfg, &mut stats)?,
            };
            rel = el_residual(&system, &self.ops, &self.model, &x)?.1;
            stats.iterations += 1;
            stats.residual_history.push(rel);
            stats.functional_history.push(energy(&x)?);
        }
        stats.el_residual = rel;
        Ok(WiedSolution { field: assembly::with_initial(u0, &x), stats })
    }

    /// One majorize-minimize step: solve
    /// `(A + sigma B B^T) y = b + B (sigma u - beta(u))`, then relax.
    fn picard_step(
        &self,
        system: &LinearSystem,
        matrix: &CsrMatrix,
        x: &[f64],
        precond: &dyn Preconditioner,
        cfg: &WiedConfig,
        stats: &mut WiedStats,
    ) -> Result<Vec<f64>> {
        let sigma = self.model.lipschitz();
        let mut rhs = system.rhs.clone();
        let src = reaction_source(&self.ops, &self.model, x);
        let ns = self.ops.n_spatial();
        for (chunk, xs) in rhs.chunks_mut(ns).zip(x.chunks(ns)) {
            for (&s, &w) in self.ops.trace_nodes().iter().zip(self.ops.trace_weights()) {
                chunk[s] += sigma * w * xs[s];
            }
        }
        for (r, s) in rhs.iter_mut().zip(&src) {
            *r -= s;
        }
        let (y, its) = self.linear_solve(matrix, &rhs, x, precond, cfg)?;
        stats.linear_iterations += its;
        let theta = cfg.damping;
        Ok(x.iter().zip(&y).map(|(a, b)| a + theta * (b - a)).collect())
    }

    /// Newton step with backtracking on the residual; `None` asks the caller
    /// to fall back to a Picard step.
    fn newton_step(
        &self,
        system: &LinearSystem,
        x: &[f64],
        rel: f64,
        precond: &dyn Preconditioner,
        cfg: &WiedConfig,
        stats: &mut WiedStats,
    ) -> Result<Option<Vec<f64>>> {
        let (r, _) = el_residual(system, &self.ops, &self.model, x)?;
        let jac = self.shifted_matrix(system, |k| self.model.beta_prime(x[k]));
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let zero = vec![0.0; x.len()];
        let opts = SolverOptions { tol: (0.1 * rel).min(1e-3).max(cfg.inner_tol), max_iter: cfg.inner_max_iter };
        let delta = match bicgstab_solve(&jac, &neg, Some(&zero), precond, opts) {
            Ok(res) if res.converged => {
                stats.linear_iterations += res.iterations;
                res.x
            }
            _ => return Ok(None),
        };
        let mut theta = cfg.damping;
        while theta >= 1.0 / 64.0 {
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + theta * d).collect();
            let (_, trial_rel) = el_residual(system, &self.ops, &self.model, &trial)?;
            if trial_rel < (1.0 - 1e-4 * theta) * rel {
                return Ok(Some(trial));
            }
            theta *= 0.5;
        }
        Ok(None)
    }

    /// Single linear solve of the forced problem (no reaction term).
    pub fn solve_linear(&self, eps: f64, forcing: &ForcingSpec, u0: &[f64], cfg: &WiedConfig) -> Result<Field> {
        let system = assembly::assemble_linear_system(self.grid, &self.ops, eps, forcing, u0)?;
        let nt = self.grid.n_layers() - 1;
        let guess = Field::extend_in_time(u0, nt).into_values();
        // The modal basis carries the model's trace shift; the linear problem
        // has none, so use the time-line preconditioner unless the shift is zero.
        let precond: Box<dyn Preconditioner> = match &self.basis {
            Some(b) if b.sigma() == 0.0 => Box::new(ModalPreconditioner::new(b.clone(), system.coefficients, nt)),
            _ => Box::new(TimeLinePreconditioner::new(&self.ops, 0.0, system.coefficients, nt)),
        };
        let opts = SolverOptions { tol: cfg.inner_tol, max_iter: cfg.inner_max_iter.max(2000) };
        let res = bicgstab_solve(&system.matrix, &system.rhs, Some(&guess), precond.as_ref(), opts)?
            .require_converged("linear space-time solve")?;
        Ok(assembly::with_initial(u0, &res.x))
    }
}

pub fn solve_wied(grid: &WeightedGrid, model: &CombustionModel, cfg: &WiedConfig, u0: &[f64]) -> Result<WiedSolution> {
    WiedSolver::new(grid, model).solve(cfg, u0, None)
}

pub fn solve_linear_wied(grid: &WeightedGrid, eps: f64, forcing: &ForcingSpec, u0: &[f64]) -> Result<Field> {
    let cfg = WiedConfig { eps, inner_tol: 1e-13, ..WiedConfig::default() };
    WiedSolver::new(grid, &CombustionModel::inert()).solve_linear(eps, forcing, u0, &cfg)
}

/// Distance in the discrete `C([0,T]; L^{2,a})` norm: the largest weighted
/// `L^2` distance over time layers.
pub fn c_l2a_distance(grid: &WeightedGrid, u: &Field, v: &Field) -> Result<f64> {
    if u.n_layers() != v.n_layers() || u.n_spatial() != v.n_spatial() {
        return Err(WiedError::ShapeMismatch { expected: u.values().len(), got: v.values().len() });
    }
    grid.check_field(u)?;
    let m = grid.node_mass();
    Ok((0..u.n_layers())
        .map(|n| u.layer(n).iter().zip(v.layer(n)).zip(m).map(|((a, b), w)| w * (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub iters: usize,
    pub el_residual: f64,
    pub dist_to_ref: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LevelResult {
    pub eps: f64,
    pub solution: WiedSolution,
    pub dist_to_ref: Option<f64>,
}

#[derive(Debug)]
pub struct SweepResult {
    pub levels: Vec<LevelResult>,
    /// Level at which the sweep stopped, if it did.
    pub failure: Option<(f64, WiedError)>,
}

impl SweepResult {
    pub fn report(&self) -> Vec<ConvergenceRow> {
        self.levels
            .iter()
            .map(|l| ConvergenceRow {
                eps: l.eps,
                iters: l.solution.stats.iterations,
                el_residual: l.solution.stats.el_residual,
                dist_to_ref: l.dist_to_ref,
            })
            .collect()
    }

    /// Writes the `eps,iters,el_residual,dist_to_ref` table.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["eps", "iters", "el_residual", "dist_to_ref"])?;
        for r in self.report() {
            w.write_record([
                format!("{:e}", r.eps),
                r.iters.to_string(),
                format!("{:e}", r.el_residual),
                r.dist_to_ref.map_or_else(String::new, |d| format!("{d:e}")),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Solves every level of `schedule`, warm-starting each from the previous
/// one, and measures the distance to `reference` when given.
pub fn sweep_epsilon(
    grid: &WeightedGrid,
    model: &CombustionModel,
    schedule: &EpsilonSchedule,
    base: &WiedConfig,
    u0: &[f64],
    reference: Option<&Field>,
) -> Result<SweepResult> {
    schedule.validate(grid.spec().horizon)?;
    let solver = WiedSolver::new(grid, model);
    let mut levels: Vec<LevelResult> = Vec::new();
    for eps in schedule.levels() {
        let cfg = WiedConfig { eps, ..base.clone() };
        let guess = levels.last().map(|l| &l.solution.field);
        match solver.solve(&cfg, u0, guess) {
            Ok(solution) => {
                let dist_to_ref = reference.map(|r| c_l2a_distance(grid, &solution.field, r)).transpose()?;
                levels.push(LevelResult { eps, solution, dist_to_ref });
            }
            Err(e) => return Ok(SweepResult { levels, failure: Some((eps, e)) }),
        }
    }
    Ok(SweepResult { levels, failure: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn grid() -> WeightedGrid {
        WeightedGrid::new(GridSpec {
            d: 1,
            a: 0.3,
            half_width: 1.0,
            height: 1.0,
            horizon: 1.0,
            nx: 6,
            ny: 5,
            nt: 12,
            grading: None,
        })
        .unwrap()
    }

    #[test]
    fn modal_preconditioner_is_exact_inverse() {
        let g = grid();
        let ops = DiscreteOperators::new(&g);
        let sigma = 2.0;
        let tc = TimeCoefficients::new(&g, 0.05).unwrap();
        let sys = assembly::assemble_linear_system(&g, &ops, 0.05, &ForcingSpec::none(), &vec![0.0; g.n_spatial()]).unwrap();
        let solver = WiedSolver::new(&g, &CombustionModel::hat(0.5).unwrap());
        let a = solver.shifted_matrix(&sys, |_| sigma);
        let p = ModalPreconditioner::new(Arc::new(ModalBasis::new(&ops, sigma)), tc, g.n_layers() - 1);
        let x: Vec<f64> = (0..a.nrows()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let b = a.spmv(&x).unwrap();
        let mut z = vec![0.0; x.len()];
        p.apply(&b, &mut z);
        let err = x.iter().zip(&z).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn constants_are_fixed_points() {
        let g = grid();
        let u0 = vec![0.7; g.n_spatial()];
        let sol = solve_wied(&g, &CombustionModel::inert(), &WiedConfig { eps: 0.04, ..Default::default() }, &u0).unwrap();
        assert!(sol.stats.iterations <= 1);
        assert!(sol.field.values().iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn schedule_validation() {
        let s = EpsilonSchedule { eps0: 0.2, ratio: 0.5, count: 3 };
        assert_eq!(s.levels(), vec![0.2, 0.1, 0.05]);
        assert!(s.validate(4.0).is_ok());
        assert!(s.validate(1.0).is_err());
        assert!(EpsilonSchedule { eps0: 0.01, ratio: 1.5, count: 2 }.validate(1.0).is_err());
    }
}

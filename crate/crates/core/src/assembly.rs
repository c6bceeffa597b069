//! Discrete operators, the exponentially weighted space-time functional and
//! its Euler-Lagrange system.
//!
//! The spatial discretization is a vertex-centred finite volume scheme: the
//! mass matrix is lumped (`M = diag(node_mass)`), the stiffness matrix comes
//! from the grid edges, and the trace map `B` weights each `y = 0` node with
//! its lumped `x` volume.
//!
//! In time the functional is
//!
//! ```text
//! E(U) = sum_n w_n [ eps |U^{n+1} - U^n|_M^2 / dt^2 + (Q(U^n) + Q(U^{n+1})) / 2 ],
//! Q(U) = U^T K U + sum_i vol_i Phi(u_i),   w_n = e^{-t_n/eps} - e^{-t_{n+1}/eps}.
//! ```
//!
//! Dividing the gradient row of layer `n` by `s_n = w_{n-1} + w_n` removes
//! the exponential weight and yields the system solved by `wied`:
//!
//! ```text
//! c (1+q) M U^n - c M U^{n-1} - c q M U^{n+1} + K U^n + B beta(u^n) = 0,    0 < n < nt
//! (2 eps / dt^2) M (U^nt - U^{nt-1})         + K U^nt + B beta(u^nt) = 0,
//! ```
//!
//! with `q = e^{-dt/eps}` and `c = 2 eps / (dt^2 (1 + q))`.

use rayon::prelude::*;

use crate::combustion::CombustionModel;
use crate::error::{Result, WiedError};
use crate::field::Field;
use crate::grid::WeightedGrid;
use crate::linalg::{CsrMatrix, TripletBuilder};

/// Spatial operators shared by the space-time and the time-stepping solvers.
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    mass: Vec<f64>,
    stiffness: CsrMatrix,
    trace_nodes: Vec<usize>,
    trace_weights: Vec<f64>,
    edges: Vec<crate::grid::Edge>,
    n_spatial: usize,
}

impl DiscreteOperators {
    pub fn new(grid: &WeightedGrid) -> Self {
        let ns = grid.n_spatial();
        let mut b = TripletBuilder::with_capacity(ns, ns, ns + 4 * grid.edges().len());
        for s in 0..ns {
            b.push(s, s, 0.0);
        }
        for e in grid.edges() {
            b.push(e.a, e.a, e.coef);
            b.push(e.b, e.b, e.coef);
            b.push(e.a, e.b, -e.coef);
            b.push(e.b, e.a, -e.coef);
        }
        let trace_nodes: Vec<usize> = grid.trace_nodes().collect();
        let trace_weights = (0..grid.n_x_nodes()).map(|ix| grid.x_volume(ix)).collect();
        Self {
            mass: grid.node_mass().to_vec(),
            stiffness: b.build(),
            trace_nodes,
            trace_weights,
            edges: grid.edges().to_vec(),
            n_spatial: ns,
        }
    }

    pub fn n_spatial(&self) -> usize {
        self.n_spatial
    }
    /// Diagonal of the lumped weighted mass matrix.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }
    pub fn mass_matrix(&self) -> CsrMatrix {
        CsrMatrix::from_diagonal(&self.mass)
    }
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }
    /// Spatial indices of the `y = 0` nodes.
    pub fn trace_nodes(&self) -> &[usize] {
        &self.trace_nodes
    }
    /// Lumped `x` volume of each trace node.
    pub fn trace_weights(&self) -> &[f64] {
        &self.trace_weights
    }

    /// `u = U|_{y=0}` for one spatial layer.
    pub fn trace(&self, layer: &[f64]) -> Vec<f64> {
        self.trace_nodes.iter().map(|&s| layer[s]).collect()
    }

    /// `out += B g(u)` for one layer.
    pub fn add_trace_source(&self, layer: &[f64], g: impl Fn(f64) -> f64, out: &mut [f64]) {
        for (&s, &w) in self.trace_nodes.iter().zip(&self.trace_weights) {
            out[s] += w * g(layer[s]);
        }
    }

    /// `int_{y=0} Phi(u) dx` with lumped `x` volumes.
    pub fn potential(&self, model: &CombustionModel, layer: &[f64]) -> f64 {
        self.trace_nodes.iter().zip(&self.trace_weights).map(|(&s, &w)| w * model.phi(layer[s])).sum()
    }

    /// `U^T K U`, summed edge by edge so it is exactly zero on constants.
    pub fn stiffness_energy(&self, layer: &[f64]) -> f64 {
        self.edges.iter().map(|e| e.coef * (layer[e.a] - layer[e.b]).powi(2)).sum()
    }

    pub fn mass_norm_sq(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.mass).map(|(x, m)| m * x * x).sum()
    }
}

/// Exact cell weights `w_n = e^{-t_n/eps} - e^{-t_{n+1}/eps}`.
pub fn time_weights(grid: &WeightedGrid, eps: f64) -> Vec<f64> {
    let t = grid.t_nodes();
    let one_minus_q = -(-grid.dt() / eps).exp_m1();
    t[..t.len() - 1].iter().map(|&tn| (-tn / eps).exp() * one_minus_q).collect()
}

/// Coefficients of the normalized Euler-Lagrange system for one `eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeCoefficients {
    pub eps: f64,
    pub dt: f64,
    /// `e^{-dt/eps}`
    pub q: f64,
    /// `2 eps / (dt^2 (1 + q))`
    pub c: f64,
    /// `2 eps / dt^2`, the terminal-row inertia coefficient.
    pub terminal: f64,
}

impl TimeCoefficients {
    pub fn new(grid: &WeightedGrid, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        let dt = grid.dt();
        let q = (-dt / eps).exp();
        let terminal = 2.0 * eps / (dt * dt);
        Ok(Self { eps, dt, q, c: terminal / (1.0 + q), terminal })
    }

    /// Coefficients `(lower, diag, upper)` of the time stencil in row `n >= 1`.
    pub fn stencil(&self, n: usize, nt: usize) -> (f64, f64, f64) {
        if n == nt {
            (-self.terminal, self.terminal, 0.0)
        } else {
            (-self.c, self.c * (1.0 + self.q), -self.c * self.q)
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(WiedError::InvalidConfig(format!("eps = {eps} must be positive")))
    }
}

fn check_space_time(grid: &WeightedGrid, u: &Field, u0: &[f64]) -> Result<()> {
    if u.n_spatial() != grid.n_spatial() || u.n_layers() != grid.n_layers() {
        return Err(WiedError::ShapeMismatch { expected: grid.n_space_time(), got: u.values().len() });
    }
    if u0.len() != grid.n_spatial() {
        return Err(WiedError::ShapeMismatch { expected: grid.n_spatial(), got: u0.len() });
    }
    Ok(())
}

/// Discrete value of the weighted inertia-energy functional. The initial layer
/// of `u` is replaced by `u0`.
pub fn functional_value(
    grid: &WeightedGrid,
    ops: &DiscreteOperators,
    model: &CombustionModel,
    eps: f64,
    u: &Field,
    u0: &[f64],
) -> Result<f64> {
    check_eps(eps)?;
    check_space_time(grid, u, u0)?;
    let w = time_weights(grid, eps);
    let layer = |n: usize| if n == 0 { u0 } else { u.layer(n) };
    let q: Vec<f64> = (0..grid.n_layers())
        .into_par_iter()
        .map(|n| ops.stiffness_energy(layer(n)) + ops.potential(model, layer(n)))
        .collect();
    let dt2 = grid.dt() * grid.dt();
    let inertia: Vec<f64> = (0..w.len())
        .into_par_iter()
        .map(|n| {
            let (a, b) = (layer(n), layer(n + 1));
            a.iter().zip(b).zip(ops.mass()).map(|((x, y), m)| m * (y - x) * (y - x)).sum::<f64>()
        })
        .collect();
    Ok((0..w.len()).map(|n| w[n] * (eps * inertia[n] / dt2 + 0.5 * (q[n] + q[n + 1]))).sum())
}

/// Gradient of [`functional_value`] with respect to the unknown layers
/// `1..=nt`; the initial layer of the result is zero.
pub fn functional_gradient(
    grid: &WeightedGrid,
    ops: &DiscreteOperators,
    model: &CombustionModel,
    eps: f64,
    u: &Field,
    u0: &[f64],
) -> Result<Field> {
    check_eps(eps)?;
    check_space_time(grid, u, u0)?;
    let w = time_weights(grid, eps);
    let nt = w.len();
    let ns = grid.n_spatial();
    let coef = 2.0 * eps / (grid.dt() * grid.dt());
    let layer = |n: usize| if n == 0 { u0 } else { u.layer(n) };
    let mut g = Field::zeros(nt + 1, ns);
    g.values_mut()[ns..].par_chunks_mut(ns).enumerate().for_each(|(k, out)| {
        let n = k + 1;
        let wl = w[n - 1];
        let wr = if n < nt { w[n] } else { 0.0 };
        let cur = layer(n);
        let prev = layer(n - 1);
        let ku = ops.stiffness.spmv(cur).expect("layer shape");
        for s in 0..ns {
            let mut v = (wl + wr) * ku[s] + coef * ops.mass[s] * wl * (cur[s] - prev[s]);
            if n < nt {
                v -= coef * ops.mass[s] * wr * (layer(n + 1)[s] - cur[s]);
            }
            out[s] = v;
        }
        let mut src = vec![0.0; ns];
        ops.add_trace_source(cur, |x| model.beta(x), &mut src);
        for s in 0..ns {
            out[s] += (wl + wr) * src[s];
        }
    });
    Ok(g)
}

/// Row scaling `s_n = w_{n-1} + w_n` (with `w_nt = 0`) relating the raw
/// gradient of layer `n` to the normalized system.
pub fn row_scales(grid: &WeightedGrid, eps: f64) -> Vec<f64> {
    let w = time_weights(grid, eps);
    let nt = w.len();
    (1..=nt).map(|n| w[n - 1] + if n < nt { w[n] } else { 0.0 }).collect()
}

/// Forcing data of the linear problem: bulk term `F` (space-time field) and
/// trace term `f` (field over the trace nodes and all time layers), plus the
/// exponents used when measuring them.
#[derive(Debug, Clone, Default)]
pub struct ForcingSpec {
    pub bulk: Option<Field>,
    pub trace: Option<Field>,
    pub p: Option<f64>,
    pub q: Option<f64>,
}

impl ForcingSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn check(&self, grid: &WeightedGrid) -> Result<()> {
        if let Some(f) = &self.bulk {
            if f.n_layers() != grid.n_layers() || f.n_spatial() != grid.n_spatial() {
                return Err(WiedError::ShapeMismatch { expected: grid.n_space_time(), got: f.values().len() });
            }
        }
        if let Some(f) = &self.trace {
            if f.n_layers() != grid.n_layers() || f.n_spatial() != grid.n_x_nodes() {
                return Err(WiedError::ShapeMismatch {
                    expected: grid.n_layers() * grid.n_x_nodes(),
                    got: f.values().len(),
                });
            }
        }
        Ok(())
    }

    /// Checks `p > (d + 3 + a)/2` and `q > d/(1 - a)` when exponents are set.
    pub fn check_exponents(&self, d: usize, a: f64) -> Result<()> {
        if let Some(p) = self.p {
            let min = (d as f64 + 3.0 + a) / 2.0;
            if !(p > min) {
                return Err(WiedError::InvalidConfig(format!("bulk exponent p = {p} must exceed {min}")));
            }
        }
        if let Some(q) = self.q {
            let min = d as f64 / (1.0 - a);
            if !(q > min) {
                return Err(WiedError::InvalidConfig(format!("trace exponent q = {q} must exceed {min}")));
            }
        }
        Ok(())
    }

    /// Source `M F^n + B f^n` for layer `n`.
    pub fn layer_source(&self, ops: &DiscreteOperators, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; ops.n_spatial()];
        if let Some(f) = &self.bulk {
            for (o, (m, v)) in out.iter_mut().zip(ops.mass().iter().zip(f.layer(n))) {
                *o = m * v;
            }
        }
        if let Some(f) = &self.trace {
            for ((&s, &w), v) in ops.trace_nodes().iter().zip(ops.trace_weights()).zip(f.layer(n)) {
                out[s] += w * v;
            }
        }
        out
    }
}

/// Linear system over the unknown layers `1..=nt`, stacked time-major.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub coefficients: TimeCoefficients,
}

/// Matrix of the normalized Euler-Lagrange operator (without the reaction
/// term) acting on layers `1..=nt`.
pub fn space_time_matrix(grid: &WeightedGrid, ops: &DiscreteOperators, tc: &TimeCoefficients) -> CsrMatrix {
    let nt = grid.n_layers() - 1;
    let ns = ops.n_spatial();
    let k = ops.stiffness();
    let n = nt * ns;
    let mut b = TripletBuilder::with_capacity(n, n, nt * (k.nnz() + 3 * ns));
    for layer in 1..=nt {
        let row0 = (layer - 1) * ns;
        let (lo, diag, up) = tc.stencil(layer, nt);
        for s in 0..ns {
            let i = row0 + s;
            let m = ops.mass()[s];
            for (j, v) in k.row(s) {
                b.push(i, row0 + j, v);
            }
            b.push(i, i, diag * m);
            if layer > 1 {
                b.push(i, i - ns, lo * m);
            }
            if layer < nt {
                b.push(i, i + ns, up * m);
            }
        }
    }
    b.build()
}

/// Right-hand side contribution `c M U^0` of the eliminated initial layer.
pub fn initial_coupling(grid: &WeightedGrid, ops: &DiscreteOperators, tc: &TimeCoefficients, u0: &[f64]) -> Vec<f64> {
    let nt = grid.n_layers() - 1;
    let ns = ops.n_spatial();
    let mut rhs = vec![0.0; nt * ns];
    let (lo, _, _) = tc.stencil(1, nt);
    for s in 0..ns {
        rhs[s] = -lo * ops.mass()[s] * u0[s];
    }
    rhs
}

/// Assembles the linear problem with forcing `F`, `f` and initial datum `u0`.
pub fn assemble_linear_system(
    grid: &WeightedGrid,
    ops: &DiscreteOperators,
    eps: f64,
    forcing: &ForcingSpec,
    u0: &[f64],
) -> Result<LinearSystem> {
    let tc = TimeCoefficients::new(grid, eps)?;
    forcing.check(grid)?;
    if u0.len() != grid.n_spatial() {
        return Err(WiedError::ShapeMismatch { expected: grid.n_spatial(), got: u0.len() });
    }
    let matrix = space_time_matrix(grid, ops, &tc);
    let mut rhs = initial_coupling(grid, ops, &tc, u0);
    let ns = ops.n_spatial();
    if forcing.bulk.is_some() || forcing.trace.is_some() {
        for n in 1..grid.n_layers() {
            let src = forcing.layer_source(ops, n);
            for (r, v) in rhs[(n - 1) * ns..n * ns].iter_mut().zip(src) {
                *r += v;
            }
        }
    }
    Ok(LinearSystem { matrix, rhs, coefficients: tc })
}

/// Stacks layers `1..=nt` of a space-time field.
pub fn unknowns(u: &Field) -> &[f64] {
    &u.values()[u.n_spatial()..]
}

/// Rebuilds a space-time field from the initial layer and stacked unknowns.
pub fn with_initial(u0: &[f64], x: &[f64]) -> Field {
    let ns = u0.len();
    let mut v = Vec::with_capacity(ns + x.len());
    v.extend_from_slice(u0);
    v.extend_from_slice(x);
    let layers = v.len() / ns;
    Field::from_values(layers, ns, v).expect("layer-aligned vector")
}

/// Reaction source `B beta(u^n)` stacked over layers `1..=nt`.
pub fn reaction_source(ops: &DiscreteOperators, model: &CombustionModel, x: &[f64]) -> Vec<f64> {
    let ns = ops.n_spatial();
    let mut out = vec![0.0; x.len()];
    if model.is_inert() {
        return out;
    }
    out.par_chunks_mut(ns).zip(x.par_chunks(ns)).for_each(|(o, layer)| {
        ops.add_trace_source(layer, |v| model.beta(v), o);
    });
    out
}

/// Normalized Euler-Lagrange residual `r = A x + B beta(x) - b` and the
/// relative norm `|r| / | |A| |x| + |B beta(x)| + |b| |`. Scaling by the
/// magnitudes of the summed terms keeps the tolerance above the rounding
/// floor when the graded mesh makes `A` large near `y = 0`.
pub fn el_residual(
    system: &LinearSystem,
    ops: &DiscreteOperators,
    model: &CombustionModel,
    x: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let mut r = system.matrix.spmv(x)?;
    let src = reaction_source(ops, model, x);
    let a = &system.matrix;
    let scale: Vec<f64> = (0..r.len())
        .into_par_iter()
        .map(|i| a.row(i).map(|(j, v)| (v * x[j]).abs()).sum::<f64>() + src[i].abs() + system.rhs[i].abs())
        .collect();
    for ((ri, si), bi) in r.iter_mut().zip(&src).zip(&system.rhs) {
        *ri += si - bi;
    }
    let den = crate::linalg::norm2(&scale);
    let num = crate::linalg::norm2(&r);
    let rel = if den > 0.0 { num / den } else { num };
    Ok((r, rel))
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
            horizon: 1.0,
            nx: 4,
            ny: 4,
            nt: 4,
            grading: None,
        })
        .unwrap()
    }

    #[test]
    fn stiffness_annihilates_constants_and_is_symmetric() {
        for a in [-0.5, 0.0, 0.5] {
            let g = grid(a);
            let ops = DiscreteOperators::new(&g);
            let ones = vec![1.0; g.n_spatial()];
            let k1 = ops.stiffness().spmv(&ones).unwrap();
            assert!(k1.iter().all(|v| v.abs() < 1e-12));
            assert!(ops.stiffness().is_symmetric(1e-14));
            assert!(ops.mass().iter().all(|&m| m > 0.0));
        }
    }

    #[test]
    fn constant_functional_values() {
        let g = grid(0.0);
        let ops = DiscreteOperators::new(&g);
        let c = 0.3;
        let u = Field::constant(g.n_layers(), g.n_spatial(), c);
        let u0 = vec![c; g.n_spatial()];
        let inert = CombustionModel::inert();
        assert_eq!(functional_value(&g, &ops, &inert, 0.1, &u, &u0).unwrap(), 0.0);
        let bump = CombustionModel::polynomial_bump();
        let eps = 0.1;
        let v = functional_value(&g, &ops, &bump, eps, &u, &u0).unwrap();
        let expected = bump.phi(c) * 2.0 * (1.0 - (-1.0f64 / eps).exp());
        assert!((v - expected).abs() < 1e-13 * expected, "{v} vs {expected}");
    }

    #[test]
    fn weights_telescope() {
        let g = grid(0.0);
        for eps in [0.01, 0.3, 2.0] {
            let s: f64 = time_weights(&g, eps).iter().sum();
            assert!((s - (1.0 - (-1.0 / eps).exp())).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_nonpositive_eps() {
        let g = grid(0.0);
        let ops = DiscreteOperators::new(&g);
        let u = Field::zeros(g.n_layers(), g.n_spatial());
        let u0 = vec![0.0; g.n_spatial()];
        assert!(functional_value(&g, &ops, &CombustionModel::inert(), 0.0, &u, &u0).is_err());
        assert!(assemble_linear_system(&g, &ops, -1.0, &ForcingSpec::none(), &u0).is_err());
    }

    #[test]
    fn linear_in_time_reproduces_drift() {
        let g = WeightedGrid::new(GridSpec {
            d: 1,
            a: 0.0,
            half_width: 1.0,
            height: 1.0,
            horizon: 1.0,
            nx: 2,
            ny: 2,
            nt: 200,
            grading: None,
        })
        .unwrap();
        let ops = DiscreteOperators::new(&g);
        let eps = 0.5;
        let u = Field::from_fn(&g, |_, _, t| t);
        let sys = assemble_linear_system(&g, &ops, eps, &ForcingSpec::none(), u.layer(0)).unwrap();
        let (r, _) = el_residual(&sys, &ops, &CombustionModel::inert(), unknowns(&u)).unwrap();
        // Interior rows: -eps U_tt + U_t = 1 for U = t, times the lumped mass.
        let ns = g.n_spatial();
        let h: f64 = g.dt() / eps;
        for n in 1..g.n_layers() - 1 {
            for s in 0..ns {
                let v = r[(n - 1) * ns + s] / ops.mass()[s];
                assert!((v - 1.0).abs() < h * h, "layer {n}: {v}");
            }
        }
    }
}

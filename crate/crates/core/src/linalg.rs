//! Compressed sparse row matrices and Krylov solvers.
//!
//! All reductions use a fixed chunking so results do not depend on the
//! number of worker threads.

use rayon::prelude::*;

use crate::error::{Result, WiedError};

const CHUNK: usize = 4096;

/// Inner product with a thread-count independent summation order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.par_chunks_mut(CHUNK).zip(x.par_chunks(CHUNK)).for_each(|(yc, xc)| {
        for (yi, xi) in yc.iter_mut().zip(xc) {
            *yi += alpha * xi;
        }
    });
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Accumulates `(row, col, value)` entries; duplicates are summed.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        assert!(row < self.nrows && col < self.ncols, "entry ({row}, {col}) out of bounds");
        self.entries.push((row, col, value));
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values = Vec::with_capacity(self.entries.len());
        let mut k = 0;
        while k < self.entries.len() {
            let (i, j, mut v) = self.entries[k];
            k += 1;
            while k < self.entries.len() && self.entries[k].0 == i && self.entries[k].1 == j {
                v += self.entries[k].2;
                k += 1;
            }
            if v != 0.0 {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
            }
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, row_ptr, col_idx, values }
    }
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut b = TripletBuilder::with_capacity(d.len(), d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            b.push(i, i, v);
        }
        b.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn nnz(&self) -> usize {
        self.values.len()
    }
    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }
    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    /// `y = A x`; each row is summed in column order, so the result is
    /// independent of scheduling.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.ncols {
            return Err(WiedError::ShapeMismatch { expected: self.ncols, got: x.len() });
        }
        if y.len() != self.nrows {
            return Err(WiedError::ShapeMismatch { expected: self.nrows, got: y.len() });
        }
        y.par_chunks_mut(CHUNK).enumerate().for_each(|(c, yc)| {
            let base = c * CHUNK;
            for (k, yi) in yc.iter_mut().enumerate() {
                let i = base + k;
                let mut s = 0.0;
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    s += self.values[p] * x[self.col_idx[p]];
                }
                *yi = s;
            }
        });
        Ok(())
    }

    /// `A + diag(d)`.
    pub fn add_diagonal(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.nrows);
        let mut b = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + d.len());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                b.push(i, j, v);
            }
            b.push(i, i, d[i]);
        }
        b.build()
    }

    /// `alpha A + beta B` for matrices of equal shape.
    pub fn linear_combination(alpha: f64, a: &CsrMatrix, beta: f64, b: &CsrMatrix) -> Self {
        assert_eq!((a.nrows, a.ncols), (b.nrows, b.ncols));
        let mut t = TripletBuilder::with_capacity(a.nrows, a.ncols, a.nnz() + b.nnz());
        for i in 0..a.nrows {
            for (j, v) in a.row(i) {
                t.push(i, j, alpha * v);
            }
            for (j, v) in b.row(i) {
                t.push(i, j, beta * v);
            }
        }
        t.build()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols
            && (0..self.nrows).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol * v.abs().max(1.0)))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    /// Matrix Market coordinate text, for debugging dumps.
    pub fn to_matrix_market(&self) -> String {
        let mut s = format!(
            "%%MatrixMarket matrix coordinate real general\n{} {} {}\n",
            self.nrows,
            self.ncols,
            self.nnz()
        );
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                s.push_str(&format!("{} {} {:e}\n", i + 1, j + 1, v));
            }
        }
        s
    }
}

pub trait Preconditioner: Sync {
    /// `z = P^{-1} r`
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &CsrMatrix) -> Self {
        let inv_diag = a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect();
        Self { inv_diag }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.par_chunks_mut(CHUNK).zip(r.par_chunks(CHUNK)).enumerate().for_each(|(c, (zc, rc))| {
            let d = &self.inv_diag[c * CHUNK..];
            for k in 0..zc.len() {
                zc[k] = d[k] * rc[k];
            }
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecondKind {
    None,
    Jacobi,
}

impl PrecondKind {
    pub fn build(self, a: &CsrMatrix) -> Box<dyn Preconditioner> {
        match self {
            PrecondKind::None => Box::new(Identity),
            PrecondKind::Jacobi => Box::new(Jacobi::new(a)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target for `||b - A x|| / ||b||`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 1000 }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual after each iteration (entry 0 is the initial guess).
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

impl SolveResult {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&0.0)
    }

    /// Turns a non-converged result into an error.
    pub fn require_converged(self, what: &str) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(WiedError::LinearSolver(format!(
                "{what}: relative residual {:.3e} after {} iterations",
                self.final_residual(),
                self.iterations
            )))
        }
    }
}

fn check_system(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>) -> Result<()> {
    if a.nrows != a.ncols {
        return Err(WiedError::ShapeMismatch { expected: a.nrows, got: a.ncols });
    }
    if b.len() != a.nrows {
        return Err(WiedError::ShapeMismatch { expected: a.nrows, got: b.len() });
    }
    if let Some(x) = x0 {
        if x.len() != a.nrows {
            return Err(WiedError::ShapeMismatch { expected: a.nrows, got: x.len() });
        }
    }
    Ok(())
}

/// Preconditioned conjugate gradients. `A` must be symmetric positive
/// definite; nonpositive curvature is reported as an error.
pub fn pcg_solve(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    precond: &dyn Preconditioner,
    opts: SolverOptions,
) -> Result<SolveResult> {
    check_system(a, b, x0)?;
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if bnorm == 0.0 {
        return Ok(SolveResult { x: vec![0.0; n], iterations: 0, residual_history: vec![0.0], converged: true });
    }
    let mut r = a.spmv(&x)?;
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut history = vec![norm2(&r) / bnorm];
    if history[0] <= opts.tol {
        return Ok(SolveResult { x, iterations: 0, residual_history: history, converged: true });
    }
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=opts.max_iter {
        a.spmv_into(&p, &mut ap)?;
        let curv = dot(&p, &ap);
        if !(curv > 0.0) {
            return Err(WiedError::LinearSolver(format!(
                "CG breakdown at iteration {it}: nonpositive curvature {curv:e} (matrix not SPD?)"
            )));
        }
        let alpha = rz / curv;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rel = norm2(&r) / bnorm;
        history.push(rel);
        if rel <= opts.tol {
            return Ok(SolveResult { x, iterations: it, residual_history: history, converged: true });
        }
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_chunks_mut(CHUNK).zip(z.par_chunks(CHUNK)).for_each(|(pc, zc)| {
            for (pi, zi) in pc.iter_mut().zip(zc) {
                *pi = zi + beta * *pi;
            }
        });
    }
    Ok(SolveResult { x, iterations: opts.max_iter, residual_history: history, converged: false })
}

/// Right-preconditioned BiCGStab for general nonsingular systems.
pub fn bicgstab_solve(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    precond: &dyn Preconditioner,
    opts: SolverOptions,
) -> Result<SolveResult> {
    check_system(a, b, x0)?;
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if bnorm == 0.0 {
        return Ok(SolveResult { x: vec![0.0; n], iterations: 0, residual_history: vec![0.0], converged: true });
    }
    let mut r = a.spmv(&x)?;
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut history = vec![norm2(&r) / bnorm];
    if history[0] <= opts.tol {
        return Ok(SolveResult { x, iterations: 0, residual_history: history, converged: true });
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=opts.max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(WiedError::LinearSolver(format!("BiCGStab breakdown at iteration {it}")));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        precond.apply(&p, &mut p_hat);
        a.spmv_into(&p_hat, &mut v)?;
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            return Err(WiedError::LinearSolver(format!("BiCGStab breakdown at iteration {it}")));
        }
        alpha = rho / denom;
        axpy(alpha, &p_hat, &mut x);
        axpy(-alpha, &v, &mut r);
        let rel = norm2(&r) / bnorm;
        if rel <= opts.tol {
            history.push(rel);
            return Ok(SolveResult { x, iterations: it, residual_history: history, converged: true });
        }
        precond.apply(&r, &mut s_hat);
        a.spmv_into(&s_hat, &mut t)?;
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &r) / tt } else { 0.0 };
        axpy(omega, &s_hat, &mut x);
        axpy(-omega, &t, &mut r);
        let rel = norm2(&r) / bnorm;
        history.push(rel);
        if rel <= opts.tol {
            return Ok(SolveResult { x, iterations: it, residual_history: history, converged: true });
        }
    }
    Ok(SolveResult { x, iterations: opts.max_iter, residual_history: history, converged: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            for j in 0..n {
                if rng.gen_bool(0.6) {
                    b.push(i, j, rng.gen_range(-1.0..1.0));
                }
            }
        }
        b.build()
    }

    #[test]
    fn builder_merges_sorts_and_drops_zeros() {
        let mut b = TripletBuilder::new(2, 3);
        b.push(1, 2, 1.0);
        b.push(0, 1, 2.0);
        b.push(1, 0, 3.0);
        b.push(1, 2, -1.0);
        b.push(0, 1, 0.5);
        let m = b.build();
        assert_eq!(m.row_ptr(), &[0, 1, 2]);
        assert_eq!(m.col_idx(), &[1, 0]);
        assert_eq!(m.values(), &[2.5, 3.0]);
    }

    #[test]
    fn spmv_basics() {
        let x = vec![1.0, -2.0, 3.5];
        assert_eq!(CsrMatrix::identity(3).spmv(&x).unwrap(), x);
        assert_eq!(TripletBuilder::new(3, 3).build().spmv(&x).unwrap(), vec![0.0; 3]);
        assert!(CsrMatrix::identity(2).spmv(&x).is_err());
    }

    #[test]
    fn spmv_matches_dense() {
        let m = random_matrix(5, 7);
        let x = [0.3, -1.0, 2.0, 0.7, -0.2];
        let dense = m.to_dense();
        let y = m.spmv(&x).unwrap();
        for i in 0..5 {
            let yd: f64 = (0..5).map(|j| dense[i][j] * x[j]).sum();
            assert!((y[i] - yd).abs() < 1e-14);
        }
    }

    #[test]
    fn pcg_small_cases() {
        let id = CsrMatrix::identity(4);
        let b = [1.0, 2.0, 3.0, 4.0];
        let r = pcg_solve(&id, &b, None, &Identity, SolverOptions::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.x, b.to_vec());
        let d = CsrMatrix::from_diagonal(&[1.0, 4.0]);
        let r = pcg_solve(&d, &[1.0, 1.0], None, &Jacobi::new(&d), SolverOptions::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-15 && (r.x[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn pcg_reports_indefinite() {
        let d = CsrMatrix::from_diagonal(&[1.0, -1.0]);
        let err = pcg_solve(&d, &[0.0, 1.0], None, &Identity, SolverOptions::default()).unwrap_err();
        assert!(matches!(err, WiedError::LinearSolver(_)));
    }

    #[test]
    fn bicgstab_small_cases() {
        let mut b = TripletBuilder::new(2, 2);
        b.push(0, 0, 2.0);
        b.push(0, 1, 1.0);
        b.push(1, 0, -1.0);
        b.push(1, 1, 3.0);
        let m = b.build();
        let r = bicgstab_solve(&m, &[3.0, 2.0], None, &Jacobi::new(&m), SolverOptions::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-10 && (r.x[1] - 1.0).abs() < 1e-10);
        let id = CsrMatrix::identity(3);
        let r = bicgstab_solve(&id, &[1.0, 0.0, -1.0], None, &Identity, SolverOptions::default()).unwrap();
        assert!(r.converged && r.iterations == 1);
    }

    #[test]
    fn solvers_are_deterministic() {
        let n = 300;
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 4.0);
            if i > 0 {
                b.push(i, i - 1, -1.0);
                b.push(i - 1, i, -1.0);
            }
        }
        let m = b.build();
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let r1 = pcg_solve(&m, &rhs, None, &Jacobi::new(&m), SolverOptions::default()).unwrap();
        let r2 = pcg_solve(&m, &rhs, None, &Jacobi::new(&m), SolverOptions::default()).unwrap();
        assert_eq!(r1.x, r2.x);
        assert_eq!(r1.residual_history, r2.residual_history);
    }
}

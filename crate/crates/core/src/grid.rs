//! Truncated tensor-product meshes carrying the `y^a` weight.
//!
//! Space is `[-L, L]^d x [0, Y]`, time is `[0, T]`. The `y` nodes are graded
//! towards `y = 0` as `y_j = Y (j / ny)^g`, and every weighted quantity in the
//! `y` direction is integrated in closed form: cell masses are exact integrals
//! of `y^a` and face transmissibilities are the exact harmonic means of `y^a`.
//! Spatial nodes are ordered with `y` fastest, then the last `x` axis.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WiedError};
use crate::field::Field;

/// Parameters of a [`WeightedGrid`]. Serialized with the short names used in
/// experiment configs (`d`, `a`, `L`, `Y`, `T`, `nx`, `ny`, `nt`, `grading`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub d: usize,
    pub a: f64,
    #[serde(rename = "L")]
    pub half_width: f64,
    #[serde(rename = "Y")]
    pub height: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    /// Grading exponent for the `y` nodes; `None` selects `2 / (1 + a)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grading: Option<f64>,
}

impl GridSpec {
    pub fn effective_grading(&self) -> f64 {
        self.grading.unwrap_or(2.0 / (1.0 + self.a))
    }

    /// Fractional order `s = (1 - a) / 2` of the trace operator.
    pub fn fractional_order(&self) -> f64 {
        0.5 * (1.0 - self.a)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(WiedError::InvalidGrid(msg));
        if !(self.a > -1.0 && self.a < 1.0) {
            return bad(format!(
                "weight exponent a = {} must lie strictly inside (-1, 1)",
                self.a
            ));
        }
        if self.d != 1 && self.d != 2 {
            return bad(format!("spatial dimension d = {} must be 1 or 2", self.d));
        }
        for (name, v) in [("L", self.half_width), ("Y", self.height), ("T", self.horizon)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("extent {name} = {v} must be positive and finite"));
            }
        }
        for (name, n) in [("nx", self.nx), ("ny", self.ny), ("nt", self.nt)] {
            if n < 2 {
                return bad(format!("cell count {name} = {n} must be at least 2"));
            }
        }
        let g = self.effective_grading();
        if !(g >= 1.0 && g.is_finite()) {
            return bad(format!("grading exponent {g} must be >= 1"));
        }
        Ok(())
    }
}

/// Axis-aligned box in the half-space grid coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x_lo: [f64; 2],
    pub x_hi: [f64; 2],
    pub y_lo: f64,
    pub y_hi: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

/// Parabolic cylinder `Q_r(X0, t0)`: a box of half-width `r` in `x` and `y`
/// and half-length `r^2` in time.
///
/// The cylinder lives in the full space `R^{d+1}`; only `y >= 0` is stored,
/// so points are counted with the multiplicity of their even reflection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center_x: [f64; 2],
    pub center_y: f64,
    pub center_t: f64,
    pub radius: f64,
}

const GEOM_TOL: f64 = 1e-12;

impl Cylinder {
    pub fn new(center_x: [f64; 2], center_y: f64, center_t: f64, radius: f64) -> Self {
        Self { center_x, center_y, center_t, radius }
    }

    /// Same center, radius scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { radius: self.radius * factor, ..*self }
    }

    /// Number of copies of `(x, y, t)` (with `y >= 0`) inside the evenly
    /// reflected cylinder: the point itself plus its mirror image `(x, -y, t)`.
    pub fn multiplicity(&self, d: usize, x: [f64; 2], y: f64, t: f64) -> f64 {
        let tol = GEOM_TOL * self.radius.max(1.0);
        for k in 0..d {
            if (x[k] - self.center_x[k]).abs() > self.radius + tol {
                return 0.0;
            }
        }
        if (t - self.center_t).abs() > self.radius * self.radius + tol {
            return 0.0;
        }
        let mut m = 0.0;
        if (y - self.center_y).abs() <= self.radius + tol {
            m += 1.0;
        }
        if y + self.center_y <= self.radius + tol {
            m += 1.0;
        }
        m
    }

    /// Whether a point belongs to the cylinder, ignoring reflection.
    pub fn contains(&self, d: usize, x: [f64; 2], y: f64, t: f64) -> bool {
        let tol = GEOM_TOL * self.radius.max(1.0);
        (0..d).all(|k| (x[k] - self.center_x[k]).abs() <= self.radius + tol)
            && (y - self.center_y).abs() <= self.radius + tol
            && (t - self.center_t).abs() <= self.radius * self.radius + tol
    }

    /// Upper half of the cylinder as a grid box.
    pub fn half_region(&self) -> Region {
        let r = self.radius;
        Region {
            x_lo: [self.center_x[0] - r, self.center_x[1] - r],
            x_hi: [self.center_x[0] + r, self.center_x[1] + r],
            y_lo: (self.center_y - r).max(0.0),
            y_hi: self.center_y + r,
            t_lo: self.center_t - r * r,
            t_hi: self.center_t + r * r,
        }
    }
}

/// Integration domain for measures and norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// The whole grid (half-space only, no reflection).
    Whole,
    /// A box in grid coordinates (half-space only).
    Box(Region),
    /// An evenly reflected parabolic cylinder.
    Cylinder(Cylinder),
}

impl Domain {
    fn multiplicity(&self, d: usize, x: [f64; 2], y: f64, t: f64) -> f64 {
        match self {
            Domain::Whole => 1.0,
            Domain::Box(r) => {
                let tol = GEOM_TOL * (1.0 + r.y_hi.abs());
                let inside = (0..d).all(|k| x[k] >= r.x_lo[k] - tol && x[k] <= r.x_hi[k] + tol)
                    && y >= r.y_lo - tol
                    && y <= r.y_hi + tol
                    && t >= r.t_lo - tol
                    && t <= r.t_hi + tol;
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
            Domain::Cylinder(c) => c.multiplicity(d, x, y, t),
        }
    }
}

/// Discrete norms offered by [`WeightedGrid::weighted_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    /// `(int y^a U^2)^(1/2)`.
    L2a,
    /// `(int y^a (U^2 + |grad U|^2 [+ |d_t U|^2]))^(1/2)`; the time derivative
    /// only enters for space-time fields.
    H1a,
    /// `sup_t (int_{y=0} |u|^q dx)^(1/q)` on the trace layer.
    LinfTLqTrace(f64),
    /// `(int y^a |U|^p)^(1/p)`.
    Lpa(f64),
}

impl NormKind {
    pub fn parse(tag: &str) -> Result<Self> {
        let (head, arg) = match tag.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (tag, None),
        };
        let exponent = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| WiedError::InvalidConfig(format!("norm {tag} needs an exponent")))?
                .parse::<f64>()
                .map_err(|e| WiedError::InvalidConfig(format!("norm {tag}: {e}")))
        };
        match head {
            "L2a" => Ok(NormKind::L2a),
            "H1a" => Ok(NormKind::H1a),
            "LinfT_Lq_trace" => Ok(NormKind::LinfTLqTrace(exponent(arg)?)),
            "Lpa" => Ok(NormKind::Lpa(exponent(arg)?)),
            _ => Err(WiedError::InvalidConfig(format!("unknown norm tag {tag:?}"))),
        }
    }
}

/// A spatial edge of the stiffness stencil: the energy contribution is
/// `coef * (U[a] - U[b])^2`.
#[derive(Debug, Clone, Copy)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub coef: f64,
}

/// Truncated weighted space-time mesh. Immutable once built.
#[derive(Debug, Clone)]
pub struct WeightedGrid {
    spec: GridSpec,
    x: Vec<f64>,
    y: Vec<f64>,
    t: Vec<f64>,
    hx: f64,
    dt: f64,
    cell_mass_y: Vec<f64>,
    face_trans_y: Vec<f64>,
    node_mass_y: Vec<f64>,
    node_vol_x1: Vec<f64>,
    node_mass: Vec<f64>,
    edges: Vec<Edge>,
}

impl WeightedGrid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let GridSpec { a, half_width, height, horizon, nx, ny, nt, .. } = spec;
        let g = spec.effective_grading();

        let hx = 2.0 * half_width / nx as f64;
        let x: Vec<f64> = (0..=nx).map(|i| -half_width + hx * i as f64).collect();
        let dt = horizon / nt as f64;
        let t: Vec<f64> = (0..=nt).map(|n| dt * n as f64).collect();
        let y: Vec<f64> = (0..=ny)
            .map(|j| {
                if j == ny {
                    height
                } else {
                    height * (j as f64 / ny as f64).powf(g)
                }
            })
            .collect();
        if y.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(WiedError::InvalidGrid("y nodes are not strictly increasing".into()));
        }

        let cell_mass_y: Vec<f64> = y
            .windows(2)
            .map(|w| (w[1].powf(1.0 + a) - w[0].powf(1.0 + a)) / (1.0 + a))
            .collect();
        let face_trans_y: Vec<f64> = y
            .windows(2)
            .map(|w| (1.0 - a) / (w[1].powf(1.0 - a) - w[0].powf(1.0 - a)))
            .collect();
        if cell_mass_y.iter().chain(&face_trans_y).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(WiedError::InvalidGrid(
                "non-positive or non-finite weighted cell mass or transmissibility".into(),
            ));
        }

        let mut node_mass_y = vec![0.0; ny + 1];
        for (j, m) in cell_mass_y.iter().enumerate() {
            node_mass_y[j] += 0.5 * m;
            node_mass_y[j + 1] += 0.5 * m;
        }
        let node_vol_x1: Vec<f64> = (0..=nx)
            .map(|i| if i == 0 || i == nx { 0.5 * hx } else { hx })
            .collect();

        let mut grid = Self {
            spec,
            x,
            y,
            t,
            hx,
            dt,
            cell_mass_y,
            face_trans_y,
            node_mass_y,
            node_vol_x1,
            node_mass: Vec::new(),
            edges: Vec::new(),
        };
        grid.node_mass = (0..grid.n_spatial())
            .map(|s| {
                let (ix, j) = grid.split_spatial(s);
                grid.x_volume(ix) * grid.node_mass_y[j]
            })
            .collect();
        grid.edges = grid.build_edges();
        Ok(grid)
    }

    fn build_edges(&self) -> Vec<Edge> {
        let nyn = self.y.len();
        let nxn = self.x.len();
        let d = self.spec.d;
        let mut edges = Vec::new();
        for ix in 0..self.n_x_nodes() {
            let xv = self.x_volume(ix);
            for j in 0..nyn - 1 {
                edges.push(Edge {
                    a: ix * nyn + j,
                    b: ix * nyn + j + 1,
                    coef: xv * self.face_trans_y[j],
                });
            }
        }
        // x-direction edges: weighted mass of the dual y cell over the x spacing,
        // times the lumped length in the other x direction when d = 2.
        for ix in 0..self.n_x_nodes() {
            let idx = self.x_multi_index(ix);
            for axis in 0..d {
                if idx[axis] + 1 >= nxn {
                    continue;
                }
                let mut next = idx;
                next[axis] += 1;
                let ix_next = self.x_linear_index(next);
                let other = if d == 2 { self.node_vol_x1[idx[1 - axis]] } else { 1.0 };
                for j in 0..nyn {
                    edges.push(Edge {
                        a: ix * nyn + j,
                        b: ix_next * nyn + j,
                        coef: self.node_mass_y[j] * other / self.hx,
                    });
                }
            }
        }
        edges
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn dim(&self) -> usize {
        self.spec.d
    }
    pub fn a(&self) -> f64 {
        self.spec.a
    }
    pub fn x_nodes(&self) -> &[f64] {
        &self.x
    }
    pub fn y_nodes(&self) -> &[f64] {
        &self.y
    }
    pub fn t_nodes(&self) -> &[f64] {
        &self.t
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn cell_mass_y(&self) -> &[f64] {
        &self.cell_mass_y
    }
    pub fn face_trans_y(&self) -> &[f64] {
        &self.face_trans_y
    }
    /// Lumped weighted `y` length attached to each `y` node.
    pub fn node_mass_y(&self) -> &[f64] {
        &self.node_mass_y
    }
    /// Lumped weighted volume of each spatial node (diagonal of the mass matrix).
    pub fn node_mass(&self) -> &[f64] {
        &self.node_mass
    }
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_layers(&self) -> usize {
        self.t.len()
    }
    pub fn n_y_nodes(&self) -> usize {
        self.y.len()
    }
    /// Number of `x` nodes (all axes combined).
    pub fn n_x_nodes(&self) -> usize {
        self.x.len().pow(self.spec.d as u32)
    }
    pub fn n_spatial(&self) -> usize {
        self.n_x_nodes() * self.y.len()
    }
    pub fn n_space_time(&self) -> usize {
        self.n_spatial() * self.n_layers()
    }

    pub fn spatial_index(&self, ix: usize, j: usize) -> usize {
        ix * self.y.len() + j
    }
    /// Inverse of [`Self::spatial_index`].
    pub fn split_spatial(&self, s: usize) -> (usize, usize) {
        (s / self.y.len(), s % self.y.len())
    }
    pub fn x_multi_index(&self, ix: usize) -> [usize; 2] {
        let n = self.x.len();
        if self.spec.d == 1 {
            [ix, 0]
        } else {
            [ix / n, ix % n]
        }
    }
    pub fn x_linear_index(&self, idx: [usize; 2]) -> usize {
        if self.spec.d == 1 {
            idx[0]
        } else {
            idx[0] * self.x.len() + idx[1]
        }
    }
    pub fn x_coords(&self, ix: usize) -> [f64; 2] {
        let idx = self.x_multi_index(ix);
        if self.spec.d == 1 {
            [self.x[idx[0]], 0.0]
        } else {
            [self.x[idx[0]], self.x[idx[1]]]
        }
    }
    /// Lumped (trapezoidal) `x` volume of an `x` node.
    pub fn x_volume(&self, ix: usize) -> f64 {
        let idx = self.x_multi_index(ix);
        (0..self.spec.d).map(|k| self.node_vol_x1[idx[k]]).product()
    }
    /// Lumped time length of a layer.
    pub fn t_volume(&self, n: usize) -> f64 {
        if n == 0 || n + 1 == self.t.len() {
            0.5 * self.dt
        } else {
            self.dt
        }
    }
    /// Indices of spatial nodes on the trace `y = 0`, in `x` order.
    pub fn trace_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_x_nodes()).map(move |ix| self.spatial_index(ix, 0))
    }

    /// Total weighted volume `(2L)^d * Y^{1+a} / (1+a)` of the spatial box.
    pub fn spatial_weighted_volume(&self) -> f64 {
        let a = self.spec.a;
        (2.0 * self.spec.half_width).powi(self.spec.d as i32) * self.spec.height.powf(1.0 + a)
            / (1.0 + a)
    }

    fn layer_time(&self, field: &Field, n: usize) -> (f64, f64) {
        if field.n_layers() == 1 {
            (0.0, 1.0)
        } else {
            (self.t[n], self.t_volume(n))
        }
    }

    /// Checks that `field` lives on this grid, either as a spatial slice (one
    /// layer) or as a space-time field (`nt + 1` layers).
    pub fn check_field(&self, field: &Field) -> Result<()> {
        if field.n_spatial() != self.n_spatial() {
            return Err(WiedError::ShapeMismatch { expected: self.n_spatial(), got: field.n_spatial() });
        }
        if field.n_layers() != 1 && field.n_layers() != self.n_layers() {
            return Err(WiedError::ShapeMismatch {
                expected: self.n_space_time(),
                got: field.values().len(),
            });
        }
        Ok(())
    }

    /// Checks that a domain's stored half lies inside the grid.
    pub fn check_domain(&self, domain: &Domain, space_time: bool) -> Result<()> {
        let region = match domain {
            Domain::Whole => return Ok(()),
            Domain::Box(r) => *r,
            Domain::Cylinder(c) => c.half_region(),
        };
        let l = self.spec.half_width;
        let tol = 1e-9 * (1.0 + l + self.spec.height + self.spec.horizon);
        let mut ok = (0..self.spec.d).all(|k| region.x_lo[k] >= -l - tol && region.x_hi[k] <= l + tol);
        ok &= region.y_lo >= -tol && region.y_hi <= self.spec.height + tol;
        if space_time {
            ok &= region.t_lo >= -tol && region.t_hi <= self.spec.horizon + tol;
        }
        ok &= region.y_lo <= region.y_hi && region.t_lo <= region.t_hi;
        if ok {
            Ok(())
        } else {
            Err(WiedError::RegionOutOfRange(format!("{region:?} not inside grid")))
        }
    }

    /// Node quadrature weights (lumped weighted volume times multiplicity in
    /// `domain`), in the same layout as `field`. Zero outside the domain.
    pub fn node_weights(&self, field: &Field, domain: &Domain) -> Result<Vec<f64>> {
        self.check_field(field)?;
        self.check_domain(domain, field.n_layers() > 1)?;
        let ns = self.n_spatial();
        let d = self.spec.d;
        let mut w = vec![0.0; field.values().len()];
        for n in 0..field.n_layers() {
            let (tn, tv) = self.layer_time(field, n);
            for s in 0..ns {
                let (ix, j) = self.split_spatial(s);
                let m = domain.multiplicity(d, self.x_coords(ix), self.y[j], tn);
                if m > 0.0 {
                    w[n * ns + s] = m * tv * self.node_mass[s];
                }
            }
        }
        Ok(w)
    }

    /// Number of cells of a field's mesh (space-time cells for space-time
    /// fields, spatial cells for slices).
    pub fn n_cells(&self, field: &Field) -> usize {
        let spatial = self.spec.nx.pow(self.spec.d as u32) * self.spec.ny;
        if field.n_layers() == 1 {
            spatial
        } else {
            spatial * self.spec.nt
        }
    }

    /// Calls `f(cell, weighted volume, corner node indices)` for every cell.
    fn for_each_cell(&self, field: &Field, mut f: impl FnMut(usize, CellInfo<'_>)) {
        let d = self.spec.d;
        let nx = self.spec.nx;
        let ny = self.spec.ny;
        let ns = self.n_spatial();
        let n_xcells = nx.pow(d as u32);
        let time_cells = if field.n_layers() == 1 { 1 } else { self.spec.nt };
        let xcell_vol = self.hx.powi(d as i32);
        let mut corners: Vec<usize> = Vec::with_capacity(16);
        let mut cell = 0;
        for n in 0..time_cells {
            let (t_lo, tv, layers): (f64, f64, &[usize]) = if field.n_layers() == 1 {
                (0.0, 1.0, &[0])
            } else {
                (self.t[n], self.dt, &[n, n + 1][..])
            };
            let t_c = if field.n_layers() == 1 { 0.0 } else { t_lo + 0.5 * self.dt };
            for xc in 0..n_xcells {
                let cidx = if d == 1 { [xc, 0] } else { [xc / nx, xc % nx] };
                let mut xcenter = [0.0; 2];
                for k in 0..d {
                    xcenter[k] = self.x[cidx[k]] + 0.5 * self.hx;
                }
                for j in 0..ny {
                    corners.clear();
                    for &layer in layers {
                        for corner in 0..(1usize << d) {
                            let mut idx = cidx;
                            for k in 0..d {
                                idx[k] += (corner >> k) & 1;
                            }
                            let ix = self.x_linear_index(idx);
                            for dj in 0..2 {
                                corners.push(layer * ns + self.spatial_index(ix, j + dj));
                            }
                        }
                    }
                    f(
                        cell,
                        CellInfo {
                            volume: xcell_vol * self.cell_mass_y[j] * tv,
                            center_x: xcenter,
                            center_y: 0.5 * (self.y[j] + self.y[j + 1]),
                            center_t: t_c,
                            y_lo: self.y[j],
                            y_hi: self.y[j + 1],
                            corners: &corners,
                        },
                    );
                    cell += 1;
                }
            }
        }
    }

    /// Cell indicator built from the mean of each cell's corner values.
    pub fn cell_indicator(&self, field: &Field, pred: impl Fn(f64) -> bool) -> Result<Vec<bool>> {
        self.check_field(field)?;
        let vals = field.values();
        let mut out = vec![false; self.n_cells(field)];
        self.for_each_cell(field, |c, info| {
            let mean = info.corners.iter().map(|&k| vals[k]).sum::<f64>() / info.corners.len() as f64;
            out[c] = pred(mean);
        });
        Ok(out)
    }

    /// Weighted measure `|A|_a` of the flagged cells whose centers lie in
    /// `domain`: sum of (x-cell volume) * (weighted y-cell mass) * (time length).
    /// `like` fixes whether the cells are spatial or space-time.
    pub fn weighted_measure(&self, like: &Field, indicator: &[bool], domain: &Domain) -> Result<f64> {
        self.check_field(like)?;
        self.check_domain(domain, like.n_layers() > 1)?;
        if indicator.len() != self.n_cells(like) {
            return Err(WiedError::ShapeMismatch { expected: self.n_cells(like), got: indicator.len() });
        }
        let d = self.spec.d;
        let mut total = 0.0;
        self.for_each_cell(like, |c, info| {
            if indicator[c] {
                let m = domain.multiplicity(d, info.center_x, info.center_y, info.center_t);
                total += m * info.volume;
            }
        });
        Ok(total)
    }

    /// Weighted measure of `{pred(U)}` inside `domain`, integrating the
    /// multilinear interpolant of each cell on `sub` subcells per axis. Cells
    /// belong to `domain` when their centers do.
    pub fn level_measure(&self, field: &Field, domain: &Domain, sub: usize, pred: impl Fn(f64) -> bool) -> Result<f64> {
        self.check_field(field)?;
        self.check_domain(domain, field.n_layers() > 1)?;
        let sub = sub.max(1);
        let d = self.spec.d;
        let a = self.spec.a;
        let space_time = field.n_layers() > 1;
        let vals = field.values();
        let subs_t = if space_time { sub } else { 1 };
        let n_x_sub = sub.pow(d as u32);
        let x_sub_vol = (self.hx / sub as f64).powi(d as i32);
        let t_sub = if space_time { self.dt / sub as f64 } else { 1.0 };
        let mut y_w = vec![0.0; sub];
        let mut total = 0.0;
        self.for_each_cell(field, |_, info| {
            let m = domain.multiplicity(d, info.center_x, info.center_y, info.center_t);
            if m == 0.0 {
                return;
            }
            let (lo, hi) = (info.y_lo, info.y_hi);
            for (k, w) in y_w.iter_mut().enumerate() {
                let y0 = lo + (hi - lo) * k as f64 / sub as f64;
                let y1 = lo + (hi - lo) * (k + 1) as f64 / sub as f64;
                *w = (y1.powf(1.0 + a) - y0.powf(1.0 + a)) / (1.0 + a);
            }
            let per_layer = 2usize << d;
            let mut acc = 0.0;
            for kt in 0..subs_t {
                let tau = (kt as f64 + 0.5) / subs_t as f64;
                for kx in 0..n_x_sub {
                    let mut xi = [0.0; 2];
                    let mut rem = kx;
                    for c in xi.iter_mut().take(d) {
                        *c = ((rem % sub) as f64 + 0.5) / sub as f64;
                        rem /= sub;
                    }
                    for (ky, w) in y_w.iter().enumerate() {
                        let eta = (ky as f64 + 0.5) / sub as f64;
                        let mut v = 0.0;
                        for (ci, &node) in info.corners.iter().enumerate() {
                            let layer = ci / per_layer;
                            let corner = (ci % per_layer) / 2;
                            let dj = ci % 2;
                            let mut wt = if space_time {
                                if layer == 1 { tau } else { 1.0 - tau }
                            } else {
                                1.0
                            };
                            for (k, c) in xi.iter().enumerate().take(d) {
                                wt *= if (corner >> k) & 1 == 1 { *c } else { 1.0 - c };
                            }
                            wt *= if dj == 1 { eta } else { 1.0 - eta };
                            v += wt * vals[node];
                        }
                        if pred(v) {
                            acc += w;
                        }
                    }
                }
            }
            total += m * acc * x_sub_vol * t_sub;
        });
        Ok(total)
    }

    /// Spatial gradient energy `sum_edges coef (U_a - U_b)^2` of one layer.
    pub fn gradient_energy(&self, layer: &[f64]) -> f64 {
        self.edges.iter().map(|e| e.coef * (layer[e.a] - layer[e.b]).powi(2)).sum()
    }

    /// Discrete weighted norm of a spatial slice or a space-time field over
    /// the whole grid (half-space, no reflection).
    pub fn weighted_norm(&self, field: &Field, norm: NormKind) -> Result<f64> {
        self.check_field(field)?;
        let ns = self.n_spatial();
        let vals = field.values();
        let layers = field.n_layers();
        let value = match norm {
            NormKind::L2a | NormKind::H1a => {
                let mut sq = 0.0;
                for n in 0..layers {
                    let (_, tv) = self.layer_time(field, n);
                    let layer = &vals[n * ns..(n + 1) * ns];
                    let mass: f64 = layer.iter().zip(&self.node_mass).map(|(u, m)| m * u * u).sum();
                    sq += tv * mass;
                    if norm == NormKind::H1a {
                        sq += tv * self.gradient_energy(layer);
                    }
                }
                if norm == NormKind::H1a && layers > 1 {
                    for n in 0..layers - 1 {
                        let dtu: f64 = (0..ns)
                            .map(|s| self.node_mass[s] * (vals[(n + 1) * ns + s] - vals[n * ns + s]).powi(2))
                            .sum();
                        sq += dtu / self.dt;
                    }
                }
                sq.sqrt()
            }
            NormKind::Lpa(p) => {
                if !(p >= 1.0) {
                    return Err(WiedError::InvalidConfig(format!("Lpa exponent {p} < 1")));
                }
                let mut acc = 0.0;
                for n in 0..layers {
                    let (_, tv) = self.layer_time(field, n);
                    acc += tv
                        * (0..ns).map(|s| self.node_mass[s] * vals[n * ns + s].abs().powf(p)).sum::<f64>();
                }
                acc.powf(1.0 / p)
            }
            NormKind::LinfTLqTrace(q) => {
                if !(q >= 1.0) {
                    return Err(WiedError::InvalidConfig(format!("trace exponent {q} < 1")));
                }
                let mut best: f64 = 0.0;
                for n in 0..layers {
                    let acc: f64 = (0..self.n_x_nodes())
                        .map(|ix| self.x_volume(ix) * vals[n * ns + self.spatial_index(ix, 0)].abs().powf(q))
                        .sum();
                    best = best.max(acc.powf(1.0 / q));
                }
                best
            }
        };
        Ok(value)
    }
}

struct CellInfo<'a> {
    volume: f64,
    center_x: [f64; 2],
    center_y: f64,
    center_t: f64,
    y_lo: f64,
    y_hi: f64,
    corners: &'a [usize],
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(a: f64, ny: usize, g: f64) -> GridSpec {
        GridSpec {
            d: 1,
            a,
            half_width: 1.0,
            height: 1.0,
            horizon: 1.0,
            nx: 4,
            ny,
            nt: 4,
            grading: Some(g),
        }
    }

    /// Composite Gauss-Legendre (5 points) on each cell of a geometric
    /// partition accumulating towards 0; handles the integrable singularity.
    fn weighted_integral(a: f64, lo: f64, hi: f64) -> f64 {
        let nodes = [
            (0.0, 128.0 / 225.0),
            (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
            (0.538_469_310_105_683, 0.478_628_670_499_366_5),
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        let gl = |l: f64, h: f64| -> f64 {
            let (c, r) = (0.5 * (l + h), 0.5 * (h - l));
            nodes.iter().map(|(z, w)| w * r * (c + r * z).powf(a)).sum()
        };
        if lo > 0.0 {
            let n = 200;
            return (0..n)
                .map(|k| gl(lo + (hi - lo) * k as f64 / n as f64, lo + (hi - lo) * (k + 1) as f64 / n as f64))
                .sum();
        }
        // Dyadic cells towards the singular endpoint; the neglected piece
        // [0, 2^-200 hi] is far below double precision for a > -0.9.
        let mut total = 0.0;
        let mut upper = hi;
        for _ in 0..200 {
            let lower = upper * 0.5;
            let h = (upper - lower) / 8.0;
            total += (0..8).map(|k| gl(lower + k as f64 * h, lower + (k + 1) as f64 * h)).sum::<f64>();
            upper = lower;
        }
        total
    }

    #[test]
    fn unweighted_uniform_cell_masses() {
        let g = WeightedGrid::new(spec(0.0, 4, 1.0)).unwrap();
        for m in g.cell_mass_y() {
            assert!((m - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn single_cell_weighted_mass() {
        let mut s = spec(0.5, 2, 1.0);
        s.ny = 2;
        let g = WeightedGrid::new(s).unwrap();
        let total: f64 = g.cell_mass_y().iter().sum();
        assert!((total - 2.0 / 3.0).abs() < 1e-15);
        // ny = 1 is below the minimum cell count; check the closed form directly.
        assert!(((1.0f64.powf(1.5) - 0.0) / 1.5 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn graded_masses_match_independent_quadrature() {
        let g = WeightedGrid::new(spec(-0.5, 4, 2.0)).unwrap();
        let total: f64 = g.cell_mass_y().iter().sum();
        assert!((total - 2.0).abs() / 2.0 < 1e-12);
        let ys = g.y_nodes();
        for (j, m) in g.cell_mass_y().iter().enumerate() {
            let oracle = weighted_integral(-0.5, ys[j], ys[j + 1]);
            assert!((m - oracle).abs() < 1e-12 * oracle, "cell {j}: {m} vs {oracle}");
        }
    }

    #[test]
    fn endpoints_are_exact() {
        for a in [-0.9, -0.3, 0.0, 0.4, 0.95] {
            let mut s = spec(a, 7, 2.0 / (1.0 + a));
            s.height = 3.7;
            let g = WeightedGrid::new(s).unwrap();
            assert_eq!(g.y_nodes()[0], 0.0);
            assert_eq!(*g.y_nodes().last().unwrap(), 3.7);
            assert!(g.face_trans_y()[0].is_finite() && g.face_trans_y()[0] > 0.0);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = spec(1.5, 4, 1.0);
        let err = WeightedGrid::new(s.clone()).unwrap_err().to_string();
        assert!(err.contains("(-1, 1)"), "{err}");
        s.a = 0.0;
        s.half_width = 0.0;
        assert!(WeightedGrid::new(s.clone()).is_err());
        s.half_width = 1.0;
        s.ny = 1;
        assert!(WeightedGrid::new(s.clone()).is_err());
        s.ny = 4;
        s.grading = Some(0.5);
        assert!(WeightedGrid::new(s).is_err());
    }

    #[test]
    fn measure_of_full_and_empty_grid() {
        let g = WeightedGrid::new(spec(0.0, 4, 1.0)).unwrap();
        let f = Field::zeros(g.n_layers(), g.n_spatial());
        let all = vec![true; g.n_cells(&f)];
        let none = vec![false; g.n_cells(&f)];
        assert!((g.weighted_measure(&f, &all, &Domain::Whole).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(g.weighted_measure(&f, &none, &Domain::Whole).unwrap(), 0.0);
    }

    #[test]
    fn half_cylinder_fraction() {
        let mut s = spec(0.5, 8, 1.0);
        s.nx = 2;
        let g = WeightedGrid::new(s).unwrap();
        let f = Field::zeros(g.n_layers(), g.n_spatial());
        let all = vec![true; g.n_cells(&f)];
        let lower = Domain::Box(Region {
            x_lo: [-1.0, 0.0],
            x_hi: [1.0, 0.0],
            y_lo: 0.0,
            y_hi: 0.5,
            t_lo: 0.0,
            t_hi: 1.0,
        });
        let part = g.weighted_measure(&f, &all, &lower).unwrap();
        let total = g.weighted_measure(&f, &all, &Domain::Whole).unwrap();
        assert!((part / total - 0.5f64.powf(1.5)).abs() < 1e-12);
        let by_cells: f64 = g.cell_mass_y()[..4].iter().sum::<f64>() / g.cell_mass_y().iter().sum::<f64>();
        assert!((part / total - by_cells).abs() < 1e-14);
    }

    #[test]
    fn out_of_range_region_is_rejected() {
        let g = WeightedGrid::new(spec(0.0, 4, 1.0)).unwrap();
        let f = Field::zeros(g.n_layers(), g.n_spatial());
        let all = vec![true; g.n_cells(&f)];
        let far = Domain::Cylinder(Cylinder::new([0.9, 0.0], 0.0, 0.5, 0.5));
        assert!(matches!(g.weighted_measure(&f, &all, &far), Err(WiedError::RegionOutOfRange(_))));
    }

    #[test]
    fn constant_field_norms() {
        let g = WeightedGrid::new(spec(0.0, 4, 1.0)).unwrap();
        let one = Field::constant(g.n_layers(), g.n_spatial(), 1.0);
        assert!((g.weighted_norm(&one, NormKind::L2a).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        let c = Field::constant(g.n_layers(), g.n_spatial(), 3.0);
        let l2 = g.weighted_norm(&c, NormKind::L2a).unwrap();
        let h1 = g.weighted_norm(&c, NormKind::H1a).unwrap();
        assert!((h1 - l2).abs() < 1e-12);
        let tr = g.weighted_norm(&c, NormKind::LinfTLqTrace(4.0)).unwrap();
        assert!((tr - 3.0 * 2f64.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn l2a_of_linear_profile_converges() {
        // ||y||^2_{L^{2,a}} over [-1/2,1/2] x [0,1] x [0,1] = 1/(3 + a).
        let a = 0.5;
        let exact = 1.0 / (3.0 + a);
        let mut errs = Vec::new();
        for k in 0..4 {
            let n = 4usize << k;
            let s = GridSpec {
                d: 1,
                a,
                half_width: 0.5,
                height: 1.0,
                horizon: 1.0,
                nx: n,
                ny: n,
                nt: n,
                grading: None,
            };
            let g = WeightedGrid::new(s).unwrap();
            let f = Field::from_fn(&g, |_, y, _| y);
            let v = g.weighted_norm(&f, NormKind::L2a).unwrap().powi(2);
            errs.push((v - exact).abs());
        }
        for w in errs.windows(2) {
            assert!(w[1] < w[0] * 0.6, "errors {errs:?}");
        }
    }

    #[test]
    fn norm_tags_parse() {
        assert_eq!(NormKind::parse("L2a").unwrap(), NormKind::L2a);
        assert_eq!(NormKind::parse("Lpa:3").unwrap(), NormKind::Lpa(3.0));
        assert_eq!(NormKind::parse("LinfT_Lq_trace:4").unwrap(), NormKind::LinfTLqTrace(4.0));
        assert!(NormKind::parse("W1p").is_err());
    }

    #[test]
    fn cylinder_multiplicity_reflects() {
        let c = Cylinder::new([0.0, 0.0], 0.0, 1.0, 0.5);
        assert_eq!(c.multiplicity(1, [0.1, 0.0], 0.2, 1.1), 2.0);
        assert_eq!(c.multiplicity(1, [0.1, 0.0], 0.6, 1.1), 0.0);
        let off = Cylinder::new([0.0, 0.0], 0.3, 1.0, 0.5);
        assert_eq!(off.multiplicity(1, [0.0, 0.0], 0.1, 1.0), 2.0);
        assert_eq!(off.multiplicity(1, [0.0, 0.0], 0.25, 1.0), 1.0);
    }
}

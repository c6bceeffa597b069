//! Parabolic rescaling `V(X, t) = U(X_0 + R X, t_0 + R^2 t)`, which turns a
//! solution for `eps` into one for `eps / R^2`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WiedError};
use crate::field::Field;
use crate::grid::{Cylinder, WeightedGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RescaleMode {
    /// Keep the original nodes inside the cylinder (values copied exactly).
    NodeMatched,
    /// Multilinear interpolation onto a uniform reference grid with the given
    /// number of intervals per axis.
    Uniform { nx: usize, ny: usize, nt: usize },
}

/// Field on the reference cylinder `[-1,1]^d x [y_lo, 1] x [t_lo, 1]`, where
/// the lower bounds are cut at the grid boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledField {
    pub d: usize,
    pub radius: f64,
    pub eps_eff: Option<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Reference times; a single `0` for spatial slices.
    pub t: Vec<f64>,
    /// Time-major, then `x` (first axis slowest), `y` fastest.
    pub values: Vec<f64>,
}

impl ScaledField {
    fn n_x(&self) -> usize {
        self.x.len().pow(self.d as u32)
    }

    pub fn value(&self, n: usize, ix: [usize; 2], j: usize) -> f64 {
        let xi = if self.d == 1 { ix[0] } else { ix[0] * self.x.len() + ix[1] };
        self.values[(n * self.n_x() + xi) * self.y.len() + j]
    }

    /// `max - min` over reference nodes with `|x|, |y| <= r` and `|t| <= r^2`.
    pub fn oscillation(&self, r: f64) -> f64 {
        let tol = 1e-12 * r.max(1.0);
        let nx = self.x.len();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (n, t) in self.t.iter().enumerate() {
            if t.abs() > r * r + tol {
                continue;
            }
            for xi in 0..self.n_x() {
                let idx = if self.d == 1 { [xi, 0] } else { [xi / nx, xi % nx] };
                if (0..self.d).any(|k| self.x[idx[k]].abs() > r + tol) {
                    continue;
                }
                for (j, y) in self.y.iter().enumerate() {
                    if y.abs() <= r + tol {
                        let v = self.value(n, idx, j);
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
            }
        }
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    }
}

fn locate(nodes: &[f64], s: f64) -> (usize, f64) {
    let k = nodes.partition_point(|&v| v <= s).clamp(1, nodes.len() - 1) - 1;
    let w = ((s - nodes[k]) / (nodes[k + 1] - nodes[k])).clamp(0.0, 1.0);
    (k, w)
}

/// Multilinear interpolation of `field` at a point of the grid box.
fn interpolate(grid: &WeightedGrid, field: &Field, x: [f64; 2], y: f64, t: f64) -> f64 {
    let d = grid.dim();
    let xs: Vec<(usize, f64)> = (0..d).map(|k| locate(grid.x_nodes(), x[k])).collect();
    let (jy, wy) = locate(grid.y_nodes(), y);
    let times: Vec<(usize, f64)> = if field.n_layers() == 1 {
        vec![(0, 1.0)]
    } else {
        let (n, w) = locate(grid.t_nodes(), t);
        vec![(n, 1.0 - w), (n + 1, w)]
    };
    let mut acc = 0.0;
    for &(n, wt) in &times {
        if wt == 0.0 {
            continue;
        }
        let layer = field.layer(n);
        for corner in 0..(1usize << d) {
            let mut idx = [0usize; 2];
            let mut wx = 1.0;
            for k in 0..d {
                let bit = (corner >> k) & 1;
                idx[k] = xs[k].0 + bit;
                wx *= if bit == 1 { xs[k].1 } else { 1.0 - xs[k].1 };
            }
            if wx == 0.0 {
                continue;
            }
            let ix = grid.x_linear_index(idx);
            let lo = layer[grid.spatial_index(ix, jy)];
            let up = layer[grid.spatial_index(ix, jy + 1)];
            acc += wt * wx * ((1.0 - wy) * lo + wy * up);
        }
    }
    acc
}

fn uniform(lo: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| lo + (1.0 - lo) * k as f64 / n as f64).collect()
}

/// Rescales `field` around the center of `cyl` by its radius `R`; the
/// effective parameter `eps / R^2` is recorded when `eps` is given.
pub fn rescale_field(
    grid: &WeightedGrid,
    field: &Field,
    cyl: &Cylinder,
    eps: Option<f64>,
    mode: RescaleMode,
) -> Result<ScaledField> {
    grid.check_field(field)?;
    let r = cyl.radius;
    let spec = grid.spec();
    let d = grid.dim();
    let slice = field.n_layers() == 1;
    let tol = 1e-9;
    let mut fits = r > 0.0 && cyl.center_y >= 0.0 && cyl.center_y + r <= spec.height + tol;
    fits &= (0..d).all(|k| (cyl.center_x[k]).abs() + r <= spec.half_width + tol);
    if !slice {
        fits &= cyl.center_t >= 0.0 && cyl.center_t + r * r <= spec.horizon + tol;
    }
    if !fits {
        return Err(WiedError::RegionOutOfRange(format!("rescaling radius {r} does not fit the grid")));
    }
    let y_lo = (-cyl.center_y / r).max(-1.0);
    let t_lo = if slice { 0.0 } else { (-cyl.center_t / (r * r)).max(-1.0) };
    let pick = |nodes: &[f64], c: f64, scale: f64, lo: f64| -> Vec<(usize, f64)> {
        nodes
            .iter()
            .enumerate()
            .map(|(i, &v)| (i, (v - c) / scale))
            .filter(|&(_, s)| s >= lo - 1e-12 && s <= 1.0 + 1e-12)
            .collect()
    };
    let (x, y, t, values) = match mode {
        RescaleMode::NodeMatched => {
            let xs = pick(grid.x_nodes(), cyl.center_x[0], r, -1.0);
            let xs2 = if d == 2 { pick(grid.x_nodes(), cyl.center_x[1], r, -1.0) } else { vec![(0, 0.0)] };
            let ys = pick(grid.y_nodes(), cyl.center_y, r, y_lo);
            let ts = if slice { vec![(0, 0.0)] } else { pick(grid.t_nodes(), cyl.center_t, r * r, t_lo) };
            if d == 2 && xs.iter().map(|p| p.1).ne(xs2.iter().map(|p| p.1)) {
                return Err(WiedError::InvalidConfig("node-matched rescaling needs matching x axes".into()));
            }
            let mut values = Vec::new();
            for &(n, _) in &ts {
                let layer = field.layer(n);
                for &(i0, _) in &xs {
                    for &(i1, _) in &xs2 {
                        let ix = grid.x_linear_index([i0, i1]);
                        values.extend(ys.iter().map(|&(j, _)| layer[grid.spatial_index(ix, j)]));
                    }
                }
            }
            let strip = |v: &[(usize, f64)]| v.iter().map(|p| p.1).collect::<Vec<_>>();
            (strip(&xs), strip(&ys), strip(&ts), values)
        }
        RescaleMode::Uniform { nx, ny, nt } => {
            if nx == 0 || ny == 0 || (!slice && nt == 0) {
                return Err(WiedError::InvalidConfig("reference grid needs at least one interval per axis".into()));
            }
            let x = uniform(-1.0, nx);
            let y = uniform(y_lo, ny);
            let t = if slice { vec![0.0] } else { uniform(t_lo, nt) };
            let nxs = x.len().pow(d as u32);
            let mut values = Vec::with_capacity(t.len() * nxs * y.len());
            for &tr in &t {
                for xi in 0..nxs {
                    let idx = if d == 1 { [xi, 0] } else { [xi / x.len(), xi % x.len()] };
                    let mut p = [0.0; 2];
                    for k in 0..d {
                        p[k] = cyl.center_x[k] + r * x[idx[k]];
                    }
                    for &yr in &y {
                        values.push(interpolate(grid, field, p, cyl.center_y + r * yr, cyl.center_t + r * r * tr));
                    }
                }
            }
            (x, y, t, values)
        }
    };
    Ok(ScaledField { d, radius: r, eps_eff: eps.map(|e| e / (r * r)), x, y, t, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::oscillation_table;
    use crate::grid::GridSpec;

    fn grid() -> WeightedGrid {
        WeightedGrid::new(GridSpec {
            d: 1,
            a: 0.4,
            half_width: 1.0,
            height: 1.0,
            horizon: 1.0,
            nx: 16,
            ny: 8,
            nt: 16,
            grading: None,
        })
        .unwrap()
    }

    #[test]
    fn unit_radius_is_identity() {
        let g = grid();
        let u = Field::from_fn(&g, |x, y, t| (x[0] * 3.0).sin() + y * y - t);
        let c = Cylinder::new([0.0, 0.0], 0.0, 0.0, 1.0);
        let v = rescale_field(&g, &u, &c, Some(0.1), RescaleMode::NodeMatched).unwrap();
        assert_eq!(v.values, u.values());
        assert_eq!(v.eps_eff, Some(0.1));
    }

    #[test]
    fn linear_field_interpolates_exactly() {
        let g = grid();
        let u = Field::from_fn(&g, |x, _, _| x[0]);
        let c = Cylinder::new([0.0, 0.0], 0.0, 0.5, 0.5);
        let v = rescale_field(&g, &u, &c, Some(0.2), RescaleMode::Uniform { nx: 7, ny: 5, nt: 3 }).unwrap();
        for n in 0..v.t.len() {
            for i in 0..v.x.len() {
                for j in 0..v.y.len() {
                    assert!((v.value(n, [i, 0], j) - 0.5 * v.x[i]).abs() < 1e-14);
                }
            }
        }
        assert!((v.eps_eff.unwrap() - 0.8).abs() < 1e-14);
        assert!(rescale_field(&g, &u, &c.scaled(3.0), None, RescaleMode::NodeMatched).is_err());
    }

    #[test]
    fn oscillation_is_scale_invariant() {
        let g = grid();
        let u = Field::from_fn(&g, |x, y, t| (x[0] + 2.0 * y).cos() * (1.0 + t));
        let c = Cylinder::new([0.0, 0.0], 0.0, 0.5, 0.5);
        let v = rescale_field(&g, &u, &c, None, RescaleMode::NodeMatched).unwrap();
        let direct = oscillation_table(&g, &u, &c, 1).unwrap().rows[0].osc;
        assert!((v.oscillation(1.0) - direct).abs() < 1e-14);
    }
}

//! Uniform energy bounds across an `eps` sweep, the `L^{2,a} -> L^inf` ratio
//! and the truncation energies of the no-spikes iteration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::energy::energy_decomposition;
use super::{cylinder_nodes, fmt, spread, write_rows};
use crate::assembly::ForcingSpec;
use crate::combustion::CombustionModel;
use crate::error::{Result, WiedError};
use crate::field::Field;
use crate::grid::{Cylinder, WeightedGrid};
use crate::wied::c_l2a_distance;

const UNIFORM_FACTOR: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformBoundsRow {
    pub eps: f64,
    /// `2 int int y^a |U_t|^2`.
    pub dt_energy: f64,
    /// Windowed averages, one per entry of [`UniformBoundsReport::windows`].
    pub windowed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformBoundsReport {
    pub windows: Vec<f64>,
    pub rows: Vec<UniformBoundsRow>,
    /// `max / min` of the time-derivative energy across levels.
    pub dt_spread: f64,
    /// `max / min` of every windowed average, across windows and levels.
    pub window_spread: f64,
    pub uniform: bool,
}

/// Per-level totals for `levels = [(eps, U_eps)]` with windows `T/4, T/2, T`.
pub fn uniform_bounds_report(
    grid: &WeightedGrid,
    model: &CombustionModel,
    levels: &[(f64, &Field)],
) -> Result<UniformBoundsReport> {
    if levels.len() < 2 {
        return Err(WiedError::InvalidConfig("uniform bounds need at least two sweep levels".into()));
    }
    let horizon = grid.spec().horizon;
    let windows = vec![horizon / 4.0, horizon / 2.0, horizon];
    let mut rows = Vec::with_capacity(levels.len());
    for &(eps, u) in levels {
        let e = energy_decomposition(grid, model, eps, u)?;
        let windowed = windows.iter().map(|&w| e.windowed(grid.t_nodes(), w)).collect();
        rows.push(UniformBoundsRow { eps, dt_energy: e.dt_energy, windowed });
    }
    let dt_spread = spread(rows.iter().map(|r| r.dt_energy));
    let window_spread = spread(rows.iter().flat_map(|r| r.windowed.iter().copied()));
    let uniform = dt_spread <= UNIFORM_FACTOR && window_spread <= UNIFORM_FACTOR;
    Ok(UniformBoundsReport { windows, rows, dt_spread, window_spread, uniform })
}

impl UniformBoundsReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut header = vec!["eps".to_string(), "dt_energy".to_string()];
        header.extend(self.windows.iter().map(|w| format!("window_{w}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = self.rows.iter().map(|r| {
            let mut v = vec![fmt(r.eps), fmt(r.dt_energy)];
            v.extend(r.windowed.iter().map(|w| fmt(*w)));
            v
        });
        write_rows(path, &header, rows)
    }
}

/// Consecutive distances between sweep levels in the discrete
/// `C([0,T]; L^{2,a})` metric.
pub fn cauchy_increments(grid: &WeightedGrid, fields: &[&Field]) -> Result<Vec<f64>> {
    fields.windows(2).map(|w| c_l2a_distance(grid, w[0], w[1])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinfL2Report {
    /// `|U|_inf` over the half cylinder.
    pub sup_inner: f64,
    pub l2_outer: f64,
    pub bulk_norm: f64,
    pub trace_norm: f64,
    pub ratio: f64,
}

struct CylinderNorms {
    sup_inner: f64,
    l2: f64,
    bulk: f64,
    trace: f64,
}

fn cylinder_norms(
    grid: &WeightedGrid,
    field: &Field,
    forcing: &ForcingSpec,
    cyl: &Cylinder,
    part: impl Fn(f64) -> f64,
) -> Result<CylinderNorms> {
    if field.n_layers() > 1 {
        forcing.check(grid)?;
    } else if forcing.bulk.is_some() || forcing.trace.is_some() {
        return Err(WiedError::InvalidConfig("forcing terms need a space-time field".into()));
    }
    let vals = field.values();
    let outer = cylinder_nodes(grid, field, cyl)?;
    let l2 = outer.iter().map(|n| n.weight * part(vals[n.index]).powi(2)).sum::<f64>().sqrt();
    let sup_inner = cylinder_nodes(grid, field, &cyl.scaled(0.5))?
        .iter()
        .map(|n| part(vals[n.index]).abs())
        .fold(0.0, f64::max);
    let bulk = match &forcing.bulk {
        Some(f) => {
            let p = forcing.p.ok_or_else(|| WiedError::InvalidConfig("bulk forcing needs an exponent p".into()))?;
            let fv = f.values();
            outer.iter().map(|n| n.weight * part(fv[n.index]).abs().powf(p)).sum::<f64>().powf(1.0 / p)
        }
        None => 0.0,
    };
    let trace = match &forcing.trace {
        Some(f) => {
            let q = forcing.q.ok_or_else(|| WiedError::InvalidConfig("trace forcing needs an exponent q".into()))?;
            let d = grid.dim();
            let r = cyl.radius;
            let mut best: f64 = 0.0;
            for (n, &t) in grid.t_nodes().iter().enumerate() {
                if (t - cyl.center_t).abs() > r * r * (1.0 + 1e-12) {
                    continue;
                }
                let layer = f.layer(n);
                let acc: f64 = (0..grid.n_x_nodes())
                    .filter(|&ix| {
                        let x = grid.x_coords(ix);
                        (0..d).all(|k| (x[k] - cyl.center_x[k]).abs() <= r * (1.0 + 1e-12))
                    })
                    .map(|ix| grid.x_volume(ix) * part(layer[ix]).abs().powf(q))
                    .sum();
                best = best.max(acc.powf(1.0 / q));
            }
            best
        }
        None => 0.0,
    };
    Ok(CylinderNorms { sup_inner, l2, bulk, trace })
}

/// `|U|_{L^inf(Q_{r/2})} / (|U|_{L^{2,a}(Q_r)} + |F|_{L^{p,a}(Q_r)} + |f|_{L^inf_t L^q_x(Q_r)})`
/// for the cylinder `Q_r = outer`; zero when the denominator vanishes.
pub fn linf_l2_ratio(grid: &WeightedGrid, field: &Field, forcing: &ForcingSpec, outer: &Cylinder) -> Result<LinfL2Report> {
    let n = cylinder_norms(grid, field, forcing, outer, |v| v)?;
    let den = n.l2 + n.bulk + n.trace;
    let ratio = if den > 0.0 { n.sup_inner / den } else { 0.0 };
    Ok(LinfL2Report { sup_inner: n.sup_inner, l2_outer: n.l2, bulk_norm: n.bulk, trace_norm: n.trace, ratio })
}

/// Factor `lambda = sqrt(delta) / (|U_+| + |F_+| + |f_+|)` over `cyl`, and the
/// field `lambda U` satisfying the truncation smallness `int (lambda U)_+^2 <= delta`.
pub fn smallness_scaling(
    grid: &WeightedGrid,
    field: &Field,
    forcing: &ForcingSpec,
    cyl: &Cylinder,
    delta: f64,
) -> Result<(f64, Field)> {
    if !(delta > 0.0) {
        return Err(WiedError::InvalidConfig(format!("smallness delta = {delta} must be positive")));
    }
    let n = cylinder_norms(grid, field, forcing, cyl, |v| v.max(0.0))?;
    let den = n.l2 + n.bulk + n.trace;
    let lambda = if den > 0.0 { delta.sqrt() / den } else { 1.0 };
    Ok((lambda, field.map(|v| lambda * v)))
}

pub const NO_SPIKES_STEPS: usize = 12;
const NO_SPIKES_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoSpikesReport {
    pub radii: Vec<f64>,
    pub levels: Vec<f64>,
    pub energies: Vec<f64>,
    /// `E_12 <= 1e-12`.
    pub decayed: bool,
    /// The field reaches 1 somewhere in the outer cylinder, so the energies
    /// cannot vanish.
    pub reaches_one: bool,
    /// Least-squares geometric factor of the positive energies.
    pub decay_factor: Option<f64>,
}

/// Energies `E_j = int_{Q_{r_j}} y^a (U - C_j)_+^2` with `C_j = 1 - 2^{-j}`
/// and `r_j = r (1/2 + 2^{-j-1})`, `j = 0..=12`.
pub fn no_spikes_iteration(grid: &WeightedGrid, field: &Field, cyl: &Cylinder) -> Result<NoSpikesReport> {
    let vals = field.values();
    let outer = cylinder_nodes(grid, field, cyl)?;
    let reaches_one = outer.iter().any(|n| vals[n.index] >= 1.0);
    let mut radii = Vec::new();
    let mut levels = Vec::new();
    let mut energies = Vec::new();
    for j in 0..=NO_SPIKES_STEPS {
        let frac = 0.5 + 0.5f64.powi(j as i32 + 1);
        let level = 1.0 - 0.5f64.powi(j as i32);
        let nodes = cylinder_nodes(grid, field, &cyl.scaled(frac))?;
        let e: f64 = nodes.iter().map(|n| n.weight * (vals[n.index] - level).max(0.0).powi(2)).sum();
        radii.push(cyl.radius * frac);
        levels.push(level);
        energies.push(e);
    }
    let positive: Vec<(f64, f64)> =
        energies.iter().enumerate().filter(|(_, e)| **e > 0.0).map(|(j, e)| (j as f64, e.ln())).collect();
    let decay_factor = (positive.len() >= 2).then(|| {
        let m = positive.len() as f64;
        let (sx, sy) = positive.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let (mx, my) = (sx / m, sy / m);
        let sxy: f64 = positive.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = positive.iter().map(|(x, _)| (x - mx).powi(2)).sum();
        (sxy / sxx).exp()
    });
    Ok(NoSpikesReport {
        decayed: energies[NO_SPIKES_STEPS] <= NO_SPIKES_FLOOR,
        radii,
        levels,
        energies,
        reaches_one,
        decay_factor,
    })
}

impl NoSpikesReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows = (0..self.energies.len())
            .map(|j| vec![j.to_string(), fmt(self.radii[j]), fmt(self.levels[j]), fmt(self.energies[j])]);
        write_rows(path, &["j", "radius", "level", "energy"], rows)
    }
}

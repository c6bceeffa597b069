//! Frozen constants for the diagnostics whose inequalities carry unspecified
//! constants, computed once from a named calibration run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wiedlab_core::diagnostics::{
    calibrate_isoperimetric, embedding_ratio_check, isoperimetric_check, linf_l2_ratio, random_smooth_slice,
};
use wiedlab_core::parabolic::solve_parabolic;
use wiedlab_core::{Cylinder, Field, GridSpec, WeightedGrid, WiedError};

use crate::config::{DiagnosticKind, Experiment};
use crate::error::{CliError, CliResult};
use crate::pipeline::trace_forcing;

pub const DEFAULT_Q: f64 = 4.0;
pub const ISO_P: f64 = 1.5;
/// Gradient energy of the calibration ramps.
pub const ISO_ENERGY_BOUND: f64 = 8.0;
/// Gradient energy of the random smooth slices checked against it.
pub const SLICE_ENERGY: f64 = 4.0;
pub const FAMILY_SIZE: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsoperimetricCalibration {
    pub grid: GridSpec,
    pub ball: Cylinder,
    pub p: f64,
    pub energy_bound: f64,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingCalibration {
    pub family_size: u64,
    pub energy: f64,
    pub trace: f64,
    pub sobolev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub id: String,
    /// `L^2 -> L^inf` ratio of the parabolic reference on the `linf-l2` cylinder.
    pub linf_l2: f64,
    pub isoperimetric: IsoperimetricCalibration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingCalibration>,
}

impl Calibration {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read calibration {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    /// `1 / (4 K^2)`: scaled so that the calibrated estimate keeps the inner
    /// supremum at 1/2.
    pub fn smallness_delta(&self) -> f64 {
        1.0 / (4.0 * self.linf_l2 * self.linf_l2)
    }
}

/// Spatial grid on `[-1,1]^d x [0,1]` with `n` intervals per axis.
pub fn slice_grid(d: usize, a: f64, n: usize) -> CliResult<WeightedGrid> {
    let nx = if d == 1 { n } else { n / 2 };
    Ok(WeightedGrid::new(GridSpec {
        d,
        a,
        half_width: 1.0,
        height: 1.0,
        horizon: 1.0,
        nx,
        ny: n,
        nt: 2,
        grading: Some(1.0),
    })?)
}

pub const SLICE_N: usize = 32;

pub fn unit_ball() -> Cylinder {
    Cylinder::new([0.0, 0.0], 0.0, 0.0, 1.0)
}

pub fn calibrate(exp: &Experiment, id: &str) -> CliResult<Calibration> {
    let spec = exp
        .config
        .diagnostics
        .iter()
        .find(|s| s.name == DiagnosticKind::LinfL2)
        .ok_or_else(|| CliError::Config("calibration needs a linf-l2 diagnostic cylinder".into()))?;
    let cyl = spec.cylinder.expect("validated");
    let q = spec.q.unwrap_or(DEFAULT_Q);
    let reference = solve_parabolic(&exp.grid, &exp.model, &exp.config.parabolic, &exp.u0)?;
    let forcing = trace_forcing(&exp.grid, &exp.model, &reference, q)?;
    let linf_l2 = linf_l2_ratio(&exp.grid, &reference, &forcing, &cyl)?.ratio;

    let d = exp.grid.dim();
    let a = exp.grid.a();
    let g = slice_grid(d, a, SLICE_N)?;
    let ball = unit_ball();
    let constant = calibrate_isoperimetric(&g, &ball, ISO_P, ISO_ENERGY_BOUND)?;
    let embedding = match family_embedding(&g, &ball) {
        Ok(v) => Some(v),
        Err(CliError::Config(_)) if d as f64 - 1.0 + a <= 0.0 => None,
        Err(e) => return Err(e),
    };
    Ok(Calibration {
        id: id.to_string(),
        linf_l2,
        isoperimetric: IsoperimetricCalibration {
            grid: g.spec().clone(),
            ball,
            p: ISO_P,
            energy_bound: ISO_ENERGY_BOUND,
            constant,
        },
        embedding,
    })
}

fn family_embedding(g: &WeightedGrid, ball: &Cylinder) -> CliResult<EmbeddingCalibration> {
    let (mut trace, mut sobolev) = (0.0f64, 0.0f64);
    for seed in 0..FAMILY_SIZE {
        let u = random_smooth_slice(g, ball, seed, SLICE_ENERGY)?.sample(g);
        let r = embedding_ratio_check(g, &u, ball)?;
        trace = trace.max(r.trace_ratio);
        sobolev = sobolev.max(r.sobolev_ratio);
    }
    Ok(EmbeddingCalibration { family_size: FAMILY_SIZE, energy: SLICE_ENERGY, trace, sobolev })
}

/// Isoperimetric ratios of the random smooth family on the calibration grid
/// and on its refinement, with the slices frozen on the coarse grid.
pub fn isoperimetric_family(cal: &IsoperimetricCalibration, seed: u64) -> CliResult<Vec<(f64, f64)>> {
    let coarse = WeightedGrid::new(cal.grid.clone())?;
    let mut fine_spec = cal.grid.clone();
    fine_spec.nx *= 2;
    fine_spec.ny *= 2;
    let fine = WeightedGrid::new(fine_spec)?;
    (0..FAMILY_SIZE)
        .map(|k| {
            let s = random_smooth_slice(&coarse, &cal.ball, seed.wrapping_add(k), SLICE_ENERGY)?;
            let r0 = isoperimetric_check(&coarse, &s.sample(&coarse), &cal.ball, cal.p)?.ratio;
            let r1 = isoperimetric_check(&fine, &s.sample(&fine), &cal.ball, cal.p)?.ratio;
            Ok((r0, r1))
        })
        .collect::<Result<Vec<_>, WiedError>>()
        .map_err(CliError::from)
}

/// The slice of `field` at the layer closest to `t`.
pub fn slice_at(grid: &WeightedGrid, field: &Field, t: f64) -> Field {
    if field.n_layers() == 1 {
        return field.clone();
    }
    let n = ((t / grid.dt()).round().max(0.0) as usize).min(grid.n_layers() - 1);
    Field::from_values(1, grid.n_spatial(), field.layer(n).to_vec()).expect("layer has n_spatial values")
}

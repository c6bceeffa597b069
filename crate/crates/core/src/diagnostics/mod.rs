//! Discrete counterparts of the energy, truncation, level-set and regularity
//! estimates, evaluated on computed fields.
//!
//! Cylinders are axis-aligned boxes (see [`Cylinder`]); a node belongs to a
//! cylinder when its coordinates do, and is weighted by its lumped weighted
//! volume times the multiplicity of its even reflection.

mod bounds;
mod embedding;
mod energy;
mod holder;
mod level_sets;
mod scaling;
mod truncation;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::Field;
use crate::grid::{Cylinder, Domain, WeightedGrid};

pub use bounds::{
    cauchy_increments, linf_l2_ratio, no_spikes_iteration, smallness_scaling, uniform_bounds_report, LinfL2Report,
    NoSpikesReport, UniformBoundsReport, UniformBoundsRow,
};
pub use embedding::{embedding_ratio_check, EmbeddingReport};
pub use energy::{energy_decomposition, EnergyReport};
pub use holder::{fit_holder, holder_seminorm, oscillation_table, FitFlag, HolderFit, HolderReport, OscillationRow};
pub use level_sets::{
    calibrate_isoperimetric, isoperimetric_check, level_set_measures, random_smooth_slice, IsoperimetricReport,
    LevelSetReport, SmoothSlice,
};
pub use scaling::{rescale_field, RescaleMode, ScaledField};
pub use truncation::{truncation_subsolution_check, TruncationReport};

/// One line of a run's `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSummary {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    pub calibration_id: Option<String>,
}

pub fn write_summary_json(path: &Path, rows: &[DiagnosticSummary]) -> Result<()> {
    let text = serde_json::to_string_pretty(rows)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Writes rows of already formatted cells under `header`.
pub(crate) fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// A grid node inside a cylinder.
#[derive(Debug, Clone, Copy)]
pub(crate) struct NodeSample {
    pub index: usize,
    pub x: [f64; 2],
    pub y: f64,
    pub t: f64,
    pub weight: f64,
}

/// Nodes of `field` inside the reflected cylinder, with quadrature weights.
/// Slices are treated as living at `t = 0`.
pub(crate) fn cylinder_nodes(grid: &WeightedGrid, field: &Field, cyl: &Cylinder) -> Result<Vec<NodeSample>> {
    let w = grid.node_weights(field, &Domain::Cylinder(*cyl))?;
    let ns = grid.n_spatial();
    let slice = field.n_layers() == 1;
    Ok(w.iter()
        .enumerate()
        .filter(|(_, &wk)| wk > 0.0)
        .map(|(k, &weight)| {
            let (n, s) = (k / ns, k % ns);
            let (ix, j) = grid.split_spatial(s);
            let t = if slice { 0.0 } else { grid.t_nodes()[n] };
            NodeSample { index: k, x: grid.x_coords(ix), y: grid.y_nodes()[j], t, weight }
        })
        .collect())
}

/// `max / min` of nonnegative values; 1 when all vanish.
pub(crate) fn spread(values: impl IntoIterator<Item = f64>) -> f64 {
    let (lo, hi) = values.into_iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi == 0.0 {
        1.0
    } else if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

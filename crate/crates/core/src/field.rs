//! Nodal scalar fields and their on-disk format.
//!
//! In memory a field is a stack of spatial layers (time-major). A spatial
//! slice is simply a field with one layer. On disk the values are written as
//! raw little-endian `f64` in row-major `(x, y, t)` order, so `t` varies
//! fastest, next to a JSON sidecar carrying the grid spec.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, WiedError};
use crate::grid::{GridSpec, WeightedGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
    n_layers: usize,
    n_spatial: usize,
}

impl Field {
    pub fn zeros(n_layers: usize, n_spatial: usize) -> Self {
        Self::constant(n_layers, n_spatial, 0.0)
    }

    pub fn constant(n_layers: usize, n_spatial: usize, c: f64) -> Self {
        Self { values: vec![c; n_layers * n_spatial], n_layers, n_spatial }
    }

    pub fn from_values(n_layers: usize, n_spatial: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_layers * n_spatial {
            return Err(WiedError::ShapeMismatch { expected: n_layers * n_spatial, got: values.len() });
        }
        Ok(Self { values, n_layers, n_spatial })
    }

    /// Space-time field sampled from `f(x, y, t)` at every grid node.
    pub fn from_fn(grid: &WeightedGrid, f: impl Fn([f64; 2], f64, f64) -> f64) -> Self {
        let ns = grid.n_spatial();
        let mut values = Vec::with_capacity(grid.n_space_time());
        for &t in grid.t_nodes() {
            for s in 0..ns {
                let (ix, j) = grid.split_spatial(s);
                values.push(f(grid.x_coords(ix), grid.y_nodes()[j], t));
            }
        }
        Self { values, n_layers: grid.n_layers(), n_spatial: ns }
    }

    /// Spatial slice sampled from `f(x, y)`.
    pub fn spatial_from_fn(grid: &WeightedGrid, f: impl Fn([f64; 2], f64) -> f64) -> Self {
        let values = (0..grid.n_spatial())
            .map(|s| {
                let (ix, j) = grid.split_spatial(s);
                f(grid.x_coords(ix), grid.y_nodes()[j])
            })
            .collect();
        Self { values, n_layers: 1, n_spatial: grid.n_spatial() }
    }

    /// Space-time field built from equally sized spatial layers.
    pub fn from_layers(layers: &[Vec<f64>]) -> Result<Self> {
        let n_spatial = layers.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n_spatial * layers.len());
        for l in layers {
            if l.len() != n_spatial {
                return Err(WiedError::ShapeMismatch { expected: n_spatial, got: l.len() });
            }
            values.extend_from_slice(l);
        }
        Ok(Self { values, n_layers: layers.len(), n_spatial })
    }

    /// Time-constant extension of a spatial slice to `n_layers` layers.
    pub fn extend_in_time(slice: &[f64], n_layers: usize) -> Self {
        let mut values = Vec::with_capacity(slice.len() * n_layers);
        for _ in 0..n_layers {
            values.extend_from_slice(slice);
        }
        Self { values, n_layers, n_spatial: slice.len() }
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }
    pub fn n_spatial(&self) -> usize {
        self.n_spatial
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn layer(&self, n: usize) -> &[f64] {
        &self.values[n * self.n_spatial..(n + 1) * self.n_spatial]
    }
    pub fn layer_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.values[n * self.n_spatial..(n + 1) * self.n_spatial]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect(), ..*self }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes `<stem>.bin` and `<stem>.json` and returns both paths.
    pub fn write_dump(&self, spec: &GridSpec, stem: &Path) -> Result<(PathBuf, PathBuf)> {
        let grid = WeightedGrid::new(spec.clone())?;
        grid.check_field(self)?;
        // appended, so stems containing dots (`wied-eps-0.2`) keep their name
        let with = |ext: &str| {
            let mut s = stem.as_os_str().to_owned();
            s.push(".");
            s.push(ext);
            PathBuf::from(s)
        };
        let (bin, json) = (with("bin"), with("json"));
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for s in 0..self.n_spatial {
            for n in 0..self.n_layers {
                bytes.extend_from_slice(&self.values[n * self.n_spatial + s].to_le_bytes());
            }
        }
        fs::write(&bin, bytes)?;
        let sidecar = DumpSidecar {
            grid: spec.clone(),
            layers: self.n_layers,
            order: DUMP_ORDER.to_string(),
            dtype: "f64-le".to_string(),
            data: bin.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        };
        fs::write(&json, serde_json::to_string_pretty(&sidecar)? + "\n")?;
        Ok((bin, json))
    }

    /// Reads a dump written by [`Field::write_dump`]; `path` may name either
    /// the `.bin` or the `.json` file.
    pub fn read_dump(path: &Path) -> Result<(GridSpec, Field)> {
        let json = path.with_extension("json");
        let sidecar: DumpSidecar = serde_json::from_str(&fs::read_to_string(&json)?)?;
        if sidecar.order != DUMP_ORDER || sidecar.dtype != "f64-le" {
            return Err(WiedError::InvalidConfig(format!(
                "unsupported field dump layout {:?} / {:?}",
                sidecar.order, sidecar.dtype
            )));
        }
        let grid = WeightedGrid::new(sidecar.grid.clone())?;
        let bytes = fs::read(json.with_file_name(&sidecar.data))?;
        let ns = grid.n_spatial();
        let nl = sidecar.layers;
        if bytes.len() != ns * nl * 8 {
            return Err(WiedError::ShapeMismatch { expected: ns * nl, got: bytes.len() / 8 });
        }
        let mut values = vec![0.0; ns * nl];
        for (k, chunk) in bytes.chunks_exact(8).enumerate() {
            let (s, n) = (k / nl, k % nl);
            values[n * ns + s] = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        let field = Field::from_values(nl, ns, values)?;
        grid.check_field(&field)?;
        Ok((sidecar.grid, field))
    }
}

const DUMP_ORDER: &str = "row-major (x, y, t), t fastest";

#[derive(Debug, Serialize, Deserialize)]
struct DumpSidecar {
    grid: GridSpec,
    layers: usize,
    order: String,
    dtype: String,
    data: String,
}

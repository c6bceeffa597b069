//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wiedlab_core::{
    CombustionModel, Cylinder, Domain, EpsilonSchedule, Field, GridSpec, ModelConfig, ParabolicConfig, WeightedGrid,
    WiedConfig,
};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    /// `height * exp(-|X|^2 / (2 width^2))`
    Gaussian { width: f64, height: f64 },
    /// `height` on `|X| <= radius / 2`, a `cos^2` taper down to zero at `|X| = radius`.
    Plateau { radius: f64, height: f64 },
    /// Spatial field dump; a space-time dump contributes its first layer.
    FromFile { path: PathBuf },
    Constant { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    Energy,
    UniformBounds,
    Cauchy,
    LinfL2,
    NoSpikes,
    LevelSets,
    Isoperimetric,
    Embedding,
    Holder,
    Truncation,
}

impl DiagnosticKind {
    pub const ALL: [DiagnosticKind; 10] = [
        DiagnosticKind::Energy,
        DiagnosticKind::UniformBounds,
        DiagnosticKind::Cauchy,
        DiagnosticKind::LinfL2,
        DiagnosticKind::NoSpikes,
        DiagnosticKind::LevelSets,
        DiagnosticKind::Isoperimetric,
        DiagnosticKind::Embedding,
        DiagnosticKind::Holder,
        DiagnosticKind::Truncation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DiagnosticKind::Energy => "energy",
            DiagnosticKind::UniformBounds => "uniform-bounds",
            DiagnosticKind::Cauchy => "cauchy",
            DiagnosticKind::LinfL2 => "linf-l2",
            DiagnosticKind::NoSpikes => "no-spikes",
            DiagnosticKind::LevelSets => "level-sets",
            DiagnosticKind::Isoperimetric => "isoperimetric",
            DiagnosticKind::Embedding => "embedding",
            DiagnosticKind::Holder => "holder",
            DiagnosticKind::Truncation => "truncation",
        }
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown diagnostic {s:?}")))
    }

    /// Needs a whole sweep rather than one field.
    pub fn is_sweep_level(self) -> bool {
        matches!(self, DiagnosticKind::UniformBounds | DiagnosticKind::Cauchy)
    }

    fn needs_cylinder(self) -> bool {
        matches!(
            self,
            DiagnosticKind::LinfL2
                | DiagnosticKind::NoSpikes
                | DiagnosticKind::LevelSets
                | DiagnosticKind::Isoperimetric
                | DiagnosticKind::Embedding
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticSpec {
    pub name: DiagnosticKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cylinder: Option<Cylinder>,
    /// Probe cylinders for `holder`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub centers: Vec<Cylinder>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    /// Smallness level for `no-spikes`; defaults to `1 / (4 K^2)` with the
    /// calibrated `L^2 -> L^inf` constant `K`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

impl DiagnosticSpec {
    pub fn new(name: DiagnosticKind) -> Self {
        Self { name, cylinder: None, centers: Vec::new(), levels: None, p: None, q: None, delta: None }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    #[serde(default)]
    pub model: ModelConfig,
    pub initial: InitialData,
    pub schedule: EpsilonSchedule,
    #[serde(default)]
    pub wied: WiedConfig,
    #[serde(default)]
    pub parabolic: ParabolicConfig,
    #[serde(default)]
    pub diagnostics: Vec<DiagnosticSpec>,
    /// Calibration file, relative to the config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Require `{u_0 > 0}` to stay away from the lateral boundary.
    #[serde(default)]
    pub strict_support: bool,
}

/// A validated config with everything resolved against its directory.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
    /// Raw bytes of the config file, hashed into the manifest.
    pub source: Vec<u8>,
    pub grid: WeightedGrid,
    pub model: CombustionModel,
    pub u0: Vec<f64>,
}

impl Experiment {
    pub fn load(path: &Path) -> CliResult<Self> {
        let source =
            std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_slice(&source)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_config(config, base_dir, source)
    }

    pub fn from_config(config: ExperimentConfig, base_dir: PathBuf, source: Vec<u8>) -> CliResult<Self> {
        let grid = WeightedGrid::new(config.grid.clone())?;
        let model = CombustionModel::from_config(&config.model, &base_dir)?;
        config.schedule.validate(config.grid.horizon)?;
        config.wied.validate()?;
        config.parabolic.validate()?;
        config.parabolic.substeps(&grid)?;
        let u0 = initial_data(&grid, &config.initial, &base_dir)?;
        if config.strict_support {
            check_strict_support(&grid, &u0)?;
        }
        for spec in &config.diagnostics {
            check_diagnostic(&grid, spec)?;
        }
        Ok(Self { config, base_dir, source, grid, model, u0 })
    }

    pub fn calibration_path(&self) -> Option<PathBuf> {
        self.config.calibration.as_ref().map(|c| self.base_dir.join(c))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.config.output)
    }
}

fn initial_data(grid: &WeightedGrid, init: &InitialData, base_dir: &Path) -> CliResult<Vec<f64>> {
    let radius = |x: [f64; 2], y: f64| (x[0] * x[0] + x[1] * x[1] + y * y).sqrt();
    let values = match *init {
        InitialData::Gaussian { width, height } => {
            if !(width > 0.0) {
                return Err(CliError::Config(format!("gaussian width {width} must be positive")));
            }
            Field::spatial_from_fn(grid, |x, y| height * (-radius(x, y).powi(2) / (2.0 * width * width)).exp())
        }
        InitialData::Plateau { radius: r, height } => {
            if !(r > 0.0) {
                return Err(CliError::Config(format!("plateau radius {r} must be positive")));
            }
            Field::spatial_from_fn(grid, |x, y| {
                let s = radius(x, y);
                if s <= r / 2.0 {
                    height
                } else if s >= r {
                    0.0
                } else {
                    height * (std::f64::consts::PI * (s - r / 2.0) / r).cos().powi(2)
                }
            })
        }
        InitialData::Constant { value } => Field::constant(1, grid.n_spatial(), value),
        InitialData::FromFile { ref path } => {
            let p = base_dir.join(path);
            if !p.with_extension("json").is_file() {
                return Err(CliError::Config(format!("initial data file {} does not exist", p.display())));
            }
            let (spec, field) = Field::read_dump(&p)?;
            let same_space = spec.d == grid.spec().d
                && spec.a == grid.spec().a
                && spec.half_width == grid.spec().half_width
                && spec.height == grid.spec().height
                && spec.nx == grid.spec().nx
                && spec.ny == grid.spec().ny
                && spec.effective_grading() == grid.spec().effective_grading();
            if !same_space {
                return Err(CliError::Config(format!("initial data {} lives on a different spatial grid", p.display())));
            }
            Field::from_values(1, grid.n_spatial(), field.layer(0).to_vec())?
        }
    };
    let u0 = values.into_values();
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Config("initial data is not finite".into()));
    }
    Ok(u0)
}

/// `{u_0 > 0}` on the trace must not touch the lateral boundary `|x_k| = L`.
fn check_strict_support(grid: &WeightedGrid, u0: &[f64]) -> CliResult<()> {
    let l = grid.spec().half_width;
    let d = grid.dim();
    for (ix, s) in grid.trace_nodes().enumerate() {
        let x = grid.x_coords(ix);
        let on_edge = (0..d).any(|k| (x[k].abs() - l).abs() <= 1e-12 * l);
        if on_edge && u0[s] > 0.0 {
            return Err(CliError::Config(format!(
                "strict support: initial trace is positive at the lateral boundary x = {:?}",
                &x[..d]
            )));
        }
    }
    Ok(())
}

pub(crate) fn check_diagnostic(grid: &WeightedGrid, spec: &DiagnosticSpec) -> CliResult<()> {
    let name = spec.name.name();
    if spec.name.needs_cylinder() {
        let Some(c) = &spec.cylinder else {
            return Err(CliError::Config(format!("diagnostic {name} needs a cylinder")));
        };
        let space_time = !matches!(spec.name, DiagnosticKind::Isoperimetric | DiagnosticKind::Embedding);
        grid.check_domain(&Domain::Cylinder(*c), space_time)
            .map_err(|e| CliError::Config(format!("diagnostic {name}: {e}")))?;
        if !space_time && !(c.center_t >= 0.0 && c.center_t <= grid.spec().horizon) {
            return Err(CliError::Config(format!("diagnostic {name}: slice time {} outside [0, T]", c.center_t)));
        }
    }
    if spec.name == DiagnosticKind::Holder {
        if spec.centers.is_empty() {
            return Err(CliError::Config("diagnostic holder needs at least one center".into()));
        }
        for c in &spec.centers {
            grid.check_domain(&Domain::Cylinder(*c), true)
                .map_err(|e| CliError::Config(format!("diagnostic holder: {e}")))?;
        }
        if spec.levels.is_some_and(|l| l < 3) {
            return Err(CliError::Config("diagnostic holder needs at least 3 levels".into()));
        }
    }
    if let Some(p) = spec.p {
        if spec.name == DiagnosticKind::Isoperimetric && !(p > 1.0 && p < 2.0) {
            return Err(CliError::Config(format!("isoperimetric exponent p = {p} must lie in (1, 2)")));
        }
    }
    if spec.delta.is_some_and(|d| !(d > 0.0)) {
        return Err(CliError::Config(format!("{name}: delta must be positive")));
    }
    Ok(())
}

//! The acceptance suite: one pass/fail row per criterion, with pinned
//! tolerances.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wiedlab_core::assembly::{functional_gradient, functional_value, DiscreteOperators};
use wiedlab_core::diagnostics::{energy_decomposition, no_spikes_iteration, smallness_scaling, uniform_bounds_report};
use wiedlab_core::parabolic::{analytic_heat_oracle, solve_parabolic};
use wiedlab_core::{CombustionModel, Field, GridSpec, ParabolicConfig, WeightedGrid};

use crate::calibration::{isoperimetric_family, Calibration, DEFAULT_Q};
use crate::config::{DiagnosticKind, Experiment};
use crate::error::{CliError, CliResult};
use crate::pipeline::{
    holder_probe_passes, holder_reports, load_calibration, run_experiment, trace_forcing, RunOutput,
    CALIBRATION_DRIFT, IDENTITY_FACTOR, NO_SPIKES_FLOOR, UNIFORM_FACTOR,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2} {:<28} value {:<12.4e} threshold {:<12.4e} {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.value,
            self.threshold,
            self.detail
        )
    }
}

fn row(id: usize, name: &'static str, pass: bool, value: f64, threshold: f64, detail: String) -> CriterionResult {
    CriterionResult { id, name, pass, value, threshold, detail }
}

pub const GRADIENT_TOL: f64 = 1e-6;
pub const GRADIENT_SECONDS: f64 = 5.0;
pub const HEAT_ORDER: f64 = 1.8;
pub const HEAT_ERROR: f64 = 5e-3;
pub const HEAT_SECONDS: f64 = 30.0;
pub const SWEEP_SECONDS: f64 = 600.0;
pub const SWEEP_CONTRACTION: f64 = 1.0 / 3.0;
pub const MAX_PRINCIPLE_SLACK: f64 = 1e-8;
pub const ISO_STABILITY: f64 = 0.2;

/// Directional finite differences of the functional against its gradient.
pub fn gradient_consistency() -> CliResult<CriterionResult> {
    let start = Instant::now();
    let g = WeightedGrid::new(GridSpec {
        d: 1,
        a: 0.3,
        half_width: 1.0,
        height: 1.0,
        horizon: 1.0,
        nx: 6,
        ny: 6,
        nt: 6,
        grading: None,
    })?;
    let ops = DiscreteOperators::new(&g);
    let model = CombustionModel::polynomial_bump();
    let eps = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let vals: Vec<f64> = (0..g.n_space_time()).map(|_| rng.gen_range(0.05..0.95)).collect();
        let u = Field::from_values(g.n_layers(), g.n_spatial(), vals)?;
        let u0 = u.layer(0).to_vec();
        let mut dir: Vec<f64> = (0..g.n_space_time()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        dir[..g.n_spatial()].fill(0.0);
        let grad = functional_gradient(&g, &ops, &model, eps, &u, &u0)?;
        let exact: f64 = grad.values().iter().zip(&dir).map(|(a, b)| a * b).sum();
        let h = 1e-5;
        let at = |s: f64| -> CliResult<f64> {
            let v: Vec<f64> = u.values().iter().zip(&dir).map(|(a, b)| a + s * b).collect();
            Ok(functional_value(&g, &ops, &model, eps, &Field::from_values(g.n_layers(), g.n_spatial(), v)?, &u0)?)
        };
        let fd = (at(h)? - at(-h)?) / (2.0 * h);
        worst = worst.max((fd - exact).abs() / exact.abs());
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(row(
        1,
        "gradient consistency",
        worst <= GRADIENT_TOL && secs < GRADIENT_SECONDS,
        worst,
        GRADIENT_TOL,
        format!("{secs:.2}s"),
    ))
}

const HEAT_WIDTH: f64 = 0.01;
const HEAT_HORIZON: f64 = 0.008;

fn heat_error(n: usize, nt: usize) -> CliResult<f64> {
    let g = WeightedGrid::new(GridSpec {
        d: 1,
        a: 0.0,
        half_width: 1.0,
        height: 1.0,
        horizon: HEAT_HORIZON,
        nx: 2 * n,
        ny: n,
        nt,
        grading: Some(1.0),
    })?;
    let u0 = Field::spatial_from_fn(&g, |x, y| analytic_heat_oracle(&[x[0], y], 0.0, HEAT_WIDTH)).into_values();
    let u = solve_parabolic(&g, &CombustionModel::inert(), &ParabolicConfig::default(), &u0)?;
    let last = u.layer(g.n_layers() - 1);
    Ok((0..g.n_spatial())
        .map(|s| {
            let (ix, j) = g.split_spatial(s);
            let exact = analytic_heat_oracle(&[g.x_coords(ix)[0], g.y_nodes()[j]], HEAT_HORIZON, HEAT_WIDTH);
            (last[s] - exact).abs()
        })
        .fold(0.0, f64::max))
}

/// Heat equation against the Gaussian solution, `h = 1/32 .. 1/128`, `dt = h^2 / 4`.
pub fn linear_oracle() -> CliResult<CriterionResult> {
    let start = Instant::now();
    let errs = [(32, 32), (64, 128), (128, 512)]
        .iter()
        .map(|&(n, nt)| heat_error(n, nt))
        .collect::<CliResult<Vec<f64>>>()?;
    let order = errs.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min);
    let secs = start.elapsed().as_secs_f64();
    let last = errs[errs.len() - 1];
    Ok(row(
        2,
        "linear oracle order",
        order >= HEAT_ORDER && last <= HEAT_ERROR && secs < HEAT_SECONDS,
        order,
        HEAT_ORDER,
        format!("errors {:?}, final {last:.3e} <= {HEAT_ERROR:e}, {secs:.1}s", errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>()),
    ))
}

fn sweep_rows(exp: &Experiment, cal: &Calibration, run: &RunOutput, secs: f64) -> CliResult<Vec<CriterionResult>> {
    let g = &exp.grid;
    let levels = &run.sweep.levels;
    let mut rows = Vec::new();

    let complete = run.sweep.failure.is_none() && levels.len() == exp.config.schedule.count;
    let dists: Vec<f64> = levels.iter().filter_map(|l| l.dist_to_ref).collect();
    let decreasing = dists.windows(2).all(|w| w[1] < w[0]);
    let contraction = if dists.len() >= 2 { dists[dists.len() - 1] / dists[0] } else { f64::INFINITY };
    rows.push(row(
        3,
        "eps-limit consistency",
        complete && decreasing && contraction <= SWEEP_CONTRACTION && secs < SWEEP_SECONDS,
        contraction,
        SWEEP_CONTRACTION,
        format!("distances {:?}, strictly decreasing: {decreasing}, {secs:.1}s", dists.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>()),
    ));

    let data_ok = exp.u0.iter().all(|&v| (0.0..=1.0).contains(&v));
    let (mut lo, mut hi) = (run.reference.min(), run.reference.max());
    for l in levels {
        lo = lo.min(l.solution.field.min());
        hi = hi.max(l.solution.field.max());
    }
    let excess = (-lo).max(hi - 1.0).max(0.0);
    rows.push(row(
        4,
        "maximum principle",
        data_ok && excess <= MAX_PRINCIPLE_SLACK,
        excess,
        MAX_PRINCIPLE_SLACK,
        format!("range [{lo:.3e}, {hi:.6}], 0 <= u0 <= 1: {data_ok}"),
    ));

    let tol = exp.config.wied.tol;
    let mut worst: f64 = 0.0;
    let mut reports = Vec::new();
    for l in levels {
        let e = energy_decomposition(g, &exp.model, l.eps, &l.solution.field)?;
        worst = worst.max(e.identity_relative);
        reports.push(e);
    }
    let threshold = IDENTITY_FACTOR * tol;
    rows.push(row(
        5,
        "energy identity",
        worst <= threshold,
        worst,
        threshold,
        format!(
            "relative |E' + 2I|_1 per level {:?}",
            reports.iter().map(|e| format!("{:.2e}", e.identity_relative)).collect::<Vec<_>>()
        ),
    ));

    let lv: Vec<(f64, &Field)> = levels.iter().map(|l| (l.eps, &l.solution.field)).collect();
    let ub = uniform_bounds_report(g, &exp.model, &lv)?;
    rows.push(row(
        6,
        "uniform energy bounds",
        ub.dt_spread <= UNIFORM_FACTOR && ub.window_spread <= UNIFORM_FACTOR,
        ub.dt_spread.max(ub.window_spread),
        UNIFORM_FACTOR,
        format!("dt-energy spread {:.3}, windowed spread {:.3}", ub.dt_spread, ub.window_spread),
    ));

    let linf = exp
        .config
        .diagnostics
        .iter()
        .find(|s| s.name == DiagnosticKind::LinfL2)
        .ok_or_else(|| CliError::Config("benchmark config lacks a linf-l2 cylinder".into()))?;
    let cyl = linf.cylinder.expect("validated");
    let q = linf.q.unwrap_or(DEFAULT_Q);
    let mut ratios = Vec::new();
    for l in levels {
        let forcing = trace_forcing(g, &exp.model, &l.solution.field, q)?;
        ratios.push(wiedlab_core::diagnostics::linf_l2_ratio(g, &l.solution.field, &forcing, &cyl)?.ratio);
    }
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    let threshold = CALIBRATION_DRIFT * cal.linf_l2;
    rows.push(row(
        7,
        "L2 to Linf uniformity",
        worst <= threshold,
        worst,
        threshold,
        format!("ratios {:?}, K = {:.4} ({})", ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>(), cal.linf_l2, cal.id),
    ));

    let finest = &levels.last().ok_or_else(|| CliError::Solver("sweep produced no level".into()))?.solution.field;
    let spikes = exp.config.diagnostics.iter().find(|s| s.name == DiagnosticKind::NoSpikes);
    let spikes_cyl = spikes.and_then(|s| s.cylinder).unwrap_or(cyl);
    let delta = spikes.and_then(|s| s.delta).unwrap_or_else(|| cal.smallness_delta());
    let forcing = trace_forcing(g, &exp.model, finest, q)?;
    let (lambda, scaled) = smallness_scaling(g, finest, &forcing, &spikes_cyl, delta)?;
    let ns = no_spikes_iteration(g, &scaled, &spikes_cyl)?;
    let last = *ns.energies.last().expect("nonempty");
    rows.push(row(
        8,
        "no-spikes decay",
        last <= NO_SPIKES_FLOOR,
        last,
        NO_SPIKES_FLOOR,
        format!("delta {delta:.4e}, lambda {lambda:.4e}, E_0 {:.3e}", ns.energies[0]),
    ));

    let holder = exp
        .config
        .diagnostics
        .iter()
        .find(|s| s.name == DiagnosticKind::Holder)
        .ok_or_else(|| CliError::Config("benchmark config lacks holder probes".into()))?;
    let reps = holder_reports(g, finest, holder)?;
    let pass = reps.len() >= 3 && reps.iter().all(holder_probe_passes);
    let worst = reps.iter().map(|r| r.max_ratio()).fold(0.0, f64::max);
    let detail = reps
        .iter()
        .map(|r| {
            r.fit.map_or_else(|| "unfitted".to_string(), |f| format!("alpha {:.3} res {:.3}", f.alpha_raw, f.residual))
        })
        .collect::<Vec<_>>()
        .join("; ");
    rows.push(row(9, "oscillation decay", pass, worst, crate::pipeline::HOLDER_MAX_RATIO, detail));
    Ok(rows)
}

/// Random smooth slices against the frozen isoperimetric constant, and the
/// same slices on a refined grid.
pub fn isoperimetric_stability(cal: &Calibration, seed: u64) -> CliResult<CriterionResult> {
    let c = cal.isoperimetric.constant;
    let pairs = isoperimetric_family(&cal.isoperimetric, seed)?;
    let worst = pairs.iter().map(|p| p.0.max(p.1)).fold(0.0, f64::max);
    let drift = pairs
        .iter()
        .map(|&(a, b)| if a == 0.0 && b == 0.0 { 0.0 } else { (b / a - 1.0).abs() })
        .fold(0.0, f64::max);
    Ok(row(
        10,
        "isoperimetric stability",
        worst <= c && drift <= ISO_STABILITY,
        worst,
        c,
        format!("max refinement drift {:.1}% (<= {:.0}%), {}", 100.0 * drift, 100.0 * ISO_STABILITY, cal.id),
    ))
}

pub fn run_verify(exp: &Experiment, scratch: &Path) -> CliResult<Vec<CriterionResult>> {
    let cal = load_calibration(exp)?.ok_or_else(|| CliError::Config("verify needs a calibration file".into()))?;
    let mut rows = vec![gradient_consistency()?, linear_oracle()?];

    let start = Instant::now();
    let first = run_experiment(exp, &scratch.join("run-a"))?;
    let secs = start.elapsed().as_secs_f64();
    rows.extend(sweep_rows(exp, &cal, &first, secs)?);
    rows.push(isoperimetric_stability(&cal, exp.config.seed)?);

    let second = run_experiment(exp, &scratch.join("run-b"))?;
    let (a, b) = (&first.manifest.files, &second.manifest.files);
    let differing = a.iter().filter(|(k, v)| b.get(*k) != Some(v)).count() + b.keys().filter(|k| !a.contains_key(*k)).count();
    rows.push(row(
        11,
        "determinism",
        differing == 0 && !a.is_empty(),
        differing as f64,
        0.0,
        format!("{} artifacts hashed, {} differ", a.len(), differing),
    ));
    rows.sort_by_key(|r| r.id);
    Ok(rows)
}

//! Run orchestration: reference solve, epsilon sweep, diagnostics, artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wiedlab_core::diagnostics::{
    cauchy_increments, embedding_ratio_check, energy_decomposition, fit_holder, holder_seminorm, isoperimetric_check,
    level_set_measures, linf_l2_ratio, no_spikes_iteration, oscillation_table, smallness_scaling,
    truncation_subsolution_check, uniform_bounds_report, write_summary_json, DiagnosticSummary, FitFlag, HolderReport,
};
use wiedlab_core::parabolic::solve_parabolic;
use wiedlab_core::wied::{solve_linear_wied, sweep_epsilon, SweepResult, WiedSolver};
use wiedlab_core::{CombustionModel, Field, ForcingSpec, WeightedGrid, WiedConfig, WiedError};

use crate::calibration::{slice_at, Calibration, DEFAULT_Q, ISO_P};
use crate::config::{DiagnosticKind, DiagnosticSpec, Experiment};
use crate::error::{CliError, CliResult};

pub const HOLDER_LEVELS: usize = 3;
pub const HOLDER_MAX_RATIO: f64 = 0.95;
pub const HOLDER_MAX_RESIDUAL: f64 = 0.15;
pub const HOLDER_ALPHA_RANGE: (f64, f64) = (0.05, 1.0);
pub const UNIFORM_FACTOR: f64 = 4.0;
pub const CALIBRATION_DRIFT: f64 = 4.0;
pub const NO_SPIKES_FLOOR: f64 = 1e-12;
pub const PARTITION_TOL: f64 = 1e-12;
pub const TRUNCATION_TOL: f64 = 1e-10;
pub const TRUNCATION_TESTS: usize = 10;
pub const IDENTITY_FACTOR: f64 = 10.0;

/// Trace datum `f = -beta(u)` seen by the linear theory.
pub fn trace_forcing(grid: &WeightedGrid, model: &CombustionModel, u: &Field, q: f64) -> CliResult<ForcingSpec> {
    let mut v = Vec::with_capacity(u.n_layers() * grid.n_x_nodes());
    for n in 0..u.n_layers() {
        let layer = u.layer(n);
        v.extend(grid.trace_nodes().map(|s| -model.beta(layer[s])));
    }
    let trace = Field::from_values(u.n_layers(), grid.n_x_nodes(), v)?;
    Ok(ForcingSpec { trace: Some(trace), q: Some(q), ..Default::default() })
}

pub fn eps_tag(eps: f64) -> String {
    format!("eps-{eps}")
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

fn io(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// A field handed to the diagnostics, with its `eps` when known.
#[derive(Debug, Clone, Copy)]
pub struct Level<'a> {
    pub eps: Option<f64>,
    pub field: &'a Field,
}

/// Evaluates every diagnostic in `specs`, writing reports into `dir`.
/// Single-field diagnostics use the last (finest) level, except `energy` and
/// `linf-l2`, which tabulate every level.
pub fn run_diagnostics(
    exp: &Experiment,
    cal: Option<&Calibration>,
    specs: &[DiagnosticSpec],
    levels: &[Level<'_>],
    dir: &Path,
) -> CliResult<Vec<DiagnosticSummary>> {
    fs::create_dir_all(dir)?;
    let g = &exp.grid;
    let cal_id = cal.map(|c| c.id.clone());
    let finest = levels.last().ok_or_else(|| CliError::Config("no fields to diagnose".into()))?;
    let need_eps = |l: &Level<'_>, name: &str| {
        l.eps.ok_or_else(|| CliError::Config(format!("diagnostic {name} needs --eps for a stored field")))
    };
    let need_cal = |name: &str| {
        cal.ok_or_else(|| CliError::Config(format!("diagnostic {name} needs a calibration file")))
    };
    let mut out = Vec::new();
    for spec in specs {
        let name = spec.name.name();
        match spec.name {
            DiagnosticKind::Energy => {
                let mut worst: f64 = 0.0;
                for l in levels {
                    let eps = need_eps(l, name)?;
                    let rep = energy_decomposition(g, &exp.model, eps, l.field)?;
                    rep.write_csv(&dir.join(format!("energy-{}.csv", eps_tag(eps))))?;
                    worst = worst.max(rep.identity_relative);
                }
                let threshold = IDENTITY_FACTOR * exp.config.wied.tol;
                out.push(summary("energy-identity", worst <= threshold, worst, threshold, None));
            }
            DiagnosticKind::UniformBounds | DiagnosticKind::Cauchy if levels.len() < 2 => {
                return Err(CliError::Config(format!("diagnostic {name} needs at least two sweep levels")));
            }
            DiagnosticKind::UniformBounds => {
                let lv: Vec<(f64, &Field)> =
                    levels.iter().map(|l| Ok((need_eps(l, name)?, l.field))).collect::<CliResult<_>>()?;
                let rep = uniform_bounds_report(g, &exp.model, &lv)?;
                rep.write_csv(&dir.join("uniform-bounds.csv"))?;
                let v = rep.dt_spread.max(rep.window_spread);
                out.push(summary(name, rep.uniform, v, UNIFORM_FACTOR, None));
            }
            DiagnosticKind::Cauchy => {
                let fields: Vec<&Field> = levels.iter().map(|l| l.field).collect();
                let inc = cauchy_increments(g, &fields)?;
                write_csv(
                    &dir.join("cauchy.csv"),
                    &["k", "increment"],
                    inc.iter().enumerate().map(|(k, v)| vec![k.to_string(), fmt(*v)]),
                )?;
                let worst = inc.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).fold(0.0, f64::max);
                out.push(summary(name, worst < 1.0, worst, 1.0, None));
            }
            DiagnosticKind::LinfL2 => {
                let c = need_cal(name)?;
                let cyl = spec.cylinder.expect("validated");
                let q = spec.q.unwrap_or(DEFAULT_Q);
                let mut rows = Vec::new();
                let mut worst: f64 = 0.0;
                for l in levels {
                    let forcing = trace_forcing(g, &exp.model, l.field, q)?;
                    let r = linf_l2_ratio(g, l.field, &forcing, &cyl)?;
                    worst = worst.max(r.ratio);
                    rows.push(vec![
                        l.eps.map_or_else(String::new, fmt),
                        fmt(r.sup_inner),
                        fmt(r.l2_outer),
                        fmt(r.bulk_norm),
                        fmt(r.trace_norm),
                        fmt(r.ratio),
                    ]);
                }
                write_csv(&dir.join("linf-l2.csv"), &["eps", "sup_inner", "l2_outer", "bulk", "trace", "ratio"], rows)?;
                let threshold = CALIBRATION_DRIFT * c.linf_l2;
                out.push(summary(name, worst <= threshold, worst, threshold, cal_id.clone()));
            }
            DiagnosticKind::NoSpikes => {
                let cyl = spec.cylinder.expect("validated");
                let delta = match spec.delta {
                    Some(d) => d,
                    None => need_cal(name)?.smallness_delta(),
                };
                let forcing = trace_forcing(g, &exp.model, finest.field, spec.q.unwrap_or(DEFAULT_Q))?;
                let (lambda, scaled) = smallness_scaling(g, finest.field, &forcing, &cyl, delta)?;
                let rep = no_spikes_iteration(g, &scaled, &cyl)?;
                rep.write_csv(&dir.join("no-spikes.csv"))?;
                write_csv(&dir.join("no-spikes-scaling.csv"), &["delta", "lambda"], [vec![fmt(delta), fmt(lambda)]])?;
                let last = *rep.energies.last().expect("nonempty");
                let id = if spec.delta.is_none() { cal_id.clone() } else { None };
                out.push(summary(name, rep.decayed, last, NO_SPIKES_FLOOR, id));
            }
            DiagnosticKind::LevelSets => {
                let cyl = spec.cylinder.expect("validated");
                let r = level_set_measures(g, finest.field, &cyl)?;
                write_csv(
                    &dir.join("level-sets.csv"),
                    &["upper", "lower", "middle", "total"],
                    [vec![fmt(r.upper), fmt(r.lower), fmt(r.middle), fmt(r.total)]],
                )?;
                let defect = if r.total > 0.0 { r.partition_defect() / r.total } else { r.partition_defect() };
                out.push(summary(name, defect <= PARTITION_TOL, defect, PARTITION_TOL, None));
            }
            DiagnosticKind::Isoperimetric => {
                let c = need_cal(name)?;
                let cyl = spec.cylinder.expect("validated");
                let slice = slice_at(g, finest.field, cyl.center_t);
                let r = isoperimetric_check(g, &slice, &cyl, spec.p.unwrap_or(ISO_P))?;
                write_csv(
                    &dir.join("isoperimetric.csv"),
                    &["p", "lhs", "rhs", "gradient_energy", "ratio"],
                    [vec![fmt(r.p), fmt(r.lhs), fmt(r.rhs), fmt(r.gradient_energy), fmt(r.ratio)]],
                )?;
                let threshold = c.isoperimetric.constant;
                out.push(summary(name, r.ratio <= threshold, r.ratio, threshold, cal_id.clone()));
            }
            DiagnosticKind::Embedding => {
                let cyl = spec.cylinder.expect("validated");
                let slice = slice_at(g, finest.field, cyl.center_t);
                match embedding_ratio_check(g, &slice, &cyl) {
                    Err(WiedError::NotApplicable(msg)) => {
                        fs::write(dir.join("embedding.txt"), format!("not applicable: {msg}\n"))?;
                    }
                    Err(e) => return Err(e.into()),
                    Ok(r) => {
                        write_csv(
                            &dir.join("embedding.csv"),
                            &["sigma_tilde", "gamma", "trace_lhs", "trace_rhs", "trace_ratio", "sobolev_lhs", "sobolev_rhs", "sobolev_ratio"],
                            [vec![
                                fmt(r.sigma_tilde),
                                fmt(r.gamma),
                                fmt(r.trace_lhs),
                                fmt(r.trace_rhs),
                                fmt(r.trace_ratio),
                                fmt(r.sobolev_lhs),
                                fmt(r.sobolev_rhs),
                                fmt(r.sobolev_ratio),
                            ]],
                        )?;
                        if let Some(e) = need_cal(name)?.embedding.as_ref() {
                            for (part, v, k) in [("trace", r.trace_ratio, e.trace), ("sobolev", r.sobolev_ratio, e.sobolev)] {
                                let threshold = CALIBRATION_DRIFT * k;
                                out.push(summary(&format!("embedding-{part}"), v <= threshold, v, threshold, cal_id.clone()));
                            }
                        }
                    }
                }
            }
            DiagnosticKind::Holder => {
                let reports = holder_reports(g, finest.field, spec)?;
                let mut rows = Vec::new();
                let mut pass = true;
                let mut worst: f64 = 0.0;
                for (k, rep) in reports.iter().enumerate() {
                    rep.write_csv(&dir.join(format!("holder-{k}.csv")))?;
                    let ratio = rep.max_ratio();
                    worst = worst.max(ratio);
                    pass &= holder_probe_passes(rep);
                    let c = rep.center;
                    let mut row = vec![
                        k.to_string(),
                        fmt(c.center_x[0]),
                        fmt(c.center_x[1]),
                        fmt(c.center_y),
                        fmt(c.center_t),
                        fmt(c.radius),
                    ];
                    match rep.fit {
                        Some(f) => row.extend([
                            fmt(f.alpha),
                            fmt(f.alpha_raw),
                            fmt(f.c),
                            fmt(f.residual),
                            format!("{:?}", f.flag).to_lowercase(),
                        ]),
                        None => row.extend(["", "", "", "", "unfitted"].map(String::from)),
                    }
                    row.extend([fmt(ratio), rep.seminorm.map_or_else(String::new, fmt)]);
                    rows.push(row);
                }
                write_csv(
                    &dir.join("holder.csv"),
                    &["probe", "x1", "x2", "y", "t", "radius", "alpha", "alpha_raw", "c", "residual", "flag", "max_ratio", "seminorm"],
                    rows,
                )?;
                out.push(summary(name, pass, worst, HOLDER_MAX_RATIO, None));
            }
            DiagnosticKind::Truncation => {
                let eps = need_eps(finest, name)?;
                let forcing = ForcingSpec::none();
                let lin = solve_linear_wied(g, eps, &forcing, finest.field.layer(0))?;
                let mut rows = Vec::new();
                let mut worst = f64::NEG_INFINITY;
                for (k, level) in [-0.25, 0.0, 0.25, 0.5].into_iter().enumerate() {
                    let r = truncation_subsolution_check(
                        g,
                        eps,
                        &forcing,
                        &lin,
                        level,
                        TRUNCATION_TESTS,
                        exp.config.seed.wrapping_add(k as u64),
                        TRUNCATION_TOL,
                    )?;
                    worst = worst.max(r.max_pairing);
                    rows.push(vec![fmt(level), fmt(r.max_pairing)]);
                }
                write_csv(&dir.join("truncation.csv"), &["level", "max_pairing"], rows)?;
                out.push(summary(name, worst <= TRUNCATION_TOL, worst, TRUNCATION_TOL, None));
            }
        }
    }
    Ok(out)
}

pub fn holder_probe_passes(rep: &HolderReport) -> bool {
    let Some(fit) = rep.fit else { return false };
    fit.flag == FitFlag::Ok
        && fit.alpha > HOLDER_ALPHA_RANGE.0
        && fit.alpha < HOLDER_ALPHA_RANGE.1
        && fit.residual <= HOLDER_MAX_RESIDUAL
        && rep.max_ratio() <= HOLDER_MAX_RATIO
}

pub fn holder_reports(grid: &WeightedGrid, field: &Field, spec: &DiagnosticSpec) -> CliResult<Vec<HolderReport>> {
    spec.centers
        .iter()
        .map(|c| {
            let mut rep = oscillation_table(grid, field, c, spec.levels.unwrap_or(HOLDER_LEVELS))?;
            // too few positive oscillations leaves the probe unfitted (and failing)
            rep.fit = fit_holder(&rep.rows).ok();
            if let Some(fit) = rep.fit.filter(|f| f.flag == FitFlag::Ok) {
                rep.seminorm = Some(holder_seminorm(grid, field, c, fit.alpha)?);
            }
            Ok(rep)
        })
        .collect()
}

fn summary(name: &str, pass: bool, value: f64, threshold: f64, calibration_id: Option<String>) -> DiagnosticSummary {
    DiagnosticSummary { name: name.to_string(), pass, value, threshold, calibration_id }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    /// Relative path to sha256 of every artifact except the manifest itself.
    pub files: BTreeMap<String, String>,
}

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> CliResult<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
            if rel != MANIFEST {
                out.insert(rel, sha256_hex(&fs::read(&p)?));
            }
        }
    }
    Ok(())
}

pub fn write_manifest(exp: &Experiment, out: &Path, started: Instant) -> CliResult<Manifest> {
    let mut files = BTreeMap::new();
    collect_files(out, out, &mut files)?;
    let manifest = Manifest {
        tool: "wiedlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: sha256_hex(&exp.source),
        threads: rayon::current_num_threads(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(out.join(MANIFEST), text + "\n")?;
    Ok(manifest)
}

fn prepare_dir(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out.join("fields"))?;
    fs::create_dir_all(out.join("reports"))?;
    Ok(())
}

pub fn load_calibration(exp: &Experiment) -> CliResult<Option<Calibration>> {
    exp.calibration_path().map(|p| Calibration::load(&p)).transpose()
}

pub struct RunOutput {
    pub reference: Field,
    pub sweep: SweepResult,
    pub summary: Vec<DiagnosticSummary>,
    pub manifest: Manifest,
}

/// Full pipeline. On a solver failure the artifacts produced so far and the
/// manifest are kept before the error is returned.
pub fn run_experiment(exp: &Experiment, out: &Path) -> CliResult<RunOutput> {
    let started = Instant::now();
    let cal = load_calibration(exp)?;
    prepare_dir(out)?;
    fs::write(out.join("config.json"), &exp.source)?;
    let spec = exp.grid.spec();

    let reference = match solve_parabolic(&exp.grid, &exp.model, &exp.config.parabolic, &exp.u0) {
        Ok(r) => r,
        Err(e) => {
            if let WiedError::StepFailed { completed, .. } = &e {
                if !completed.is_empty() {
                    let partial = Field::from_layers(completed)?;
                    fs::write(out.join("fields/parabolic-partial.bin"), f64_bytes(partial.values()))?;
                }
            }
            write_manifest(exp, out, started)?;
            return Err(e.into());
        }
    };
    reference.write_dump(spec, &out.join("fields/parabolic"))?;

    let sweep = sweep_epsilon(&exp.grid, &exp.model, &exp.config.schedule, &exp.config.wied, &exp.u0, Some(&reference))?;
    for l in &sweep.levels {
        l.solution.field.write_dump(spec, &out.join(format!("fields/wied-{}", eps_tag(l.eps))))?;
        write_stats(&out.join(format!("reports/stats-{}.json", eps_tag(l.eps))), &l.solution.stats)?;
    }
    sweep.write_csv(&out.join("reports/convergence.csv"))?;
    if let Some((eps, e)) = &sweep.failure {
        write_manifest(exp, out, started)?;
        return Err(CliError::Solver(format!("sweep stopped at eps = {eps}: {e}")));
    }

    let levels: Vec<Level<'_>> = sweep.levels.iter().map(|l| Level { eps: Some(l.eps), field: &l.solution.field }).collect();
    let summary = run_diagnostics(exp, cal.as_ref(), &exp.config.diagnostics, &levels, &out.join("reports"))?;
    write_summary_json(&out.join("summary.json"), &summary)?;
    let manifest = write_manifest(exp, out, started)?;
    Ok(RunOutput { reference, sweep, summary, manifest })
}

fn f64_bytes(v: &[f64]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn write_stats(path: &Path, stats: &wiedlab_core::wied::WiedStats) -> CliResult<()> {
    let text = serde_json::to_string_pretty(stats).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Single cold-started level.
pub fn run_single_level(exp: &Experiment, eps: f64, out: &Path) -> CliResult<Field> {
    let started = Instant::now();
    prepare_dir(out)?;
    fs::write(out.join("config.json"), &exp.source)?;
    let cfg = WiedConfig { eps, ..exp.config.wied.clone() };
    cfg.validate()?;
    let solver = WiedSolver::new(&exp.grid, &exp.model);
    let sol = match solver.solve(&cfg, &exp.u0, None) {
        Ok(s) => s,
        Err(e) => {
            write_manifest(exp, out, started)?;
            return Err(e.into());
        }
    };
    sol.field.write_dump(exp.grid.spec(), &out.join(format!("fields/wied-{}", eps_tag(eps))))?;
    write_stats(&out.join(format!("reports/stats-{}.json", eps_tag(eps))), &sol.stats)?;
    write_manifest(exp, out, started)?;
    Ok(sol.field)
}

pub fn run_reference(exp: &Experiment, out: &Path) -> CliResult<Field> {
    let started = Instant::now();
    prepare_dir(out)?;
    fs::write(out.join("config.json"), &exp.source)?;
    let reference = solve_parabolic(&exp.grid, &exp.model, &exp.config.parabolic, &exp.u0);
    let reference = match reference {
        Ok(r) => r,
        Err(e) => {
            write_manifest(exp, out, started)?;
            return Err(e.into());
        }
    };
    reference.write_dump(exp.grid.spec(), &out.join("fields/parabolic"))?;
    write_manifest(exp, out, started)?;
    Ok(reference)
}

/// Diagnostics on a stored field.
pub fn diagnose(
    exp: &Experiment,
    field_path: &Path,
    which: &[DiagnosticKind],
    eps: Option<f64>,
    out: &Path,
) -> CliResult<Vec<DiagnosticSummary>> {
    let started = Instant::now();
    if !field_path.with_extension("json").is_file() {
        return Err(CliError::Config(format!("field {} does not exist", field_path.display())));
    }
    let (spec, field) = Field::read_dump(field_path)?;
    if &spec != exp.grid.spec() {
        return Err(CliError::Config("stored field lives on a different grid than the config".into()));
    }
    let mut specs = Vec::new();
    for kind in which {
        if kind.is_sweep_level() {
            return Err(CliError::Config(format!("diagnostic {} needs a full sweep; use run", kind.name())));
        }
        let spec = exp.config.diagnostics.iter().find(|s| s.name == *kind).cloned().unwrap_or_else(|| DiagnosticSpec::new(*kind));
        specs.push(spec);
    }
    for s in &specs {
        crate::config::check_diagnostic(&exp.grid, s)?;
    }
    let cal = load_calibration(exp)?;
    fs::create_dir_all(out)?;
    let summary = run_diagnostics(exp, cal.as_ref(), &specs, &[Level { eps, field: &field }], &out.join("reports"))?;
    write_summary_json(&out.join("summary.json"), &summary)?;
    write_manifest(exp, out, started)?;
    Ok(summary)
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn wiedlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wiedlab")).args(args).output().expect("binary runs")
}

fn small_config() -> Value {
    let cyl = json!({ "center_x": [0.0, 0.0], "center_y": 0.0, "center_t": 0.5, "radius": 0.5 });
    json!({
        "grid": { "d": 1, "a": 0.3, "L": 1.0, "Y": 1.0, "T": 1.0, "nx": 8, "ny": 6, "nt": 40 },
        "model": { "kind": "polynomial-bump" },
        "initial": { "kind": "gaussian", "width": 0.4, "height": 0.9 },
        "schedule": { "eps0": 0.05, "ratio": 0.5, "count": 3 },
        "diagnostics": [
            { "name": "energy" },
            { "name": "uniform-bounds" },
            { "name": "cauchy" },
            { "name": "linf-l2", "cylinder": cyl },
            { "name": "no-spikes", "cylinder": cyl },
            { "name": "level-sets", "cylinder": cyl },
            { "name": "isoperimetric", "cylinder": cyl },
            { "name": "embedding", "cylinder": cyl },
            { "name": "holder", "levels": 3, "centers": [cyl] },
            { "name": "truncation" }
        ],
        "calibration": "cal.json",
        "output": "out",
        "seed": 3
    })
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

/// Config plus its calibration in a fresh directory.
fn calibrated(cfg: &Value) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "exp.json", cfg);
    let out = wiedlab(&["calibrate", p.to_str().unwrap(), "--id", "test-cal"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (dir, p)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn weight_outside_range_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg["grid"]["a"] = json!(1.5);
    let p = write_config(dir.path(), "bad.json", &cfg);
    let o = wiedlab(&["run", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("(-1, 1)"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_two() {
    let o = wiedlab(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).to_lowercase().contains("usage"));
    let o = wiedlab(&["run", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg["diagnostics"] = json!([{ "name": "holder", "centers": [
        { "center_x": [0.9, 0.0], "center_y": 0.0, "center_t": 0.5, "radius": 0.5 }
    ] }]);
    let p = write_config(dir.path(), "far.json", &cfg);
    assert_eq!(wiedlab(&["run", p.to_str().unwrap()]).status.code(), Some(2));
    cfg["unexpected"] = json!(1);
    let p = write_config(dir.path(), "extra.json", &cfg);
    assert_eq!(wiedlab(&["run", p.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn strict_support_rejects_data_touching_the_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg["initial"] = json!({ "kind": "plateau", "radius": 3.0, "height": 1.0 });
    cfg["diagnostics"] = json!([]);
    cfg.as_object_mut().unwrap().remove("calibration");
    let p = write_config(dir.path(), "wide.json", &cfg);
    let o = wiedlab(&["parabolic", p.to_str().unwrap(), "--strict-support"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("strict support"));
    cfg["initial"] = json!({ "kind": "plateau", "radius": 0.8, "height": 1.0 });
    let p = write_config(dir.path(), "narrow.json", &cfg);
    assert!(wiedlab(&["parabolic", p.to_str().unwrap(), "--strict-support"]).status.success());
}

#[test]
fn inert_constant_data_gives_zero_diagnostics() {
    let mut cfg = small_config();
    cfg["model"] = json!({ "kind": "inert" });
    cfg["initial"] = json!({ "kind": "constant", "value": 0.0 });
    cfg["diagnostics"] = json!([{ "name": "energy" }, { "name": "uniform-bounds" }, { "name": "cauchy" }]);
    cfg.as_object_mut().unwrap().remove("calibration");
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "zero.json", &cfg);
    let o = wiedlab(&["run", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    for row in summary.as_array().unwrap() {
        // spreads of identical (zero) quantities are 1
        let expect = if row["name"] == "uniform-bounds" { 1.0 } else { 0.0 };
        assert_eq!(row["value"].as_f64(), Some(expect), "{row}");
        assert_eq!(row["pass"].as_bool(), Some(true));
    }
    let energy = fs::read_to_string(dir.path().join("out/reports/energy-eps-0.05.csv")).unwrap();
    for line in energy.lines().skip(1) {
        assert!(line.split(',').skip(1).filter(|v| !v.is_empty()).all(|v| v.parse::<f64>().unwrap() == 0.0), "{line}");
    }
}

#[test]
fn runs_are_reproducible_across_thread_counts() {
    let (dir, p) = calibrated(&small_config());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let pa = p.to_str().unwrap();
    assert!(wiedlab(&["run", pa, "--out", a.to_str().unwrap(), "--threads", "1"]).status.success());
    assert!(wiedlab(&["run", pa, "--out", b.to_str().unwrap(), "--threads", "3"]).status.success());
    let files = |d: &Path| -> Value {
        let m: Value = serde_json::from_str(&fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap();
        m["files"].clone()
    };
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa, fb);
    let listed = fa.as_object().unwrap();
    assert!(listed.contains_key("reports/convergence.csv") && listed.contains_key("fields/wied-eps-0.0125.bin"));
    for (rel, _) in listed {
        assert_eq!(fs::read(a.join(rel)).unwrap(), fs::read(b.join(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn diagnose_on_stored_field_matches_the_run() {
    let (dir, p) = calibrated(&small_config());
    let pa = p.to_str().unwrap();
    assert!(wiedlab(&["run", pa]).status.success());
    let run = dir.path().join("out");
    let field = run.join("fields/wied-eps-0.0125.bin");
    let diag = dir.path().join("diag");
    let o = wiedlab(&[
        "diagnose",
        pa,
        "--field",
        field.to_str().unwrap(),
        "--which",
        "energy,no-spikes,level-sets,holder,isoperimetric,truncation",
        "--eps",
        "0.0125",
        "--out",
        diag.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["energy-eps-0.0125.csv", "no-spikes.csv", "level-sets.csv", "holder-0.csv", "holder.csv", "isoperimetric.csv", "truncation.csv"] {
        assert_eq!(
            fs::read(run.join("reports").join(f)).unwrap(),
            fs::read(diag.join("reports").join(f)).unwrap(),
            "{f}"
        );
    }
    let o = wiedlab(&["diagnose", pa, "--field", field.to_str().unwrap(), "--which", "cauchy"]);
    assert_eq!(o.status.code(), Some(2));
    let o = wiedlab(&["diagnose", pa, "--field", field.to_str().unwrap(), "--which", "energy"]);
    assert_eq!(o.status.code(), Some(2), "energy without --eps");
}

#[test]
fn single_level_solve_agrees_with_sweep_level() {
    let (dir, p) = calibrated(&small_config());
    let pa = p.to_str().unwrap();
    let single = dir.path().join("single");
    assert!(wiedlab(&["run", pa]).status.success());
    let o = wiedlab(&["wied", pa, "--eps", "0.025", "--out", single.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let read = |p: PathBuf| -> Vec<f64> {
        fs::read(p).unwrap().chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
    };
    let a = read(single.join("fields/wied-eps-0.025.bin"));
    let b = read(dir.path().join("out/fields/wied-eps-0.025.bin"));
    let err = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(err < 1e-5, "{err}");
}

#[test]
fn solver_failure_exits_with_three_and_keeps_artifacts() {
    let mut cfg = small_config();
    cfg["wied"] = json!({ "max_outer": 1, "tol": 1e-14 });
    let (dir, p) = calibrated(&cfg);
    let o = wiedlab(&["run", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let out = dir.path().join("out");
    assert!(out.join("manifest.json").is_file());
    assert!(out.join("fields/parabolic.bin").is_file());
}

#[test]
fn unwritable_output_exits_with_four() {
    let (dir, p) = calibrated(&small_config());
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "not a directory").unwrap();
    let o = wiedlab(&["parabolic", p.to_str().unwrap(), "--out", blocker.join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn initial_data_from_a_stored_field() {
    let mut cfg = small_config();
    cfg["diagnostics"] = json!([]);
    cfg.as_object_mut().unwrap().remove("calibration");
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "g.json", &cfg);
    assert!(wiedlab(&["parabolic", p.to_str().unwrap()]).status.success());
    cfg["initial"] = json!({ "kind": "from-file", "path": "out/fields/parabolic.json" });
    cfg["output"] = json!("again");
    let q = write_config(dir.path(), "f.json", &cfg);
    assert!(wiedlab(&["parabolic", q.to_str().unwrap()]).status.success());
    assert_eq!(
        fs::read(dir.path().join("out/fields/parabolic.bin")).unwrap(),
        fs::read(dir.path().join("again/fields/parabolic.bin")).unwrap()
    );
    cfg["initial"] = json!({ "kind": "from-file", "path": "missing.json" });
    let r = write_config(dir.path(), "m.json", &cfg);
    assert_eq!(wiedlab(&["parabolic", r.to_str().unwrap()]).status.code(), Some(2));
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fpf_harness::csvio::{read_errors, read_rates, read_series, read_summary, read_trace};
use fpf_harness::manifest::parse_manifest;

const OU: &str = r#"
[model]
kind = "ou"
a = 1.0
b = 1.0

[timing]
h = 1.0
steps = 30
burn_in = 5

[grid]
radius = 6.0

[run]
seed = 3
replicas = 2
filters = ["kf", "dmfenkf:60", "enkf:50"]
"#;

const SWEEP: &str = r#"
[sweep]
axis = "resolution"
values = [20, 200, 2000]

[report]
inputs = ["errors.csv"]
gnuplot = true
"#;

fn fpf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpf"))
        .args(args)
        .output()
        .expect("spawn fpf")
}

fn ok(args: &[&str]) -> String {
    let out = fpf(args);
    assert!(
        out.status.success(),
        "fpf {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn simulate_writes_one_row_per_observation_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "ou.toml", OU);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["simulate", "--config", &cfg, "--out", a.to_str().unwrap()]);
    ok(&["simulate", "--config", &cfg, "--out", b.to_str().unwrap()]);
    for name in ["truth.csv", "observations.csv", "manifest.txt"] {
        assert_eq!(
            read(&a, name),
            read(&b, name),
            "{name} differs between runs"
        );
    }
    let truth = read_series(&read(&a, "truth.csv"), "truth").unwrap();
    assert_eq!(truth.times.len(), 30);
    assert_eq!(truth.times[0], 1.0);
    let obs = read(&a, "observations.csv");
    let lines: Vec<&str> = obs.lines().take(2).collect();
    assert!(lines[0].starts_with("# config_hash="));
    assert_eq!(lines[1], "t,obs");
    let m = parse_manifest(&read(&a, "manifest.txt")).unwrap();
    assert_eq!(m.get("command"), Some("simulate"));
    assert_eq!(m.get("rows"), Some("30"));
    assert!(m.get("file.truth.csv").is_some());
}

#[test]
fn invalid_configs_name_the_offending_field() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cases = [
        (OU.replace("h = 1.0", "h = 1.0\ndt = 0.3"), "timing.h"),
        (OU.replace("enkf:50", "enkf:lots"), "run.filters[2]"),
        (OU.replace("b = 1.0", "b = 0.0"), "model.b"),
        (OU.replace("steps = 30", "steps = 0"), "timing.steps"),
        (OU.replace("[grid]", "[grid]\nn = 3"), "unknown field `n`"),
    ];
    for (text, field) in cases {
        let cfg = write_config(tmp.path(), "bad.toml", &text);
        let res = fpf(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(!res.status.success());
        let err = String::from_utf8_lossy(&res.stderr);
        assert!(err.contains(field), "expected `{field}` in {err}");
    }
    assert!(!out.exists(), "failed runs must not create output");
    let missing = fpf(&["run", "--config", "/nonexistent.toml"]);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent.toml"));
}

#[test]
fn run_writes_a_trace_per_filter_and_honours_the_seed_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "ou.toml", OU);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    let listed = ok(&["run", "--config", &cfg, "--out", a.to_str().unwrap()]);
    assert_eq!(listed.lines().count(), 4);
    ok(&[
        "run",
        "--config",
        &cfg,
        "--out",
        b.to_str().unwrap(),
        "--threads",
        "2",
    ]);
    ok(&[
        "run",
        "--config",
        &cfg,
        "--out",
        c.to_str().unwrap(),
        "--seed",
        "99",
    ]);
    for name in ["trace_kf.csv", "trace_dmfenkf_60.csv", "trace_enkf_50.csv"] {
        let text = read(&a, name);
        assert_eq!(text, read(&b, name));
        assert_ne!(text, read(&c, name));
        let t = read_trace(&text).unwrap();
        assert_eq!(t.len(), 30);
        assert_eq!(t.seed, 3);
        assert_eq!(text.lines().nth(1), Some("t,mean,var,truth,obs"));
    }
    assert_eq!(read_trace(&read(&c, "trace_kf.csv")).unwrap().seed, 99);
    let ma = parse_manifest(&read(&a, "manifest.txt")).unwrap();
    let mc = parse_manifest(&read(&c, "manifest.txt")).unwrap();
    assert_ne!(ma.get("config_hash"), mc.get("config_hash"));
    assert_eq!(ma, parse_manifest(&read(&b, "manifest.txt")).unwrap());
}

#[test]
fn convergence_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let filters = OU.replace("[\"kf\", \"dmfenkf:60\", \"enkf:50\"]", "[\"enkf:20\"]");
    let text = format!("{filters}{SWEEP}");
    let cfg = write_config(tmp.path(), "sweep.toml", &text);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&[
        "convergence",
        "--config",
        &cfg,
        "--out",
        a.to_str().unwrap(),
        "--threads",
        "1",
    ]);
    ok(&[
        "convergence",
        "--config",
        &cfg,
        "--out",
        b.to_str().unwrap(),
        "--threads",
        "3",
    ]);
    for name in ["errors.csv", "cells.csv", "rates.csv", "manifest.txt"] {
        assert_eq!(
            read(&a, name),
            read(&b, name),
            "{name} depends on the thread count"
        );
    }
    let (meta, errors) = read_errors(&read(&a, "errors.csv")).unwrap();
    let hash = parse_manifest(&read(&a, "manifest.txt"))
        .unwrap()
        .get("config_hash")
        .unwrap()
        .to_string();
    assert_eq!(meta.get("config_hash"), Some(&hash));
    let res: Vec<usize> = errors.iter().map(|r| r.resolution).collect();
    assert_eq!(res, vec![20, 200, 2000]);
    assert!(errors.iter().all(|r| r.seeds == 2 && r.err_mean > 0.0));
    assert!(errors[0].err_mean > errors[2].err_mean);
    let (_, rates) = read_rates(&read(&a, "rates.csv")).unwrap();
    let mean = rates.iter().find(|r| r.metric == "err_mean").unwrap();
    assert_eq!((mean.family.as_str(), mean.points), ("enkf", 3));
    assert!(mean.slope < -0.2, "slope {}", mean.slope);

    ok(&["report", "--config", &cfg, "--out", a.to_str().unwrap()]);
    let (_, summary) = read_summary(&read(&a, "summary.csv")).unwrap();
    assert_eq!(summary.len(), 9);
    assert!(summary.iter().filter(|r| r.metric == "err_mean").all(|r| {
        let want = match r.filter.as_str() {
            "enkf:2000" => 1,
            "enkf:200" => 2,
            _ => 3,
        };
        r.rank == want
    }));
    let dat = read(&a, "summary_err_mean.dat");
    assert!(dat.starts_with("# substeps enkf:20 enkf:200 enkf:2000\n1 "));
    let again = tmp.path().join("again");
    fs::create_dir_all(&again).unwrap();
    fs::copy(a.join("errors.csv"), again.join("errors.csv")).unwrap();
    ok(&["report", "--config", &cfg, "--out", again.to_str().unwrap()]);
    assert_eq!(read(&a, "summary.csv"), read(&again, "summary.csv"));
}

#[test]
fn report_diagnoses_missing_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let text = format!("{}{SWEEP}", OU.replace("\"kf\", ", ""));
    let cfg = write_config(tmp.path(), "r.toml", &text);
    let res = fpf(&["report", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("errors.csv"));
    let none = write_config(
        tmp.path(),
        "none.toml",
        &format!("{OU}[report]\ninputs = []\n"),
    );
    let res = fpf(&["report", "--config", &none, "--out", out.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("report.inputs"));
}

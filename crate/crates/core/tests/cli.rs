use std::path::Path;
use std::process::{Command, Output};

use smrac::output::load_trace_csv;
use smrac::scenario::DEFAULT_SCENARIO;

fn smrac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smrac")).args(args).env_remove("SMRAC_LOG").output().unwrap()
}

fn scenario(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

/// The default scenario cut to `t_end` seconds with switches every 1 s.
fn short(t_end: f64) -> String {
    DEFAULT_SCENARIO
        .replace("t_end = 240.0", &format!("t_end = {t_end:?}"))
        .replace("interval = 30.0", "interval = 1.0")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_default_prints_gains() {
    let o = smrac(&["validate", "default"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    for (i, k) in ["2", "2.5", "3", "5"].iter().enumerate() {
        assert!(out.contains(&format!("subsystem {}: K_x = [{k}; {k}], K_r = [1]", i + 1)), "{out}");
    }
}

#[test]
fn validate_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let text = DEFAULT_SCENARIO
        .replacen("A = [[0.0, 1.0], [-6.0, -7.0]]\nB = [[0.0], [1.0]]", "A = [[0.0, 1.0], [-6.0, -7.0]]\nB = [[0.0], [0.0]]", 1)
        .replacen("A = [[0.0, 1.0], [-8.0, -9.0]]", "A = [[0.0, 2.0], [-8.0, -9.0]]", 1);
    let path = scenario(dir.path(), "bad.toml", &text);
    let o = smrac(&["validate", &path]);
    assert_eq!(o.status.code(), Some(2));
    let out = stdout(&o);
    assert!(out.contains("line 18") && out.contains("full column rank"), "{out}");
    assert!(out.contains("line 22") && out.contains("matching condition infeasible for subsystem 4"), "{out}");
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario(dir.path(), "s.toml", &short(2.0));
    let out = dir.path().join("out");
    let o = smrac(&["run", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let csv = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    let (n, m, nsub, p) = (2, 1, 4, 2);
    assert_eq!(header.split(',').count(), 5 + n + n + m + nsub * (p + 2));
    assert_eq!(csv.lines().count(), 1 + 2001);
    let trace = load_trace_csv(&out.join("trace.csv")).unwrap();
    assert_eq!(trace.len(), 2001);
    assert_eq!(trace[1500].sigma, 1);

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["matched_gains"][3]["k_x"], serde_json::json!([[5.0], [5.0]]));
    let svg = std::fs::read_to_string(out.join("plot.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("stroke-dasharray"));
}

#[test]
fn decimation_reduces_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario(dir.path(), "s.toml", &short(2.0));
    let out = dir.path().join("out");
    let o = smrac(&["run", &path, "--out", out.to_str().unwrap(), "--decimate", "50"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(load_trace_csv(&out.join("trace.csv")).unwrap().len(), 41);
    let o = smrac(&["run", &path, "--out", out.to_str().unwrap(), "--decimate", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn default_run_excites_every_subsystem() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = smrac(&["run", "default", "--out", out.to_str().unwrap(), "--decimate", "1000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace = load_trace_csv(&out.join("trace.csv")).unwrap();
    assert!(trace.last().unwrap().s.iter().all(|&s| s));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["convergence"]["all_excited"], serde_json::json!(true));
}

#[test]
fn compare_writes_both_runs() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario(dir.path(), "s.toml", &short(4.0));
    let out = dir.path().join("cmp");
    let o = smrac(&["compare", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["comparison.json", "overlay.svg", "memory/trace.csv", "baseline/trace.csv", "baseline/report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let cmp: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("comparison.json")).unwrap()).unwrap();
    let mem = cmp["memory_total_phi_err"].as_f64().unwrap();
    let base = cmp["baseline_total_phi_err"].as_f64().unwrap();
    assert!(mem < base, "{mem} vs {base}");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let o = smrac(&["run", dir.path().join("missing.toml").to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));

    let ragged = scenario(dir.path(), "ragged.toml", &DEFAULT_SCENARIO.replacen("[-5.0, -6.0]]", "[-5.0]]", 1));
    let o = smrac(&["run", &ragged, "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 10"), "{}", stderr(&o));

    let unstable =
        scenario(dir.path(), "unstable.toml", &DEFAULT_SCENARIO.replacen("[-3.0, -4.0]]", "[-3.0, 4.0]]", 1));
    let o = smrac(&["run", &unstable, "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not Hurwitz"), "{}", stderr(&o));
}

#[test]
fn blowup_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = short(20.0).replace("decimate = 1", "decimate = 1\nnegate_adaptation = true");
    let path = scenario(dir.path(), "neg.toml", &text);
    let o = smrac(&["run", &path, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("blowup"));
}

#[test]
fn unwritable_output_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario(dir.path(), "s.toml", &short(0.5));
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let o = smrac(&["run", &path, "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn log_level_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario(dir.path(), "s.toml", &short(0.5));
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_smrac"))
        .args(["run", &path, "--out", out.to_str().unwrap()])
        .env("SMRAC_LOG", "info")
        .output()
        .unwrap();
    assert!(stderr(&o).contains("excited"), "{}", stderr(&o));
    let quiet = smrac(&["run", &path, "--out", out.to_str().unwrap()]);
    assert!(!stderr(&quiet).contains("excited"));
}

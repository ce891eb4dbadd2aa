use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_disentangle")).args(args).current_dir(dir).output().unwrap()
}

fn write_manifest(dir: &Path, body: &str) -> String {
    let p = dir.join("m.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SHORT_FORMATION: &str = "scenario = \"formation\"\noutput_dir = \"run\"\n\n[sim]\ndt = 0.01\nsteps = 20\n";

#[test]
fn run_writes_trace_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), SHORT_FORMATION);
    let out = cli(&["run", &m], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["steps"], 20);
    assert!(metrics["final_V"].as_f64().unwrap() <= metrics["initial_V"].as_f64().unwrap());
    let trace = fs::read_to_string(run.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 22);
    assert!(run.join("effective.toml").exists());
}

#[test]
fn sweep_isolates_each_run() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), SHORT_FORMATION);
    let out = cli(&["sweep", &m, "--param", "dt=0.01,0.005,0.0025"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for v in ["0.01", "0.005", "0.0025"] {
        let run = dir.path().join("run").join(format!("dt={v}"));
        let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("metrics.json")).unwrap()).unwrap();
        assert_eq!(metrics["steps"], 20);
        assert!(fs::read_to_string(run.join("effective.toml")).unwrap().contains(&format!("dt = {v}")));
    }
}

#[test]
fn bad_manifest_exits_one_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), "scenario = \"formation\"\n\n[sim]\ndt = -0.1\n");
    let out = cli(&["run", &m], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4") && err.contains("sim.dt"), "{err}");
}

#[test]
fn missing_manifest_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["run", "nope.toml"], dir.path()).status.code(), Some(1));
}

#[test]
fn malformed_sweep_param_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), SHORT_FORMATION);
    assert_eq!(cli(&["sweep", &m, "--param", "dt"], dir.path()).status.code(), Some(1));
}

#[test]
fn verify_reports_every_suite() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["verify"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.contains(" PASS ") || l.contains(" FAIL ")).count(), 5, "{text}");
    assert_eq!(out.status.code(), Some(if text.contains(" FAIL ") { 3 } else { 0 }));
}

#[test]
fn faster_decay_rate_leaves_less_coverage_cost() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), "scenario = \"coverage\"\noutput_dir = \"sw\"\n\n[sim]\nsteps = 100\n");
    let out = cli(&["sweep", &m, "--param", "alpha_rate=0.5,1,2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let final_v: Vec<f64> = ["0.5", "1", "2"]
        .iter()
        .map(|v| {
            let p = dir.path().join("sw").join(format!("alpha_rate={v}")).join("metrics.json");
            let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
            m["final_V"].as_f64().unwrap()
        })
        .collect();
    assert!(final_v[0] > final_v[1] && final_v[1] > final_v[2], "{final_v:?}");
}

#[test]
fn shipped_manifests_parse_and_build() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../manifests");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let m = disentangle::manifest::RunManifest::from_path(&path).unwrap();
        m.build().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert_eq!(n, 3);
}

//! End-to-end runs of the `smolsim` binary on a small scenario.

use std::path::Path;
use std::process::{Command, Output};

use smolsim::config::ScenarioFile;
use smolsim::io::{read_particles_csv, read_report_csv};

fn smolsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smolsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_scenario(dir: &Path) -> String {
    let mut file = ScenarioFile::default_shattering();
    file.name = "small".into();
    file.pde.nodes = 256;
    file.t_end = 0.2;
    file.snapshots = 2;
    file.study.n_values = vec![200, 400];
    file.study.replicas = 2;
    let path = dir.join("small.json");
    std::fs::write(&path, file.to_json()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn validate_accepts_presets_and_reports_every_problem() {
    let out = smolsim(&["validate", "default"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok"));

    let dir = tempfile::tempdir().unwrap();
    let mut file = ScenarioFile::default_shattering();
    file.scaling.beta = 0.5;
    file.species[0].sigma = -1.0;
    let path = dir.path().join("bad.json");
    std::fs::write(&path, file.to_json()).unwrap();
    let out = smolsim(&["validate", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("2 problem(s)"), "{text}");
}

#[test]
fn validate_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let mut json: serde_json::Value =
        serde_json::from_str(&ScenarioFile::default_shattering().to_json()).unwrap();
    json["bogus"] = serde_json::json!(1);
    let path = dir.path().join("extra.json");
    std::fs::write(&path, json.to_string()).unwrap();
    assert!(!smolsim(&["validate", path.to_str().unwrap()]).status.success());
}

#[test]
fn study_writes_report_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_scenario(dir.path());
    let out_dir = dir.path().join("out");
    let out = smolsim(&["study", &cfg, "--out-dir", out_dir.to_str().unwrap(), "--workers", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let report = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert_eq!(
        report.lines().next().unwrap(),
        "N,replica,t,d2_1,d2_2,D_est,mass,clip_frac"
    );
    let rows = read_report_csv(report.as_bytes()).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 3);
    for r in &rows {
        assert_eq!(r.mass, r.n, "mass column must equal the realised system size");
        assert!(r.d2.iter().all(|d| d.is_finite() && *d >= 0.0));
        assert!(r.d_est >= 0.0);
    }

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["scenario"], "small");
    assert_eq!(summary["report"]["rows"].as_array().unwrap().len(), 2);
    assert!(out_dir.join("pde_final.csv").exists());
}

#[test]
fn study_is_reproducible_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_scenario(dir.path());
    let run = |name: &str, seed: &str| {
        let out_dir = dir.path().join(name);
        let out = smolsim(&["study", &cfg, "--seed", seed, "--out-dir", out_dir.to_str().unwrap()]);
        assert!(out.status.success());
        std::fs::read_to_string(out_dir.join("report.csv")).unwrap()
    };
    let a = run("a", "5");
    assert_eq!(a, run("b", "5"));
    assert_ne!(a, run("c", "6"));
}

#[test]
fn run_single_dumps_particles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_scenario(dir.path());
    let out_dir = dir.path().join("single");
    let out = smolsim(&[
        "run-single",
        &cfg,
        "--n",
        "300",
        "--snapshots",
        "4",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for i in 0..=4 {
        let path = out_dir.join(format!("particles_{i:04}.csv"));
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("species,x1\n"));
        let (dim, pos) = read_particles_csv(text.as_bytes(), 2).unwrap();
        assert_eq!(dim, 1);
        let atoms = pos[0].len() + 2 * pos[1].len();
        assert!((290..=310).contains(&atoms), "{atoms}");
        assert!(pos.iter().flatten().all(|x| (0.0..10.0).contains(x)));
    }
    assert!(!out_dir.join("particles_0005.csv").exists());
    assert!(out_dir.join("trace.csv").exists());
}

#[test]
fn missing_config_is_an_error() {
    let out = smolsim(&["study", "/nonexistent/scenario.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

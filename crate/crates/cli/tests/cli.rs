use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use homog::GridFunction;
use serde_json::Value;

fn homog(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homog")).args(args).env_remove("HOMOG_WORKERS").output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Every file in `dir` except the manifest appears exactly once in it.
fn assert_manifest_complete(dir: &Path) {
    let m = manifest(dir);
    let listed: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|o| o["path"].as_str().unwrap()).collect();
    let mut on_disk: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    let mut sorted: Vec<String> = listed.iter().map(|s| s.to_string()).collect();
    sorted.sort();
    assert_eq!(sorted, on_disk);
}

const SAMPLE: &str = r#"
radius = 8.0
spacing = 0.5

[ensemble]
kind = "poisson_inclusion"
dimension = 2
"#;

#[test]
fn sample_is_deterministic_and_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "sample.toml", SAMPLE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = homog(&["sample", "--config", &cfg, "--out", d.to_str().unwrap(), "--seed", "7"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_manifest_complete(d);
    }
    assert_eq!(fs::read(a.join("field.bin")).unwrap(), fs::read(b.join("field.bin")).unwrap());
    assert_eq!(manifest(&a)["outputs"], manifest(&b)["outputs"]);
    assert_eq!(manifest(&a)["master_seed"], 7);

    let c = tmp.path().join("c");
    let o = homog(&["sample", "--config", &cfg, "--out", c.to_str().unwrap(), "--seed", "8"]);
    assert!(o.status.success());
    assert_ne!(fs::read(a.join("field.bin")).unwrap(), fs::read(c.join("field.bin")).unwrap());
}

#[test]
fn missing_key_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "radius = 8.0\n[ensemble]\nkind = \"poisson_inclusion\"\ndimension = 2\n");
    let o = homog(&["sample", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("spacing"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = homog(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).to_lowercase().contains("usage"));
}

const SOLVE: &str = r#"
radius = 6.0
spacing = 0.5
T = 16.0
xi = [1.0, 0.0]
L = 2.0

[ensemble]
kind = "constant_matrix"
dimension = 2

[solver]
tol = 1e-10
"#;

#[test]
fn constant_field_solve_is_trivial() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "solve.toml", SOLVE);
    let out = tmp.path().join("o");
    let o = homog(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let phi = GridFunction::read_binary(&mut fs::File::open(out.join("phi.bin")).unwrap()).unwrap();
    assert!(phi.max_abs() <= 1e-10);
    let diag = fs::read_to_string(out.join("diagnostics.jsonl")).unwrap();
    for line in diag.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["relative_residual"].as_f64().unwrap() <= 1e-10);
    }
    let est: Value = serde_json::from_str(&fs::read_to_string(out.join("estimate.json")).unwrap()).unwrap();
    assert!((est["value_without"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert_manifest_complete(&out);

    let o = homog(&["solve", "--config", &cfg, "--out", out.to_str().unwrap(), "--override", "T=-1"]);
    assert_eq!(o.status.code(), Some(2));
}

const STUDY: &str = r#"
L_values = [8.0]
t_per_l = 1.0
n_samples = 8
spacing = 0.5

[ensemble]
kind = "poisson_inclusion"
dimension = 2
"#;

#[test]
fn smoke_study_completes_and_resumes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "study.toml", STUDY);
    let out = tmp.path().join("s");
    let dir = out.to_str().unwrap();
    let start = std::time::Instant::now();
    let o = homog(&["study", "variance", "--config", &cfg, "--out", dir, "--workers", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(start.elapsed().as_secs() < 60);
    assert_manifest_complete(&out);
    let samples = fs::read_to_string(out.join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 9);

    // rerun skips the completed cell and leaves the samples untouched
    let o = homog(&["study", "variance", "--config", &cfg, "--out", dir]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("\"resumed\""));
    assert_eq!(fs::read_to_string(out.join("samples.csv")).unwrap(), samples);

    // a torn write is refused
    fs::write(out.join("samples.csv"), &samples[..samples.len() - 10]).unwrap();
    let o = homog(&["study", "variance", "--config", &cfg, "--out", dir]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("inconsistent resume"));
}

#[test]
fn solver_failure_exits_four() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "study.toml", STUDY);
    let out = tmp.path().join("s");
    let o = homog(&["study", "variance", "--config", &cfg, "--out", out.to_str().unwrap(), "--override", "solver.max_iter=1"]);
    assert_eq!(o.status.code(), Some(4));
    assert_manifest_complete(&out);
}

const GREEN: &str = r#"
T = 1e8
box_radius = 40.0
spacing = 0.5
radii = [2.0, 4.0, 8.0, 16.0]

[ensemble]
kind = "constant_matrix"
dimension = 2
"#;

#[test]
fn constant_green_probe_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "green.toml", GREEN);
    let out = tmp.path().join("g");
    let o = homog(&["green", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_str(&fs::read_to_string(out.join("green_report.json")).unwrap()).unwrap();
    assert_eq!(r["pass_flags"]["gradient_exponent"], true);
    assert_eq!(r["pass_flags"]["positivity"], true);
    assert!(fs::read_to_string(out.join("annulus.csv")).unwrap().starts_with("R,p,norm"));
    assert_manifest_complete(&out);
}

#[test]
fn sgcheck_battery_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sg");
    let o = homog(&["sgcheck", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_str(&fs::read_to_string(out.join("sgcheck_report.json")).unwrap()).unwrap();
    assert_eq!(r["passed"], true);
    assert!(r["sg"].as_array().unwrap().len() >= 18);
}

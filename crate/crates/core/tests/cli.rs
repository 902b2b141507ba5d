//! Exit codes, artifacts and reproducibility of the command-line tool.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fnls(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fnls"))
        .args(args)
        .current_dir(cwd)
        .env("FNLS_CACHE_DIR", cwd.join("cache"))
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const TINY: &str = r#"{
  "name": "tiny",
  "n": 256,
  "box": 16,
  "initial": {"kind": "soliton"},
  "dim": 1, "s": 0.5, "a": 0.0,
  "dt0": 1e-3, "dt_rule": "fixed", "cfl_c": 0.01,
  "t_end": 0.05, "grad_stop": 1e6, "sample_every": 5,
  "expectations": [{"check": "mass_drift", "max": 1e-10}, {"check": "outcome", "is": "completed"}]
}"#;

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = fnls(d, &["simulate", "--spec", "missing.json", "--out", "o"]);
    assert_eq!(code(&o), 2);

    fs::write(d.join("bad.json"), "{\n  \"name\": \"x\",\n  \"n\": 64,\n").unwrap();
    let o = fnls(d, &["simulate", "--spec", "bad.json", "--out", "o"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4"), "{err}");

    fs::write(d.join("field.json"), r#"{"name": "x", "n": 64, "box": 8, "dim": 1}"#).unwrap();
    let o = fnls(d, &["simulate", "--spec", "field.json", "--out", "o"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing field"));

    assert_eq!(code(&fnls(d, &["explode"])), 2);
    assert_eq!(code(&fnls(d, &["simulate", "--preset", "nope", "--out", "o"])), 2);
    assert_eq!(code(&fnls(d, &["sweep", "--out", "o"])), 2);
    assert_eq!(code(&fnls(d, &["sweep", "--spec", "x.json", "--workers", "0", "--out", "o"])), 2);
}

#[test]
fn simulate_writes_hashed_reproducible_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("tiny.json"), TINY).unwrap();
    let o = fnls(d, &["simulate", "--spec", "tiny.json", "--out", "a", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = fnls(d, &["simulate", "--spec", "tiny.json", "--out", "a2", "--seed", "3"]);
    assert_eq!(code(&o), 0);

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("a/manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    let names: Vec<&str> = files.iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert!(names.contains(&"tiny.csv") && names.contains(&"tiny.json"), "{names:?}");
    assert!(names.iter().any(|n| n.ends_with(".fnls")));
    for f in files {
        let bytes = fs::read(d.join("a").join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap(), bytes.len() as u64);
        assert_eq!(f["sha256"].as_str().unwrap().len(), 64);
    }
    let hashes = |m: &str| -> Vec<String> {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join(m)).unwrap()).unwrap();
        v["files"].as_array().unwrap().iter().map(|f| f["sha256"].as_str().unwrap().to_string()).collect()
    };
    let h1 = hashes("a/manifest.json");
    assert_eq!(h1, hashes("a2/manifest.json"));
    let o = fnls(d, &["simulate", "--spec", "tiny.json", "--out", "a", "--seed", "3"]);
    assert_eq!(code(&o), 0);
    assert_eq!(hashes("a/manifest.json"), h1);
}

#[test]
fn failed_expectation_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("strict.json"), TINY.replace("\"is\": \"completed\"", "\"is\": \"blowup-suspected\"")).unwrap();
    let o = fnls(d, &["simulate", "--spec", "strict.json", "--out", "o"]);
    assert_eq!(code(&o), 1);
    assert!(d.join("o/manifest.json").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn ground_state_is_reused_from_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = fnls(d, &["groundstate", "--dim", "1", "--n", "256", "--box", "16", "--out", "gs"]);
    assert_eq!(code(&o), 0);
    assert!(d.join("gs/q_d1_n256_L16.fnls").exists());
    assert!(d.join("gs/q_d1_n256_L16.json").exists());
    let o = fnls(d, &["simulate", "--spec", "tiny.json", "--out", "o"]);
    assert_eq!(code(&o), 2);
    fs::write(d.join("tiny.json"), TINY).unwrap();
    let o = fnls(d, &["simulate", "--spec", "tiny.json", "--out", "o"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cache hit"));
}

#[test]
fn sweep_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sweep = TINY.replace(
        "\"expectations\"",
        "\"axes\": {\"s\": [0.5], \"a\": [0.1, 0.0], \"delta\": [0.0, 0.05]},\n  \"expectations\"",
    );
    fs::write(d.join("sweep.json"), sweep).unwrap();
    let o = fnls(d, &["sweep", "--spec", "sweep.json", "--out", "s1", "--workers", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = fnls(d, &["sweep", "--spec", "sweep.json", "--out", "s2", "--workers", "1"]);
    assert_eq!(code(&o), 0);
    let t1 = fs::read(d.join("s1/tiny_sweep.csv")).unwrap();
    assert_eq!(t1, fs::read(d.join("s2/tiny_sweep.csv")).unwrap());
    let text = String::from_utf8(t1).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "s,a,delta,outcome,t_star,alpha_fit,loglog_gain,max_identity_residual");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0.5,0,0,completed"));

    let o = fnls(d, &["report", "s1/tiny_sweep.csv", "--out", "r"]);
    assert_eq!(code(&o), 0);
    let long = fs::read_to_string(d.join("r/tiny_sweep_long.csv")).unwrap();
    assert!(long.starts_with("s,a,delta,outcome,metric,value"));
    assert!(long.lines().any(|l| l.contains("max_identity_residual")));
    assert!(d.join("r/manifest.json").exists());
    assert_eq!(code(&fnls(d, &["report", "nothing.csv", "--out", "r"])), 2);
}

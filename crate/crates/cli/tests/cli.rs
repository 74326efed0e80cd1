use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_patternforge"));
    c.env_remove("PATTERNFORGE_OUT");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "failed: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

/// The JSON error record is the last stderr line.
fn error_record(o: &Output) -> Value {
    let err = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(err.lines().last().unwrap()).unwrap()
}

const TARGET: &str = r#"{"levels": [0.5, -0.5], "breakpoints": [0.0, 0.5, 1.0]}"#;

#[test]
fn eigen_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&run(&["eigen", "--mu", "1", "--grid", "4096"], dir.path()));
    let expected = std::f64::consts::PI.powi(2) - 2.0;
    assert!((v["lambda1"].as_f64().unwrap() - expected).abs() < 1e-3, "{v}");
}

#[test]
fn synthesize_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("t.json"), TARGET).unwrap();
    let v = stdout_json(&run(&["synthesize-div", "--target", "t.json", "--eps", "0.1", "--out", "sd"], dir.path()));
    assert!(v["l2_error"].as_f64().unwrap() <= 0.1);
    for f in ["state.csv", "profile.csv", "report.json", "manifest.json"] {
        assert!(dir.path().join("sd").join(f).exists(), "{f} missing");
    }
    assert!(!dir.path().join("sd/state.svg").exists());
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sd/report.json")).unwrap()).unwrap();
    assert!(report["l2_error"].as_f64().unwrap() <= 0.1);

    let ok = run(&["verify", "--state", "sd/state.csv", "--bundle", "sd"], dir.path());
    assert_eq!(ok.status.code(), Some(0));

    fs::write(dir.path().join("sd/report.json"), "{}").unwrap();
    let bad = run(&["verify", "--bundle", "sd"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    let rec = error_record(&bad);
    assert_eq!(rec["error"]["code"], "verification_failed");
    assert_eq!(rec["report"]["bundle"]["mismatched"][0], "report.json");
}

#[test]
fn plots_only_on_request() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("t.json"), TARGET).unwrap();
    stdout_json(&run(&["--plot", "synthesize-div", "--target", "t.json", "--grid", "257", "--out", "sd"], dir.path()));
    let svg = fs::read_to_string(dir.path().join("sd/state.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sd/manifest.json")).unwrap()).unwrap();
    assert!(manifest["files"].as_array().unwrap().iter().all(|f| !f["name"].as_str().unwrap().ends_with(".svg")));
}

#[test]
fn usage_errors_exit_two_with_record() {
    let dir = tempfile::tempdir().unwrap();
    for args in [vec!["bogus"], vec!["eigen", "--nope"], vec!["eigen", "--mu", "-1"], vec!["synthesize-div"]] {
        let o = run(&args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert_eq!(error_record(&o)["error"]["code"], "usage", "{args:?}");
    }
    let o = run(&["eigen", "--mu", "-1"], dir.path());
    assert_eq!(error_record(&o)["error"]["parameter"], "mu");
}

#[test]
fn domain_errors_exit_one_with_record() {
    let dir = tempfile::tempdir().unwrap();
    // |f(0.5)|/2 = 0.1875 against |f(-0.9)|/2 = 0.0855
    fs::write(dir.path().join("bad.json"), r#"{"levels": [0.5, -0.9], "breakpoints": [0.0, 0.5, 1.0]}"#).unwrap();
    let o = run(&["synthesize-div", "--target", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let rec = error_record(&o);
    assert_eq!(rec["error"]["code"], "infeasible");
    assert!(rec["error"]["message"].as_str().unwrap().contains("momentum"));

    let o = run(&["verify", "--state", "missing.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_record(&o)["error"]["code"], "io");
}

#[test]
fn config_values_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[eigen]\nmu = 10\ngrid = 512\n").unwrap();
    let v = stdout_json(&run(&["--config", "c.toml", "eigen"], dir.path()));
    assert_eq!(v["mu"], 10.0);
    assert_eq!(v["grid"], 512);
    let v = stdout_json(&run(&["--config", "c.toml", "eigen", "--mu", "2"], dir.path()));
    assert_eq!(v["mu"], 2.0);
    assert_eq!(v["grid"], 512);

    fs::write(dir.path().join("typo.toml"), "[eigen]\nmuu = 1\n").unwrap();
    let o = run(&["--config", "typo.toml", "eigen"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["error"]["parameter"], "config");
}

#[test]
fn output_root_from_environment_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = |root: &str| {
        let o = bin()
            .args(["phase", "--mu", "0.5", "--m", "0.3", "--mx=-0.1"])
            .env("PATTERNFORGE_OUT", root)
            .current_dir(dir.path())
            .output()
            .unwrap();
        stdout_json(&o);
        fs::read_to_string(dir.path().join(root).join("phase/manifest.json")).unwrap()
    };
    assert_eq!(manifest("a"), manifest("b"));
}

#[test]
fn path_archive_has_one_file_per_member() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("t.json"), TARGET).unwrap();
    stdout_json(&run(&["synthesize-div", "--target", "t.json", "--grid", "257", "--out", "sd"], dir.path()));
    let v = stdout_json(&run(&["path", "--from", "sd/state.csv", "--steps", "6", "--out", "p"], dir.path()));
    assert_eq!(v["members"], 7);
    let members = fs::read_dir(dir.path().join("p"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("member_"))
        .count();
    assert_eq!(members, 7);
    assert!(dir.path().join("p/manifest.json").exists());

    let s = stdout_json(&run(&["staircase", "--path", "p", "--snapshots", "1", "--out", "st"], dir.path()));
    assert_eq!(s["constraint_violation"], 0.0);
    assert!(s["final_error"].as_f64().unwrap() < 1e-2);
}

#[test]
fn seeded_simulation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("t.json"), TARGET).unwrap();
    stdout_json(&run(&["synthesize-div", "--target", "t.json", "--grid", "129", "--out", "sd"], dir.path()));
    let sim = |out: &str| {
        let args =
            ["simulate", "--hold", "sd/state.csv", "--grid", "129", "--seed", "7", "--duration", "0.1", "--out", out];
        let v = stdout_json(&run(&args, dir.path()));
        assert_eq!(v["constraint_violation"], 0.0);
        fs::read_to_string(dir.path().join(out).join("final_state.csv")).unwrap()
    };
    assert_eq!(sim("s1"), sim("s2"));
}

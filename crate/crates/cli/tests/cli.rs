use std::path::Path;
use std::process::{Command, Output};

use hybridcomp::SystemConfig;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hybridcomp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn small_config(dir: &Path) -> String {
    let config = SystemConfig {
        num_slots: 4,
        horizon: 4.0,
        num_aircomp: 2,
        num_edge: 2,
        data_demand: 1e5,
        ..SystemConfig::desk()
    };
    let path = dir.join("small.toml");
    std::fs::write(&path, config.to_toml_string()).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn simulate_writes_artifacts_and_inspect_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_dir = dir.path().join("run");
    let out = run(&["simulate", "--config", &cfg, "--seed", "4", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["method"], "bcd");
    assert!(summary["energy_J"]["total"].as_f64().unwrap() > 0.0);
    for f in ["scenario.json", "decisions.json", "trace.jsonl", "config.toml"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let out = run(&["inspect", out_dir.join("trace.jsonl").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("total [J]"));
    assert!(text.contains("termination"));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = run(&["simulate", "--config", &cfg, "--seed", "9", "--method", "equal"]);
    let b = run(&["simulate", "--config", &cfg, "--seed", "9", "--method", "equal"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn sweep_emits_csv_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let spec = dir.path().join("spec.toml");
    std::fs::write(
        &spec,
        "parameter = \"data_demand_Dk\"\nvalues = [5e4, 1e5]\nmethods = [\"bcd\", \"equal\"]\nseeds = [1, 2]\nrecord_timing = false\n",
    )
    .unwrap();
    let out_dir = dir.path().join("sweep");
    let out = run(&[
        "sweep",
        spec.to_str().unwrap(),
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("sweep_data_demand_Dk.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
    assert!(csv.starts_with("method,seed,swept_param,swept_value,"));
    assert!(out_dir.join("energy_vs_data_demand_Dk.svg").exists());
    assert!(out_dir.join("energy_vs_data_demand_Dk.py").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    // unknown key
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, SystemConfig::desk().to_toml_string() + "warp_factor = 9\n").unwrap();
    assert_eq!(code(&run(&["simulate", "--config", bad.to_str().unwrap()])), 3);

    // invalid value
    let neg = SystemConfig {
        horizon: -1.0,
        ..SystemConfig::desk()
    };
    std::fs::write(&bad, neg.to_toml_string()).unwrap();
    assert_eq!(code(&run(&["simulate", "--config", bad.to_str().unwrap()])), 3);

    assert_eq!(code(&run(&["simulate", "--method", "magic"])), 3);
    assert_eq!(code(&run(&["simulate", "--preset", "huge"])), 3);
    assert_eq!(code(&run(&["frobnicate"])), 3);
    assert_eq!(code(&run(&["--help"])), 0);

    // demand no schedule can carry
    let heavy = SystemConfig {
        num_slots: 4,
        horizon: 4.0,
        num_aircomp: 2,
        num_edge: 2,
        data_demand: 1e12,
        ..SystemConfig::desk()
    };
    let heavy_path = dir.path().join("heavy.toml");
    std::fs::write(&heavy_path, heavy.to_toml_string()).unwrap();
    let out = run(&["simulate", "--config", heavy_path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));

    // missing files
    let missing = dir.path().join("nope.toml");
    assert_eq!(code(&run(&["simulate", "--config", missing.to_str().unwrap()])), 4);
    assert_eq!(code(&run(&["inspect", missing.to_str().unwrap()])), 4);

    // output directory blocked by a regular file
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let cfg = small_config(dir.path());
    let out = run(&["simulate", "--config", &cfg, "--method", "equal", "--out", blocker.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
}

#[test]
fn sweep_spec_errors_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    std::fs::write(&spec, "parameter = \"horizon_T\"\nvalues = [20.0, 10.0, 30.0]\nmethods = [\"bcd\"]\nseeds = [0]\n").unwrap();
    assert_eq!(code(&run(&["sweep", spec.to_str().unwrap()])), 3);
    std::fs::write(&spec, "parameter = \"gamma\"\nvalues = [1.0]\nmethods = [\"bcd\"]\nseeds = [0]\n").unwrap();
    assert_eq!(code(&run(&["sweep", spec.to_str().unwrap()])), 3);
}

#[test]
fn oracle_checks_pass() {
    let out = run(&["oracle", "--count", "3", "--seed", "5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.matches("PASS").count(), 3);
}

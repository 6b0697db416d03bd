use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use xicp::experiment::ExperimentConfig;

fn xicp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xicp")).args(args).env_remove("XICP_OUT").output().expect("binary runs")
}

fn presets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// A few metres of straight travel in the box room.
fn short_config(dir: &Path) -> PathBuf {
    let text = r#"
map_voxel = 0.1

[world]
kind = "box-room"
box_extents = [12.0, 8.0, 3.0]
spacing = 0.15

[sensor]
max_points = 3000

[trajectory]
waypoints = [[-2.0, 0.0, 1.0, 0.0], [1.0, 0.0, 1.0, 0.0]]
linear_speed = 0.5
scan_rate = 1.0
"#;
    let path = dir.join("short.toml");
    fs::write(&path, text).unwrap();
    path
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn unknown_handler_is_a_usage_error() {
    let out = xicp(&["register", "--handler", "bogus"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(code(&xicp(&["fly"])), 2);
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "map_voxel = -1.0\n").unwrap();
    let out = xicp(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    fs::write(&path, "[world]\nkind = \"moon\"\n").unwrap();
    assert_eq!(code(&xicp(&["simulate", "--config", path.to_str().unwrap()])), 2);
    assert_eq!(code(&xicp(&["simulate", "--config", dir.path().join("missing.toml").to_str().unwrap()])), 2);
}

#[test]
fn missing_run_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let out = xicp(&["evaluate", a.to_str().unwrap(), a.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn presets_parse() {
    let mut seen = 0;
    for entry in fs::read_dir(presets()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let text = fs::read_to_string(&path).unwrap();
            ExperimentConfig::from_toml(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert_eq!(seen, 5);
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let sim = dir.path().join("sim");
    let out = xicp(&["simulate", "--config", cfg, "--seed", "3", "--out", sim.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["world.ply", "ground_truth.csv", "config.toml", "scans/scan_00000.ply"] {
        assert!(sim.join(f).is_file(), "{f}");
    }

    let mut runs = Vec::new();
    for handler in ["none", "xicp"] {
        let run = dir.path().join(handler);
        let out = xicp(&["register", "--config", cfg, "--seed", "3", "--handler", handler, "--out", run.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        for f in ["trajectory.csv", "localizability.csv", "frames.csv", "map.ply"] {
            assert!(run.join(f).is_file(), "{f}");
        }
        let out = xicp(&["evaluate", run.to_str().unwrap(), sim.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert!(run.join("metrics.csv").is_file() && run.join("map_error.csv").is_file());
        runs.push(run);
    }

    let table = dir.path().join("table");
    let out = Command::new(env!("CARGO_BIN_EXE_xicp"))
        .args(["compare", runs[0].to_str().unwrap(), runs[1].to_str().unwrap()])
        .env("XICP_OUT", &table)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(table.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("none,") && lines[2].starts_with("xicp,"));
}

#[test]
fn register_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let run = dir.path().join(name);
        let out = xicp(&["register", "--config", cfg.to_str().unwrap(), "--handler", "xs-icp", "--out", run.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(run);
    }
    for f in ["trajectory.csv", "localizability.csv", "frames.csv", "map.ply"] {
        assert_eq!(fs::read(outputs[0].join(f)).unwrap(), fs::read(outputs[1].join(f)).unwrap(), "{f}");
    }
}

use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_saddle-escape");

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).env_remove("SADDLE_ESCAPE_WORKERS").output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

const SCAN: &str = "[landscape]\nname = \"quadratic_saddle\"\n[scan]\nepsilon_grid = [1e-2, 1e-3, 1e-4]\nreplicas = 200\ndt = 1e-3\n";

#[test]
fn passing_scan_exits_zero_and_is_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SCAN);
    let cfg = cfg.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let (code, stdout, _) = run(&["exit-time-scan", "--config", cfg, "--workers", "1", "--out", a.to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("PASS slope_law"));
    let (code, _, _) = run(&["exit-time-scan", "--config", cfg, "--workers", "3", "--out", b.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(fs::read(a.join("results.csv")).unwrap(), fs::read(b.join("results.csv")).unwrap());
    for f in ["verdicts.json", "plot.gp", "manifest.json"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["dt_rule"]["rule"], "fixed");
    assert_eq!(manifest["workers"], 1);
}

#[test]
fn rerun_differs_only_in_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SCAN);
    let outs: Vec<_> = ["r1", "r2"]
        .iter()
        .map(|d| {
            let out = dir.path().join(d);
            let (code, _, _) = run(&["exit-time-scan", "--config", cfg.to_str().unwrap(), "--workers", "2", "--seed", "9", "--out", out.to_str().unwrap()]);
            assert_eq!(code, 0);
            out
        })
        .collect();
    for f in ["results.csv", "verdicts.json", "plot.gp"] {
        assert_eq!(fs::read(outs[0].join(f)).unwrap(), fs::read(outs[1].join(f)).unwrap(), "{f}");
    }
    let strip = |p: &Path| {
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("manifest.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("unix_time");
        v
    };
    assert_eq!(strip(&outs[0]), strip(&outs[1]));
    assert_eq!(strip(&outs[0])["seed"], 9);
}

#[test]
fn failing_verdict_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SCAN}tol = 1e-6\n"));
    let out = dir.path().join("o");
    let (code, stdout, _) = run(&["exit-time-scan", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 1, "{stdout}");
    assert!(stdout.contains("FAIL slope_law"));
}

#[test]
fn errors_exit_two_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scan]\nreplicas = 10\n");
    let (code, _, stderr) = run(&["exit-time-scan", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 2);
    let v: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(v["error"], "config");
    assert!(v["message"].as_str().unwrap().contains("replicas"));

    let cfg = write_config(dir.path(), "[scan]\nepsilonn = [0.1]\n");
    let (code, _, stderr) = run(&["exit-time-scan", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("epsilon_grid"));
}

#[test]
fn non_scan_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[landscape]\nname = \"saddle_chain\"\nk = 2\n[simulate]\nreplicas = 3\n[flow]\nt_max = 60.0\n");
    for cmd in ["validate-landscape", "simulate", "flow"] {
        let out = dir.path().join(cmd);
        let (code, stdout, stderr) = run(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0, "{cmd}: {stdout} {stderr}");
        assert!(out.join("results.csv").exists());
    }
}

#[test]
fn worker_env_is_used_without_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SCAN);
    let out = dir.path().join("o");
    let status = Command::new(BIN)
        .args(["exit-time-scan", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env("SADDLE_ESCAPE_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["workers"], 2);
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phs-lab"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gas_piston_cycle_reaches_carnot_efficiency() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cycle.json");
    let csv = dir.path().join("cycle.csv");
    let cfg = configs().join("gas_piston_carnot.cfg");
    let status = run(&[
        "carnot",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let report = json(&out);
    let eta = report["efficiency_measured"].as_f64().unwrap();
    assert!((eta - 0.25).abs() < 1e-3, "efficiency {eta}");
    let text = std::fs::read_to_string(&csv).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("t,") && header.ends_with(",H,E_port1,E_port2,phase"), "{header}");
    // Four phases of 1000 steps each, plus the initial sample and the header.
    assert_eq!(text.lines().count(), 4002);
}

#[test]
fn storage_lmi_reports_unique_certificate() {
    let output = run(&["storage-lmi", "--m", "2", "--k", "3", "--d", "1", "--audit-runs", "10"]);
    assert!(output.status.success());
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(report["Q"], serde_json::json!([[3.0, 0.0], [0.0, 0.5]]));
    assert_eq!(report["unique"], true);
    assert_eq!(report["negative_semidefinite"], true);
}

#[test]
fn missing_model_kind_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[model]\nm = 1\n[run]\nduration = 1\nstep = 0.1\n").unwrap();
    let output = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("`kind`") && stderr.contains("[model]"), "{stderr}");
}

#[test]
fn malformed_seed_is_a_config_error() {
    let output = bin()
        .args(["storage-lmi", "--audit-runs", "1"])
        .env("PHS_LAB_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn failed_audit_still_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.cfg");
    std::fs::write(
        &cfg,
        "[model]\nkind = msd\n[initial]\nstate = 1, 0\n[input]\nkind = sine\namplitude = 1\nfrequency = 0.5\n\
         [run]\nduration = 5\nstep = 0.1\n[audit]\nmax_balance_residual = 1e-15\n",
    )
    .unwrap();
    let out = dir.path().join("report.json");
    let output = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(4));
    assert!(json(&out)["balance_residual"].as_f64().unwrap().abs() > 1e-15);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("actuator_carnot.cfg");
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("r{i}.json"));
        let csv = dir.path().join(format!("r{i}.csv"));
        let status = run(&[
            "carnot",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--csv",
            csv.to_str().unwrap(),
        ]);
        assert!(status.status.success());
        outputs.push((std::fs::read(&out).unwrap(), std::fs::read(&csv).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);

    let seeded = |seed: &str| {
        bin()
            .args(["ida-pbc"])
            .env("PHS_LAB_SEED", seed)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(seeded("7"), seeded("7"));
}

#[test]
fn router_without_kick_stays_dead() {
    let output = run(&["router", "--no-kick"]);
    assert!(output.status.success());
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(report["energy_moved"], 0.0);
    assert!(report["half_transfer_time"].is_null());
}

#[test]
fn every_shipped_config_parses_and_runs() {
    let cases = [
        ("simulate", "msd_sine.cfg"),
        ("simulate", "heat_exchanger.cfg"),
        ("storage-bounds", "scalar_bounds.cfg"),
        ("storage-bounds", "msd_bounds.cfg"),
        ("ida-pbc", "ida_pbc.cfg"),
        ("audit", "integrator_order.cfg"),
        ("audit", "heat_exchanger.cfg"),
        ("audit", "legendre_actuator.cfg"),
    ];
    for (cmd, file) in cases {
        let cfg = configs().join(file);
        let output = run(&[cmd, "--config", cfg.to_str().unwrap()]);
        assert!(
            output.status.success(),
            "{cmd} {file}: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    }
}

mod common;

use std::path::Path;
use std::process::{Command, Output};

use hspace::cli::RunReport;
use hspace::config::{Instance, InstanceConfig};
use hspace::verify::{signature_probe, SignatureProbe};

fn hspace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hspace"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> String {
    common::configs_dir().join(name).display().to_string()
}

fn read_report(dir: &Path) -> RunReport {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn run_in(dir: &Path, cmd: &str, cfg: &str, extra: &[&str]) -> (i32, RunReport) {
    let out = dir.display().to_string();
    let cfg = config(cfg);
    let mut args = vec![cmd, "--config", cfg.as_str(), "--out", out.as_str()];
    args.extend_from_slice(extra);
    let o = hspace(&args);
    (o.status.code().unwrap(), read_report(dir))
}

#[test]
fn r1_verify_passes_and_echoes_config() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, report) = run_in(tmp.path(), "verify", "r1.toml", &[]);
    assert_eq!(code, 0);
    assert_eq!(report.exit_status, 0);
    assert!(report.checks.iter().all(|c| c.passed));
    let names: Vec<&str> = report.checks.iter().map(|c| c.check.as_str()).collect();
    assert!(names.contains(&"eisenhart") && names.contains(&"killing"));
    assert_eq!(
        names.iter().filter(|n| n.starts_with("linearity")).count(),
        8
    );
    let original = InstanceConfig::load(Path::new(&config("r1.toml")))
        .unwrap()
        .config;
    assert_eq!(report.config, original);
}

#[test]
fn perturbed_h_fails_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, report) = run_in(tmp.path(), "verify", "perturbed_h.toml", &[]);
    assert_eq!(code, 1);
    let e = &report.checks[0];
    assert!(e.check.starts_with("eisenhart(h22"));
    assert!(!e.passed && e.max_rel_residual > 1e-4);
}

#[test]
fn zero_a_config_is_rejected_with_the_constraint() {
    let o = hspace(&["verify", "--config", &config("invalid_a0.toml")]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("hspace.a"), "{err}");
    assert!(err.contains("line 5"), "{err}");
    assert!(err.contains("nonzero when epsilon_tilde = 0"), "{err}");
}

#[test]
fn command_line_errors_are_config_errors() {
    assert_eq!(hspace(&["verify"]).status.code(), Some(2));
    assert_eq!(hspace(&["bogus"]).status.code(), Some(2));
    let cfg = config("r1.toml");
    assert_eq!(
        hspace(&["verify", "--config", &cfg, "--tol", "-1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        hspace(&["verify", "--config", &cfg, "--jobs", "0"])
            .status
            .code(),
        Some(2)
    );
    // geodesic needs a [geodesic] table
    assert_eq!(
        hspace(&["geodesic", "--config", &config("c0.toml")])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn curvature_verdicts_agree_on_reference_configs() {
    for (name, constant) in [
        ("c0.toml", true),
        ("r1.toml", false),
        ("nonconstant_f5.toml", false),
    ] {
        let tmp = tempfile::tempdir().unwrap();
        let (code, report) = run_in(tmp.path(), "curvature", name, &[]);
        assert_eq!(code, 0, "{name}");
        let c = report.curvature.unwrap();
        assert_eq!(c.agreement, Some(true), "{name}");
        assert_eq!(c.direct.is_constant, constant, "{name}");
    }
}

#[test]
fn flat_config_signature_and_zero_drift() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, report) = run_in(tmp.path(), "signature", "flat.toml", &[]);
    assert_eq!(code, 0);
    let s = report.signature.unwrap();
    assert!(s.target_found);
    assert_eq!(s.configured.constant, Some([2, 4]));

    let tmp = tempfile::tempdir().unwrap();
    let (code, report) = run_in(tmp.path(), "geodesic", "flat.toml", &[]);
    assert_eq!(code, 0);
    let g = report.geodesic.unwrap();
    assert_eq!(g.drift.len(), 1);
    assert_eq!(g.drift[0].max_drift, 0.0);
    let csv = std::fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2,x3,x4,x5,x6,v1,v2,v3,v4,v5,v6,Q_g\n"));
}

#[test]
fn r1_geodesic_writes_trajectory_with_both_integrals() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, report) = run_in(tmp.path(), "geodesic", "r1.toml", &[]);
    assert_eq!(code, 0);
    let g = report.geodesic.unwrap();
    assert!(g.drift.iter().all(|d| d.max_drift <= 1e-6));
    let csv = std::fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("t,x1,x2,x3,x4,x5,x6,v1,v2,v3,v4,v5,v6,Q_g,Q_h")
    );
    assert_eq!(lines.count(), g.accepted_steps + 1);
}

#[test]
fn boundary_geodesic_halts_gracefully() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, report) = run_in(tmp.path(), "geodesic", "boundary.toml", &[]);
    assert_eq!(code, 3);
    let g = report.geodesic.unwrap();
    let halt = g.halt.expect("halt diagnostics");
    assert!(halt.t > 0.0 && halt.t < 50.0);
    assert_eq!(g.final_state.t, halt.t);
    assert!(!report.errors.is_empty());
    assert!(tmp.path().join("trajectory.csv").exists());
}

#[test]
fn seed_override_changes_the_sample_and_is_echoed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (_, ra) = run_in(a.path(), "verify", "c0.toml", &["--seed", "1"]);
    let (_, rb) = run_in(b.path(), "verify", "c0.toml", &["--seed", "2"]);
    assert_eq!(ra.config.sampling.as_ref().unwrap().seed, 1);
    assert_eq!(rb.config.sampling.as_ref().unwrap().seed, 2);
    assert_ne!(ra.checks[0].sample, rb.checks[0].sample);
}

#[test]
fn tol_override_applies_to_analytic_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, report) = run_in(tmp.path(), "verify", "c0.toml", &["--tol", "1e-30"]);
    assert_eq!(report.tolerances.eisenhart, 1e-30);
    assert_eq!(report.tolerances.eisenhart_fd, hspace::verify::FD_TOL);
    // C0 residuals are tiny but not all exactly zero
    assert!(code == 0 || code == 1);
}

#[test]
fn reports_are_deterministic_modulo_timestamp() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (_, mut ra) = run_in(
        a.path(),
        "signature",
        "r1.toml",
        &["--seed", "9", "--jobs", "1"],
    );
    let (_, mut rb) = run_in(
        b.path(),
        "signature",
        "r1.toml",
        &["--seed", "9", "--jobs", "3"],
    );
    ra.timestamp = 0;
    rb.timestamp = 0;
    assert_eq!(
        serde_json::to_string(&ra).unwrap(),
        serde_json::to_string(&rb).unwrap()
    );
}

#[test]
fn r1_signature_probe_matches_golden_file() {
    let loaded = InstanceConfig::load(Path::new(&config("r1.toml"))).unwrap();
    let Instance::HSpace(params) = loaded.instance else {
        panic!("r1.toml describes an hspace instance");
    };
    let sample = loaded.config.sample_points().unwrap();
    let probe = signature_probe(&params, &sample, [2, 4]).unwrap();
    let golden: SignatureProbe =
        serde_json::from_str(include_str!("golden/r1_signature.json")).unwrap();
    assert_eq!(probe, golden);
    // (2, 4) exactly when e5 = +1 and e6 = -1
    assert_eq!(probe.matching.len(), 4);
    assert!(probe
        .matching
        .iter()
        .all(|s| s.e5.value() == 1.0 && s.e6.value() == -1.0));
}

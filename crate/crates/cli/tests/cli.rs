//! End-to-end tests of the command line, mostly in-process through
//! `run_cli`, once through the built binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use parafem_cli::run_cli;

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["parafem"];
    argv.extend_from_slice(args);
    let code = run_cli(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

#[cfg(unix)]
fn fake_gmsh(dir: &Path) -> PathBuf {
    use std::os::unix::fs::PermissionsExt;
    let path = dir.join("gmsh");
    fs::write(&path, "#!/bin/sh\necho 4.11.1 >&2\n").unwrap();
    fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
    path
}

#[cfg(unix)]
#[test]
fn check_reports_the_generator_version() {
    let dir = tempfile::tempdir().unwrap();
    let gmsh = fake_gmsh(dir.path());
    let cfg = write_config(dir.path(), &format!("[mesh]\ngmsh = {:?}\n", gmsh.to_str().unwrap()));
    let (code, out, err) = cli(&["check", "--generator", "external", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("gmsh 4.11.1"), "{out}");
    assert!(out.contains("generator: external"), "{out}");
}

#[test]
fn missing_external_generator_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[mesh]\ngmsh = \"/nonexistent/gmsh\"\n");
    let cfg = cfg.to_str().unwrap();
    let out_dir = dir.path().join("out");
    let (code, _, err) = cli(&["check", "--generator", "external", "--config", cfg]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error:"), "{err}");
    let (code, _, err) = cli(&[
        "run",
        "rotation",
        "--generator",
        "external",
        "--config",
        cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("--generator fallback"), "{err}");
    // the fallback generator does not need gmsh
    let (code, out, _) = cli(&["check", "--config", cfg]);
    assert_eq!(code, 0);
    assert!(out.contains("gmsh unavailable"), "{out}");
}

#[test]
fn bad_arguments_are_usage_errors() {
    assert_eq!(cli(&["run"]).0, 2);
    assert_eq!(cli(&["frobnicate"]).0, 2);
    assert_eq!(cli(&["run", "rotation", "--etol", "tiny"]).0, 2);
    assert_eq!(cli(&["run", "rotation", "--generator", "mesher"]).0, 2);
    let (code, _, err) = cli(&["run", "vortex", "--out", "/nonexistent"]);
    assert_eq!(code, 1);
    assert!(err.contains("vortex"), "{err}");
    let (code, _, err) = cli(&["run", "rotation", "--theta-r", "1.5", "--out", "/nonexistent"]);
    assert_eq!(code, 1);
    assert!(err.contains("theta_r"), "{err}");
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("baseline"));
}

#[test]
fn report_fits_a_synthetic_power_law() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("records.csv");
    let mut text = String::from("# schema: records/v1\nstep,k,nov,eta_global,itero,adam_epochs,lbfgs_iters,wall_ms\n");
    for (k, n) in [100u32, 400, 1600, 6400].iter().enumerate() {
        let eta = 3.0 / (*n as f64).sqrt();
        text.push_str(&format!("0,{},{n},{eta:e},1,0,0,5\n", k + 1));
    }
    fs::write(&records, text).unwrap();
    let out_dir = dir.path().join("report");
    let (code, out, err) = cli(&["report", records.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("all iterations -0.5000"), "{out}");
    for f in ["report.csv", "estimator_vs_nov.dat", "convergence.svg"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }

    // the report CSV reads back to the same summary
    let again = dir.path().join("again");
    let (code, out2, _) = cli(&[
        "report",
        out_dir.join("report.csv").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(out, out2);

    let (code, _, err) = cli(&["report", dir.path().join("none.csv").to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("cannot open"), "{err}");
}

#[test]
fn short_run_writes_records_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[adapt]\nt_end = 0.1\netol = 0.5\n[surrogate]\nadam_epochs = 300\nwarm_adam_epochs = 50\nlbfgs_max_iters = 20\n[mesh]\nmax_vertices = 3000\n",
    );
    let out_dir = dir.path().join("out");
    let (code, out, err) = cli(&[
        "run",
        "splitting",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("step 0 (t = 0.000)"), "{out}");
    assert!(out.contains("step 1 (t = 0.100)"), "{out}");

    let records = fs::read_to_string(out_dir.join("records.csv")).unwrap();
    let mut lines = records.lines();
    assert_eq!(lines.next(), Some("# schema: records/v1"));
    assert_eq!(
        lines.next(),
        Some("step,k,nov,eta_global,itero,adam_epochs,lbfgs_iters,wall_ms")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.iter().all(|r| r.len() == 8));
    for step in ["0", "1"] {
        let n = rows.iter().filter(|r| r[0] == step).count();
        assert!((1..=7).contains(&n), "step {step}: {n} iterations");
    }
    // step 1 trains the surrogate of the t = 0 solution
    assert!(rows.iter().any(|r| r[0] == "1" && r[5] != "0"));

    let report = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert!(report.contains("step,k,nov,grad_error,eta_global,eff_index"));
    assert!(out_dir.join("error_vs_nov.dat").exists());
}

#[test]
fn binary_prints_its_version() {
    let out = Command::new(env!("CARGO_BIN_EXE_parafem"))
        .arg("--version")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("parafem "));
    let out = Command::new(env!("CARGO_BIN_EXE_parafem"))
        .arg("report")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

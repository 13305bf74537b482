use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crossover-tmle"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn simulate_then_estimate_with_known_randomization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        "seed = 11\n[simulation]\nn = 2000\n[simulate]\ndiscretize = 0.41\n\
         [nuisance]\ntreatment = { known = 0.5 }\n[estimator]\ns1_star = 1.0\n",
    );
    let sim = dir.path().join("sim");
    run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--output", sim.to_str().unwrap()]);
    assert!(sim.join("manifest.json").exists());
    let est = dir.path().join("est");
    let stdout = run_ok(&[
        "estimate",
        "--config",
        cfg.to_str().unwrap(),
        "--input",
        sim.join("dataset.csv").to_str().unwrap(),
        "--output",
        est.to_str().unwrap(),
    ]);
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert!(report["diagnostics"]["eif_mean_max_abs"].as_f64().unwrap() < 1e-8);
    assert_eq!(report["mode"], "tmle");
    assert_eq!(report["seed"], 11);
    let infl = std::fs::read_to_string(est.join("influence.csv")).unwrap();
    assert_eq!(infl.lines().count(), 2001);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("cov{k}"));
        run_ok(&[
            "coverage",
            "--output",
            out.to_str().unwrap(),
            "--seed",
            "5",
            "--reps",
            "3",
            "--bandwidth",
            "0.2",
            "--s1-star",
            "0.6",
            "--workers",
            "1",
        ]);
        outputs.push(std::fs::read(out.join("coverage.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert!(text.starts_with("s1_star,h,n,reps,bias_truth,bias_smoothed"));
}

#[test]
fn errors_are_json_on_stderr_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    write(&input, "w,a,y,s,s_c\n0.1,2,0,1,\n0.2,0,0,,1\n");
    let out = bin()
        .args(["estimate", "--input", input.to_str().unwrap(), "--output"])
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(out.stdout.is_empty());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "data");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(&cfg, "[estimator]\nmodes = \"tmle\"\n");
    let out = bin().args(["simulate", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "config");
}

#[test]
fn diagnose_reports_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    run_ok(&["simulate", "--output", sim.to_str().unwrap(), "--seed", "3"]);
    let stdout = run_ok(&[
        "diagnose",
        "--input",
        sim.join("dataset.csv").to_str().unwrap(),
        "--mode",
        "continuous_cv_tmle",
        "--s1-star",
        "0.6",
        "--bandwidth",
        "0.2",
        "--output",
        dir.path().join("d").to_str().unwrap(),
    ]);
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["eigenvalues"].as_array().unwrap().len(), 3);
    assert!(report["psi4_hat"].is_null());
}

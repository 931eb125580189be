//! End-to-end tests of the command-line interface: payload shapes,
//! reproducibility, configuration files, and the exit-code contract
//! (0 success including non-converged fits, 2 usage/configuration,
//! 3 data, 4 numerical).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_betapress"))
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

/// Deterministic well-behaved dataset: a logistic trend plus a bounded
/// deterministic ripple, well inside (0, 1).
fn write_dataset(dir: &Path) -> PathBuf {
    let path = dir.join("data.csv");
    let mut body = String::from("y,x1,z1\n");
    let n = 40;
    for t in 0..n {
        let x1 = t as f64 / (n - 1) as f64;
        let z1 = -0.5 + (t % 5) as f64 / 4.0;
        let mu = 1.0 / (1.0 + f64::exp(-(-0.8 + 1.7 * x1)));
        let y = (mu + 0.05 * (7.0 * t as f64).sin()).clamp(0.05, 0.95);
        body.push_str(&format!("{y:.8},{x1:.8},{z1:.8}\n"));
    }
    std::fs::write(&path, body).unwrap();
    path
}

fn stdout_json(output: &Output) -> serde_json::Value {
    assert!(
        output.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("stdout is JSON")
}

fn stderr_json(output: &Output) -> serde_json::Value {
    serde_json::from_slice(&output.stderr).expect("stderr is JSON")
}

#[test]
fn fit_emits_json_and_reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(dir.path());
    let run = || {
        binary()
            .args(["fit", "--data"])
            .arg(&data)
            .args(["--response", "y", "--mean", "b1 + b2*x1", "--prec", "g1 + g2*z1"])
            .output()
            .unwrap()
    };
    let first = run();
    let payload = stdout_json(&first);
    assert_eq!(payload["converged"], serde_json::Value::Bool(true));
    assert_eq!(payload["model"]["mean"], "b1 + b2*x1");
    assert_eq!(payload["beta_hat"].as_array().unwrap().len(), 2);
    assert_eq!(payload["gamma_hat"].as_array().unwrap().len(), 2);
    assert_eq!(payload["mu_hat"].as_array().unwrap().len(), 40);

    let second = run();
    assert_eq!(first.stdout, second.stdout, "reruns must be byte-identical");
}

#[test]
fn fit_accepts_config_file_with_flag_overrides() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(dir.path());
    let output = binary()
        .args(["fit", "--data"])
        .arg(&data)
        .args(["--response", "y", "--config"])
        .arg(repo_config("gas-logit.toml"))
        .output()
        .unwrap();
    let payload = stdout_json(&output);
    assert_eq!(payload["model"]["mean"], "b1 + b2*x1");
    assert_eq!(payload["model"]["precision"], "g1");

    // A flag overrides the file.
    let output = binary()
        .args(["fit", "--data"])
        .arg(&data)
        .args(["--response", "y", "--config"])
        .arg(repo_config("gas-logit.toml"))
        .args(["--prec", "g1 + g2*z1"])
        .output()
        .unwrap();
    let payload = stdout_json(&output);
    assert_eq!(payload["model"]["precision"], "g1 + g2*z1");
    assert_eq!(payload["gamma_hat"].as_array().unwrap().len(), 2);
}

#[test]
fn fit_without_mean_or_config_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(dir.path());
    let output = binary()
        .args(["fit", "--data"])
        .arg(&data)
        .args(["--response", "y"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let error = stderr_json(&output);
    assert_eq!(error["error"]["kind"], "config");
}

#[test]
fn diagnose_reports_fit_and_statistics_with_csv_table() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(dir.path());
    let csv_path = dir.path().join("diag.csv");
    let out_path = dir.path().join("diag.json");
    let output = binary()
        .args(["diagnose", "--data"])
        .arg(&data)
        .args(["--response", "y", "--mean", "b1 + b2*x1", "--prec", "g1 + g2*z1"])
        .arg("--csv")
        .arg(&csv_path)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(output.stdout.is_empty(), "--out redirects the payload");

    let payload: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(payload["fit"]["converged"], serde_json::Value::Bool(true));
    for key in [
        "p2", "p2_c", "p2_bg", "p2_bg_c", "r2_fc", "r2_fc_c", "r2_lr", "r2_lr_c", "press",
        "press_bg", "lambda", "leverage", "flagged",
    ] {
        assert!(
            payload["diagnostics"].get(key).is_some(),
            "diagnostics payload lacks `{key}`"
        );
    }

    let table = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,y,mu_hat,phi_hat,r_beta,r_beta_gamma,leverage,press_component,press_bg_component,flagged"
    );
    assert_eq!(lines.count(), 40);
}

#[test]
fn non_convergence_still_exits_zero_with_flag_in_payload() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(dir.path());
    let output = binary()
        .args(["fit", "--data"])
        .arg(&data)
        .args([
            "--response",
            "y",
            "--mean",
            "b1 + b2*x1",
            "--max-iterations",
            "1",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let payload = stdout_json(&output);
    assert_eq!(payload["converged"], serde_json::Value::Bool(false));
    assert_eq!(payload["iterations"], serde_json::json!(1));
}

#[test]
fn simulate_is_reproducible_and_dumps_rows() {
    let dir = TempDir::new().unwrap();
    let dump = dir.path().join("rows.csv");
    let run = |dump_to: Option<&Path>| {
        let mut cmd = binary();
        cmd.args([
            "simulate", "--scenario", "s4", "--n", "40", "--phi", "150", "--reps", "8", "--seed",
            "7",
        ]);
        if let Some(path) = dump_to {
            cmd.arg("--dump").arg(path);
        }
        cmd.output().unwrap()
    };
    let first = run(Some(&dump));
    let payload = stdout_json(&first);
    assert_eq!(payload["scenario"], "s4");
    assert_eq!(payload["requested"], serde_json::json!(8));
    assert_eq!(payload["completed"], serde_json::json!(8));
    assert!(payload["stats"]["p2"]["mean"].as_f64().unwrap() > 0.8);

    let rows = std::fs::read_to_string(&dump).unwrap();
    assert!(rows.starts_with("replication,outcome,p2,"));
    assert_eq!(rows.lines().count(), 9, "header plus one line per replication");

    let second = run(None);
    assert_eq!(first.stdout, second.stdout, "fixed seed must reproduce");
}

#[test]
fn simulate_requires_exactly_one_dispersion_level() {
    for extra in [&["--phi", "150", "--lambda", "20"][..], &[][..]] {
        let mut cmd = binary();
        cmd.args([
            "simulate", "--scenario", "s8", "--n", "40", "--reps", "5", "--seed", "1",
        ]);
        cmd.args(extra);
        let output = cmd.output().unwrap();
        assert_eq!(output.status.code(), Some(2));
        let error = stderr_json(&output);
        assert_eq!(error["error"]["kind"], "simulation");
    }
}

#[test]
fn simulate_rejects_unknown_scenarios_with_the_catalog() {
    let output = binary()
        .args([
            "simulate", "--scenario", "s99", "--n", "40", "--phi", "50", "--reps", "5", "--seed",
            "1",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let error = stderr_json(&output);
    assert_eq!(error["error"]["kind"], "unknown_scenario");
    assert!(error["error"]["message"]
        .as_str()
        .unwrap()
        .contains("s4"));
}

#[test]
fn press_plot_emits_the_component_table() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(dir.path());
    let output = binary()
        .args(["press-plot", "--data"])
        .arg(&data)
        .args(["--response", "y", "--mean", "b1 + b2*x1"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let table = String::from_utf8(output.stdout).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "t,component,threshold,flagged");
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), 40);
    assert!(body[0].starts_with("1,"));
    assert!(body.iter().all(|l| l.ends_with("true") || l.ends_with("false")));
}

#[test]
fn missing_data_file_is_a_data_error() {
    let output = binary()
        .args([
            "fit",
            "--data",
            "/nonexistent/nowhere.csv",
            "--response",
            "y",
            "--mean",
            "b1 + b2*x1",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    let error = stderr_json(&output);
    assert_eq!(error["error"]["kind"], "csv");
}

#[test]
fn formula_syntax_error_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(dir.path());
    let output = binary()
        .args(["fit", "--data"])
        .arg(&data)
        .args(["--response", "y", "--mean", "b1 + + b2*x1"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert_eq!(stderr_json(&output)["error"]["kind"], "syntax");
}

#[test]
fn inadmissible_anchor_is_a_numerical_error() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(dir.path());
    // log(x1 - 99) is undefined on every row, so the anchored start
    // cannot be evaluated and no fallback exists.
    let output = binary()
        .args(["fit", "--data"])
        .arg(&data)
        .args([
            "--response",
            "y",
            "--mean",
            "b1 + b2*log(x1 - b3)",
            "--mean-start",
            "0,1,99",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
    assert_eq!(stderr_json(&output)["error"]["kind"], "no_admissible_start");
}

#[test]
fn every_shipped_config_parses_against_its_schema() {
    let configs_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(configs_dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        count += 1;
        let text = std::fs::read_to_string(&path).unwrap();
        let config: betapress_core::config::ModelConfig = toml::from_str(&text)
            .unwrap_or_else(|e| panic!("{} does not parse: {e}", path.display()));
        assert!(!config.mean.is_empty());
    }
    assert_eq!(count, 12, "twelve demo configurations ship with the repo");
}

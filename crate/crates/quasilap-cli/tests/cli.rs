//! End-to-end tests of the `quasilap` binary: every subcommand is run as a
//! subprocess against a scratch output directory, and the tests assert the
//! full observable contract: exit codes (0 pass, 1 failed run or check,
//! 2 config error), the JSON/CSV payload printed to stdout, the artifact
//! triple `config.toml` / data file / `manifest.json`, the SHA-256 run
//! identity, and byte-level reproducibility across reruns and `--jobs`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_quasilap"));
    // Keep an ambient QUASILAP_OUT from leaking into the tests.
    cmd.env_remove("QUASILAP_OUT");
    cmd
}

/// Fresh per-test scratch directory under the system temp dir.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("quasilap-cli-{}-{}", name, std::process::id()));
    if dir.exists() {
        fs::remove_dir_all(&dir).unwrap();
    }
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().expect("spawn quasilap");
    (
        status.code().expect("exit code"),
        String::from_utf8(stdout).unwrap(),
        String::from_utf8(stderr).unwrap(),
    )
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

#[test]
fn torus_det_reports_oracle_agreement() {
    let out = scratch("torus-det");
    let (code, stdout, _) = run(bin()
        .args(["torus-det", "--z", "i", "--N", "64", "--out"])
        .arg(&out));
    assert_eq!(code, 0);

    let payload: Value = serde_json::from_str(&stdout).expect("stdout is the JSON payload");
    assert_eq!(payload["experiment"], "torus-det");
    let row = &payload["rows"][0];
    assert!(row["delta"].as_f64().unwrap() <= 1e-8);
    assert_eq!(row["pass"], true);
    assert!(
        (row["zeta_logdet"].as_f64().unwrap() - row["oracle_logdet"].as_f64().unwrap()).abs()
            < 1e-7
    );

    let run_dir = out.join("torus-det");
    let config = fs::read(run_dir.join("config.toml")).unwrap();
    let manifest = json(&run_dir.join("manifest.json"));
    assert!(run_dir.join("torus-det.json").exists());
    // The manifest hash is the hash of the canonical config actually written.
    assert_eq!(manifest["config_sha256"], Value::from(sha256_hex(&config)));
    for check in manifest["checks"].as_array().unwrap() {
        assert_eq!(check["pass"], true, "failed check: {check}");
    }
}

#[test]
fn torus_det_rejects_out_of_range_modulus() {
    let out = scratch("torus-det-range");
    let (code, _, stderr) = run(bin().args(["torus-det", "--z", "20i", "--out"]).arg(&out));
    assert_eq!(code, 2);
    assert!(stderr.contains("config error"), "stderr: {stderr}");
    assert!(!out.join("torus-det").exists(), "no artifacts on config errors");
}

#[test]
fn beltrami_solve_certifies_residual() {
    let out = scratch("beltrami");
    let (code, stdout, _) = run(bin()
        .args(["beltrami-solve", "--preset", "constant:0.3", "--N", "128", "--out"])
        .arg(&out));
    assert_eq!(code, 0);

    let payload: Value = serde_json::from_str(&stdout).unwrap();
    let row = &payload["rows"][0];
    assert!(row["residual"].as_f64().unwrap() <= 1e-10);
    assert_eq!(row["preset"], "constant:0.3");
    // A constant coefficient is solved exactly by the affine map.
    assert_eq!(row["iterations"].as_u64().unwrap(), 1);
    assert!(payload["summary"]["min_abs_partial"].as_f64().unwrap() > 0.5);
}

#[test]
fn bad_preset_is_a_config_error() {
    let out = scratch("bad-preset");
    let (code, _, stderr) = run(bin()
        .args(["beltrami-solve", "--preset", "nope:1", "--out"])
        .arg(&out));
    assert_eq!(code, 2);
    assert!(stderr.contains("unknown preset kind"), "stderr: {stderr}");
}

#[test]
fn symbol_angle_linear_sweep() {
    let out = scratch("symbol-angle");
    let (code, stdout, _) = run(bin()
        .args([
            "symbol-angle",
            "--mu",
            "constant:0.2",
            "--nu",
            "constant:0.24",
            "--N",
            "16",
            "--out",
        ])
        .arg(&out));
    assert_eq!(code, 0);

    let payload: Value = serde_json::from_str(&stdout).unwrap();
    let summary = &payload["summary"];
    assert_eq!(summary["diagonal"], false);
    assert!(summary["r_squared"].as_f64().unwrap() >= 0.99);
    let slope = summary["slope"].as_f64().unwrap();
    assert!(slope > 0.0, "angle must grow with the off-diagonal distance");
    for row in payload["rows"].as_array().unwrap() {
        let angle = row["max_abs_arg"].as_f64().unwrap();
        assert!(angle > 0.0 && angle < std::f64::consts::FRAC_PI_2);
    }
}

#[test]
fn symbol_angle_diagonal_is_zero() {
    let out = scratch("symbol-diag");
    let (code, stdout, _) = run(bin()
        .args([
            "symbol-angle",
            "--mu",
            "constant:0.2",
            "--nu",
            "constant:0.2",
            "--N",
            "16",
            "--out",
        ])
        .arg(&out));
    assert_eq!(code, 0);
    let payload: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(payload["summary"]["diagonal"], true);
    assert!(payload["summary"]["base_max_abs_arg"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn det_sweep_is_deterministic_and_parallel_invariant() {
    let out = scratch("det-sweep");
    let args = ["det-sweep", "--mu", "fourier:1,0,0.3", "--N", "8", "--out"];

    let (code, stdout1, _) = run(bin().args(args).arg(&out));
    assert_eq!(code, 0);
    let run_dir = out.join("det-sweep");
    let read = |dir: &Path| {
        (
            fs::read(dir.join("config.toml")).unwrap(),
            fs::read(dir.join("det-sweep.csv")).unwrap(),
            fs::read(dir.join("manifest.json")).unwrap(),
        )
    };
    let first = read(&run_dir);

    // Identical invocation into the same directory: byte-identical artifacts.
    let (code, stdout2, _) = run(bin().args(args).arg(&out));
    assert_eq!(code, 0);
    assert_eq!(stdout1, stdout2);
    assert_eq!(first, read(&run_dir));

    // The worker count changes scheduling, never bytes.
    let (code, stdout3, _) = run(bin().args(args).arg(&out).args(["--jobs", "2"]));
    assert_eq!(code, 0);
    assert_eq!(stdout1, stdout3);
    assert_eq!(first, read(&run_dir));

    let csv = String::from_utf8(first.1).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "eps,min_gap,log_det_re,log_det_im,res_s,res_t,N,theta"
    );
    // Sweep rows come out sorted by eps regardless of completion order.
    let eps: Vec<f64> = lines
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(eps, vec![0.01, 0.02, 0.04]);
}

#[test]
fn potential_verify_battery_passes() {
    let out = scratch("potential");
    let (code, stdout, _) = run(bin().args(["potential-verify", "--out"]).arg(&out));
    assert_eq!(code, 0);

    let payload: Value = serde_json::from_str(&stdout).unwrap();
    let rows = payload["rows"].as_array().unwrap();
    assert!(rows.len() >= 6);
    for row in rows {
        assert_eq!(row["pass"], true, "failed example: {row}");
        assert!(row["defect"].as_f64().unwrap() <= row["tolerance"].as_f64().unwrap());
    }
}

#[test]
fn holomorphy_check_contrasts_diagonal_and_analytic_lines() {
    let out = scratch("holomorphy");
    let (code, stdout, _) = run(bin()
        .args([
            "holomorphy-check",
            "--mu",
            "constant:0.1",
            "--mu1",
            "constant:0.05",
            "--N",
            "8",
            "--out",
        ])
        .arg(&out));
    assert_eq!(code, 0);

    let payload: Value = serde_json::from_str(&stdout).unwrap();
    let row = &payload["rows"][0];
    assert!(row["res_s"].as_f64().unwrap() <= 1e-5);
    assert!(row["min_gap"].as_f64().unwrap() > 0.0);
    // The joint (mu + s mu1, nu + s mu1) line breaks holomorphy by orders
    // of magnitude relative to the analytic mu-only line.
    assert!(payload["summary"]["contrast_ratio"].as_f64().unwrap() >= 10.0);
}

#[test]
fn report_aggregates_and_flags() {
    let out = scratch("report");
    let (code, _, _) = run(bin().args(["torus-det", "--z", "i", "--out"]).arg(&out));
    assert_eq!(code, 0);
    let (code, _, _) = run(bin().args(["potential-verify", "--out"]).arg(&out));
    assert_eq!(code, 0);

    let (code, stdout, _) = run(bin().arg("report").arg(&out));
    assert_eq!(code, 0);
    assert!(stdout.contains("torus-det"));
    assert!(stdout.contains("potential-verify"));
    assert!(stdout.contains("PASS"));
    assert!(!stdout.contains("FAIL"));
    assert!(stdout.contains("0 failed"));

    let empty = scratch("report-empty");
    let (code, _, stderr) = run(bin().arg("report").arg(&empty));
    assert_eq!(code, 2);
    assert!(stderr.contains("no manifest"), "stderr: {stderr}");
}

#[test]
fn config_file_roundtrip_and_flag_precedence() {
    let out = scratch("config-file");
    let file = out.join("run.toml");
    fs::write(
        &file,
        "schema = 1\nexperiment = \"torus-det\"\n\n[grid]\nmodulus = \"2i\"\nn = 32\n",
    )
    .unwrap();

    let (code, _, _) = run(bin()
        .arg("torus-det")
        .arg("--config")
        .arg(&file)
        .arg("--out")
        .arg(&out));
    assert_eq!(code, 0);
    let written = fs::read_to_string(out.join("torus-det/config.toml")).unwrap();
    assert!(written.contains("modulus = \"2i\""));
    assert!(written.contains("n = 32"));

    // Flags override file values; the written config records the override.
    let (code, _, _) = run(bin()
        .arg("torus-det")
        .arg("--config")
        .arg(&file)
        .args(["--z", "0.5+i", "--out"])
        .arg(&out));
    assert_eq!(code, 0);
    let written = fs::read_to_string(out.join("torus-det/config.toml")).unwrap();
    assert!(written.contains("modulus = \"0.5+i\""));

    // A config for one experiment cannot drive another.
    let (code, _, stderr) = run(bin()
        .arg("beltrami-solve")
        .arg("--config")
        .arg(&file)
        .arg("--out")
        .arg(&out));
    assert_eq!(code, 2);
    assert!(stderr.contains("config error"), "stderr: {stderr}");
}

#[test]
fn env_var_overrides_output_directory() {
    let out = scratch("env-flag");
    let env_out = scratch("env-target");
    let (code, _, _) = run(bin()
        .args(["torus-det", "--z", "i", "--out"])
        .arg(&out)
        .env("QUASILAP_OUT", &env_out));
    assert_eq!(code, 0);
    assert!(env_out.join("torus-det/manifest.json").exists());
    assert!(!out.join("torus-det").exists());
}

#[test]
fn missing_schema_config_rejected() {
    let out = scratch("no-schema");
    let file = out.join("run.toml");
    fs::write(&file, "experiment = \"torus-det\"\n").unwrap();
    let (code, _, stderr) = run(bin()
        .arg("torus-det")
        .arg("--config")
        .arg(&file)
        .arg("--out")
        .arg(&out));
    assert_eq!(code, 2);
    assert!(stderr.contains("schema"), "stderr: {stderr}");
}

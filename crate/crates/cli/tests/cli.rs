use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sigrf::simulate::decode_binary;

const BIN: &str = env!("CARGO_BIN_EXE_sigrf");

struct Run {
    code: i32,
    summary: Value,
    stderr: String,
}

fn finish(out: Output) -> Run {
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 1, "expected exactly one summary line, got {stdout:?}");
    Run {
        code: out.status.code().unwrap(),
        summary: serde_json::from_str(lines[0]).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn sigrf(dir: &Path, args: &[&str]) -> Run {
    finish(
        Command::new(BIN)
            .current_dir(dir)
            .env_remove("SIGRF_OUT_DIR")
            .args(args)
            .output()
            .unwrap(),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn fixtures() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "h03.json", r#"{"kind": "hform", "h": [0.3]}"#);
    write(d.path(), "h05.json", r#"{"kind": "hform", "h": [0.5]}"#);
    write(d.path(), "bm.json", r#"{"kind": "anisotropic", "beta": [2.0], "gamma": 1.0}"#);
    write(
        d.path(),
        "boundary.json",
        r#"{"kind": "mixture", "components": [
            {"weight": 1, "model": {"kind": "anisotropic", "beta": [2.0], "gamma": 1.0}},
            {"weight": 1, "model": {"kind": "anisotropic", "beta": [2.0], "gamma": 1.25}}]}"#,
    );
    d
}

#[test]
fn check_exit_codes() {
    let d = fixtures();
    let r = sigrf(d.path(), &["check", "h03.json", "h03.json"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.summary["verdict"], "Equivalent");
    assert_eq!(r.summary["rule"], "hform_iff");

    let r = sigrf(d.path(), &["check", "h03.json", "h05.json"]);
    assert_eq!(r.code, 10);
    assert_eq!(r.summary["verdict"], "Singular");

    let r = sigrf(d.path(), &["check", "bm.json", "boundary.json"]);
    assert_eq!(r.code, 20);
    assert_eq!(r.summary["rule"], "mixture_inequality");
}

#[test]
fn check_forced_rule_and_tail_flags() {
    let d = fixtures();
    let r = sigrf(d.path(), &["check", "bm.json", "bm.json", "--rule", "tail", "--k", "2", "--shells", "8"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.summary["rule"], "tail_square_integrability");
    let r = sigrf(d.path(), &["check", "bm.json", "bm.json", "--rule", "nonsense"]);
    assert_eq!(r.code, 2);
}

#[test]
fn malformed_json_reports_position() {
    let d = fixtures();
    write(d.path(), "bad.json", "{\"kind\": \"hform\",\n  \"h\": [0.3,]}");
    let r = sigrf(d.path(), &["check", "h03.json", "bad.json"]);
    assert_eq!(r.code, 2);
    assert_eq!(r.summary["status"], "error");
    assert!(r.stderr.contains("line 2, column 13"), "{}", r.stderr);

    write(d.path(), "invalid.json", r#"{"kind": "hform", "h": [1.5]}"#);
    assert_eq!(sigrf(d.path(), &["check", "h03.json", "invalid.json"]).code, 2);
    assert_eq!(sigrf(d.path(), &["check", "h03.json", "missing.json"]).code, 2);
}

#[test]
fn variogram_at_zero_prints_zero() {
    let d = fixtures();
    let r = sigrf(d.path(), &["variogram", "bm.json", "--t", "0", "--out", "o"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.summary["values"][0].as_f64(), Some(0.0));
    let csv = fs::read_to_string(d.path().join("o/variogram.csv")).unwrap();
    assert!(csv.starts_with("t0,value,"));
}

#[test]
fn variogram_point_file_and_dimension_check() {
    let d = fixtures();
    write(d.path(), "lags.txt", "# lags\n0.5\n1\n2\n");
    let r = sigrf(d.path(), &["variogram", "bm.json", "--points", "lags.txt", "--out", "o"]);
    assert_eq!(r.code, 0);
    let v: Vec<f64> = r.summary["values"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    for (t, got) in [0.5, 1.0, 2.0].iter().zip(&v) {
        let want = 2.0 * std::f64::consts::PI * t;
        assert!((got - want).abs() < 1e-3 * want);
    }
    let r = sigrf(d.path(), &["variogram", "bm.json", "--t", "1,2", "--out", "o"]);
    assert_eq!(r.code, 2);
}

#[test]
fn simulate_is_deterministic() {
    let d = fixtures();
    for method in ["spectral", "cholesky"] {
        for out in ["a", "b"] {
            let r = sigrf(
                d.path(),
                &["simulate", "bm.json", "--method", method, "--seed", "42", "--samples", "2", "--format", "both", "--points-per-axis", "9", "--out", out],
            );
            assert_eq!(r.code, 0, "{}", r.stderr);
        }
        for f in ["sample_0000.csv", "sample_0001.bin"] {
            let a = fs::read(d.path().join("a").join(f)).unwrap();
            let b = fs::read(d.path().join("b").join(f)).unwrap();
            assert_eq!(a, b, "{method} {f}");
        }
        let s = decode_binary(&fs::read(d.path().join("a/sample_0001.bin")).unwrap()).unwrap();
        assert_eq!(s.seed, 43);
        assert_eq!(s.values.len(), 9);
        assert_eq!(s.values[4], 0.0);
    }
    let r = sigrf(d.path(), &["simulate", "bm.json", "--points-per-axis", "8", "--out", "a"]);
    assert_eq!(r.code, 2);
}

#[test]
fn llr_against_itself_is_zero() {
    let d = fixtures();
    let r = sigrf(d.path(), &["llr", "bm.json", "bm.json", "--replications", "100", "--grids", "9,17", "--out", "l"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.summary["all_zero"], true);
    assert!(d.path().join("l/llr_summary.json").exists());
    let r = sigrf(d.path(), &["llr", "bm.json", "bm.json", "--replications", "10", "--out", "l"]);
    assert_eq!(r.code, 2);
}

#[test]
fn normratio_slope() {
    let d = fixtures();
    let r = sigrf(d.path(), &["normratio", "--h0", "0.25", "--h1", "0.5", "--out", "n"]);
    assert_eq!(r.code, 0);
    let slope = r.summary["slope"].as_f64().unwrap();
    assert!((slope - 0.5).abs() < 0.05, "{slope}");
}

#[test]
fn covariance_and_kernel_run() {
    let d = fixtures();
    let r = sigrf(d.path(), &["covariance", "bm.json", "--t", "0.5", "--t", "-1", "--t", "2", "--out", "c"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.summary["psd"], true);
    let csv = fs::read_to_string(d.path().join("c/covariance.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let r = sigrf(d.path(), &["kernel", "bm.json", "--refinements", "4,8", "--out", "k"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.summary["max_residual"].as_f64().unwrap() < 1e-6);
}

#[test]
fn output_dir_precedence() {
    let d = fixtures();
    write(d.path(), "run.json", r#"{"output_dir": "from_config", "seed": 5}"#);
    let r = sigrf(d.path(), &["variogram", "bm.json", "--t", "1", "--config", "run.json"]);
    assert_eq!(r.code, 0);
    assert!(d.path().join("from_config/variogram.csv").exists());

    let env = finish(
        Command::new(BIN)
            .current_dir(d.path())
            .env("SIGRF_OUT_DIR", "from_env")
            .args(["variogram", "bm.json", "--t", "1", "--config", "run.json"])
            .output()
            .unwrap(),
    );
    assert_eq!(env.code, 0);
    assert!(d.path().join("from_env/variogram.csv").exists());

    let flag = finish(
        Command::new(BIN)
            .current_dir(d.path())
            .env("SIGRF_OUT_DIR", "from_env2")
            .args(["variogram", "bm.json", "--t", "1", "--out", "from_flag"])
            .output()
            .unwrap(),
    );
    assert_eq!(flag.code, 0);
    assert!(d.path().join("from_flag/variogram.csv").exists());
    assert!(!d.path().join("from_env2").exists());
}

#[test]
fn config_supplies_inputs_and_rejects_unknown_keys() {
    let d = fixtures();
    fs::create_dir(d.path().join("cfg")).unwrap();
    write(
        &d.path().join("cfg"),
        "run.json",
        r#"{"seed": 9, "simulate": {"model": "../bm.json", "points_per_axis": 5, "format": "binary"}}"#,
    );
    let r = sigrf(d.path(), &["simulate", "--config", "cfg/run.json", "--out", "s"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.summary["seed"], 9);
    let s = decode_binary(&fs::read(d.path().join("s/sample_0000.bin")).unwrap()).unwrap();
    assert_eq!(s.seed, 9);

    write(d.path(), "bad_cfg.json", "{\n  \"seed\": 1,\n  \"sede\": 2\n}");
    let r = sigrf(d.path(), &["variogram", "bm.json", "--t", "1", "--config", "bad_cfg.json"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("line 3"), "{}", r.stderr);
}

#[test]
fn global_flags() {
    let d = fixtures();
    let out = Command::new(BIN).arg("--version").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains(env!("CARGO_PKG_VERSION")));
    let r = sigrf(d.path(), &["--threads", "1", "variogram", "bm.json", "--t", "1", "--out", "o"]);
    assert_eq!(r.code, 0);
    assert_eq!(sigrf(d.path(), &["--threads", "0", "variogram", "bm.json", "--t", "1"]).code, 2);
    assert_eq!(sigrf(d.path(), &["--rel-tol", "-1", "variogram", "bm.json", "--t", "1"]).code, 2);
}

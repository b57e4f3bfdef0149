//! End-to-end runs of the `sqz` binary on a small configuration.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sqz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqz"))
        .args(args)
        .env_remove("SQZ_SEED")
        .env_remove("SQZ_CONFIG")
        .env_remove("SQZ_OUT")
        .env_remove("SQZ_FORMAT")
        .env_remove("SQZ_THREADS")
        .output()
        .expect("sqz runs")
}

fn small_config(dir: &Path) -> String {
    let mut cfg: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../configs/default.json"
        ))
        .unwrap(),
    )
    .unwrap();
    cfg["acquisition"]["n_samples"] = 200_000.into();
    cfg["acquisition"]["n_traces"] = 4.into();
    cfg["processing"]["pulses_per_bin"] = 200.into();
    cfg["sweep"]["avg_powers_w"] = serde_json::json!([1.5e-4, 3.1e-4]);
    let path = dir.join("small.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn simulate_process_fit_report() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let traces = tmp.path().join("traces");
    let processed = tmp.path().join("processed");
    let (traces_s, processed_s) = (traces.to_str().unwrap(), processed.to_str().unwrap());

    let sim = stdout_json(&sqz(&[
        "--config", &config, "--seed", "99", "--out", traces_s, "simulate",
    ]));
    assert_eq!(sim["seed"], 99);
    assert_eq!(sim["generator"], "chacha8+box-muller");
    let files = sim["files"].as_array().unwrap();
    assert_eq!(files.len(), 2 * 4 + 4 + 4);
    assert!(files
        .iter()
        .all(|f| f["sha256"].as_str().unwrap().len() == 64));

    let manifest = traces.join("manifest.json");
    let summary = stdout_json(&sqz(&[
        "--config",
        &config,
        "--out",
        processed_s,
        "--threads",
        "2",
        "process",
        "--manifest",
        manifest.to_str().unwrap(),
    ]));
    let powers = summary["powers"].as_array().unwrap();
    assert_eq!(powers.len(), 2);
    for p in powers {
        let s_minus = p["phase"]["s_minus_db"].as_f64().unwrap();
        let s_plus = p["phase"]["s_plus_db"].as_f64().unwrap();
        assert!(s_minus < 0.0 && s_plus > 0.0, "{p}");
    }
    let points = fs::read_to_string(processed.join("points.csv")).unwrap();
    assert_eq!(
        points.lines().next(),
        Some("peak_power_w,value_db,sign,sigma_db")
    );
    assert_eq!(points.lines().count(), 1 + 4);
    let variance = fs::read_to_string(processed.join("variance_p01.csv")).unwrap();
    assert_eq!(
        variance.lines().next(),
        Some("bin,phase_rad,variance,stderr")
    );
    assert_eq!(variance.lines().count(), 1 + 100);

    let fit = stdout_json(&sqz(&[
        "--config",
        &config,
        "--out",
        processed_s,
        "fit",
        "--model",
        "squeezing",
        processed.join("summary.json").to_str().unwrap(),
    ]));
    assert_eq!(fit["model"], "squeezing");
    assert!((fit["eta"].as_f64().unwrap() - 0.229).abs() < 0.05, "{fit}");
    assert!(processed.join("fit_squeezing.json").is_file());

    let report = sqz(&[
        "--config",
        &config,
        "--format",
        "csv",
        "report",
        "--artifacts",
        processed_s,
    ]);
    assert!(report.status.success());
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.starts_with("quantity,unit,expected,computed,tolerance,status,note"));
    assert!(text.contains("fitted total efficiency"));
}

#[test]
fn positional_traces_and_env_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let out = tmp.path().join("t");
    let status = Command::new(env!("CARGO_BIN_EXE_sqz"))
        .args(["simulate"])
        .env("SQZ_CONFIG", &config)
        .env("SQZ_OUT", &out)
        .env("SQZ_SEED", "5")
        .env("SQZ_FORMAT", "csv")
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(String::from_utf8(status.stdout)
        .unwrap()
        .starts_with("# seed 5\npath,kind,avg_power_w,sha256"));

    let mut args = vec![
        "--config".to_owned(),
        config.clone(),
        "--out".into(),
        tmp.path().join("p").to_str().unwrap().into(),
    ];
    args.push("--format".into());
    args.push("csv".into());
    args.push("process".into());
    for name in [
        "squeezed_p01_t00",
        "squeezed_p01_t01",
        "shot_t00",
        "electronic_t00",
    ] {
        args.push(out.join(format!("{name}.sqzt")).to_str().unwrap().into());
    }
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let processed = sqz(&refs);
    assert!(
        processed.status.success(),
        "{}",
        String::from_utf8_lossy(&processed.stderr)
    );
    let csv = String::from_utf8(processed.stdout).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
}

#[test]
fn error_exit_codes_and_json() {
    let tmp = tempfile::tempdir().unwrap();

    let missing = sqz(&["--config", "/nonexistent/sqz.json", "budget"]);
    assert_eq!(missing.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert_eq!(err["error"], "config");

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"waveguide": {"length_m": 0.0047, "bogus": 1}}"#).unwrap();
    assert_eq!(
        sqz(&["--config", bad.to_str().unwrap(), "budget"])
            .status
            .code(),
        Some(2)
    );

    let junk = tmp.path().join("junk.sqzt");
    fs::write(&junk, b"not a trace").unwrap();
    let data = sqz(&[
        "--out",
        tmp.path().join("p").to_str().unwrap(),
        "process",
        junk.to_str().unwrap(),
    ]);
    assert_eq!(data.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&data.stderr).unwrap();
    assert_eq!(err["error"], "data");

    let points = tmp.path().join("points.csv");
    let mut rows = String::from("peak_power_w,value_db,sign,sigma_db\n");
    for i in 1..=6 {
        let p = 0.05 * i as f64;
        rows.push_str(&format!(
            "{p},{},+,0.02\n{p},{},-,0.02\n",
            0.6 * p * 10.0,
            -0.5 * p * 10.0
        ));
    }
    fs::write(&points, rows).unwrap();
    let capped = tmp.path().join("capped.json");
    fs::write(&capped, r#"{"fit": {"max_iter": 1}}"#).unwrap();
    let fit = sqz(&[
        "--config",
        capped.to_str().unwrap(),
        "fit",
        "--model",
        "gain",
        points.to_str().unwrap(),
    ]);
    assert_eq!(
        fit.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&fit.stderr)
    );
    let err: serde_json::Value = serde_json::from_slice(&fit.stderr).unwrap();
    assert_eq!(err["error"], "fit");
}

#[test]
fn budget_and_phasematch_commands() {
    let budget = stdout_json(&sqz(&["budget", "--measured-db", "-0.33"]));
    assert!((budget["total"].as_f64().unwrap() - 0.229).abs() < 0.005);
    assert!((budget["inferred_onchip_db"].as_f64().unwrap() + 1.55).abs() < 0.02);

    let tmp = tempfile::tempdir().unwrap();
    let pm = stdout_json(&sqz(&["--out", tmp.path().to_str().unwrap(), "phasematch"]));
    assert!((pm["walkoff_ps"].as_f64().unwrap() - 1.47).abs() < 0.01);
    assert!(tmp.path().join("phasematch.csv").is_file());
}

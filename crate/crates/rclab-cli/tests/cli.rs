//! End-to-end tests of the command-line surface: file outputs, exit codes,
//! determinism, and the documented headline values.

use std::process::{Command, Output};

fn rclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rclab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

#[test]
fn help_lists_all_commands() {
    let out = rclab(&["--help"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for cmd in ["env sample", "traps lambda", "pipeline anomalous"] {
        assert!(text.contains(cmd), "help misses {cmd}");
    }
}

#[test]
fn env_sample_roundtrip_and_stat() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.rclb");
    let out = rclab(&[
        "env", "sample", "--d", "2", "--gamma", "1", "--radius", "64", "--seed", "7", "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(path.exists());
    let summary = stdout(&out);
    assert!(summary.contains("\"seed\": 7"));

    // the file loads and the statistic runs on it
    let out = rclab(&["env", "stat", "--in", path.to_str().unwrap(), "--N", "60"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let stat = doc["result"]["mean"].as_f64().unwrap();
    assert!(stat < 0.0 && stat > -6.0, "statistic {stat}");

    // resampling with the same parameters gives a byte-identical file
    let path2 = dir.path().join("e2.rclb");
    let out = rclab(&[
        "env", "sample", "--d", "2", "--gamma", "1", "--radius", "64", "--seed", "7", "--out",
        path2.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&path2).unwrap()
    );
}

#[test]
fn traps_qn_prints_the_reference_value() {
    let out = rclab(&[
        "traps", "qn", "--d", "5", "--gamma", "0.1", "--xi", "0.5", "--eps", "0.5", "--N", "10",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(
        text.starts_with("1.418"),
        "expected the 1.42e-3 closed form, got {text}"
    );
}

#[test]
fn fit_exponent_recovers_synthetic_slope() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("series.csv");
    let mut body = String::from("n,p2n,err_bound\n");
    for n in [8u64, 16, 32, 64, 128, 256, 512, 1024] {
        body.push_str(&format!("{n},{:.16e},0\n", (n as f64).powf(-2.0)));
    }
    std::fs::write(&series, body).unwrap();
    let out = rclab(&[
        "fit", "exponent", "--in", series.to_str().unwrap(), "--nmin", "8", "--nmax", "1024",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).trim().starts_with("-2.000"), "{}", stdout(&out));
}

#[test]
fn kernel_return_csv_feeds_fit() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("series.csv");
    let out = rclab(&[
        "kernel", "return", "--d", "1", "--law", "constant", "--radius", "80", "--grid",
        "4,8,12,16,24,32", "--tau", "0", "--format", "csv", "--out", series.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // provenance comments are embedded and the fit consumes the file
    let text = std::fs::read_to_string(&series).unwrap();
    assert!(text.starts_with("# command: kernel return"));
    assert!(text.contains("n,p2n,err_bound"));
    let out = rclab(&[
        "fit", "exponent", "--in", series.to_str().unwrap(), "--nmin", "4", "--nmax", "32",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // one-dimensional return probability decays like n^-1/2
    let slope: f64 = stdout(&out).trim().parse().unwrap();
    assert!((slope + 0.5).abs() < 0.1, "slope {slope}");
}

#[test]
fn deterministic_output_with_fixed_threads() {
    // identical resolved config (including the out path) twice: the files
    // must be byte-identical once timestamps are suppressed
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("series.json");
    let mut contents = Vec::new();
    for _ in 0..2 {
        let out = rclab(&[
            "kernel", "return", "--d", "2", "--gamma", "2", "--radius", "40", "--grid",
            "2,4,8,16", "--threads", "1", "--no-timestamp", "--out", path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        contents.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(contents[0], contents[1]);
}

#[test]
fn config_file_merges_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    std::fs::write(&config, "d=5\ngamma=0.1\nxi=0.5\neps=0.5\nN=10\n").unwrap();
    // config alone reproduces the reference value
    let out = rclab(&["traps", "qn", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("1.418"));
    // a flag overrides the config value (N = 40: value scales by 2)
    let out = rclab(&[
        "traps", "qn", "--config", config.to_str().unwrap(), "--N", "40",
    ]);
    assert!(out.status.success());
    let halved: f64 = stdout(&out).trim().parse().unwrap();
    assert!((halved - 1.418e-3 / 2.0).abs() < 1e-5, "{halved}");
}

#[test]
fn unknown_flags_and_commands_exit_2() {
    let out = rclab(&["traps", "qn", "--d", "5", "--gamma", "0.1", "--N", "10", "--bogus", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = rclab(&["traps", "frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = rclab(&["traps", "qn", "--gamma", "0.1", "--N", "10"]); // missing --d
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn io_failures_exit_4() {
    let out = rclab(&["env", "stat", "--in", "/nonexistent/e.rclb", "--N", "5"]);
    assert_eq!(out.status.code(), Some(4));
    // corrupt file: bad magic
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.rclb");
    std::fs::write(&path, b"NOPE better luck next time").unwrap();
    let out = rclab(&["env", "stat", "--in", path.to_str().unwrap(), "--N", "5"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn oversized_requests_exit_3() {
    let out = rclab(&[
        "env", "sample", "--d", "5", "--gamma", "1", "--radius", "100000", "--out", "/tmp/x.rclb",
    ]);
    assert_eq!(out.status.code(), Some(3));
    // kernel horizon beyond storage
    let out = rclab(&[
        "kernel", "return", "--d", "2", "--law", "constant", "--radius", "10", "--grid", "40",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn iso_profile_and_mp_on_a_chain_file() {
    let dir = tempfile::tempdir().unwrap();
    let chain = dir.path().join("chain.json");
    // lazy two-state chain
    std::fs::write(
        &chain,
        serde_json::json!({
            "states": ["0", "1"],
            "P": [0.5, 0.5, 0.5, 0.5],
            "pi": [1.0, 1.0],
        })
        .to_string(),
    )
    .unwrap();
    let out = rclab(&[
        "iso", "profile", "--chain", chain.to_str().unwrap(), "--format", "csv",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("r,phi,minimizer_size"));

    let out = rclab(&[
        "iso", "mp", "--chain", chain.to_str().unwrap(), "--epsilon", "0.1", "--pairs", "0:1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["result"]["pairs"][0]["threshold"], 38);
}

#[test]
fn iso_check_families() {
    let out = rclab(&["iso", "check", "--d", "2", "--max-side", "6"]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["result"]["kappa_squares"].as_f64().unwrap(), 4.0);
}

#[test]
fn pipeline_runs_with_a_plant() {
    let out = rclab(&[
        "pipeline", "anomalous", "--d", "2", "--gamma", "1", "--N", "6", "--alpha", "1.2",
        "--replicas", "2", "--seed", "5", "--plant-rank", "1", "--no-timestamp",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["result"]["reversibility_ok"], true);
    let checks = doc["result"]["trap_checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    for check in checks {
        assert_eq!(check["crossing_ok"], true);
        assert_eq!(check["sojourn_ok"], true);
    }
}

#[test]
fn iso_from_env_exports_the_two_step_chain() {
    let dir = tempfile::tempdir().unwrap();
    let chain = dir.path().join("chain.json");
    let out = rclab(&[
        "iso", "profile", "--from-env", "--N", "1", "--horizon", "0", "--d", "1", "--law",
        "constant", "--radius", "2", "--export-chain", chain.to_str().unwrap(), "--format",
        "csv",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&chain).unwrap()).unwrap();
    // even points of [-2, 2] in one dimension
    assert_eq!(doc["states"].as_array().unwrap().len(), 3);
    // the exported chain feeds the threshold verifier
    let out = rclab(&[
        "iso", "mp", "--chain", chain.to_str().unwrap(), "--epsilon", "0.5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["result"]["violations"], 0);
}

#[test]
fn report_bounds_carries_exact_windows() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("series.csv");
    let mut body = String::from("n,p2n,err_bound\n");
    for n in [16u64, 32, 64, 128, 256] {
        body.push_str(&format!("{n},{:.16e},0\n", (n as f64).powf(-1.0)));
    }
    std::fs::write(&series, body).unwrap();
    let out = rclab(&[
        "report", "bounds", "--in", series.to_str().unwrap(), "--nmin", "16", "--nmax", "256",
        "--d", "5", "--gamma", "0.01",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let low = doc["result"]["window_low"]["value"].as_f64().unwrap();
    assert!((low + 2.9).abs() < 1e-9, "window low {low}");
    assert_eq!(doc["result"]["window_high"]["value"], -2.0);
}

#[test]
fn annealed_constant_smoke() {
    let out = rclab(&[
        "annealed", "--d", "1", "--law", "constant", "--grid", "1,2,4", "--replicas", "2",
        "--tau", "0",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    // one-dimensional two-step return is exactly 1/2; replicas agree
    let first = &doc["result"]["points"][0];
    assert_eq!(first["n"], 1);
    assert!((first["mean"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(first["sd"], 0.0);
}

#[test]
fn iso_check_surface_volume_smoke() {
    let out = rclab(&[
        "iso", "check", "--surface-volume", "--gamma", "45", "--N", "9", "--mu", "0.5",
        "--subsets", "20", "--seed", "4",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["result"]["surface_failures"], 0);
    assert_eq!(doc["result"]["volume_failures"], 0);
    assert_eq!(doc["result"]["alpha_invalid"], 0);
}

#[test]
fn iso_profile_sampled_mode_is_labelled() {
    let dir = tempfile::tempdir().unwrap();
    let chain = dir.path().join("chain.json");
    std::fs::write(
        &chain,
        serde_json::json!({
            "states": ["a", "b", "c", "d"],
            "P": [0.5, 0.25, 0.0, 0.25,
                   0.25, 0.5, 0.25, 0.0,
                   0.0, 0.25, 0.5, 0.25,
                   0.25, 0.0, 0.25, 0.5],
            "pi": [1.0, 1.0, 1.0, 1.0],
        })
        .to_string(),
    )
    .unwrap();
    let out = rclab(&[
        "iso", "profile", "--chain", chain.to_str().unwrap(), "--sampled", "100", "--seed", "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["result"]["mode"], "SampledNonCertified");
}

#[test]
fn describe_mentions_the_right_machinery() {
    let out = rclab(&["describe", "traps", "lambda"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("independent"));
    let out = rclab(&["describe", "iso", "mp"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("threshold") && text.contains("Phi"));
    let out = rclab(&["describe", "pipeline", "anomalous"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("trap"));
    let out = rclab(&["describe", "no", "such", "thing"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn walk_and_dist_smoke() {
    let out = rclab(&[
        "walk", "simulate", "--d", "2", "--gamma", "1", "--radius", "30", "--length", "20",
        "--walk-seed", "3", "--format", "csv",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 22); // header + 21 positions

    let out = rclab(&[
        "kernel", "dist", "--d", "2", "--law", "constant", "--radius", "8", "--n", "2",
    ]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["result"]["support_size"], 9); // even sublattice points at distance <= 2
}

#[test]
fn traps_scan_csv_schema() {
    let out = rclab(&[
        "traps", "scan", "--d", "2", "--gamma", "0.4", "--radius", "16", "--seed", "9", "--N",
        "6", "--alpha", "0.8", "--region-radius", "8", "--format", "csv",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("site_coords,omega_xy,omega_yz,max_other"));
}

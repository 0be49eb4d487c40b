//! End-to-end runs of the `dukf` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dukf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dukf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = dukf(args);
    assert!(
        out.status.success(),
        "dukf {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

const SMALL: &str = r#"{"seed": 5, "truth": {"dt": 0.001}, "dual": {"n_paths": 20000}, "enkf": {"ensemble_size": 50, "integrator_dt": 0.001}}"#;

#[test]
fn full_pipeline_is_byte_reproducible() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(root.path(), SMALL);
    let run_all = |name: &str, workers: &str| {
        let out = root.path().join(name);
        let o = out.to_str().unwrap();
        ok(&["--config", &cfg, "--out", o, "simulate-truth"]);
        ok(&["--config", &cfg, "--out", o, "derive-dual"]);
        ok(&[
            "--config",
            &cfg,
            "--out",
            o,
            "--workers",
            workers,
            "gen-dual-tables",
        ]);
        for f in ["enkf", "dukf"] {
            let dir = out.join(f);
            ok(&[
                "--config",
                &cfg,
                "--out",
                dir.to_str().unwrap(),
                "--input",
                o,
                "run",
                "--filter",
                f,
            ]);
        }
        let enkf = format!("enkf={}", out.join("enkf").display());
        let dukf = format!("dukf={}", out.join("dukf").display());
        let meas = out.join("measurements.csv");
        ok(&[
            "--out",
            out.join("cmp").to_str().unwrap(),
            "compare",
            "--run",
            &enkf,
            "--run",
            &dukf,
            "--truth",
            out.join("truth.csv").to_str().unwrap(),
            "--measurements",
            meas.to_str().unwrap(),
        ]);
        out
    };
    let a = run_all("a", "4");
    let b = run_all("b", "4");
    let c = run_all("c", "1");
    let files = [
        "truth.csv",
        "measurements.csv",
        "network.json",
        "c1.json",
        "c2.json",
        "c3.json",
        "c4.json",
        "c5.json",
        "enkf/filter_output.csv",
        "enkf/filter_forecast.csv",
        "enkf/manifest.json",
        "dukf/filter_output.csv",
        "dukf/filter_forecast.csv",
        "dukf/manifest.json",
        "cmp/metrics.json",
        "cmp/plot_states.dat",
        "cmp/plot_p12.dat",
        "cmp/plot_trace.dat",
    ];
    for f in files {
        assert_eq!(
            read(&a, f),
            read(&b, f),
            "{f} differs between identical runs"
        );
    }
    for f in ["c1.json", "c5.json", "dukf/filter_output.csv"] {
        assert_eq!(read(&a, f), read(&c, f), "{f} depends on the worker count");
    }
    let meas = String::from_utf8(read(&a, "measurements.csv")).unwrap();
    assert_eq!(meas.lines().count(), 51);
    let manifest: serde_json::Value =
        serde_json::from_slice(&read(&a, "dukf/manifest.json")).unwrap();
    assert_eq!(manifest["filter"], "dukf");
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 6);
}

#[test]
fn noiseless_measurements_equal_truth() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(
        root.path(),
        r#"{"measurement": {"r": 0.0}, "truth": {"dt": 0.001, "t_end": 2.0}}"#,
    );
    let out = root.path().join("o");
    ok(&[
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "simulate-truth",
    ]);
    let truth = fs::read_to_string(out.join("truth.csv")).unwrap();
    let rows: Vec<Vec<&str>> = truth
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    let meas = fs::read_to_string(out.join("measurements.csv")).unwrap();
    for (k, line) in meas.lines().skip(1).enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        let row = &rows[(k + 1) * 200];
        assert_eq!(cols[0], row[0]);
        assert_eq!(cols[1], row[2]);
    }
}

#[test]
fn exit_codes_distinguish_validation_from_numerical_errors() {
    let root = tempfile::tempdir().unwrap();
    let bad = write_config(root.path(), r#"{"measurement": {"r": -1.0}}"#);
    assert_eq!(
        dukf(&["--config", &bad, "--out", "x", "simulate-truth"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(dukf(&["run", "--filter", "kalman"]).status.code(), Some(2));
    let missing = root.path().join("nothing");
    let code = dukf(&[
        "--out",
        missing.to_str().unwrap(),
        "run",
        "--filter",
        "dukf",
    ])
    .status
    .code();
    assert_eq!(code, Some(2));

    // a population cap of 1 truncates nearly every second-moment path
    let strict = write_config(
        root.path(),
        r#"{"dual": {"n_paths": 2000, "caps": {"max_population": 1, "max_events": 1000000}}}"#,
    );
    let out = root.path().join("t");
    let o = out.to_str().unwrap();
    assert_eq!(
        dukf(&[
            "--config",
            &strict,
            "--out",
            o,
            "--strict",
            "gen-dual-tables"
        ])
        .status
        .code(),
        Some(3)
    );
    let lenient = dukf(&["--config", &strict, "--out", o, "gen-dual-tables"]);
    assert!(lenient.status.success());
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("warning"));
}

#[test]
fn compare_scores_exact_output_as_zero_and_ignores_row_order() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(root.path(), r#"{"truth": {"dt": 0.001, "t_end": 2.0}}"#);
    let out = root.path().join("o");
    let o = out.to_str().unwrap();
    ok(&["--config", &cfg, "--out", o, "simulate-truth"]);

    // a "filter" that reports the truth at every measurement time
    let truth = fs::read_to_string(out.join("truth.csv")).unwrap();
    let rows: Vec<&str> = truth.lines().skip(1).collect();
    let mut lines = vec!["t,mean1,mean2,p11,p12,p22,k1,k2".to_string()];
    for k in 0..=10 {
        lines.push(format!("{},0,0,0,0,0", rows[k * 200]));
    }
    let perfect = root.path().join("perfect");
    fs::create_dir_all(&perfect).unwrap();
    fs::write(perfect.join("filter_output.csv"), lines.join("\n") + "\n").unwrap();
    let shuffled = root.path().join("shuffled");
    fs::create_dir_all(&shuffled).unwrap();
    let mut body = lines[1..].to_vec();
    body.reverse();
    body.insert(0, lines[0].clone());
    fs::write(shuffled.join("filter_output.csv"), body.join("\n") + "\n").unwrap();

    let cmp = |run: &Path, dest: &str| {
        let dest = root.path().join(dest);
        ok(&[
            "--out",
            dest.to_str().unwrap(),
            "compare",
            "--run",
            &format!("x={}", run.display()),
            "--truth",
            out.join("truth.csv").to_str().unwrap(),
            "--measurements",
            out.join("measurements.csv").to_str().unwrap(),
        ]);
        fs::read(dest.join("metrics.json")).unwrap()
    };
    let m1 = cmp(&perfect, "m1");
    let m2 = cmp(&shuffled, "m2");
    assert_eq!(m1, m2);
    let v: serde_json::Value = serde_json::from_slice(&m1).unwrap();
    assert_eq!(v["runs"]["x"]["posterior"]["mse"][0], 0.0);
    assert_eq!(v["runs"]["x"]["posterior"]["mse"][1], 0.0);
    assert_eq!(v["runs"]["x"]["posterior"]["n_points"], 10);

    // a time off the truth grid is rejected
    let off = root.path().join("off");
    fs::create_dir_all(&off).unwrap();
    fs::write(
        off.join("filter_output.csv"),
        "t,mean1,mean2,p11,p12,p22,k1,k2\n0.20005,0,0,0,0,0,0,0\n",
    )
    .unwrap();
    let code = dukf(&[
        "--out",
        root.path().join("m3").to_str().unwrap(),
        "compare",
        "--run",
        off.to_str().unwrap(),
        "--truth",
        out.join("truth.csv").to_str().unwrap(),
    ])
    .status
    .code();
    assert_eq!(code, Some(2));
}

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sirlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sirlab"))
        .args(args)
        .env_remove("SIRLAB_OUTPUT")
        .env_remove("SIRLAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn records(out: &[u8]) -> Vec<Value> {
    String::from_utf8_lossy(out)
        .lines()
        .map(|l| serde_json::from_str(l).expect("each line is JSON"))
        .collect()
}

fn without_timestamps(out: &[u8]) -> Vec<Value> {
    records(out)
        .into_iter()
        .map(|mut r| {
            r.as_object_mut().unwrap().remove("timestamp");
            r
        })
        .collect()
}

#[test]
fn lower_bound_prints_quarter() {
    let out = sirlab(&["bounds", "lower", "--d", "3", "--p", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let recs = records(&out.stdout);
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0]["payload"]["lower_bound"], 0.25);
    assert_eq!(recs[0]["subcommand"], "bounds lower");
}

#[test]
fn one_dimensional_simulation_dies_out() {
    let out = sirlab(&[
        "simulate",
        "--d",
        "1",
        "--p",
        "1",
        "--lambda",
        "10",
        "--replicas",
        "100",
        "--n-max",
        "100000",
        "--seed",
        "42",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let recs = records(&out.stdout);
    assert_eq!(recs.len(), 100);
    assert!(recs
        .iter()
        .all(|r| r["payload"]["outcome"]["status"] == "extinct"));
    assert_eq!(recs[0]["seed_lineage"]["master_seed"], 42);
}

#[test]
fn enumerates_twelve_paths() {
    let out = sirlab(&["paths", "enum", "--d", "2", "--K", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let rec = &records(&out.stdout)[0];
    assert_eq!(rec["payload"]["count"], 12);
    let paths = rec["payload"]["paths"].as_array().unwrap();
    assert_eq!(paths.len(), 12);
    assert_eq!(paths[0].as_array().unwrap().len(), 3);
    assert_eq!(paths[0][0], serde_json::json!([0, 0]));
}

#[test]
fn path_bound_reports_divergence() {
    let out = sirlab(&["paths", "bound", "--d", "3", "--p", "1", "--lambda", "0.1"]);
    let rec = &records(&out.stdout)[0];
    assert!(
        (rec["payload"]["expected_total_infections"]
            .as_f64()
            .unwrap()
            - 2.0)
            .abs()
            < 1e-12
    );
    let out = sirlab(&["paths", "bound", "--d", "3", "--p", "1", "--lambda", "0.3"]);
    let rec = &records(&out.stdout)[0];
    assert_eq!(rec["payload"]["diverges"], true);
    assert!(rec["payload"]["expected_total_infections"].is_null());
}

#[test]
fn exit_codes() {
    assert_eq!(
        sirlab(&["bounds", "lower", "--d", "1", "--p", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        sirlab(&["bounds", "upper", "--d", "1000", "--r", "0.9"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(sirlab(&["bounds", "frobnicate"]).status.code(), Some(1));
    assert_eq!(
        sirlab(&["bounds", "lower", "--d", "x"]).status.code(),
        Some(1)
    );
    assert_eq!(
        sirlab(&["bounds", "lower", "--p", "1"]).status.code(),
        Some(1)
    );
    assert_eq!(sirlab(&["--help"]).status.code(), Some(0));
    let out = sirlab(&["simulate", "--d", "2", "--p", "0.5", "--lambda", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("finite t_max or n_max"));
}

#[test]
fn oracle_compare_on_triangle() {
    let out = sirlab(&[
        "oracle",
        "compare",
        "--graph",
        "triangle",
        "--lambda",
        "1",
        "--replicas",
        "100000",
    ]);
    let p = &records(&out.stdout)[0]["payload"];
    assert!(p["tv_event_driven"].as_f64().unwrap() < 0.01);
    assert!(p["tv_ctmc"].as_f64().unwrap() < 0.01);
    let out = sirlab(&[
        "oracle",
        "compare",
        "--graph",
        "0-1,1-2,2-3,3-4,4-5,5-6",
        "--lambda",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn walks_report_shape() {
    let out = sirlab(&[
        "walks",
        "mc",
        "--d",
        "20",
        "--theta",
        "1.5",
        "--psi",
        "2",
        "--k-blocks",
        "20",
        "--reps",
        "200",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let p = &records(&out.stdout)[0]["payload"];
    for key in [
        "d",
        "theta",
        "psi",
        "k_blocks",
        "reps",
        "mean",
        "stderr",
        "resample_rate",
    ] {
        assert!(!p[key].is_null(), "missing {key}");
    }
    for key in ["half_mean", "delta", "pass"] {
        assert!(!p["saturation"][key].is_null(), "missing saturation.{key}");
    }
}

#[test]
fn bounds_scan_is_csv() {
    let out = sirlab(&[
        "bounds", "scan", "--r", "1.2", "--d-min", "1000", "--d-max", "100000", "--points", "3",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "d,row_sum,certified,survival_lb");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("1000,"));
}

#[test]
fn estimate_csv_columns() {
    let out = sirlab(&[
        "estimate",
        "--d",
        "3",
        "--p",
        "1",
        "--replicas",
        "100",
        "--n-max",
        "1000",
        "--tolerance",
        "0.05",
        "--csv",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("d,p,lambda_hat,ci_lo,ci_hi,normalized,replicas,n_max,epsilon\n3,1,"));
}

#[test]
fn config_file_and_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# lower bound run\nd = 5\np = 0.5\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let rec = &records(&sirlab(&["--config", cfg, "bounds", "lower"]).stdout)[0];
    assert!((rec["payload"]["lower_bound"].as_f64().unwrap() - 1.0 / 3.5).abs() < 1e-15);
    let rec =
        &records(&sirlab(&["--config", cfg, "bounds", "lower", "--d", "3", "--p", "1"]).stdout)[0];
    assert_eq!(rec["payload"]["lower_bound"], 0.25);
    assert_eq!(rec["config"]["d"], 3);

    std::fs::write(dir.path().join("bad.cfg"), "colour = red\n").unwrap();
    let bad = dir.path().join("bad.cfg");
    assert_eq!(
        sirlab(&["--config", bad.to_str().unwrap(), "bounds", "lower"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn output_path_from_flag_env_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let from_flag = dir.path().join("flag.jsonl");
    let from_env = dir.path().join("env.jsonl");
    let from_cfg = dir.path().join("cfg.jsonl");
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, format!("output = {}\n", from_cfg.display())).unwrap();
    let run = |extra: &[&str], env: Option<&Path>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_sirlab"));
        cmd.args(["--config", cfg.to_str().unwrap()])
            .args(extra)
            .args(["bounds", "lower", "--d", "3", "--p", "1"]);
        cmd.env_remove("SIRLAB_OUTPUT");
        if let Some(p) = env {
            cmd.env("SIRLAB_OUTPUT", p);
        }
        let out = cmd.output().unwrap();
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
    };
    run(&["--output", from_flag.to_str().unwrap()], Some(&from_env));
    assert!(from_flag.exists() && !from_env.exists() && !from_cfg.exists());
    run(&[], Some(&from_env));
    assert!(from_env.exists() && !from_cfg.exists());
    run(&[], None);
    assert!(from_cfg.exists());
    let text = std::fs::read_to_string(&from_cfg).unwrap();
    assert_eq!(records(text.as_bytes())[0]["payload"]["lower_bound"], 0.25);
}

#[test]
fn deterministic_and_worker_independent() {
    let args = |w: &str| {
        vec![
            "--workers".to_string(),
            w.to_string(),
            "--seed".into(),
            "7".into(),
            "simulate".into(),
            "--d".into(),
            "3".into(),
            "--p".into(),
            "0.8".into(),
            "--lambda".into(),
            "0.4".into(),
            "--replicas".into(),
            "50".into(),
            "--n-max".into(),
            "500".into(),
        ]
    };
    let run = |w: &str| {
        let a = args(w);
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        let out = sirlab(&refs);
        assert_eq!(out.status.code(), Some(0));
        without_timestamps(&out.stdout)
    };
    let one = run("1");
    let mut one_again = run("1");
    for r in &mut one_again {
        r["config"].as_object_mut().unwrap().remove("workers");
    }
    for w in ["4", "8"] {
        let mut other = run(w);
        for r in &mut other {
            r["config"].as_object_mut().unwrap().remove("workers");
        }
        assert_eq!(other, one_again);
    }
    assert_eq!(one.len(), 50);
    let env_seeds: std::collections::HashSet<_> = one
        .iter()
        .map(|r| r["payload"]["env_seed"].as_u64().unwrap())
        .collect();
    assert_eq!(env_seeds.len(), 50);
}

#[test]
fn quenched_mode_fixes_environment() {
    let out = sirlab(&[
        "simulate",
        "--d",
        "2",
        "--p",
        "0.5",
        "--lambda",
        "1",
        "--replicas",
        "5",
        "--n-max",
        "100",
        "--mode",
        "quenched",
        "--env-seed",
        "99",
    ]);
    let recs = records(&out.stdout);
    assert!(recs.iter().all(|r| r["payload"]["env_seed"] == 99));
    assert_eq!(
        sirlab(&[
            "simulate", "--d", "2", "--p", "0.5", "--lambda", "1", "--n-max", "10", "--mode",
            "frozen"
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn wide_dimensions_in_upper_bound_records() {
    let out = sirlab(&[
        "bounds",
        "upper",
        "--d",
        "100000000000000000000000000000000000",
        "--r",
        "1.2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let p = &records(&out.stdout)[0]["payload"];
    assert_eq!(p["certification"]["certified"], true);
    assert_eq!(
        p["certification"]["d"],
        "100000000000000000000000000000000000"
    );
    assert_eq!(p["phi"]["entries"].as_array().unwrap().len(), 3);
}

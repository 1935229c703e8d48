use std::fs;
use std::path::Path;
use std::process::Command;

use realnessgan::harness::{run_cli, RunSummary};

const SMALL: [&str; 10] = [
    "--set", "g_hidden=16,16",
    "--set", "d_hidden=16,16",
    "--set", "data_samples=2000",
    "--eval-samples", "500",
    "--batch", "32",
];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_realnessgan"))
}

fn read_summary(dir: &Path) -> RunSummary {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn train_with_zero_iterations_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["realnessgan", "train", "--iters", "0", "--out", out.to_str().unwrap()];
    args.extend(SMALL);
    assert_eq!(run_cli(args), 0);
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "iter,d_loss,g_loss,hq_ratio,modes,dispersion");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0,nan,nan,"));
    let samples = fs::read_to_string(out.join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 501);
    assert!(out.join("generator.ckpt").exists());
    let s = read_summary(&out);
    assert_eq!(s.records.len(), 1);
    assert!(s.succeeded());
}

#[test]
fn short_runs_for_every_method() {
    let dir = tempfile::tempdir().unwrap();
    for (method, extra) in [("realness", "--resample"), ("standard", "--resample"), ("lsgan", ""), ("hinge", ""), ("wgan", "")] {
        let out = dir.path().join(method);
        let mut args = vec!["realnessgan", "train", "--method", method, "--iters", "3", "--eval-every", "2", "--out", out.to_str().unwrap()];
        args.extend(SMALL);
        if !extra.is_empty() {
            args.push(extra);
        }
        if method == "realness" {
            args.extend(["--outcomes", "5", "--g-objective", "1"]);
        }
        assert_eq!(run_cli(args), 0, "{method}");
        let s = read_summary(&out);
        assert_eq!(s.records.iter().map(|r| r.iter).collect::<Vec<_>>(), vec![0, 2, 3], "{method}");
        let k_d = if method == "wgan" { 5 } else { 1 };
        assert_eq!(s.d_steps, 3 * k_d);
        assert_eq!(s.config["method"], method);
    }
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small run\nk_g = 3\niterations = 2\noutcomes = 4\ng_hidden = 8\nd_hidden = 8\ndata_samples = 500\neval_samples = 200\nbatch_size = 16\n").unwrap();
    let out = dir.path().join("run");
    let code = run_cli(["realnessgan", "train", "--config", cfg.to_str().unwrap(), "--kg", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let s = read_summary(&out);
    assert_eq!(s.config["k_g"], "2");
    assert_eq!(s.config["outcomes"], "4");
    assert_eq!(s.g_steps, 4);
}

#[test]
fn usage_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = bin().args(["train", "--method", "vanilla", "--out"]).arg(&out).output().unwrap();
    assert_ne!(o.status.code(), Some(0));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("Usage") && err.contains("vanilla"), "{err}");

    let o = bin().args(["train", "--bogus"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().args(["train", "--outcomes", "1", "--out"]).arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = bin().output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diverging_run_reports_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("boom");
    let mut args = vec!["realnessgan", "train", "--method", "lsgan", "--iters", "50", "--set", "g_lr=1e200", "--set", "d_lr=1e200", "--out", out.to_str().unwrap()];
    args.extend(SMALL);
    assert_eq!(run_cli(args), 1);
    let s = read_summary(&out);
    let f = s.failure.expect("failure record");
    assert!(f.iteration >= 1 && f.iteration <= 50);
    assert!(s.completed_iterations < 50);
}

#[test]
fn verify_theory_passes() {
    let o = bin().args(["verify-theory", "--trials", "100", "--seed", "7"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    let gap: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("worst_minimality_gap: "))
        .expect("gap line")
        .parse()
        .unwrap();
    assert!(gap >= -1e-12);
    assert!(text.contains("result pass"));
}

#[test]
fn sample_data_and_eval_dump() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    assert_eq!(run_cli(["realnessgan", "sample-data", "--n", "5000", "--seed", "3", "--out", csv.to_str().unwrap()]), 0);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 5001);

    let out = dir.path().join("eval");
    assert_eq!(run_cli(["realnessgan", "eval-dump", "--input", csv.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("eval.json")).unwrap()).unwrap();
    assert_eq!(m["modes_recovered"], 9);
    assert!(m["hq_ratio"].as_f64().unwrap() > 0.99);

    let run = dir.path().join("run");
    let mut args = vec!["realnessgan", "train", "--iters", "1", "--out", run.to_str().unwrap()];
    args.extend(SMALL);
    assert_eq!(run_cli(args), 0);
    let ck = run.join("generator.ckpt");
    let dump = dir.path().join("dump");
    let a = ["realnessgan", "eval-dump", "--checkpoint", ck.to_str().unwrap(), "--samples", "300", "--out", dump.to_str().unwrap()];
    assert_eq!(run_cli(a), 0);
    assert_eq!(fs::read_to_string(dump.join("samples.csv")).unwrap().lines().count(), 301);
    let first = fs::read(dump.join("samples.csv")).unwrap();
    assert_eq!(run_cli(a), 0);
    assert_eq!(fs::read(dump.join("samples.csv")).unwrap(), first);
}

#[test]
fn sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let mut args = vec!["realnessgan", "sweep-outcomes", "--outcomes-list", "2,4", "--kg-list", "1,2", "--iters", "2", "--out", out.to_str().unwrap()];
    args.extend(SMALL);
    assert_eq!(run_cli(args), 0);
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(table.starts_with("outcomes,k_g,modes,hq_ratio,dispersion,status\n"));
    assert!(out.join("n4_kg2").join("metrics.csv").exists());
}

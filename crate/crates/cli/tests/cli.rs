use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use clap::Parser;
use odlae_cli::args::{Cli, Command as Sub, RunArgs, SweepArgs};
use odlae_cli::run::execute;
use odlae_cli::sweep::{grid_csv, sweep};

fn odlae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_odlae"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_args(extra: &[&str]) -> RunArgs {
    let mut argv = vec!["odlae", "run"];
    argv.extend_from_slice(extra);
    match Cli::try_parse_from(argv).unwrap().command {
        Sub::Run(a) => a,
        _ => unreachable!(),
    }
}

fn sweep_args(extra: &[&str]) -> SweepArgs {
    let mut argv = vec!["odlae", "sweep"];
    argv.extend_from_slice(extra);
    match Cli::try_parse_from(argv).unwrap().command {
        Sub::Sweep(a) => a,
        _ => unreachable!(),
    }
}

fn write_csv(path: &Path) {
    let mut body = String::from("f1,f2,label\n");
    for i in 0..40 {
        let y = i % 2;
        body.push_str(&format!("{},{},{}\n", 0.2 + 0.5 * y as f64, (i % 7) as f64 / 7.0, y));
    }
    fs::write(path, body).unwrap();
}

#[test]
fn identical_runs_print_identical_json() {
    let args = ["run", "--length", "400", "--seed", "7"];
    let a = odlae(&args);
    let b = odlae(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(v["metrics"]["accuracy"].is_f64());
    assert_eq!(v["config"]["seed"], 7);
    assert_eq!(v["examples_seen"], 400);
}

#[test]
fn unknown_label_column_is_a_data_error_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    write_csv(&csv);
    let out = odlae(&[
        "run",
        "--dataset",
        csv.to_str().unwrap(),
        "--has-header",
        "--label-col",
        "klass",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("klass"));
}

#[test]
fn malformed_row_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    fs::write(&csv, "f1,label\n0.1,0\nabc,1\n").unwrap();
    let out = odlae(&["run", "--dataset", csv.to_str().unwrap(), "--has-header", "--label-col", "label"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(odlae(&["run", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(odlae(&["run", "--variant", "odlae9"]).status.code(), Some(2));
    assert_eq!(odlae(&["run", "--theta0", "1.5"]).status.code(), Some(2));
    assert_eq!(odlae(&["run", "--dataset", "/no/such/file.csv"]).status.code(), Some(2));
    assert_eq!(odlae(&["run", "--config", "/no/such/config"]).status.code(), Some(2));
}

#[test]
fn command_line_flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# defaults for this test\nlength = 300\nseed=3\nlr=0.05\nfixed-tradeoff=true\n").unwrap();
    let out = odlae(&["run", "--config", cfg.to_str().unwrap(), "--seed", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["config"]["seed"], 4);
    assert_eq!(v["config"]["lr"], 0.05);
    assert_eq!(v["config"]["adaptive_tradeoff"], false);
    assert_eq!(v["stream"]["length"], 300);
}

#[test]
fn summary_and_csv_outputs_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("s.json");
    let windows = dir.path().join("w.csv");
    let trace = dir.path().join("t.csv");
    let out = odlae(&[
        "run",
        "--length",
        "250",
        "--window",
        "100",
        "--out",
        summary.to_str().unwrap(),
        "--window-csv",
        windows.to_str().unwrap(),
        "--trace-csv",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(v["metrics"]["window"], 100);
    let w = fs::read_to_string(&windows).unwrap();
    assert_eq!(w.lines().next(), Some("window_end_t,accuracy"));
    assert_eq!(w.lines().count(), 3);
    let t = fs::read_to_string(&trace).unwrap();
    let header = t.lines().next().unwrap();
    assert!(header.starts_with("t,true_class,predicted_class,reconstruction_loss"));
    assert!(header.contains("beta_0"));
    assert_eq!(t.lines().count(), 251);
}

#[test]
fn single_cell_sweep_matches_run() {
    let run = execute(&run_args(&["--length", "600", "--layers", "2", "--hidden-units", "16"])).unwrap();
    let s = sweep(&sweep_args(&["--length", "600", "--grid-layers", "2", "--grid-hidden", "16"])).unwrap();
    assert_eq!(s.cells.len(), 1);
    let cell = &s.cells[0];
    assert_eq!(cell.accuracy, Some(run.metrics.accuracy));
    assert_eq!(cell.macro_f1, Some(run.metrics.macro_f1));
    assert_eq!(cell.hamming_loss, Some(run.metrics.hamming_loss));
    assert_eq!(s.best.as_ref().unwrap().accuracy, run.metrics.accuracy);
}

#[test]
fn sweep_rows_are_ordered_by_depth_then_width() {
    let s = sweep(&sweep_args(&[
        "--length",
        "200",
        "--grid-layers",
        "3,1,2",
        "--grid-hidden",
        "8,4",
    ]))
    .unwrap();
    let keys: Vec<(usize, usize)> = s.cells.iter().map(|c| (c.hidden_layers, c.hidden_units)).collect();
    assert_eq!(keys, vec![(1, 4), (1, 8), (2, 4), (2, 8), (3, 4), (3, 8)]);
    let csv = grid_csv(&s);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("hidden_layers,hidden_units,accuracy,macro_f1,hamming_loss,wall_time_s,status")
    );
    assert!(lines.next().unwrap().starts_with("1,4,"));
    let best = s.best.unwrap();
    let max = s.cells.iter().filter_map(|c| c.accuracy).fold(f64::MIN, f64::max);
    assert_eq!(best.accuracy, max);
}

#[test]
fn two_phase_sweep_searches_widths_at_the_best_depth() {
    let s = sweep(&sweep_args(&[
        "--length",
        "200",
        "--grid-layers",
        "1,2",
        "--grid-hidden",
        "4",
        "--two-phase",
        "--phase2-hidden",
        "4,8",
    ]))
    .unwrap();
    let phase1: Vec<_> = s.cells.iter().filter(|c| c.hidden_units == 4).collect();
    assert_eq!(phase1.len(), 2);
    let wide: Vec<_> = s.cells.iter().filter(|c| c.hidden_units == 8).collect();
    assert_eq!(wide.len(), 1);
    let best_depth = phase1
        .iter()
        .max_by(|a, b| a.accuracy.partial_cmp(&b.accuracy).unwrap())
        .unwrap()
        .hidden_layers;
    assert_eq!(wide[0].hidden_layers, best_depth);
}

#[test]
fn resumed_run_matches_unbroken_run() {
    let dir = tempfile::tempdir().unwrap();
    for variant in ["odlae1", "odlae2", "odldae1", "linear_ogd_baseline"] {
        let ck = dir.path().join(format!("{variant}.ckpt"));
        let base = ["--variant", variant, "--length", "1000", "--window", "250"];
        let whole = execute(&run_args(&base)).unwrap();

        let mut first = base.to_vec();
        first.extend_from_slice(&["--max-steps", "500", "--checkpoint-out", ck.to_str().unwrap()]);
        let half = execute(&run_args(&first)).unwrap();
        assert_eq!(half.examples_seen, 500);
        assert!(!half.complete);

        let mut second = base.to_vec();
        second.extend_from_slice(&["--resume", ck.to_str().unwrap()]);
        let resumed = execute(&run_args(&second)).unwrap();
        assert_eq!(resumed.to_json().unwrap(), whole.to_json().unwrap(), "{variant}");
    }
}

#[test]
fn resume_rejects_a_different_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("c.ckpt");
    execute(&run_args(&["--length", "200", "--max-steps", "50", "--checkpoint-out", ck.to_str().unwrap()])).unwrap();
    let out = odlae(&["run", "--length", "200", "--lr", "0.02", "--resume", ck.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("c.ckpt");
    execute(&run_args(&["--length", "100", "--checkpoint-out", ck.to_str().unwrap()])).unwrap();
    let mut bytes = fs::read(&ck).unwrap();
    bytes[0] ^= 0xff;
    fs::write(&ck, &bytes).unwrap();
    let out = odlae(&["run", "--length", "100", "--resume", ck.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("format"));
    let info = odlae(&["checkpoint", "info", ck.to_str().unwrap()]);
    assert!(!info.status.success());
}

#[test]
fn checkpoint_info_describes_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("c.ckpt");
    execute(&run_args(&[
        "--variant",
        "odlae2",
        "--length",
        "120",
        "--layers",
        "2",
        "--hidden-units",
        "8",
        "--checkpoint-out",
        ck.to_str().unwrap(),
    ]))
    .unwrap();
    let out = odlae(&["checkpoint", "info", ck.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["variant"], "odlae2");
    assert_eq!(v["hidden_layers"], 2);
    assert_eq!(v["hidden_dim"], 8);
    assert_eq!(v["model_steps"], 120);
    assert_eq!(v["examples_seen"], 120);
    assert_eq!(v["config"]["hidden_units"], 8);
}

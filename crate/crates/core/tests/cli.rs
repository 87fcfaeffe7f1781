//! End-to-end checks of the compiled binary: exit codes, file outputs, and
//! machine-readable formats.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn netforecast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netforecast"))
        .args(args)
        .output()
        .expect("binary failed to spawn")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path_str(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn line_count(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn synth_29_days_writes_8352_rows_plus_header() {
    let dir = TempDir::new().unwrap();
    let out_csv = path_str(&dir, "s.csv");
    let out = netforecast(&["synth", "--days", "29", "--seed", "1", "--output", &out_csv]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 8353);
    assert_eq!(lines[0], "timestamp,bps");
}

#[test]
fn unknown_flag_exits_one_and_writes_no_files() {
    let dir = TempDir::new().unwrap();
    let out_csv = path_str(&dir, "x.csv");
    let out = netforecast(&["synth", "--days", "1", "--output", &out_csv, "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn missing_input_file_exits_two() {
    let out = netforecast(&["train", "--data", "/no/such/file.csv", "--output", "/tmp/never.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn full_pipeline_runs_and_evaluation_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let data = path_str(&dir, "series.csv");
    let ckpt = path_str(&dir, "model.json");
    let hist = path_str(&dir, "history.csv");
    let preds = path_str(&dir, "predictions.csv");

    let out = netforecast(&["synth", "--days", "2", "--seed", "5", "--output", &data]);
    assert_eq!(out.status.code(), Some(0));

    let out = netforecast(&[
        "train", "--data", &data, "--model", "rnn", "--window", "4", "--epochs", "2", "--output",
        &ckpt, "--history", &hist,
    ]);
    assert_eq!(out.status.code(), Some(0), "train failed: {:?}", out);
    assert!(dir.path().join("model.json").exists());
    let history = std::fs::read_to_string(&hist).unwrap();
    assert!(history.starts_with("epoch,mean_train_loss\n"));
    assert_eq!(history.lines().count(), 3);

    let eval_a = netforecast(&["evaluate", "--data", &data, "--checkpoint", &ckpt, "--format", "json"]);
    assert_eq!(eval_a.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout_of(&eval_a)).unwrap();
    for space in ["bps", "normalized"] {
        for key in ["mae", "rmse", "wape", "n"] {
            assert!(report[space][key].is_number(), "missing {space}.{key}");
        }
    }
    let eval_b = netforecast(&["evaluate", "--data", &data, "--checkpoint", &ckpt, "--format", "json"]);
    assert_eq!(eval_a.stdout, eval_b.stdout);

    let out = netforecast(&["predict", "--data", &data, "--checkpoint", &ckpt, "--output", &preds]);
    assert_eq!(out.status.code(), Some(0));
    let pred_text = std::fs::read_to_string(&preds).unwrap();
    assert!(pred_text.starts_with("timestamp,actual_bps,predicted_bps\n"));
    // 576 points split 80/20 leave 116 test points; window 4 gives 112 rows.
    assert_eq!(pred_text.lines().count(), 113);

    let fgsm = netforecast(&[
        "fgsm", "--data", &data, "--checkpoint", &ckpt, "--epsilon", "1e-3", "--format", "json",
    ]);
    assert_eq!(fgsm.status.code(), Some(0));
    let probe: serde_json::Value = serde_json::from_str(&stdout_of(&fgsm)).unwrap();
    for key in ["epsilon", "loss_before", "loss_after", "delta", "first_order", "residual"] {
        assert!(probe[key].is_number(), "missing {key}");
    }
}

#[test]
fn benchmark_emits_the_complete_eight_cell_grid() {
    let dir = TempDir::new().unwrap();
    let data = path_str(&dir, "series.csv");
    let cfg = path_str(&dir, "small.json");
    let report_path = path_str(&dir, "report.json");
    assert_eq!(
        netforecast(&["synth", "--days", "3", "--seed", "9", "--output", &data]).status.code(),
        Some(0)
    );
    std::fs::write(
        &cfg,
        r#"{"conv_filters": 8, "recurrent_units": 8, "heads": 2, "d_ff": 16, "epochs": 2}"#,
    )
    .unwrap();

    let out = netforecast(&[
        "benchmark", "--data", &data, "--windows", "6,12", "--config", &cfg, "--format", "json",
        "--output", &report_path,
    ]);
    assert_eq!(out.status.code(), Some(0), "benchmark failed: {:?}", out);
    let report: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    let cells = report["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 8);
    for cell in cells {
        assert!(cell["error"].is_null(), "cell failed: {cell}");
        assert!(cell["report"]["bps"]["mae"].is_number());
    }
    assert_eq!(report["windows"].as_array().unwrap().len(), 2);
    assert_eq!(report["models"].as_array().unwrap().len(), 4);
    assert!(report["metadata"]["dataset_sha256"].is_string());
    // The on-disk copy is byte-identical to stdout.
    assert_eq!(std::fs::read(&report_path).unwrap(), out.stdout);
}

#[test]
fn ingest_converts_counters_exactly() {
    let dir = TempDir::new().unwrap();
    let input = path_str(&dir, "telemetry.json");
    let output = path_str(&dir, "ingested.csv");
    std::fs::write(
        &input,
        r#"[{"ts":1704067200,"octets":1000000},
            {"ts":1704067500,"octets":1000000},
            {"ts":1704067800,"octets":4750000000}]"#,
    )
    .unwrap();
    let out = netforecast(&["ingest", "--input", &input, "--output", &output]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&output).unwrap();
    // Zero delta then 4749e6 octets over 300 s = 126640000 bps.
    assert_eq!(text, "timestamp,bps\n1704067500,0\n1704067800,126640000\n");

    std::fs::write(&input, "not json").unwrap();
    let out = netforecast(&["ingest", "--input", &input, "--output", &output]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let data = path_str(&dir, "series.csv");
    let cfg = path_str(&dir, "bad.json");
    let ckpt = path_str(&dir, "model.json");
    assert_eq!(
        netforecast(&["synth", "--days", "1", "--seed", "3", "--output", &data]).status.code(),
        Some(0)
    );
    std::fs::write(&cfg, r#"{"bogus_knob": 1}"#).unwrap();
    let out = netforecast(&[
        "train", "--data", &data, "--config", &cfg, "--model", "rnn", "--window", "4", "--output",
        &ckpt,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("model.json").exists());
}

#[test]
fn gradcheck_csv_lists_every_case_as_passing() {
    let out = netforecast(&["gradcheck", "--shapes", "1", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout_of(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "case,max_rel_error,max_abs_error,tolerance,passed");
    assert_eq!(lines.len(), 15);
    for line in &lines[1..] {
        assert!(line.ends_with(",true"), "failing case: {line}");
    }
}

//! Integration tests of the pipeline commands against synthetic inputs on
//! disk, plus exit-code checks of the installed binary.

mod common;

use std::process::Command;

use volcast::config::{Overrides, RunConfig, Task};
use volcast::data::{read_ensemble, read_summary};
use volcast::error::CliError;
use volcast::pipeline::{
    cmd_baseline, cmd_evaluate, cmd_forecast, cmd_prepare, cmd_scenario, cmd_train,
};
use volcast_core::forecaster::UpdateMode;

fn read_out(dir: &std::path::Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name))
        .unwrap_or_else(|e| panic!("missing output {name}: {e}"))
}

/// Data lines only (comment headers stripped).
fn data_lines(text: &str) -> Vec<String> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.to_string())
        .collect()
}

#[test]
fn prepare_is_idempotent_and_leakage_free() {
    let dir = common::scratch_dir("prepare_idempotent");
    let generated = common::ar1_rb_panel(2, 60, 0.5, 1.0, 10, 42);
    let config_path = common::write_inputs(&dir, &generated, 50, "");
    let config = RunConfig::from_file(&config_path).unwrap();

    cmd_prepare(&config).unwrap();
    let first = common::snapshot_tree(&dir.join("out"));
    cmd_prepare(&config).unwrap();
    let second = common::snapshot_tree(&dir.join("out"));
    assert_eq!(first, second, "prepare must be byte-idempotent");

    let stats_before = read_out(&dir, "norm_stats.csv");
    let normalized_before = read_out(&dir, "normalized_panel.csv");

    // Perturb only test-period values; training statistics must not move.
    let mut perturbed = generated;
    let n_days = perturbed.dates.len();
    for series in perturbed.values.iter_mut() {
        for v in series[50..n_days].iter_mut() {
            *v += 123.0;
        }
    }
    std::fs::write(dir.join("panel.csv"), perturbed.panel_csv()).unwrap();
    cmd_prepare(&config).unwrap();
    let stats_after = read_out(&dir, "norm_stats.csv");
    assert_eq!(
        stats_before, stats_after,
        "test values leaked into norm stats"
    );
    let normalized_after = read_out(&dir, "normalized_panel.csv");
    let train_rows_before: Vec<&str> = normalized_before.lines().take(52).collect();
    let train_rows_after: Vec<&str> = normalized_after.lines().take(52).collect();
    assert_eq!(train_rows_before, train_rows_after);
}

#[test]
fn prepare_requires_metadata_for_every_ticker() {
    let dir = common::scratch_dir("prepare_missing_meta");
    let generated = common::ar1_rb_panel(2, 60, 0.5, 1.0, 10, 42);
    let config_path = common::write_inputs(&dir, &generated, 50, "");
    // Drop the second ticker's metadata row.
    std::fs::write(
        dir.join("meta.csv"),
        "ticker,sector,location\nSYN0,Synthetic,EU\n",
    )
    .unwrap();
    let config = RunConfig::from_file(&config_path).unwrap();
    match cmd_prepare(&config) {
        Err(CliError::Data(msg)) => {
            assert!(msg.contains("SYN1"), "error must name the ticker: {msg}")
        }
        other => panic!("expected data error, got {other:?}"),
    }
}

#[test]
fn train_fans_out_and_is_deterministic() {
    let dir = common::scratch_dir("train_fanout");
    let generated = common::ar1_rb_panel(3, 80, 0.5, 1.0, 10, 7);
    let config_path = common::write_inputs(&dir, &generated, 70, "max_epochs = 15\nworkers = 2\n");
    let config = RunConfig::from_file(&config_path).unwrap();
    cmd_train(&config).unwrap();
    for t in ["SYN0", "SYN1", "SYN2"] {
        assert!(dir.join("out/models").join(format!("{t}.cvae")).exists());
        assert!(dir.join("out/history").join(format!("{t}.csv")).exists());
    }
    let first = common::snapshot_tree(&dir.join("out"));
    cmd_train(&config).unwrap();
    let second = common::snapshot_tree(&dir.join("out"));
    assert_eq!(
        first, second,
        "training must be deterministic given the seed"
    );
}

#[test]
fn early_stopping_fires_on_noise_fitting() {
    let dir = common::scratch_dir("train_early_stop");
    // Pure noise target: validation loss deteriorates once the network
    // starts memorizing the training draws.
    let generated = common::ar1_rb_panel(1, 120, 0.0, 0.0, 10, 99);
    let config_path = common::write_inputs(&dir, &generated, 110, "max_epochs = 400\n");
    let config = RunConfig::from_file(&config_path).unwrap();
    cmd_train(&config).unwrap();
    let history = read_out(&dir, "history/SYN0.csv");
    assert!(
        history.contains("stopped_early=true"),
        "expected early stop, history:\n{}",
        history.lines().take(3).collect::<Vec<_>>().join("\n")
    );
    let epochs = data_lines(&history).len() - 1; // minus column header
    assert!(epochs < 400, "ran all {epochs} epochs");
}

fn forecast_fixture(name: &str) -> (std::path::PathBuf, RunConfig) {
    let dir = common::scratch_dir(name);
    let generated = common::ar1_rb_panel(2, 100, 0.5, 2.0, 10, 21);
    let config_path = common::write_inputs(
        &dir,
        &generated,
        80,
        "max_epochs = 15\nsamples = 8\nhorizon = 12\nseed = 5\n",
    );
    let config = RunConfig::from_file(&config_path).unwrap();
    cmd_train(&config).unwrap();
    (dir, config)
}

#[test]
fn forecast_outputs_have_expected_shape_and_headers() {
    let (dir, config) = forecast_fixture("forecast_shapes");
    cmd_forecast(&config, Task::Long, UpdateMode::EnsembleAverage).unwrap();
    let ensemble_text = read_out(&dir, "ensemble_ucvae_long.csv");
    assert!(ensemble_text.starts_with("# config_hash="));
    assert!(ensemble_text.contains("seed=5"), "seed echo missing");
    let records = read_ensemble(&dir.join("out/ensemble_ucvae_long.csv")).unwrap();
    // 2 tickers x 8 samples x 12 horizon days.
    assert_eq!(records.len(), 2 * 8 * 12);
    let summary = read_summary(&dir.join("out/summary_ucvae_long.csv")).unwrap();
    assert_eq!(summary.len(), 2 * 12);
    for row in &summary {
        assert!(row.q025 <= row.q975);
    }
}

#[test]
fn rolling_forecasts_cover_each_test_date_once() {
    let (dir, config) = forecast_fixture("forecast_rolling");
    cmd_forecast(&config, Task::Rolling, UpdateMode::EnsembleAverage).unwrap();
    let records = read_ensemble(&dir.join("out/ensemble_ucvae_rolling.csv")).unwrap();
    for ticker in ["SYN0", "SYN1"] {
        let mut dates: Vec<_> = records
            .iter()
            .filter(|r| r.ticker == ticker && r.sample_index == 0)
            .map(|r| r.horizon_date)
            .collect();
        dates.sort();
        let unique: std::collections::BTreeSet<_> = dates.iter().copied().collect();
        assert_eq!(dates.len(), unique.len(), "a test date was forecast twice");
        // 100 - 80 = 20 test days, each covered exactly once.
        assert_eq!(dates.len(), 20);
        for r in records.iter().filter(|r| r.ticker == ticker) {
            assert!(r.horizon_date > r.origin);
            assert!(r.horizon_index < 5, "rolling horizons stay within a week");
        }
    }
}

#[test]
fn baselines_share_the_forecast_formats() {
    let (dir, config) = forecast_fixture("baseline_formats");
    cmd_baseline(&config, Task::Long).unwrap();
    let arma = read_ensemble(&dir.join("out/ensemble_arma11_long.csv")).unwrap();
    assert!(
        arma.iter().all(|r| r.sample_index == 0),
        "baselines emit S=1"
    );
    assert_eq!(arma.len(), 2 * 12);
    let var = read_ensemble(&dir.join("out/ensemble_var1_long.csv")).unwrap();
    assert_eq!(var.len(), 2 * 12);
    assert!(dir.join("out/arma11_params.csv").exists());
    assert!(dir.join("out/var1_params.csv").exists());
    // Same parser reads generative and baseline files: formats match.
    cmd_forecast(&config, Task::Long, UpdateMode::EnsembleAverage).unwrap();
    let generative = read_ensemble(&dir.join("out/ensemble_ucvae_long.csv")).unwrap();
    assert_eq!(
        generative
            .iter()
            .map(|r| r.horizon_date)
            .collect::<std::collections::BTreeSet<_>>(),
        arma.iter()
            .map(|r| r.horizon_date)
            .collect::<std::collections::BTreeSet<_>>(),
    );
}

#[test]
fn scenario_zero_rb_zeroes_the_advanced_block() {
    let (dir, config) = forecast_fixture("scenario_zero_rb");
    let overrides = Overrides {
        zero_rb: true,
        ..Overrides::default()
    };
    cmd_scenario(&config, &overrides).unwrap();
    let modified = read_out(&dir, "scenario_x0_modified.csv");
    for line in data_lines(&modified) {
        if line.contains(",rb_") {
            assert!(line.ends_with(",0"), "rb component not zeroed: {line}");
        }
    }
    // The baseline dump keeps the real flags (the horizon includes a
    // rebalance day by construction).
    let baseline = read_out(&dir, "scenario_x0_baseline.csv");
    assert!(
        data_lines(&baseline)
            .iter()
            .any(|l| l.contains(",rb_1,") && l.ends_with(",1")),
        "baseline dump lost its rebalance flags"
    );
}

#[test]
fn scenario_without_overrides_is_a_no_op_under_shared_seed() {
    let (dir, config) = forecast_fixture("scenario_noop");
    cmd_scenario(&config, &Overrides::default()).unwrap();
    let base = data_lines(&read_out(&dir, "ensemble_scenario_baseline_long.csv"));
    let modified = data_lines(&read_out(&dir, "ensemble_scenario_modified_long.csv"));
    assert_eq!(base, modified);
}

#[test]
fn scenario_x1_override_moves_the_first_step() {
    let (dir, config) = forecast_fixture("scenario_x1");
    let overrides = Overrides {
        set_x1: Some(4.0),
        ..Overrides::default()
    };
    cmd_scenario(&config, &overrides).unwrap();
    let base = read_summary(&dir.join("out/summary_scenario_baseline_long.csv")).unwrap();
    let modified = read_summary(&dir.join("out/summary_scenario_modified_long.csv")).unwrap();
    assert_eq!(base.len(), modified.len());
    assert_ne!(base[0].mean, modified[0].mean);
}

#[test]
fn evaluate_builds_report_with_fixed_column_order() {
    let (dir, config) = forecast_fixture("evaluate_report");
    cmd_forecast(&config, Task::Long, UpdateMode::EnsembleAverage).unwrap();
    cmd_baseline(&config, Task::Long).unwrap();
    cmd_evaluate(&config, Task::Long).unwrap();
    let text = read_out(&dir, "report_long.txt");
    let header_line = text
        .lines()
        .find(|l| l.contains("U-CVAE"))
        .expect("model header row");
    let ucvae = header_line.find("U-CVAE").unwrap();
    let arma = header_line.find("ARMA(1,1)").unwrap();
    let var = header_line.find("VAR(1)").unwrap();
    assert!(ucvae < arma && arma < var, "column order: {header_line}");
    assert!(text.contains("mean MSE"));
    assert!(text.contains("median CCD"));
    assert!(text.contains('*'), "best-per-row marker missing");

    let csv = read_out(&dir, "report_long.csv");
    assert!(csv.contains("U-CVAE,SYN0"));
    assert!(csv.contains("mean MSE"));
    assert!(dir.join("out/corr_ucvae_long.csv").exists());
    assert!(dir.join("out/corr_actual_long.csv").exists());
    // S = 8 > 1: expanding-window traces for the first ticker pair.
    let trace = read_out(&dir, "trace_cap_corr_ucvae_long.csv");
    assert_eq!(data_lines(&trace).len(), 1 + 8);
}

#[test]
fn multivariate_pipeline_runs_end_to_end() {
    let dir = common::scratch_dir("multivariate_e2e");
    let generated = common::ar1_rb_panel(3, 90, 0.5, 1.5, 10, 33);
    let config_path = common::write_inputs(
        &dir,
        &generated,
        75,
        "model_kind = multivariate\nmax_epochs = 10\nsamples = 6\nhorizon = 10\n",
    );
    let config = RunConfig::from_file(&config_path).unwrap();
    cmd_prepare(&config).unwrap();
    assert!(dir.join("out/features_multivariate.csv").exists());
    cmd_train(&config).unwrap();
    assert!(dir.join("out/models/multivariate.cvae").exists());
    cmd_forecast(&config, Task::Long, UpdateMode::EnsembleAverage).unwrap();
    let records = read_ensemble(&dir.join("out/ensemble_mcvae_long.csv")).unwrap();
    // 3 tickers x 6 samples x 10 days from the one joint model.
    assert_eq!(records.len(), 3 * 6 * 10);
    cmd_baseline(&config, Task::Long).unwrap();
    cmd_evaluate(&config, Task::Long).unwrap();
    let text = read_out(&dir, "report_long.txt");
    assert!(text.contains("M-CVAE"));
}

#[test]
fn per_path_update_mode_changes_forecasts() {
    let (dir, config) = forecast_fixture("update_mode");
    cmd_forecast(&config, Task::Long, UpdateMode::EnsembleAverage).unwrap();
    let avg = data_lines(&read_out(&dir, "ensemble_ucvae_long.csv"));
    cmd_forecast(&config, Task::Long, UpdateMode::PerPath).unwrap();
    let per_path = data_lines(&read_out(&dir, "ensemble_ucvae_long.csv"));
    assert_ne!(avg, per_path, "update modes must differ for S > 1");
}

#[test]
fn binary_exit_codes_follow_the_contract() {
    let binary = env!("CARGO_BIN_EXE_volcast");
    // Usage error: unknown flag.
    let out = Command::new(binary)
        .args(["forecast", "--config", "x.conf", "--frobnicate"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Usage error: unreadable config.
    let out = Command::new(binary)
        .args(["prepare", "--config", "/nonexistent/run.conf"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Data error: config points at a missing panel file.
    let dir = common::scratch_dir("exit_codes");
    let generated = common::ar1_rb_panel(1, 40, 0.5, 0.0, 10, 2);
    let config_path = common::write_inputs(&dir, &generated, 30, "");
    std::fs::remove_file(dir.join("panel.csv")).unwrap();
    let out = Command::new(binary)
        .args(["prepare", "--config"])
        .arg(&config_path)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // Numeric failure: a constant series cannot be normalized.
    let generated = common::ar1_rb_panel(1, 40, 0.5, 0.0, 10, 2);
    let mut flat = generated;
    for v in flat.values[0].iter_mut() {
        *v = 1.0;
    }
    let config_path = common::write_inputs(&dir, &flat, 30, "");
    let out = Command::new(binary)
        .args(["prepare", "--config"])
        .arg(&config_path)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // Help exits cleanly.
    let out = Command::new(binary).args(["--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("USAGE"));
}

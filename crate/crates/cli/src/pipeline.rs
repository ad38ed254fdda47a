//! The six pipeline commands: prepare, train, forecast, baseline,
//! scenario, evaluate. Commands re-derive their inputs from the raw data
//! files (only trained models are read back from disk), so each command is
//! independently runnable and reruns are byte-identical for a fixed seed.

use std::collections::BTreeMap;
use std::path::PathBuf;

use volcast_core::baselines::{
    fit_arma11, fit_var1, forecast_arma11, forecast_var1, residual_trace,
};
use volcast_core::cvae::{train, CvaeModel, TrainHistory};
use volcast_core::date::CivilDate;
use volcast_core::evaluation::{
    corr_abs_diff, corr_matrix, cross_corr_matrix, expanding_window_estimates, mse, pearson,
    CorrKind, EvalReport, ModelEval, PathStat, StockRow,
};
use volcast_core::features::{
    advance_features_multivariate, advance_features_univariate, build_features_multivariate,
    build_features_univariate, weekly_partitions, BuiltFeatures, CategoryMaps, HorizonFeatures,
    ModelKind, PanelSeries, RebalanceCalendar, StockMeta, StockSeries,
};
use volcast_core::forecaster::{
    counterfactual, forecast_general, summarize_paths, PathEnsemble, RollingWindow, ScenarioSpec,
    UpdateMode,
};
use volcast_core::linalg::Mat;
use volcast_core::persist::ModelBundle;
use volcast_core::rng::derive_seed;

use crate::config::{Overrides, RunConfig, Task};
use crate::data::{
    load_calendar, load_metadata, load_panel, read_ensemble, read_summary, write_corr_matrix,
    write_ensemble, write_features, write_norm_stats, write_normalized_panel, write_report_csv,
    write_report_text, write_summary, write_trace, write_x0_dump, OutputHeader, SummaryRecord,
};
use crate::error::{CliError, Result};
use crate::model_io::{load_model, save_model};

/// Seed streams per command, so no two jobs anywhere share a stream.
const STREAM_TRAIN: u64 = 0;
const STREAM_FORECAST: u64 = 10_000;
const STREAM_ROLLING: u64 = 20_000;
const STREAM_SCENARIO: u64 = 30_000;

pub struct LoadedData {
    pub normalized: PanelSeries,
    pub meta: Vec<StockMeta>,
    pub maps: CategoryMaps,
    pub calendar: RebalanceCalendar,
}

fn restrict_to_range(panel: &PanelSeries, start: CivilDate, end: CivilDate) -> Result<PanelSeries> {
    let keep: Vec<usize> = (0..panel.n_dates())
        .filter(|&j| panel.dates()[j] >= start && panel.dates()[j] <= end)
        .collect();
    if keep.is_empty() {
        return Err(CliError::Data(format!(
            "panel has no dates in the configured range {start}..{end}"
        )));
    }
    let dates: Vec<CivilDate> = keep.iter().map(|&j| panel.dates()[j]).collect();
    let columns: Vec<Vec<Option<f64>>> = (0..panel.n_stocks())
        .map(|i| keep.iter().map(|&j| panel.value(i, j)).collect())
        .collect();
    Ok(PanelSeries::from_columns(
        dates,
        panel.tickers().to_vec(),
        columns,
    )?)
}

pub fn load_all(config: &RunConfig) -> Result<LoadedData> {
    let raw = load_panel(&config.panel)?;
    let panel = restrict_to_range(&raw, config.train_start, config.test_end)?;
    let meta = load_metadata(&config.metadata)?;
    for ticker in panel.tickers() {
        if !meta.iter().any(|m| &m.ticker == ticker) {
            return Err(CliError::Data(format!(
                "no sector/location metadata for ticker {ticker}"
            )));
        }
    }
    let maps = CategoryMaps::from_meta(&meta)?;
    let calendar = load_calendar(&config.calendar)?;
    let normalized = panel.normalize((config.train_start, config.train_end))?;
    Ok(LoadedData {
        normalized,
        meta,
        maps,
        calendar,
    })
}

fn meta_for<'a>(meta: &'a [StockMeta], ticker: &str) -> Result<&'a StockMeta> {
    meta.iter()
        .find(|m| m.ticker == ticker)
        .ok_or_else(|| CliError::Data(format!("no sector/location metadata for ticker {ticker}")))
}

fn header(config: &RunConfig) -> OutputHeader {
    OutputHeader {
        config_hash: config.fingerprint(),
        seed: config.seed,
        sigma: config.sigma_generate,
        samples: config.samples,
    }
}

fn out_path(config: &RunConfig, name: &str) -> PathBuf {
    config.outdir.join(name)
}

/// Training pairs whose frame dates fall inside the training window.
fn training_examples(
    built: &BuiltFeatures,
    train_end: CivilDate,
) -> Vec<volcast_core::cvae::TrainExample> {
    built
        .frames
        .iter()
        .zip(&built.targets)
        .filter(|(frame, _)| frame.date <= train_end)
        .map(|(frame, target)| {
            let mut features = frame.x0.clone();
            features.extend_from_slice(&frame.x1);
            volcast_core::cvae::TrainExample {
                features,
                target: target.clone(),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------

pub fn cmd_prepare(config: &RunConfig) -> Result<()> {
    let data = load_all(config)?;
    let h = header(config);
    write_normalized_panel(
        &out_path(config, "normalized_panel.csv"),
        &data.normalized,
        h,
    )?;
    write_norm_stats(
        &out_path(config, "norm_stats.csv"),
        data.normalized.norm_stats().unwrap_or(&[]),
        h,
    )?;
    match config.model_kind {
        ModelKind::Univariate => {
            let mut per_ticker = Vec::new();
            let mut built_store = Vec::new();
            for i in 0..data.normalized.n_stocks() {
                let series = data.normalized.stock_series(i)?;
                let meta = meta_for(&data.meta, &series.ticker)?;
                let built = build_features_univariate(&series, meta, &data.maps, &data.calendar)?;
                built_store.push((series.ticker.clone(), built));
            }
            for (ticker, built) in &built_store {
                per_ticker.push((ticker.clone(), built));
            }
            write_features(&out_path(config, "features_univariate.csv"), &per_ticker, h)?;
        }
        ModelKind::Multivariate => {
            let full = data.normalized.drop_missing_panel_wide()?;
            let built = build_features_multivariate(&full, &data.calendar)?;
            write_features(
                &out_path(config, "features_multivariate.csv"),
                &[("ALL".to_string(), &built)],
                h,
            )?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------
// train
// ---------------------------------------------------------------------

fn history_csv(history: &TrainHistory, h: OutputHeader) -> String {
    let mut out = format!(
        "# config_hash={:016x} seed={} sigma={} samples={}\n# stopped_early={}\n",
        h.config_hash, h.seed, h.sigma, h.samples, history.stopped_early
    );
    out.push_str("epoch,train_loss,validation_loss\n");
    for (epoch, losses) in history.epochs.iter().enumerate() {
        out.push_str(&format!("{epoch},{},{}\n", losses.train, losses.validation));
    }
    out
}

/// Runs `jobs` closures over `workers` threads, preserving job order in
/// the returned vector.
fn run_parallel<T: Send, F>(count: usize, workers: usize, job: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T> + Sync,
{
    if count == 0 {
        return Ok(Vec::new());
    }
    let workers = workers.min(count).max(1);
    if workers == 1 {
        return (0..count).map(&job).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<T>>> = (0..count).map(|_| None).collect();
    let slot_refs: Vec<std::sync::Mutex<&mut Option<Result<T>>>> =
        slots.iter_mut().map(std::sync::Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= count {
                    break;
                }
                let result = job(i);
                **slot_refs[i].lock().expect("slot lock") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.expect("every job ran"))
        .collect()
}

pub fn cmd_train(config: &RunConfig) -> Result<()> {
    let data = load_all(config)?;
    let h = header(config);
    match config.model_kind {
        ModelKind::Univariate => {
            let n = data.normalized.n_stocks();
            let results = run_parallel(n, config.workers, |i| {
                let series = data.normalized.stock_series(i)?;
                let meta = meta_for(&data.meta, &series.ticker)?;
                let built = build_features_univariate(&series, meta, &data.maps, &data.calendar)?;
                let examples = training_examples(&built, config.train_end);
                let arch = config.arch(n);
                let weights_seed = derive_seed(config.seed, STREAM_TRAIN + 2 * i as u64);
                let train_seed = derive_seed(config.seed, STREAM_TRAIN + 2 * i as u64 + 1);
                let mut model = CvaeModel::init(&arch, config.sigma_generate, weights_seed)?;
                let history = train(&mut model, &examples, &config.train_config(train_seed))?;
                model.norm_stats = vec![series.stats.clone().ok_or_else(|| {
                    CliError::Data("panel was not normalized before training".into())
                })?];
                let bundle = ModelBundle {
                    model,
                    kind: ModelKind::Univariate,
                    sector_labels: data.maps.sector_labels.clone(),
                    location_labels: data.maps.location_labels.clone(),
                };
                Ok((series.ticker.clone(), bundle, history))
            })?;
            for (ticker, bundle, history) in &results {
                save_model(&out_path(config, &format!("models/{ticker}.cvae")), bundle)?;
                let csv = history_csv(history, h);
                let path = out_path(config, &format!("history/{ticker}.csv"));
                std::fs::create_dir_all(path.parent().expect("history dir"))?;
                std::fs::write(&path, csv)?;
            }
        }
        ModelKind::Multivariate => {
            let full = data.normalized.drop_missing_panel_wide()?;
            let built = build_features_multivariate(&full, &data.calendar)?;
            let examples = training_examples(&built, config.train_end);
            let arch = config.arch(full.n_stocks());
            let weights_seed = derive_seed(config.seed, STREAM_TRAIN);
            let train_seed = derive_seed(config.seed, STREAM_TRAIN + 1);
            let mut model = CvaeModel::init(&arch, config.sigma_generate, weights_seed)?;
            let history = train(&mut model, &examples, &config.train_config(train_seed))?;
            model.norm_stats = full.norm_stats().unwrap_or(&[]).to_vec();
            let bundle = ModelBundle {
                model,
                kind: ModelKind::Multivariate,
                sector_labels: data.maps.sector_labels.clone(),
                location_labels: data.maps.location_labels.clone(),
            };
            save_model(&out_path(config, "models/multivariate.cvae"), &bundle)?;
            let path = out_path(config, "history/multivariate.csv");
            std::fs::create_dir_all(path.parent().expect("history dir"))?;
            std::fs::write(&path, history_csv(&history, h))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------
// forecast
// ---------------------------------------------------------------------

/// Index of the last observation at or before the training end; the
/// forecast origin for the long-horizon task.
fn long_origin_index(series_dates: &[CivilDate], train_end: CivilDate) -> Result<usize> {
    series_dates
        .iter()
        .rposition(|&d| d <= train_end)
        .ok_or_else(|| CliError::Data("no observations inside the training window".into()))
}

/// Test-period horizon dates after `origin_index`, capped at `horizon`.
fn long_horizon_dates(
    series_dates: &[CivilDate],
    origin_index: usize,
    horizon: usize,
) -> Result<Vec<CivilDate>> {
    let dates: Vec<CivilDate> = series_dates[origin_index + 1..]
        .iter()
        .copied()
        .take(horizon)
        .collect();
    if dates.is_empty() {
        return Err(CliError::Data(
            "no test observations after the training window".into(),
        ));
    }
    Ok(dates)
}

fn bundle_maps(bundle: &ModelBundle) -> CategoryMaps {
    CategoryMaps {
        sector_labels: bundle.sector_labels.clone(),
        location_labels: bundle.location_labels.clone(),
    }
}

fn univariate_long_horizon(
    series: &StockSeries,
    meta: &StockMeta,
    maps: &CategoryMaps,
    calendar: &RebalanceCalendar,
    config: &RunConfig,
) -> Result<(usize, HorizonFeatures)> {
    let origin_index = long_origin_index(&series.dates, config.train_end)?;
    let dates = long_horizon_dates(&series.dates, origin_index, config.horizon)?;
    let horizon =
        advance_features_univariate(meta, maps, calendar, series.dates[origin_index], &dates)?;
    Ok((origin_index, horizon))
}

fn univariate_windows(
    series: &StockSeries,
    meta: &StockMeta,
    maps: &CategoryMaps,
    calendar: &RebalanceCalendar,
    config: &RunConfig,
) -> Result<Vec<RollingWindow>> {
    let first_test = series
        .dates
        .iter()
        .position(|&d| d >= config.test_start)
        .ok_or_else(|| CliError::Data("no test observations for rolling task".into()))?;
    if first_test == 0 {
        return Err(CliError::Data(
            "rolling task needs at least one observation before the test range".into(),
        ));
    }
    let mut windows = Vec::new();
    for w in weekly_partitions(&series.dates, first_test)? {
        let dates = series.dates[w.horizon_indices.clone()].to_vec();
        let horizon = advance_features_univariate(
            meta,
            maps,
            calendar,
            series.dates[w.origin_index],
            &dates,
        )?;
        windows.push(RollingWindow {
            horizon,
            origin_value: vec![series.values[w.origin_index]],
        });
    }
    Ok(windows)
}

fn panel_column(panel: &PanelSeries, index: usize) -> Result<Vec<f64>> {
    (0..panel.n_stocks())
        .map(|i| {
            panel
                .value(i, index)
                .ok_or_else(|| CliError::Data("unexpected missing value in dense panel".into()))
        })
        .collect()
}

fn run_windows(
    model: &CvaeModel,
    windows: &[RollingWindow],
    sigma: f64,
    samples: usize,
    update_mode: UpdateMode,
    seed: u64,
) -> Result<Vec<PathEnsemble>> {
    windows
        .iter()
        .enumerate()
        .map(|(w, window)| {
            Ok(forecast_general(
                model.decoder(),
                &window.horizon,
                &window.origin_value,
                model.latent_dim(),
                sigma,
                samples,
                update_mode,
                derive_seed(seed, w as u64),
            )?)
        })
        .collect()
}

pub fn cmd_forecast(config: &RunConfig, task: Task, update_mode: UpdateMode) -> Result<()> {
    let data = load_all(config)?;
    let h = header(config);
    let mut entries: Vec<(Vec<String>, PathEnsemble)> = Vec::new();
    match config.model_kind {
        ModelKind::Univariate => {
            let n = data.normalized.n_stocks();
            let results = run_parallel(n, config.workers, |i| {
                let series = data.normalized.stock_series(i)?;
                let bundle =
                    load_model(&out_path(config, &format!("models/{}.cvae", series.ticker)))?;
                let maps = bundle_maps(&bundle);
                let meta = meta_for(&data.meta, &series.ticker)?;
                let mut ensembles = Vec::new();
                match task {
                    Task::Long => {
                        let (origin_index, horizon) =
                            univariate_long_horizon(&series, meta, &maps, &data.calendar, config)?;
                        let ensemble = forecast_general(
                            bundle.model.decoder(),
                            &horizon,
                            &[series.values[origin_index]],
                            bundle.model.latent_dim(),
                            config.sigma_generate,
                            config.samples,
                            update_mode,
                            derive_seed(config.seed, STREAM_FORECAST + i as u64),
                        )?;
                        ensembles.push(ensemble);
                    }
                    Task::Rolling => {
                        let windows =
                            univariate_windows(&series, meta, &maps, &data.calendar, config)?;
                        ensembles = run_windows(
                            &bundle.model,
                            &windows,
                            config.sigma_generate,
                            config.samples,
                            update_mode,
                            derive_seed(config.seed, STREAM_ROLLING + i as u64),
                        )?;
                    }
                }
                Ok((series.ticker.clone(), ensembles))
            })?;
            for (ticker, ensembles) in results {
                for ensemble in ensembles {
                    entries.push((vec![ticker.clone()], ensemble));
                }
            }
        }
        ModelKind::Multivariate => {
            let full = data.normalized.drop_missing_panel_wide()?;
            let bundle = load_model(&out_path(config, "models/multivariate.cvae"))?;
            let tickers = full.tickers().to_vec();
            match task {
                Task::Long => {
                    let origin_index = long_origin_index(full.dates(), config.train_end)?;
                    let dates = long_horizon_dates(full.dates(), origin_index, config.horizon)?;
                    let horizon = advance_features_multivariate(
                        &data.calendar,
                        full.dates()[origin_index],
                        &dates,
                    )?;
                    let ensemble = forecast_general(
                        bundle.model.decoder(),
                        &horizon,
                        &panel_column(&full, origin_index)?,
                        bundle.model.latent_dim(),
                        config.sigma_generate,
                        config.samples,
                        update_mode,
                        derive_seed(config.seed, STREAM_FORECAST),
                    )?;
                    entries.push((tickers, ensemble));
                }
                Task::Rolling => {
                    let first_test = full
                        .dates()
                        .iter()
                        .position(|&d| d >= config.test_start)
                        .ok_or_else(|| {
                            CliError::Data("no test observations for rolling task".into())
                        })?;
                    if first_test == 0 {
                        return Err(CliError::Data(
                            "rolling task needs at least one observation before the test range"
                                .into(),
                        ));
                    }
                    let mut windows = Vec::new();
                    for w in weekly_partitions(full.dates(), first_test)? {
                        let dates = full.dates()[w.horizon_indices.clone()].to_vec();
                        let horizon = advance_features_multivariate(
                            &data.calendar,
                            full.dates()[w.origin_index],
                            &dates,
                        )?;
                        windows.push(RollingWindow {
                            horizon,
                            origin_value: panel_column(&full, w.origin_index)?,
                        });
                    }
                    let ensembles = run_windows(
                        &bundle.model,
                        &windows,
                        config.sigma_generate,
                        config.samples,
                        update_mode,
                        derive_seed(config.seed, STREAM_ROLLING),
                    )?;
                    for ensemble in ensembles {
                        entries.push((tickers.clone(), ensemble));
                    }
                }
            }
        }
    }
    let model_name = match config.model_kind {
        ModelKind::Univariate => "ucvae",
        ModelKind::Multivariate => "mcvae",
    };
    write_forecast_outputs(config, model_name, task, &entries, h)
}

fn write_forecast_outputs(
    config: &RunConfig,
    model_name: &str,
    task: Task,
    entries: &[(Vec<String>, PathEnsemble)],
    h: OutputHeader,
) -> Result<()> {
    let ensemble_entries: Vec<(Vec<String>, &PathEnsemble)> =
        entries.iter().map(|(t, e)| (t.clone(), e)).collect();
    write_ensemble(
        &out_path(
            config,
            &format!("ensemble_{model_name}_{}.csv", task.name()),
        ),
        &ensemble_entries,
        h,
    )?;
    let mut summary_entries = Vec::new();
    for (tickers, ensemble) in entries {
        summary_entries.push((tickers.clone(), ensemble, summarize_paths(ensemble)?));
    }
    write_summary(
        &out_path(config, &format!("summary_{model_name}_{}.csv", task.name())),
        &summary_entries,
        h,
    )?;
    Ok(())
}

// ---------------------------------------------------------------------
// baseline
// ---------------------------------------------------------------------

pub fn cmd_baseline(config: &RunConfig, task: Task) -> Result<()> {
    let data = load_all(config)?;
    let h = header(config);

    // Per-stock ARMA(1,1).
    let mut arma_entries: Vec<(Vec<String>, PathEnsemble)> = Vec::new();
    let mut params_csv = format!(
        "# config_hash={:016x} seed={} sigma={} samples={}\n",
        h.config_hash, h.seed, h.sigma, h.samples
    );
    params_csv.push_str("ticker,mean,ar_coef,ma_coef,noise_var,last_residual,near_unit_root\n");
    for i in 0..data.normalized.n_stocks() {
        let series = data.normalized.stock_series(i)?;
        let train_len = series
            .dates
            .iter()
            .filter(|&&d| d <= config.train_end)
            .count();
        let train_values = &series.values[..train_len];
        let fit = fit_arma11(train_values)?;
        params_csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            series.ticker,
            fit.params.mean,
            fit.params.ar_coef,
            fit.params.ma_coef,
            fit.params.noise_var,
            fit.last_residual,
            fit.near_unit_root
        ));
        match task {
            Task::Long => {
                let origin_index = long_origin_index(&series.dates, config.train_end)?;
                let dates = long_horizon_dates(&series.dates, origin_index, config.horizon)?;
                let path = forecast_arma11(
                    &fit.params,
                    series.values[origin_index],
                    fit.last_residual,
                    dates.len(),
                );
                let sample: Vec<Vec<f64>> = path.into_iter().map(|v| vec![v]).collect();
                arma_entries.push((
                    vec![series.ticker.clone()],
                    PathEnsemble::from_samples(
                        series.dates[origin_index],
                        dates,
                        &[sample],
                        config.sigma_generate,
                        0,
                    )?,
                ));
            }
            Task::Rolling => {
                let residuals = residual_trace(&series.values, &fit.params);
                let first_test = series
                    .dates
                    .iter()
                    .position(|&d| d >= config.test_start)
                    .ok_or_else(|| CliError::Data("no test observations".into()))?;
                if first_test == 0 {
                    return Err(CliError::Data(
                        "rolling task needs an observation before the test range".into(),
                    ));
                }
                for w in weekly_partitions(&series.dates, first_test)? {
                    let dates = series.dates[w.horizon_indices.clone()].to_vec();
                    let path = forecast_arma11(
                        &fit.params,
                        series.values[w.origin_index],
                        residuals[w.origin_index],
                        dates.len(),
                    );
                    let sample: Vec<Vec<f64>> = path.into_iter().map(|v| vec![v]).collect();
                    arma_entries.push((
                        vec![series.ticker.clone()],
                        PathEnsemble::from_samples(
                            series.dates[w.origin_index],
                            dates,
                            &[sample],
                            config.sigma_generate,
                            0,
                        )?,
                    ));
                }
            }
        }
    }
    std::fs::create_dir_all(&config.outdir)?;
    std::fs::write(out_path(config, "arma11_params.csv"), params_csv)?;
    write_forecast_outputs(config, "arma11", task, &arma_entries, h)?;

    // Panel VAR(1) on the gap-free cross-section.
    let full = data.normalized.drop_missing_panel_wide()?;
    let train_cols: Vec<usize> = (0..full.n_dates())
        .filter(|&j| full.dates()[j] <= config.train_end)
        .collect();
    let mut train_mat = Mat::zeros(full.n_stocks(), train_cols.len());
    for i in 0..full.n_stocks() {
        for (new_j, &j) in train_cols.iter().enumerate() {
            train_mat.set(
                i,
                new_j,
                full.value(i, j)
                    .ok_or_else(|| CliError::Data("missing value in dense panel".into()))?,
            );
        }
    }
    let var_fit = fit_var1(&train_mat)?;
    let mut var_csv = format!(
        "# config_hash={:016x} seed={} sigma={} samples={}\n",
        h.config_hash, h.seed, h.sigma, h.samples
    );
    var_csv.push_str("param,row,col,value\n");
    for (i, v) in var_fit.intercept.iter().enumerate() {
        var_csv.push_str(&format!("intercept,{i},0,{v}\n"));
    }
    for i in 0..var_fit.coef.rows() {
        for j in 0..var_fit.coef.cols() {
            var_csv.push_str(&format!("coef,{i},{j},{}\n", var_fit.coef.get(i, j)));
        }
    }
    for i in 0..var_fit.resid_cov.rows() {
        for j in 0..var_fit.resid_cov.cols() {
            var_csv.push_str(&format!(
                "resid_cov,{i},{j},{}\n",
                var_fit.resid_cov.get(i, j)
            ));
        }
    }
    std::fs::write(out_path(config, "var1_params.csv"), var_csv)?;

    let tickers = full.tickers().to_vec();
    let mut var_entries: Vec<(Vec<String>, PathEnsemble)> = Vec::new();
    match task {
        Task::Long => {
            let origin_index = long_origin_index(full.dates(), config.train_end)?;
            let dates = long_horizon_dates(full.dates(), origin_index, config.horizon)?;
            let path = forecast_var1(&var_fit, &panel_column(&full, origin_index)?, dates.len())?;
            var_entries.push((
                tickers.clone(),
                PathEnsemble::from_samples(
                    full.dates()[origin_index],
                    dates,
                    &[path],
                    config.sigma_generate,
                    0,
                )?,
            ));
        }
        Task::Rolling => {
            let first_test = full
                .dates()
                .iter()
                .position(|&d| d >= config.test_start)
                .ok_or_else(|| CliError::Data("no test observations".into()))?;
            if first_test == 0 {
                return Err(CliError::Data(
                    "rolling task needs an observation before the test range".into(),
                ));
            }
            for w in weekly_partitions(full.dates(), first_test)? {
                let dates = full.dates()[w.horizon_indices.clone()].to_vec();
                let path =
                    forecast_var1(&var_fit, &panel_column(&full, w.origin_index)?, dates.len())?;
                var_entries.push((
                    tickers.clone(),
                    PathEnsemble::from_samples(
                        full.dates()[w.origin_index],
                        dates,
                        &[path],
                        config.sigma_generate,
                        0,
                    )?,
                ));
            }
        }
    }
    write_forecast_outputs(config, "var1", task, &var_entries, h)
}

// ---------------------------------------------------------------------
// scenario
// ---------------------------------------------------------------------

pub fn cmd_scenario(config: &RunConfig, overrides: &Overrides) -> Result<()> {
    let data = load_all(config)?;
    let h = header(config);
    let mut base_entries: Vec<(Vec<String>, PathEnsemble)> = Vec::new();
    let mut scen_entries: Vec<(Vec<String>, PathEnsemble)> = Vec::new();
    let mut base_x0: Vec<(String, HorizonFeatures)> = Vec::new();
    let mut scen_x0: Vec<(String, HorizonFeatures)> = Vec::new();

    let build_spec = |output_dim: usize| -> ScenarioSpec {
        let mut spec = if overrides.zero_rb {
            ScenarioSpec::zero_rb()
        } else {
            ScenarioSpec::empty()
        };
        if let Some(v) = overrides.set_x1 {
            spec = spec.with_x1(vec![v; output_dim]);
        }
        spec
    };

    match config.model_kind {
        ModelKind::Univariate => {
            for i in 0..data.normalized.n_stocks() {
                let series = data.normalized.stock_series(i)?;
                let bundle =
                    load_model(&out_path(config, &format!("models/{}.cvae", series.ticker)))?;
                let maps = bundle_maps(&bundle);
                let meta = meta_for(&data.meta, &series.ticker)?;
                let (origin_index, horizon) =
                    univariate_long_horizon(&series, meta, &maps, &data.calendar, config)?;
                let spec = build_spec(1);
                let (baseline, scenario) = counterfactual(
                    &bundle.model,
                    &horizon,
                    &[series.values[origin_index]],
                    &spec,
                    config.sigma_generate,
                    config.samples,
                    derive_seed(config.seed, STREAM_SCENARIO + i as u64),
                    true,
                )?;
                scen_x0.push((series.ticker.clone(), spec.apply(&horizon)?));
                base_x0.push((series.ticker.clone(), horizon));
                base_entries.push((vec![series.ticker.clone()], baseline));
                scen_entries.push((vec![series.ticker.clone()], scenario));
            }
        }
        ModelKind::Multivariate => {
            let full = data.normalized.drop_missing_panel_wide()?;
            let bundle = load_model(&out_path(config, "models/multivariate.cvae"))?;
            let origin_index = long_origin_index(full.dates(), config.train_end)?;
            let dates = long_horizon_dates(full.dates(), origin_index, config.horizon)?;
            let horizon =
                advance_features_multivariate(&data.calendar, full.dates()[origin_index], &dates)?;
            let spec = build_spec(full.n_stocks());
            let (baseline, scenario) = counterfactual(
                &bundle.model,
                &horizon,
                &panel_column(&full, origin_index)?,
                &spec,
                config.sigma_generate,
                config.samples,
                derive_seed(config.seed, STREAM_SCENARIO),
                true,
            )?;
            scen_x0.push(("ALL".to_string(), spec.apply(&horizon)?));
            base_x0.push(("ALL".to_string(), horizon));
            base_entries.push((full.tickers().to_vec(), baseline));
            scen_entries.push((full.tickers().to_vec(), scenario));
        }
    }

    write_forecast_outputs(config, "scenario_baseline", Task::Long, &base_entries, h)?;
    write_forecast_outputs(config, "scenario_modified", Task::Long, &scen_entries, h)?;
    fn x0_refs(v: &[(String, HorizonFeatures)]) -> Vec<(String, &HorizonFeatures)> {
        v.iter().map(|(t, hf)| (t.clone(), hf)).collect()
    }
    write_x0_dump(
        &out_path(config, "scenario_x0_baseline.csv"),
        &x0_refs(&base_x0),
        h,
    )?;
    write_x0_dump(
        &out_path(config, "scenario_x0_modified.csv"),
        &x0_refs(&scen_x0),
        h,
    )?;
    Ok(())
}

// ---------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------

/// Per-ticker forecast series: horizon dates in order with the mean path
/// as the point forecast (origins of the rolling task concatenate).
fn forecast_series(records: &[SummaryRecord]) -> BTreeMap<String, BTreeMap<CivilDate, f64>> {
    let mut map: BTreeMap<String, BTreeMap<CivilDate, f64>> = BTreeMap::new();
    for r in records {
        map.entry(r.ticker.clone())
            .or_default()
            .insert(r.horizon_date, r.mean);
    }
    map
}

const MODEL_FILES: [(&str, &str); 4] = [
    ("ucvae", "U-CVAE"),
    ("mcvae", "M-CVAE"),
    ("arma11", "ARMA(1,1)"),
    ("var1", "VAR(1)"),
];

pub fn cmd_evaluate(config: &RunConfig, task: Task) -> Result<()> {
    let data = load_all(config)?;
    let h = header(config);
    let tickers = data.normalized.tickers().to_vec();

    // Actual (normalized) values per ticker, keyed by date.
    let mut actual: BTreeMap<String, BTreeMap<CivilDate, f64>> = BTreeMap::new();
    for i in 0..data.normalized.n_stocks() {
        let series = data.normalized.stock_series(i)?;
        let mut by_date = BTreeMap::new();
        for (date, value) in series.dates.iter().zip(&series.values) {
            if *date >= config.test_start && *date <= config.test_end {
                by_date.insert(*date, *value);
            }
        }
        actual.insert(series.ticker.clone(), by_date);
    }

    // Forecast series per model present on disk.
    let mut found: Vec<(&str, &str, BTreeMap<String, BTreeMap<CivilDate, f64>>)> = Vec::new();
    for (file_tag, display) in MODEL_FILES {
        let path = out_path(config, &format!("summary_{file_tag}_{}.csv", task.name()));
        if path.exists() {
            let records = read_summary(&path)?;
            found.push((file_tag, display, forecast_series(&records)));
        }
    }
    if found.is_empty() {
        return Err(CliError::Data(format!(
            "no forecast summaries for task `{}` in {}; run `forecast`/`baseline` first",
            task.name(),
            config.outdir.display()
        )));
    }

    // Common evaluation dates: defined for every ticker in every model's
    // forecasts and in the actuals, so every correlation matrix is
    // computed over one aligned index.
    let mut common: Option<Vec<CivilDate>> = None;
    for (_, _, series) in &found {
        for ticker in &tickers {
            let dates: Vec<CivilDate> = match series.get(ticker) {
                Some(by_date) => by_date.keys().copied().collect(),
                None => return Err(CliError::Data(format!("forecasts missing ticker {ticker}"))),
            };
            common = Some(match common {
                None => dates,
                Some(prev) => prev.into_iter().filter(|d| dates.contains(d)).collect(),
            });
        }
    }
    for ticker in &tickers {
        let by_date = &actual[ticker];
        common = common.map(|prev| {
            prev.into_iter()
                .filter(|d| by_date.contains_key(d))
                .collect()
        });
    }
    let common = common.unwrap_or_default();
    if common.len() < 3 {
        return Err(CliError::Data(
            "fewer than 3 aligned evaluation dates across models".into(),
        ));
    }

    let actual_matrix: Vec<Vec<f64>> = tickers
        .iter()
        .map(|t| common.iter().map(|d| actual[t][d]).collect())
        .collect();
    let corr_actual = corr_matrix(&actual_matrix)?;
    let xcorr_actual = cross_corr_matrix(&actual_matrix)?;

    let mut models = Vec::new();
    for (_, display, series) in &found {
        let forecast_matrix: Vec<Vec<f64>> = tickers
            .iter()
            .map(|t| common.iter().map(|d| series[t][d]).collect())
            .collect();
        let corr_forecast = corr_matrix(&forecast_matrix)?;
        let xcorr_forecast = cross_corr_matrix(&forecast_matrix)?;
        let cd = corr_abs_diff(&corr_forecast, &corr_actual)?;
        let ccd = corr_abs_diff(&xcorr_forecast, &xcorr_actual)?;
        let mut per_stock = Vec::new();
        for (i, ticker) in tickers.iter().enumerate() {
            // MSE uses every aligned date for this stock, not only the
            // panel-wide common set.
            let by_date = &series[ticker];
            let mut f = Vec::new();
            let mut a = Vec::new();
            for (date, value) in by_date {
                if let Some(actual_value) = actual[ticker].get(date) {
                    f.push(*value);
                    a.push(*actual_value);
                }
            }
            per_stock.push(StockRow {
                ticker: ticker.clone(),
                mse: mse(&f, &a)?,
                cd: cd[i],
                ccd: ccd[i],
            });
        }
        models.push(ModelEval {
            name: display.to_string(),
            per_stock,
            corr_forecast,
            xcorr_forecast,
        });
    }

    let report = EvalReport {
        models,
        corr_actual,
        xcorr_actual,
    };
    write_report_text(
        &out_path(config, &format!("report_{}.txt", task.name())),
        &report,
        h,
    )?;
    write_report_csv(
        &out_path(config, &format!("report_{}.csv", task.name())),
        &report,
        h,
    )?;
    write_corr_matrix(
        &out_path(config, &format!("corr_actual_{}.csv", task.name())),
        &tickers,
        &report.corr_actual,
        h,
    )?;
    write_corr_matrix(
        &out_path(config, &format!("xcorr_actual_{}.csv", task.name())),
        &tickers,
        &report.xcorr_actual,
        h,
    )?;
    for (idx, (file_tag, _, _)) in found.iter().enumerate() {
        write_corr_matrix(
            &out_path(config, &format!("corr_{file_tag}_{}.csv", task.name())),
            &tickers,
            &report.models[idx].corr_forecast,
            h,
        )?;
        write_corr_matrix(
            &out_path(config, &format!("xcorr_{file_tag}_{}.csv", task.name())),
            &tickers,
            &report.models[idx].xcorr_forecast,
            h,
        )?;
    }

    write_traces(config, task, &tickers, &actual_matrix, h)?;
    Ok(())
}

/// Expanding-window convergence traces of the two path-correlation
/// estimators for the first ticker pair, per generative model with a
/// multi-sample ensemble on disk.
fn write_traces(
    config: &RunConfig,
    task: Task,
    tickers: &[String],
    actual_matrix: &[Vec<f64>],
    h: OutputHeader,
) -> Result<()> {
    if tickers.len() < 2 {
        return Ok(());
    }
    for model in ["ucvae", "mcvae"] {
        let path = out_path(config, &format!("ensemble_{model}_{}.csv", task.name()));
        if !path.exists() {
            continue;
        }
        let records = read_ensemble(&path)?;
        let n_samples = records
            .iter()
            .map(|r| r.sample_index + 1)
            .max()
            .unwrap_or(0);
        if n_samples < 2 {
            continue;
        }
        if model == "ucvae" {
            eprintln!(
                "note: pairing sample paths of independently generated per-stock ensembles by index"
            );
        }
        // Per ticker, per sample: values ordered by (origin, horizon index).
        let paths_for = |ticker: &str| -> Vec<Vec<f64>> {
            let mut rows: Vec<&crate::data::EnsembleRecord> =
                records.iter().filter(|r| r.ticker == ticker).collect();
            rows.sort_by_key(|r| (r.sample_index, r.origin, r.horizon_index));
            let mut out = vec![Vec::new(); n_samples];
            for r in rows {
                out[r.sample_index].push(r.value);
            }
            out
        };
        let paths_a = paths_for(&tickers[0]);
        let paths_b = paths_for(&tickers[1]);
        if paths_a[0].len() < 3 || paths_a[0].len() != paths_b[0].len() {
            continue;
        }
        let actual_a = &actual_matrix[0];
        let actual_b = &actual_matrix[1];
        let actual_corr = pearson(actual_a, actual_b);
        let actual_xcorr = pearson(&actual_a[..actual_a.len() - 1], &actual_b[1..]);
        for (stat, stat_name) in [(PathStat::Cap, "cap"), (PathStat::Acp, "acp")] {
            for (kind, kind_name, reference) in [
                (CorrKind::Corr, "corr", actual_corr),
                (CorrKind::CrossCorr, "xcorr", actual_xcorr),
            ] {
                let trace = expanding_window_estimates(&paths_a, &paths_b, stat, kind)?;
                write_trace(
                    &out_path(
                        config,
                        &format!("trace_{stat_name}_{kind_name}_{model}_{}.csv", task.name()),
                    ),
                    &trace,
                    reference,
                    h,
                )?;
            }
        }
    }
    Ok(())
}

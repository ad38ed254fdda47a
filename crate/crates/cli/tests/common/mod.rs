//! Shared fixtures for the integration and acceptance suites: a synthetic
//! AR(1) panel with additive spikes on rebalancing days, written in the
//! CLI's input formats.

use std::path::{Path, PathBuf};

use volcast_core::date::CivilDate;
use volcast_core::rng::{NoiseSource, Xoshiro};

/// `count` consecutive weekdays starting at `start` (skipping weekends).
pub fn weekdays(start: CivilDate, count: usize) -> Vec<CivilDate> {
    let mut out = Vec::with_capacity(count);
    let mut epoch = start.days_from_epoch();
    while out.len() < count {
        let date = civil_from_epoch(epoch);
        if !date.weekday().is_weekend() {
            out.push(date);
        }
        epoch += 1;
    }
    out
}

fn civil_from_epoch(target: i64) -> CivilDate {
    let base = CivilDate::new(2020, 1, 1).unwrap();
    let mut days = target - base.days_from_epoch();
    assert!(days >= 0, "generator only reaches forward from 2020");
    let (mut y, mut m, mut d) = (2020, 1u8, 1u8);
    while days > 0 {
        d += 1;
        if CivilDate::new(y, m, d).is_err() {
            d = 1;
            m += 1;
            if m > 12 {
                m = 1;
                y += 1;
            }
        }
        days -= 1;
    }
    CivilDate::new(y, m, d).unwrap()
}

pub struct SyntheticPanel {
    pub dates: Vec<CivilDate>,
    /// Per-ticker raw series, aligned with `dates`.
    pub values: Vec<Vec<f64>>,
    pub tickers: Vec<String>,
    pub rebalance_dates: Vec<CivilDate>,
}

/// AR(1) with a deterministic additive spike on every rebalancing day:
/// `y_t = ar y_{t-1} + eps_t + spike * 1[t is a rebalance day]`, with a
/// rebalance every `rb_period` trading days.
pub fn ar1_rb_panel(
    n_tickers: usize,
    n_days: usize,
    ar: f64,
    spike: f64,
    rb_period: usize,
    seed: u64,
) -> SyntheticPanel {
    let dates = weekdays(CivilDate::new(2021, 1, 4).unwrap(), n_days);
    let rebalance_dates: Vec<CivilDate> = (0..n_days)
        .filter(|&i| (i + 1) % rb_period == 0)
        .map(|i| dates[i])
        .collect();
    let mut values = Vec::with_capacity(n_tickers);
    for ticker_idx in 0..n_tickers {
        let mut rng = Xoshiro::derive(seed, ticker_idx as u64);
        let mut y = 0.0;
        for _ in 0..100 {
            y = ar * y + rng.standard_normal();
        }
        let mut series = Vec::with_capacity(n_days);
        for (i, _) in dates.iter().enumerate() {
            let is_rb = (i + 1) % rb_period == 0;
            y = ar * y + rng.standard_normal() + if is_rb { spike } else { 0.0 };
            series.push(y);
        }
        values.push(series);
    }
    SyntheticPanel {
        dates,
        values,
        tickers: (0..n_tickers).map(|i| format!("SYN{i}")).collect(),
        rebalance_dates,
    }
}

impl SyntheticPanel {
    pub fn panel_csv(&self) -> String {
        let mut out = String::from("date,");
        out.push_str(&self.tickers.join(","));
        out.push('\n');
        for (j, date) in self.dates.iter().enumerate() {
            out.push_str(&date.to_string());
            for series in &self.values {
                out.push_str(&format!(",{}", series[j]));
            }
            out.push('\n');
        }
        out
    }

    pub fn meta_csv(&self) -> String {
        let mut out = String::from("ticker,sector,location\n");
        for t in &self.tickers {
            out.push_str(&format!("{t},Synthetic,EU\n"));
        }
        out
    }

    pub fn calendar_csv(&self) -> String {
        let mut out = String::new();
        for d in &self.rebalance_dates {
            out.push_str(&format!("{d}\n"));
        }
        out
    }
}

/// Writes panel/meta/calendar plus a config splitting the panel at
/// `train_len` observations, and returns the config path.
pub fn write_inputs(
    dir: &Path,
    panel: &SyntheticPanel,
    train_len: usize,
    extra_config: &str,
) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("panel.csv"), panel.panel_csv()).unwrap();
    std::fs::write(dir.join("meta.csv"), panel.meta_csv()).unwrap();
    std::fs::write(dir.join("calendar.csv"), panel.calendar_csv()).unwrap();
    let config = format!(
        "panel = panel.csv\nmetadata = meta.csv\ncalendar = calendar.csv\noutdir = out\n\
         train_start = {}\ntrain_end = {}\ntest_start = {}\ntest_end = {}\n{extra_config}",
        panel.dates[0],
        panel.dates[train_len - 1],
        panel.dates[train_len],
        panel.dates[panel.dates.len() - 1],
    );
    let path = dir.join("run.conf");
    std::fs::write(&path, config).unwrap();
    path
}

/// Fresh scratch directory under the target tmp area.
pub fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("volcast_it").join(name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Recursively collects (relative path, bytes) of every file under `dir`.
pub fn snapshot_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    fn walk(base: &Path, current: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(current)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                let rel = path
                    .strip_prefix(base)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    walk(dir, dir, &mut out);
    out
}

//! File formats: the delimited panel/metadata/calendar inputs and every
//! delimited output the pipeline emits. All outputs start with comment
//! lines carrying the config hash, seed, sigma, and sample count, so a
//! result file is traceable to the run that produced it. Formatting uses
//! the shortest round-trip float rendering, which keeps reruns
//! byte-identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use volcast_core::cvae::NormStats;
use volcast_core::date::CivilDate;
use volcast_core::evaluation::{CorrMatrix, EvalReport};
use volcast_core::features::{
    BuiltFeatures, HorizonFeatures, PanelSeries, RebalanceCalendar, StockMeta,
};
use volcast_core::forecaster::{PathEnsemble, PathSummary};

use crate::error::{CliError, Result};

/// Loads the dated volume panel: header `date,<ticker>...`, ISO dates,
/// one row per day, empty cells marking missing observations. Rows are
/// sorted by date; a duplicate date is an error.
pub fn load_panel(path: &Path) -> Result<PanelSeries> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read panel {}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| CliError::Data(format!("panel {} is empty", path.display())))?;
    let mut fields = header.split(',');
    let first = fields.next().unwrap_or("").trim();
    if first != "date" {
        return Err(CliError::Data(format!(
            "panel header must start with `date`, got `{first}`"
        )));
    }
    let tickers: Vec<String> = fields.map(|f| f.trim().to_string()).collect();
    if tickers.is_empty() {
        return Err(CliError::Data("panel has no ticker columns".into()));
    }

    let mut rows: Vec<(CivilDate, Vec<Option<f64>>)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != tickers.len() + 1 {
            return Err(CliError::Data(format!(
                "panel row {}: expected {} fields, got {} (ragged row)",
                lineno + 2,
                tickers.len() + 1,
                parts.len()
            )));
        }
        let date = CivilDate::parse(parts[0].trim())
            .map_err(|e| CliError::Data(format!("panel row {}: {e}", lineno + 2)))?;
        let mut cells = Vec::with_capacity(tickers.len());
        for (i, cell) in parts[1..].iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                cells.push(None);
            } else {
                let value: f64 = cell.parse().map_err(|_| {
                    CliError::Data(format!(
                        "panel row {}: ticker {} has unparseable value `{cell}`",
                        lineno + 2,
                        tickers[i]
                    ))
                })?;
                cells.push(Some(value));
            }
        }
        rows.push((date, cells));
    }
    rows.sort_by_key(|(date, _)| *date);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(CliError::Data(format!(
                "panel has duplicate date {}",
                w[0].0
            )));
        }
    }
    let dates: Vec<CivilDate> = rows.iter().map(|(d, _)| *d).collect();
    let mut columns = vec![Vec::with_capacity(dates.len()); tickers.len()];
    for (_, cells) in &rows {
        for (i, cell) in cells.iter().enumerate() {
            columns[i].push(*cell);
        }
    }
    Ok(PanelSeries::from_columns(dates, tickers, columns)?)
}

/// Loads `ticker,sector,location` metadata.
pub fn load_metadata(path: &Path) -> Result<Vec<StockMeta>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read metadata {}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| CliError::Data(format!("metadata {} is empty", path.display())))?;
    if header.trim() != "ticker,sector,location" {
        return Err(CliError::Data(format!(
            "metadata header must be `ticker,sector,location`, got `{header}`"
        )));
    }
    let mut meta = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').map(|p| p.trim()).collect();
        if parts.len() != 3 || parts.iter().any(|p| p.is_empty()) {
            return Err(CliError::Data(format!(
                "metadata row {}: expected `ticker,sector,location`",
                lineno + 2
            )));
        }
        meta.push(StockMeta {
            ticker: parts[0].to_string(),
            sector: parts[1].to_string(),
            location: parts[2].to_string(),
        });
    }
    Ok(meta)
}

/// Loads the rebalance calendar: one ISO date per line.
pub fn load_calendar(path: &Path) -> Result<RebalanceCalendar> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read calendar {}: {e}", path.display())))?;
    let mut dates = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let date = CivilDate::parse(line)
            .map_err(|e| CliError::Data(format!("calendar line {}: {e}", lineno + 1)))?;
        dates.push(date);
    }
    Ok(RebalanceCalendar::new(dates))
}

/// Run provenance stamped into every output file.
#[derive(Debug, Clone, Copy)]
pub struct OutputHeader {
    pub config_hash: u64,
    pub seed: u64,
    pub sigma: f64,
    pub samples: usize,
}

impl OutputHeader {
    fn render(&self) -> String {
        format!(
            "# config_hash={:016x} seed={} sigma={} samples={}\n",
            self.config_hash, self.seed, self.sigma, self.samples
        )
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

pub fn write_normalized_panel(
    path: &Path,
    panel: &PanelSeries,
    header: OutputHeader,
) -> Result<()> {
    let mut out = header.render();
    out.push_str("date,");
    out.push_str(&panel.tickers().join(","));
    out.push('\n');
    for j in 0..panel.n_dates() {
        out.push_str(&panel.dates()[j].to_string());
        for i in 0..panel.n_stocks() {
            out.push(',');
            if let Some(v) = panel.value(i, j) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn write_norm_stats(path: &Path, stats: &[NormStats], header: OutputHeader) -> Result<()> {
    let mut out = header.render();
    out.push_str("ticker,mean,std\n");
    for s in stats {
        out.push_str(&format!("{},{},{}\n", s.ticker, s.mean, s.std));
    }
    write_file(path, &out)
}

/// Feature frames in long-ish form: one row per (ticker, date) with the
/// advanced block columns named by slice and index, then the ordinary
/// block and the target.
pub fn write_features(
    path: &Path,
    per_ticker: &[(String, &BuiltFeatures)],
    header: OutputHeader,
) -> Result<()> {
    let mut out = header.render();
    let layout = match per_ticker.first() {
        Some((_, built)) => &built.layout,
        None => return Err(CliError::Data("no feature frames to write".into())),
    };
    out.push_str("ticker,date");
    for (slice, range) in layout.slices() {
        for i in 0..range.len() {
            out.push_str(&format!(",{slice}_{i}"));
        }
    }
    let x1_len = per_ticker[0].1.frames.first().map_or(0, |f| f.x1.len());
    for i in 0..x1_len {
        out.push_str(&format!(",lag_{i}"));
    }
    let d = per_ticker[0].1.targets.first().map_or(0, |t| t.len());
    for i in 0..d {
        out.push_str(&format!(",target_{i}"));
    }
    out.push('\n');
    for (ticker, built) in per_ticker {
        for (frame, target) in built.frames.iter().zip(&built.targets) {
            out.push_str(&format!("{ticker},{}", frame.date));
            for v in frame.x0.iter().chain(&frame.x1).chain(target) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
    }
    write_file(path, &out)
}

/// Long-format ensemble file:
/// `ticker,origin_date,horizon_index,horizon_date,sample_index,value`.
/// Multivariate ensembles carry one ticker per output dimension.
pub fn write_ensemble(
    path: &Path,
    entries: &[(Vec<String>, &PathEnsemble)],
    header: OutputHeader,
) -> Result<()> {
    let mut out = header.render();
    out.push_str("ticker,origin_date,horizon_index,horizon_date,sample_index,value\n");
    for (tickers_per_dim, ensemble) in entries {
        for (dim, ticker) in tickers_per_dim.iter().enumerate() {
            for s in 0..ensemble.sample_count() {
                for k in 0..ensemble.horizon_len() {
                    out.push_str(&format!(
                        "{ticker},{},{k},{},{s},{}\n",
                        ensemble.origin(),
                        ensemble.horizon_dates()[k],
                        ensemble.value(s, k, dim)
                    ));
                }
            }
        }
    }
    write_file(path, &out)
}

/// Summary file: `ticker,origin_date,horizon_date,mean,q025,q975`.
pub fn write_summary(
    path: &Path,
    entries: &[(Vec<String>, &PathEnsemble, PathSummary)],
    header: OutputHeader,
) -> Result<()> {
    let mut out = header.render();
    out.push_str("ticker,origin_date,horizon_date,mean,q025,q975\n");
    for (tickers_per_dim, ensemble, summary) in entries {
        for (dim, ticker) in tickers_per_dim.iter().enumerate() {
            for k in 0..ensemble.horizon_len() {
                out.push_str(&format!(
                    "{ticker},{},{},{},{},{}\n",
                    ensemble.origin(),
                    ensemble.horizon_dates()[k],
                    summary.mean[k][dim],
                    summary.q025[k][dim],
                    summary.q975[k][dim]
                ));
            }
        }
    }
    write_file(path, &out)
}

/// Advanced-block dump for scenario inspection: one row per
/// (ticker, date, component).
pub fn write_x0_dump(
    path: &Path,
    entries: &[(String, &HorizonFeatures)],
    header: OutputHeader,
) -> Result<()> {
    let mut out = header.render();
    out.push_str("ticker,date,component,value\n");
    for (ticker, horizon) in entries {
        for (k, date) in horizon.dates.iter().enumerate() {
            for (slice, range) in horizon.layout.slices() {
                for (i, idx) in range.clone().enumerate() {
                    out.push_str(&format!(
                        "{ticker},{date},{slice}_{i},{}\n",
                        horizon.x0[k][idx]
                    ));
                }
            }
        }
    }
    write_file(path, &out)
}

/// One parsed summary row.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRecord {
    pub ticker: String,
    pub origin: CivilDate,
    pub horizon_date: CivilDate,
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRecord>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read summary {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() || line.starts_with("ticker,") {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(CliError::Data(format!(
                "summary {} line {}: expected 6 fields",
                path.display(),
                lineno + 1
            )));
        }
        let bad = |what: &str| {
            CliError::Data(format!(
                "summary {} line {}: bad {what}",
                path.display(),
                lineno + 1
            ))
        };
        out.push(SummaryRecord {
            ticker: parts[0].to_string(),
            origin: CivilDate::parse(parts[1]).map_err(|_| bad("origin date"))?,
            horizon_date: CivilDate::parse(parts[2]).map_err(|_| bad("horizon date"))?,
            mean: parts[3].parse().map_err(|_| bad("mean"))?,
            q025: parts[4].parse().map_err(|_| bad("q025"))?,
            q975: parts[5].parse().map_err(|_| bad("q975"))?,
        });
    }
    Ok(out)
}

/// One parsed ensemble row.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRecord {
    pub ticker: String,
    pub origin: CivilDate,
    pub horizon_index: usize,
    pub horizon_date: CivilDate,
    pub sample_index: usize,
    pub value: f64,
}

pub fn read_ensemble(path: &Path) -> Result<Vec<EnsembleRecord>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read ensemble {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() || line.starts_with("ticker,") {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(CliError::Data(format!(
                "ensemble {} line {}: expected 6 fields",
                path.display(),
                lineno + 1
            )));
        }
        let bad = |what: &str| {
            CliError::Data(format!(
                "ensemble {} line {}: bad {what}",
                path.display(),
                lineno + 1
            ))
        };
        out.push(EnsembleRecord {
            ticker: parts[0].to_string(),
            origin: CivilDate::parse(parts[1]).map_err(|_| bad("origin date"))?,
            horizon_index: parts[2].parse().map_err(|_| bad("horizon index"))?,
            horizon_date: CivilDate::parse(parts[3]).map_err(|_| bad("horizon date"))?,
            sample_index: parts[4].parse().map_err(|_| bad("sample index"))?,
            value: parts[5].parse().map_err(|_| bad("value"))?,
        });
    }
    Ok(out)
}

pub fn write_corr_matrix(
    path: &Path,
    tickers: &[String],
    matrix: &CorrMatrix,
    header: OutputHeader,
) -> Result<()> {
    let mut out = header.render();
    out.push_str("ticker,");
    out.push_str(&tickers.join(","));
    out.push('\n');
    for i in 0..matrix.size() {
        out.push_str(&tickers[i]);
        for j in 0..matrix.size() {
            out.push(',');
            if let Some(v) = matrix.get(i, j) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn write_report_text(path: &Path, report: &EvalReport, header: OutputHeader) -> Result<()> {
    let mut out = header.render();
    out.push_str(&report.render_text());
    write_file(path, &out)
}

pub fn write_report_csv(path: &Path, report: &EvalReport, header: OutputHeader) -> Result<()> {
    let opt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = header.render();
    out.push_str("model,ticker,mse,cd,ccd\n");
    for model in &report.models {
        for row in &model.per_stock {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                model.name,
                row.ticker,
                row.mse,
                opt(&row.cd),
                opt(&row.ccd)
            ));
        }
    }
    out.push_str("\nstatistic");
    for model in &report.models {
        out.push_str(&format!(",{}", model.name));
    }
    out.push('\n');
    for row in report.summary_rows() {
        out.push_str(row.label);
        for v in &row.values {
            out.push_str(&format!(",{}", opt(v)));
        }
        out.push('\n');
    }
    write_file(path, &out)
}

/// Expanding-window trace: `m,estimate,actual` per sample count.
pub fn write_trace(
    path: &Path,
    trace: &[Option<f64>],
    actual: Option<f64>,
    header: OutputHeader,
) -> Result<()> {
    let opt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = header.render();
    out.push_str("m,estimate,actual\n");
    let actual_s = opt(&actual);
    for (m, value) in trace.iter().enumerate() {
        out.push_str(&format!("{},{},{actual_s}\n", m + 1, opt(value)));
    }
    write_file(path, &out)
}

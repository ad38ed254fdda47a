//! Forecast evaluation: per-stock mean squared error, correlation and
//! lag-1 cross-correlation matrices with their mean-absolute-difference
//! summaries (CD/CCD), the two path-correlation estimators (correlation of
//! average paths and average correlation of paths), expanding-window
//! convergence traces, and the report tables comparing models.
//!
//! Zero-variance series make a correlation undefined; such entries are
//! recorded as missing and excluded from averages rather than silently
//! treated as zero.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};
use core::fmt;

use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    EmptyAlignment,
    LengthMismatch { expected: usize, got: usize },
    SizeMismatch { expected: usize, got: usize },
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::EmptyAlignment => write!(f, "no aligned observations to evaluate"),
            EvalError::LengthMismatch { expected, got } => {
                write!(f, "series length mismatch: expected {expected}, got {got}")
            }
            EvalError::SizeMismatch { expected, got } => {
                write!(f, "matrix size mismatch: expected {expected}, got {got}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for EvalError {}

/// Pearson correlation; `None` when either side has zero variance or there
/// are fewer than two points.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        let da = x - mean_a;
        let db = y - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a <= 0.0 || var_b <= 0.0 {
        return None;
    }
    Some(cov / math::sqrt(var_a * var_b))
}

/// Mean squared error over aligned forecast/actual pairs.
pub fn mse(forecast: &[f64], actual: &[f64]) -> Result<f64, EvalError> {
    if forecast.len() != actual.len() {
        return Err(EvalError::LengthMismatch {
            expected: actual.len(),
            got: forecast.len(),
        });
    }
    if forecast.is_empty() {
        return Err(EvalError::EmptyAlignment);
    }
    let sum: f64 = forecast
        .iter()
        .zip(actual)
        .map(|(f, a)| (f - a) * (f - a))
        .sum();
    Ok(sum / forecast.len() as f64)
}

/// Square matrix of possibly-undefined correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    size: usize,
    entries: Vec<Option<f64>>,
}

impl CorrMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.entries[i * self.size + j]
    }

    fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Self {
        let mut entries = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                entries.push(f(i, j));
            }
        }
        CorrMatrix { size, entries }
    }
}

fn check_rectangular(series: &[Vec<f64>]) -> Result<(), EvalError> {
    if series.is_empty() || series[0].is_empty() {
        return Err(EvalError::EmptyAlignment);
    }
    let len = series[0].len();
    for s in series {
        if s.len() != len {
            return Err(EvalError::LengthMismatch {
                expected: len,
                got: s.len(),
            });
        }
    }
    Ok(())
}

/// Pairwise Pearson correlations over the aligned index.
pub fn corr_matrix(series: &[Vec<f64>]) -> Result<CorrMatrix, EvalError> {
    check_rectangular(series)?;
    Ok(CorrMatrix::from_fn(series.len(), |i, j| {
        pearson(&series[i], &series[j])
    }))
}

/// Lag-1 cross-correlations: entry `(i, j)` correlates series `i` with
/// series `j` shifted one step ahead. The diagonal is the lag-1
/// autocorrelation, not trivially 1.
pub fn cross_corr_matrix(series: &[Vec<f64>]) -> Result<CorrMatrix, EvalError> {
    check_rectangular(series)?;
    let len = series[0].len();
    if len < 3 {
        return Err(EvalError::EmptyAlignment);
    }
    Ok(CorrMatrix::from_fn(series.len(), |i, j| {
        pearson(&series[i][..len - 1], &series[j][1..])
    }))
}

/// Per-stock mean absolute difference between two correlation matrices:
/// row `i` averaged over the entries defined in both (the diagonal
/// included). With every entry defined this is the paper's sum-over-row
/// divided by N.
pub fn corr_abs_diff(
    forecast: &CorrMatrix,
    actual: &CorrMatrix,
) -> Result<Vec<Option<f64>>, EvalError> {
    if forecast.size() != actual.size() {
        return Err(EvalError::SizeMismatch {
            expected: actual.size(),
            got: forecast.size(),
        });
    }
    let n = forecast.size();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut sum = 0.0;
        let mut defined = 0usize;
        for j in 0..n {
            if let (Some(f), Some(a)) = (forecast.get(i, j), actual.get(i, j)) {
                sum += math::abs(f - a);
                defined += 1;
            }
        }
        out.push((defined > 0).then(|| sum / defined as f64));
    }
    Ok(out)
}

/// Correlation of the average paths: Pearson correlation between the two
/// ensembles' mean paths over the horizon.
pub fn cap(paths_a: &[Vec<f64>], paths_b: &[Vec<f64>]) -> Option<f64> {
    let mean_a = mean_path(paths_a)?;
    let mean_b = mean_path(paths_b)?;
    pearson(&mean_a, &mean_b)
}

/// Average correlation of paths: per-sample-path Pearson correlation,
/// averaged over the sample index (paths pair by shared index).
pub fn acp(paths_a: &[Vec<f64>], paths_b: &[Vec<f64>]) -> Option<f64> {
    if paths_a.len() != paths_b.len() || paths_a.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    let mut defined = 0usize;
    for (a, b) in paths_a.iter().zip(paths_b) {
        if let Some(rho) = pearson(a, b) {
            sum += rho;
            defined += 1;
        }
    }
    (defined > 0).then(|| sum / defined as f64)
}

fn mean_path(paths: &[Vec<f64>]) -> Option<Vec<f64>> {
    let first = paths.first()?;
    let k = first.len();
    let mut mean = vec![0.0; k];
    for path in paths {
        if path.len() != k {
            return None;
        }
        for (m, v) in mean.iter_mut().zip(path) {
            *m += v;
        }
    }
    let scale = 1.0 / paths.len() as f64;
    for m in mean.iter_mut() {
        *m *= scale;
    }
    Some(mean)
}

/// Which path-correlation estimator to trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStat {
    Cap,
    Acp,
}

/// Contemporaneous correlation or the lag-1 cross version (the second
/// path shifted one step ahead).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrKind {
    Corr,
    CrossCorr,
}

fn lag_pair(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (a[..a.len() - 1].to_vec(), b[1..].to_vec())
}

fn stat_on(
    paths_a: &[Vec<f64>],
    paths_b: &[Vec<f64>],
    stat: PathStat,
    kind: CorrKind,
) -> Option<f64> {
    let (xa, xb): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match kind {
        CorrKind::Corr => (paths_a.to_vec(), paths_b.to_vec()),
        CorrKind::CrossCorr => {
            if paths_a.first().map_or(0, |p| p.len()) < 3 {
                return None;
            }
            paths_a
                .iter()
                .zip(paths_b)
                .map(|(a, b)| lag_pair(a, b))
                .unzip()
        }
    };
    match stat {
        PathStat::Cap => cap(&xa, &xb),
        PathStat::Acp => acp(&xa, &xb),
    }
}

/// Expanding-window trace: the statistic over the first `m` sample paths,
/// for `m = 1..=S`. The final entry equals the full-ensemble statistic.
pub fn expanding_window_estimates(
    paths_a: &[Vec<f64>],
    paths_b: &[Vec<f64>],
    stat: PathStat,
    kind: CorrKind,
) -> Result<Vec<Option<f64>>, EvalError> {
    if paths_a.len() != paths_b.len() || paths_a.is_empty() {
        return Err(EvalError::LengthMismatch {
            expected: paths_a.len(),
            got: paths_b.len(),
        });
    }
    Ok((1..=paths_a.len())
        .map(|m| stat_on(&paths_a[..m], &paths_b[..m], stat, kind))
        .collect())
}

/// One stock's evaluation metrics for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct StockRow {
    pub ticker: String,
    pub mse: f64,
    pub cd: Option<f64>,
    pub ccd: Option<f64>,
}

/// Per-model metrics plus the forecast-side correlation matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEval {
    pub name: String,
    pub per_stock: Vec<StockRow>,
    pub corr_forecast: CorrMatrix,
    pub xcorr_forecast: CorrMatrix,
}

/// Full evaluation report: every model's per-stock table alongside the
/// actual-data correlation matrices they are compared against.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub models: Vec<ModelEval>,
    pub corr_actual: CorrMatrix,
    pub xcorr_actual: CorrMatrix,
}

/// Mean over defined values.
pub fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Median over defined values; the average of the middle two when even.
pub fn median_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut defined: Vec<f64> = values.flatten().collect();
    if defined.is_empty() {
        return None;
    }
    defined.sort_by(|a, b| a.partial_cmp(b).expect("finite metric"));
    let n = defined.len();
    Some(if n % 2 == 1 {
        defined[n / 2]
    } else {
        (defined[n / 2 - 1] + defined[n / 2]) / 2.0
    })
}

/// One summary line: a statistic across models, lowest value marked best.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: &'static str,
    pub values: Vec<Option<f64>>,
}

impl EvalReport {
    /// Mean/median of MSE, CD, and CCD per model, in the row order of the
    /// performance tables.
    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        let rows: [(&'static str, fn(&StockRow) -> Option<f64>, bool); 6] = [
            ("mean MSE", |r| Some(r.mse), true),
            ("median MSE", |r| Some(r.mse), false),
            ("mean CD", |r| r.cd, true),
            ("median CD", |r| r.cd, false),
            ("mean CCD", |r| r.ccd, true),
            ("median CCD", |r| r.ccd, false),
        ];
        rows.iter()
            .map(|(label, extract, is_mean)| SummaryRow {
                label,
                values: self
                    .models
                    .iter()
                    .map(|m| {
                        let it = m.per_stock.iter().map(extract);
                        if *is_mean {
                            mean_of(it)
                        } else {
                            median_of(it)
                        }
                    })
                    .collect(),
            })
            .collect()
    }

    /// Plain-text rendering of the summary table; the best (lowest) defined
    /// value per row is marked with `*`.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<12}", ""));
        for m in &self.models {
            out.push_str(&format!("{:>14}", m.name));
        }
        out.push('\n');
        for row in self.summary_rows() {
            out.push_str(&format!("{:<12}", row.label));
            let best = row
                .values
                .iter()
                .flatten()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            for v in &row.values {
                match v {
                    Some(x) => {
                        let mark = if *x == best { "*" } else { "" };
                        out.push_str(&format!("{:>14}", format!("{x:.4}{mark}")));
                    }
                    None => out.push_str(&format!("{:>14}", "-")),
                }
            }
            out.push('\n');
        }
        out
    }
}

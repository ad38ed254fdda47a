//! Panel data and feature engineering.
//!
//! Holds the dated volume panel with its missing-value mask, training-window
//! normalization, and the conditioning blocks fed to the models: an
//! *advanced* block `x0` whose future values are known at forecast time
//! (sector/location one-hots, day-of-week, rebalance flags) and an
//! *ordinary* block `x1` (the lagged observation), known only up to the
//! forecast origin.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::cvae::NormStats;
use crate::date::CivilDate;
use crate::linalg::Mat;
use crate::math;

/// Fixed one-hot widths of the advanced block.
pub const SECTOR_SLOTS: usize = 10;
pub const LOCATION_SLOTS: usize = 7;
pub const DOW_SLOTS: usize = 5;
pub const RB_SLOTS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureError {
    EmptyPanel,
    UnsortedDates,
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// Fewer than two training observations for a ticker.
    NotEnoughTrainObs {
        ticker: String,
    },
    /// Zero training variance.
    DegenerateSeries {
        ticker: String,
    },
    WeekendDate(CivilDate),
    MissingMetadata {
        ticker: String,
    },
    TooManyCategories {
        what: &'static str,
        max: usize,
    },
    /// Dropping missing values removed everything.
    EmptyResult,
    /// Horizon dates must be strictly after the forecast origin.
    HorizonNotAfterOrigin {
        origin: CivilDate,
        offending: CivilDate,
    },
    UnknownTicker {
        ticker: String,
    },
    IndexOutOfRange {
        index: usize,
        len: usize,
    },
}

impl fmt::Display for FeatureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureError::EmptyPanel => write!(f, "panel has no dates or no tickers"),
            FeatureError::UnsortedDates => write!(f, "panel dates must be strictly increasing"),
            FeatureError::ShapeMismatch {
                what,
                expected,
                got,
            } => {
                write!(f, "{what}: expected {expected}, got {got}")
            }
            FeatureError::NotEnoughTrainObs { ticker } => {
                write!(f, "ticker {ticker}: fewer than 2 training observations")
            }
            FeatureError::DegenerateSeries { ticker } => {
                write!(f, "ticker {ticker}: zero variance in the training window")
            }
            FeatureError::WeekendDate(d) => write!(f, "{d} falls on a weekend"),
            FeatureError::MissingMetadata { ticker } => {
                write!(f, "no sector/location metadata for ticker {ticker}")
            }
            FeatureError::TooManyCategories { what, max } => {
                write!(f, "more than {max} distinct {what} labels")
            }
            FeatureError::EmptyResult => write!(f, "no observations left after dropping missing"),
            FeatureError::HorizonNotAfterOrigin { origin, offending } => {
                write!(
                    f,
                    "horizon date {offending} is not after the origin {origin}"
                )
            }
            FeatureError::UnknownTicker { ticker } => write!(f, "unknown ticker {ticker}"),
            FeatureError::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for FeatureError {}

/// Dated matrix of per-stock observations with a missing-value mask and,
/// after [`PanelSeries::normalize`], per-stock normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSeries {
    dates: Vec<CivilDate>,
    tickers: Vec<String>,
    /// `n_stocks x n_dates`; masked cells hold NaN and must not be read.
    values: Mat,
    missing: Vec<bool>,
    norm_stats: Option<Vec<NormStats>>,
}

impl PanelSeries {
    /// Builds a panel from per-ticker columns; `None` marks a missing day.
    pub fn from_columns(
        dates: Vec<CivilDate>,
        tickers: Vec<String>,
        columns: Vec<Vec<Option<f64>>>,
    ) -> Result<Self, FeatureError> {
        if dates.is_empty() || tickers.is_empty() {
            return Err(FeatureError::EmptyPanel);
        }
        if columns.len() != tickers.len() {
            return Err(FeatureError::ShapeMismatch {
                what: "ticker columns",
                expected: tickers.len(),
                got: columns.len(),
            });
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FeatureError::UnsortedDates);
        }
        let t = dates.len();
        let n = tickers.len();
        let mut values = Mat::zeros(n, t);
        let mut missing = vec![false; n * t];
        for (i, col) in columns.iter().enumerate() {
            if col.len() != t {
                return Err(FeatureError::ShapeMismatch {
                    what: "column length",
                    expected: t,
                    got: col.len(),
                });
            }
            for (j, cell) in col.iter().enumerate() {
                match cell {
                    Some(v) => values.set(i, j, *v),
                    None => {
                        values.set(i, j, f64::NAN);
                        missing[i * t + j] = true;
                    }
                }
            }
        }
        Ok(PanelSeries {
            dates,
            tickers,
            values,
            missing,
            norm_stats: None,
        })
    }

    pub fn dates(&self) -> &[CivilDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn n_stocks(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn is_missing(&self, stock: usize, date_index: usize) -> bool {
        self.missing[stock * self.dates.len() + date_index]
    }

    pub fn value(&self, stock: usize, date_index: usize) -> Option<f64> {
        if self.is_missing(stock, date_index) {
            None
        } else {
            Some(self.values.get(stock, date_index))
        }
    }

    pub fn norm_stats(&self) -> Option<&[NormStats]> {
        self.norm_stats.as_deref()
    }

    pub fn ticker_index(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }

    /// Normalizes every series with mean and population standard deviation
    /// estimated only on `train_range` (inclusive), then applies those
    /// statistics to the whole series, train and test alike.
    pub fn normalize(
        &self,
        train_range: (CivilDate, CivilDate),
    ) -> Result<PanelSeries, FeatureError> {
        let (start, end) = train_range;
        let mut out = self.clone();
        let mut stats = Vec::with_capacity(self.n_stocks());
        for i in 0..self.n_stocks() {
            let train_values: Vec<f64> = (0..self.n_dates())
                .filter(|&j| self.dates[j] >= start && self.dates[j] <= end)
                .filter_map(|j| self.value(i, j))
                .collect();
            if train_values.len() < 2 {
                return Err(FeatureError::NotEnoughTrainObs {
                    ticker: self.tickers[i].clone(),
                });
            }
            let n = train_values.len() as f64;
            let mean = train_values.iter().sum::<f64>() / n;
            let var = train_values
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / n;
            if var <= 0.0 {
                return Err(FeatureError::DegenerateSeries {
                    ticker: self.tickers[i].clone(),
                });
            }
            let std = math::sqrt(var);
            for j in 0..self.n_dates() {
                if !self.is_missing(i, j) {
                    out.values.set(i, j, (self.values.get(i, j) - mean) / std);
                }
            }
            stats.push(NormStats {
                ticker: self.tickers[i].clone(),
                mean,
                std,
            });
        }
        out.norm_stats = Some(stats);
        Ok(out)
    }

    /// Removes every date on which at least one ticker is missing; the
    /// joint models need the full cross-section each day.
    pub fn drop_missing_panel_wide(&self) -> Result<PanelSeries, FeatureError> {
        let keep: Vec<usize> = (0..self.n_dates())
            .filter(|&j| (0..self.n_stocks()).all(|i| !self.is_missing(i, j)))
            .collect();
        if keep.is_empty() {
            return Err(FeatureError::EmptyResult);
        }
        let mut values = Mat::zeros(self.n_stocks(), keep.len());
        for i in 0..self.n_stocks() {
            for (new_j, &j) in keep.iter().enumerate() {
                values.set(i, new_j, self.values.get(i, j));
            }
        }
        Ok(PanelSeries {
            dates: keep.iter().map(|&j| self.dates[j]).collect(),
            tickers: self.tickers.clone(),
            values,
            missing: vec![false; self.n_stocks() * keep.len()],
            norm_stats: self.norm_stats.clone(),
        })
    }

    /// One ticker's series with its own missing days removed.
    pub fn stock_series(&self, stock: usize) -> Result<StockSeries, FeatureError> {
        if stock >= self.n_stocks() {
            return Err(FeatureError::IndexOutOfRange {
                index: stock,
                len: self.n_stocks(),
            });
        }
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for j in 0..self.n_dates() {
            if let Some(v) = self.value(stock, j) {
                dates.push(self.dates[j]);
                values.push(v);
            }
        }
        if dates.is_empty() {
            return Err(FeatureError::EmptyResult);
        }
        Ok(StockSeries {
            ticker: self.tickers[stock].clone(),
            dates,
            values,
            stats: self.norm_stats.as_ref().map(|s| s[stock].clone()),
        })
    }

    /// Per-stock missing-day removal for every ticker.
    pub fn drop_missing_per_stock(&self) -> Result<Vec<StockSeries>, FeatureError> {
        (0..self.n_stocks()).map(|i| self.stock_series(i)).collect()
    }

    /// Dense value matrix; only valid once no cell is missing.
    pub fn dense_values(&self) -> Result<&Mat, FeatureError> {
        if self.missing.iter().any(|&m| m) {
            return Err(FeatureError::EmptyResult);
        }
        Ok(&self.values)
    }
}

/// A single ticker's gap-free series.
#[derive(Debug, Clone, PartialEq)]
pub struct StockSeries {
    pub ticker: String,
    pub dates: Vec<CivilDate>,
    pub values: Vec<f64>,
    pub stats: Option<NormStats>,
}

/// Static stock attributes; labels are mapped to one-hot indices through
/// [`CategoryMaps`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StockMeta {
    pub ticker: String,
    pub sector: String,
    pub location: String,
}

/// Sector/location label registries in first-seen order, persisted with the
/// model so encodings stay stable across runs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CategoryMaps {
    pub sector_labels: Vec<String>,
    pub location_labels: Vec<String>,
}

impl CategoryMaps {
    pub fn from_meta(meta: &[StockMeta]) -> Result<Self, FeatureError> {
        let mut maps = CategoryMaps::default();
        for m in meta {
            if !maps.sector_labels.contains(&m.sector) {
                maps.sector_labels.push(m.sector.clone());
            }
            if !maps.location_labels.contains(&m.location) {
                maps.location_labels.push(m.location.clone());
            }
        }
        if maps.sector_labels.len() > SECTOR_SLOTS {
            return Err(FeatureError::TooManyCategories {
                what: "sector",
                max: SECTOR_SLOTS,
            });
        }
        if maps.location_labels.len() > LOCATION_SLOTS {
            return Err(FeatureError::TooManyCategories {
                what: "location",
                max: LOCATION_SLOTS,
            });
        }
        Ok(maps)
    }

    pub fn sector_index(&self, label: &str) -> Option<usize> {
        self.sector_labels.iter().position(|l| l == label)
    }

    pub fn location_index(&self, label: &str) -> Option<usize> {
        self.location_labels.iter().position(|l| l == label)
    }
}

/// Index rebalancing calendar.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RebalanceCalendar {
    dates: Vec<CivilDate>,
}

impl RebalanceCalendar {
    pub fn new(mut dates: Vec<CivilDate>) -> Self {
        dates.sort();
        dates.dedup();
        RebalanceCalendar { dates }
    }

    pub fn dates(&self) -> &[CivilDate] {
        &self.dates
    }

    pub fn contains(&self, date: CivilDate) -> bool {
        self.dates.binary_search(&date).is_ok()
    }
}

/// Computes the 3-dim rebalance flags for every entry of a trading-day
/// list: `(1,0,0)` on the last observation before a rebalancing day,
/// `(0,1,0)` on the rebalancing day itself, `(0,0,1)` on the next
/// observation after, all zeros elsewhere.
///
/// A rebalance date falling on a non-trading day attaches to the nearest
/// preceding trading day, provided one exists within 7 calendar days;
/// anything further from the range is ignored (encoded all-zero). Should
/// two rebalance events ever claim one day, the rebalancing-day flag wins
/// over day-before, which wins over day-after, keeping each slice one-hot.
pub fn rb_flags(trading_days: &[CivilDate], calendar: &RebalanceCalendar) -> Vec<[f64; 3]> {
    let mut flags = vec![[0.0; 3]; trading_days.len()];
    let mut day_of = vec![false; trading_days.len()];
    let mut day_before = vec![false; trading_days.len()];
    let mut day_after = vec![false; trading_days.len()];
    for &rb in calendar.dates() {
        let pos = match trading_days.binary_search(&rb) {
            Ok(p) => Some(p),
            Err(insert) => {
                if insert == 0 {
                    None
                } else {
                    let candidate = insert - 1;
                    let gap = rb.days_from_epoch() - trading_days[candidate].days_from_epoch();
                    (gap <= 7).then_some(candidate)
                }
            }
        };
        if let Some(p) = pos {
            day_of[p] = true;
            if p > 0 {
                day_before[p - 1] = true;
            }
            if p + 1 < trading_days.len() {
                day_after[p + 1] = true;
            }
        }
    }
    for i in 0..trading_days.len() {
        if day_of[i] {
            flags[i] = [0.0, 1.0, 0.0];
        } else if day_before[i] {
            flags[i] = [1.0, 0.0, 0.0];
        } else if day_after[i] {
            flags[i] = [0.0, 0.0, 1.0];
        }
    }
    flags
}

/// Rebalance flags for one position of a trading-day list.
pub fn rb_encoding(
    date_index: usize,
    calendar: &RebalanceCalendar,
    trading_days: &[CivilDate],
) -> Result<[f64; 3], FeatureError> {
    if date_index >= trading_days.len() {
        return Err(FeatureError::IndexOutOfRange {
            index: date_index,
            len: trading_days.len(),
        });
    }
    Ok(rb_flags(trading_days, calendar)[date_index])
}

/// Day-of-week one-hot, Monday at index 0 through Friday at index 4.
pub fn dow_encoding(date: CivilDate) -> Result<[f64; DOW_SLOTS], FeatureError> {
    let wd = date.weekday();
    if wd.is_weekend() {
        return Err(FeatureError::WeekendDate(date));
    }
    let mut one_hot = [0.0; DOW_SLOTS];
    one_hot[wd.index()] = 1.0;
    Ok(one_hot)
}

/// Names of the slices inside an advanced block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum X0Slice {
    Sector,
    Location,
    DayOfWeek,
    Rebalance,
}

impl fmt::Display for X0Slice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            X0Slice::Sector => write!(f, "sector"),
            X0Slice::Location => write!(f, "location"),
            X0Slice::DayOfWeek => write!(f, "dow"),
            X0Slice::Rebalance => write!(f, "rb"),
        }
    }
}

/// Positions of each named slice inside an advanced block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct X0Layout {
    slices: Vec<(X0Slice, Range<usize>)>,
}

impl X0Layout {
    /// Sector, location, day-of-week, rebalance: the per-stock layout.
    pub fn univariate() -> Self {
        X0Layout {
            slices: vec![
                (X0Slice::Sector, 0..SECTOR_SLOTS),
                (
                    X0Slice::Location,
                    SECTOR_SLOTS..SECTOR_SLOTS + LOCATION_SLOTS,
                ),
                (
                    X0Slice::DayOfWeek,
                    SECTOR_SLOTS + LOCATION_SLOTS..SECTOR_SLOTS + LOCATION_SLOTS + DOW_SLOTS,
                ),
                (
                    X0Slice::Rebalance,
                    SECTOR_SLOTS + LOCATION_SLOTS + DOW_SLOTS
                        ..SECTOR_SLOTS + LOCATION_SLOTS + DOW_SLOTS + RB_SLOTS,
                ),
            ],
        }
    }

    /// Day-of-week, rebalance: the joint-panel layout.
    pub fn multivariate() -> Self {
        X0Layout {
            slices: vec![
                (X0Slice::DayOfWeek, 0..DOW_SLOTS),
                (X0Slice::Rebalance, DOW_SLOTS..DOW_SLOTS + RB_SLOTS),
            ],
        }
    }

    pub fn slices(&self) -> &[(X0Slice, Range<usize>)] {
        &self.slices
    }

    pub fn range_of(&self, slice: X0Slice) -> Option<Range<usize>> {
        self.slices
            .iter()
            .find(|(s, _)| *s == slice)
            .map(|(_, r)| r.clone())
    }

    pub fn width(&self) -> usize {
        self.slices.last().map_or(0, |(_, r)| r.end)
    }
}

/// Which model family the features are built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Univariate,
    Multivariate,
}

impl ModelKind {
    pub fn layout(self) -> X0Layout {
        match self {
            ModelKind::Univariate => X0Layout::univariate(),
            ModelKind::Multivariate => X0Layout::multivariate(),
        }
    }
}

/// Conditioning input for one date.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub date: CivilDate,
    /// Advanced block.
    pub x0: Vec<f64>,
    /// Ordinary block: the lagged observation(s).
    pub x1: Vec<f64>,
}

/// Dated feature frames plus the targets they predict, ready to train on.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltFeatures {
    pub layout: X0Layout,
    pub frames: Vec<FeatureFrame>,
    pub targets: Vec<Vec<f64>>,
}

impl BuiltFeatures {
    /// Flattened `(x0 ++ x1, target)` training pairs.
    pub fn train_examples(&self) -> Vec<crate::cvae::TrainExample> {
        self.frames
            .iter()
            .zip(&self.targets)
            .map(|(frame, target)| {
                let mut features = frame.x0.clone();
                features.extend_from_slice(&frame.x1);
                crate::cvae::TrainExample {
                    features,
                    target: target.clone(),
                }
            })
            .collect()
    }
}

fn sector_location_block(meta: &StockMeta, maps: &CategoryMaps) -> Result<Vec<f64>, FeatureError> {
    let mut block = vec![0.0; SECTOR_SLOTS + LOCATION_SLOTS];
    let s = maps
        .sector_index(&meta.sector)
        .ok_or_else(|| FeatureError::MissingMetadata {
            ticker: meta.ticker.clone(),
        })?;
    let l = maps
        .location_index(&meta.location)
        .ok_or_else(|| FeatureError::MissingMetadata {
            ticker: meta.ticker.clone(),
        })?;
    block[s] = 1.0;
    block[SECTOR_SLOTS + l] = 1.0;
    Ok(block)
}

/// Per-stock features: `x0 = (sector, location, day-of-week, rebalance)`,
/// `x1 = previous observation`. The first date of the series carries no lag
/// and is excluded. Rebalance flags are computed on this series' own
/// (gap-free) date list, so "day before" skips missing days.
pub fn build_features_univariate(
    series: &StockSeries,
    meta: &StockMeta,
    maps: &CategoryMaps,
    calendar: &RebalanceCalendar,
) -> Result<BuiltFeatures, FeatureError> {
    if meta.ticker != series.ticker {
        return Err(FeatureError::UnknownTicker {
            ticker: series.ticker.clone(),
        });
    }
    let static_block = sector_location_block(meta, maps)?;
    let rb = rb_flags(&series.dates, calendar);
    let mut frames = Vec::new();
    let mut targets = Vec::new();
    for t in 1..series.dates.len() {
        let mut x0 = static_block.clone();
        x0.extend_from_slice(&dow_encoding(series.dates[t])?);
        x0.extend_from_slice(&rb[t]);
        frames.push(FeatureFrame {
            date: series.dates[t],
            x0,
            x1: vec![series.values[t - 1]],
        });
        targets.push(vec![series.values[t]]);
    }
    Ok(BuiltFeatures {
        layout: X0Layout::univariate(),
        frames,
        targets,
    })
}

/// Joint-panel features: `x0 = (day-of-week, rebalance)`, `x1 = previous
/// cross-section`. The panel must be gap-free (see
/// [`PanelSeries::drop_missing_panel_wide`]).
pub fn build_features_multivariate(
    panel: &PanelSeries,
    calendar: &RebalanceCalendar,
) -> Result<BuiltFeatures, FeatureError> {
    let values = panel.dense_values()?;
    let rb = rb_flags(panel.dates(), calendar);
    let mut frames = Vec::new();
    let mut targets = Vec::new();
    for t in 1..panel.n_dates() {
        let mut x0 = Vec::with_capacity(DOW_SLOTS + RB_SLOTS);
        x0.extend_from_slice(&dow_encoding(panel.dates()[t])?);
        x0.extend_from_slice(&rb[t]);
        let column = |j: usize| (0..panel.n_stocks()).map(|i| values.get(i, j)).collect();
        frames.push(FeatureFrame {
            date: panel.dates()[t],
            x0,
            x1: column(t - 1),
        });
        targets.push(column(t));
    }
    Ok(BuiltFeatures {
        layout: X0Layout::multivariate(),
        frames,
        targets,
    })
}

/// Advanced blocks for a forecast horizon: a pure function of the calendar,
/// the static metadata, and the dates themselves, so no observation after
/// the origin can leak in. The origin participates in the rebalance-flag
/// computation as context (a rebalance on the origin marks the first
/// horizon day as "next observation after") but receives no block.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonFeatures {
    pub origin: CivilDate,
    pub dates: Vec<CivilDate>,
    pub x0: Vec<Vec<f64>>,
    pub layout: X0Layout,
}

fn horizon_dates_check(origin: CivilDate, dates: &[CivilDate]) -> Result<(), FeatureError> {
    if dates.is_empty() {
        return Err(FeatureError::EmptyResult);
    }
    for &d in dates {
        if d <= origin {
            return Err(FeatureError::HorizonNotAfterOrigin {
                origin,
                offending: d,
            });
        }
    }
    if dates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FeatureError::UnsortedDates);
    }
    Ok(())
}

fn horizon_rb(
    origin: CivilDate,
    dates: &[CivilDate],
    calendar: &RebalanceCalendar,
) -> Vec<[f64; 3]> {
    let mut with_origin = Vec::with_capacity(dates.len() + 1);
    with_origin.push(origin);
    with_origin.extend_from_slice(dates);
    let mut flags = rb_flags(&with_origin, calendar);
    flags.remove(0);
    flags
}

pub fn advance_features_univariate(
    meta: &StockMeta,
    maps: &CategoryMaps,
    calendar: &RebalanceCalendar,
    origin: CivilDate,
    dates: &[CivilDate],
) -> Result<HorizonFeatures, FeatureError> {
    horizon_dates_check(origin, dates)?;
    let static_block = sector_location_block(meta, maps)?;
    let rb = horizon_rb(origin, dates, calendar);
    let mut x0 = Vec::with_capacity(dates.len());
    for (k, &d) in dates.iter().enumerate() {
        let mut block = static_block.clone();
        block.extend_from_slice(&dow_encoding(d)?);
        block.extend_from_slice(&rb[k]);
        x0.push(block);
    }
    Ok(HorizonFeatures {
        origin,
        dates: dates.to_vec(),
        x0,
        layout: X0Layout::univariate(),
    })
}

pub fn advance_features_multivariate(
    calendar: &RebalanceCalendar,
    origin: CivilDate,
    dates: &[CivilDate],
) -> Result<HorizonFeatures, FeatureError> {
    horizon_dates_check(origin, dates)?;
    let rb = horizon_rb(origin, dates, calendar);
    let mut x0 = Vec::with_capacity(dates.len());
    for (k, &d) in dates.iter().enumerate() {
        let mut block = Vec::with_capacity(DOW_SLOTS + RB_SLOTS);
        block.extend_from_slice(&dow_encoding(d)?);
        block.extend_from_slice(&rb[k]);
        x0.push(block);
    }
    Ok(HorizonFeatures {
        origin,
        dates: dates.to_vec(),
        x0,
        layout: X0Layout::multivariate(),
    })
}

/// One rolling-forecast window: the origin observation's index and the
/// contiguous indices of the following week's trading days.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeekWindow {
    pub origin_index: usize,
    pub horizon_indices: Range<usize>,
}

/// Splits the dates from `first_test_index` onward into calendar weeks;
/// each week forecasts from the last available observation before it.
/// Together the windows cover every test date exactly once.
pub fn weekly_partitions(
    dates: &[CivilDate],
    first_test_index: usize,
) -> Result<Vec<WeekWindow>, FeatureError> {
    if first_test_index == 0 {
        return Err(FeatureError::IndexOutOfRange {
            index: 0,
            len: dates.len(),
        });
    }
    if first_test_index >= dates.len() {
        return Err(FeatureError::IndexOutOfRange {
            index: first_test_index,
            len: dates.len(),
        });
    }
    let mut windows: Vec<WeekWindow> = Vec::new();
    let mut start = first_test_index;
    while start < dates.len() {
        let anchor = dates[start].week_anchor();
        let mut end = start + 1;
        while end < dates.len() && dates[end].week_anchor() == anchor {
            end += 1;
        }
        windows.push(WeekWindow {
            origin_index: start - 1,
            horizon_indices: start..end,
        });
        start = end;
    }
    Ok(windows)
}

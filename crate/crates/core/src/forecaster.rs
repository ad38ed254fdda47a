//! Generative forecasting.
//!
//! Forecast paths are produced by iterating the decoder's sampling scheme:
//! draw a standard-normal latent, decode the conditional mean, add Gaussian
//! observation noise. The advanced block for each future step comes from
//! the calendar; the ordinary block is rolled forward from the previous
//! step's samples, either per path or through the ensemble average (the
//! 1-lag autoregressive scheme used in the empirical studies). Scenario
//! generation re-runs the scheme with overridden conditioning and a shared
//! noise stream so differences are attributable to the overrides alone.
//!
//! Latents are always drawn from the standard-normal prior. An alternative
//! scheme draws them from the encoder posterior of the previous
//! observation instead; supporting it would mean giving [`generate_step`]
//! a latent source conditioned on `(x_{t-1}, y_{t-1})` in place of the
//! plain [`NoiseSource`]. Deliberately not implemented.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::cvae::{CvaeError, CvaeModel};
use crate::date::CivilDate;
use crate::features::{FeatureError, HorizonFeatures, X0Slice};
use crate::nn::{Mlp, NnError};
use crate::rng::{derive_seed, NoiseSource, Xoshiro};

#[derive(Debug, Clone, PartialEq)]
pub enum ForecastError {
    Nn(NnError),
    Cvae(CvaeError),
    Feature(FeatureError),
    NonPositiveSigma,
    ZeroSamples,
    /// Decoder input does not decompose into x0 + x1 + latent.
    DecoderDims {
        expected: usize,
        got: usize,
    },
    /// Iterating needs the ordinary block to have the output's width.
    OrdinaryUpdateDims {
        output_dim: usize,
        x1_dim: usize,
    },
    /// Override references a slice absent from the layout.
    UnknownSlice {
        slice: X0Slice,
    },
    /// Override references a date outside the horizon.
    UnknownDate {
        date: CivilDate,
    },
    OverrideWidth {
        expected: usize,
        got: usize,
    },
    EmptyEnsemble,
}

impl fmt::Display for ForecastError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForecastError::Nn(e) => write!(f, "{e}"),
            ForecastError::Cvae(e) => write!(f, "{e}"),
            ForecastError::Feature(e) => write!(f, "{e}"),
            ForecastError::NonPositiveSigma => write!(f, "sigma must be positive"),
            ForecastError::ZeroSamples => write!(f, "sample count must be at least 1"),
            ForecastError::DecoderDims { expected, got } => {
                write!(f, "decoder input dim {got} does not match features + latent {expected}")
            }
            ForecastError::OrdinaryUpdateDims { output_dim, x1_dim } => write!(
                f,
                "cannot roll forward: ordinary block has width {x1_dim}, outputs have width {output_dim}"
            ),
            ForecastError::UnknownSlice { slice } => {
                write!(f, "override references slice `{slice}` absent from the layout")
            }
            ForecastError::UnknownDate { date } => {
                write!(f, "override references date {date} outside the horizon")
            }
            ForecastError::OverrideWidth { expected, got } => {
                write!(f, "override width {got} does not match slice width {expected}")
            }
            ForecastError::EmptyEnsemble => write!(f, "ensemble holds no samples"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ForecastError {}

impl From<NnError> for ForecastError {
    fn from(e: NnError) -> Self {
        ForecastError::Nn(e)
    }
}

impl From<CvaeError> for ForecastError {
    fn from(e: CvaeError) -> Self {
        ForecastError::Cvae(e)
    }
}

impl From<FeatureError> for ForecastError {
    fn from(e: FeatureError) -> Self {
        ForecastError::Feature(e)
    }
}

/// How the ordinary block at step `k` is updated from step `k-1`'s samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMode {
    /// Each sample path feeds its own lag.
    PerPath,
    /// All paths share the previous step's ensemble average (the 1-lag
    /// autoregressive scheme).
    EnsembleAverage,
}

/// Sampled forecast paths anchored at one origin: an `S x K x d` array
/// plus the calendar and generation metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    origin: CivilDate,
    horizon_dates: Vec<CivilDate>,
    sample_count: usize,
    output_dim: usize,
    /// Flat `s * (K * d) + k * d + dim` layout.
    values: Vec<f64>,
    pub sigma: f64,
    pub seed: u64,
}

impl PathEnsemble {
    /// Builds an ensemble from explicit sample paths (`samples[s][k][dim]`).
    /// Baseline point forecasts use this with a single sample.
    pub fn from_samples(
        origin: CivilDate,
        horizon_dates: Vec<CivilDate>,
        samples: &[Vec<Vec<f64>>],
        sigma: f64,
        seed: u64,
    ) -> Result<Self, ForecastError> {
        let sample_count = samples.len();
        if sample_count == 0 || horizon_dates.is_empty() {
            return Err(ForecastError::EmptyEnsemble);
        }
        let k_len = horizon_dates.len();
        let output_dim = samples[0].first().map_or(0, |row| row.len());
        if output_dim == 0 {
            return Err(ForecastError::EmptyEnsemble);
        }
        let mut values = Vec::with_capacity(sample_count * k_len * output_dim);
        for path in samples {
            if path.len() != k_len {
                return Err(ForecastError::OrdinaryUpdateDims {
                    output_dim: k_len,
                    x1_dim: path.len(),
                });
            }
            for row in path {
                if row.len() != output_dim {
                    return Err(ForecastError::OrdinaryUpdateDims {
                        output_dim,
                        x1_dim: row.len(),
                    });
                }
                values.extend_from_slice(row);
            }
        }
        Ok(PathEnsemble {
            origin,
            horizon_dates,
            sample_count,
            output_dim,
            values,
            sigma,
            seed,
        })
    }

    pub fn origin(&self) -> CivilDate {
        self.origin
    }

    pub fn horizon_dates(&self) -> &[CivilDate] {
        &self.horizon_dates
    }

    pub fn horizon_len(&self) -> usize {
        self.horizon_dates.len()
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn value(&self, sample: usize, step: usize, dim: usize) -> f64 {
        let k = self.horizon_len();
        self.values[sample * k * self.output_dim + step * self.output_dim + dim]
    }

    /// All S paths of one output component, each of length K.
    pub fn component_paths(&self, dim: usize) -> Vec<Vec<f64>> {
        (0..self.sample_count)
            .map(|s| {
                (0..self.horizon_len())
                    .map(|k| self.value(s, k, dim))
                    .collect()
            })
            .collect()
    }

    /// Per-step arithmetic average across samples (`K x d`).
    pub fn mean_path(&self) -> Vec<Vec<f64>> {
        let k_len = self.horizon_len();
        let mut mean = vec![vec![0.0; self.output_dim]; k_len];
        for s in 0..self.sample_count {
            for (k, row) in mean.iter_mut().enumerate() {
                for (dim, slot) in row.iter_mut().enumerate() {
                    *slot += self.value(s, k, dim);
                }
            }
        }
        let scale = 1.0 / self.sample_count as f64;
        for row in mean.iter_mut() {
            for slot in row.iter_mut() {
                *slot *= scale;
            }
        }
        mean
    }
}

/// Per-step ensemble mean and empirical 2.5% / 97.5% quantiles.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    pub mean: Vec<Vec<f64>>,
    pub q025: Vec<Vec<f64>>,
    pub q975: Vec<Vec<f64>>,
}

/// Empirical quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

pub fn summarize_paths(ensemble: &PathEnsemble) -> Result<PathSummary, ForecastError> {
    if ensemble.sample_count == 0 || ensemble.horizon_len() == 0 {
        return Err(ForecastError::EmptyEnsemble);
    }
    let mean = ensemble.mean_path();
    let k_len = ensemble.horizon_len();
    let d = ensemble.output_dim;
    let mut q025 = vec![vec![0.0; d]; k_len];
    let mut q975 = vec![vec![0.0; d]; k_len];
    for k in 0..k_len {
        for dim in 0..d {
            let mut column: Vec<f64> = (0..ensemble.sample_count)
                .map(|s| ensemble.value(s, k, dim))
                .collect();
            column.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
            q025[k][dim] = quantile(&column, 0.025);
            q975[k][dim] = quantile(&column, 0.975);
        }
    }
    Ok(PathSummary { mean, q025, q975 })
}

fn check_decoder_dims(
    decoder: &Mlp,
    x0_len: usize,
    x1_len: usize,
    latent_dim: usize,
) -> Result<(), ForecastError> {
    let expected = x0_len + x1_len + latent_dim;
    if decoder.in_dim() != expected {
        return Err(ForecastError::DecoderDims {
            expected,
            got: decoder.in_dim(),
        });
    }
    Ok(())
}

/// One sampling step: for each of `samples` draws, sample a standard-normal
/// latent, decode the conditional mean of `(x0, x1, z)`, and perturb it
/// with `sigma`-scaled Gaussian observation noise. The noise stream is
/// consumed in a fixed order (latent first, then observation noise, per
/// sample), so equal seeds give comparable streams across conditioning.
pub fn generate_step(
    decoder: &Mlp,
    x0: &[f64],
    x1: &[f64],
    sigma: f64,
    samples: usize,
    latent_dim: usize,
    noise: &mut dyn NoiseSource,
) -> Result<Vec<Vec<f64>>, ForecastError> {
    if sigma <= 0.0 {
        return Err(ForecastError::NonPositiveSigma);
    }
    if samples == 0 {
        return Err(ForecastError::ZeroSamples);
    }
    check_decoder_dims(decoder, x0.len(), x1.len(), latent_dim)?;
    let mut out = Vec::with_capacity(samples);
    let mut input = Vec::with_capacity(decoder.in_dim());
    for _ in 0..samples {
        input.clear();
        input.extend_from_slice(x0);
        input.extend_from_slice(x1);
        for _ in 0..latent_dim {
            input.push(noise.standard_normal());
        }
        let mut y = decoder.eval(&input)?;
        for v in y.iter_mut() {
            *v += sigma * noise.standard_normal();
        }
        out.push(y);
    }
    Ok(out)
}

/// Iterative forecasting over a horizon of advanced blocks. Step 1
/// conditions on `x1_init`; each later step's ordinary block is rolled
/// forward from the previous step's samples per `update_mode`.
pub fn forecast_general(
    decoder: &Mlp,
    horizon: &HorizonFeatures,
    x1_init: &[f64],
    latent_dim: usize,
    sigma: f64,
    samples: usize,
    update_mode: UpdateMode,
    seed: u64,
) -> Result<PathEnsemble, ForecastError> {
    if sigma <= 0.0 {
        return Err(ForecastError::NonPositiveSigma);
    }
    if samples == 0 {
        return Err(ForecastError::ZeroSamples);
    }
    let k_len = horizon.dates.len();
    if k_len == 0 {
        return Err(ForecastError::EmptyEnsemble);
    }
    check_decoder_dims(decoder, horizon.x0[0].len(), x1_init.len(), latent_dim)?;
    let d = decoder.out_dim();
    if k_len > 1 && x1_init.len() != d {
        return Err(ForecastError::OrdinaryUpdateDims {
            output_dim: d,
            x1_dim: x1_init.len(),
        });
    }

    let mut rng = Xoshiro::seed(seed);
    let mut values = vec![0.0; samples * k_len * d];
    // Lag per sample path; with EnsembleAverage all entries stay equal.
    let mut lags: Vec<Vec<f64>> = vec![x1_init.to_vec(); samples];
    let mut input = Vec::with_capacity(decoder.in_dim());
    for k in 0..k_len {
        for s in 0..samples {
            input.clear();
            input.extend_from_slice(&horizon.x0[k]);
            input.extend_from_slice(&lags[s]);
            for _ in 0..latent_dim {
                input.push(rng.standard_normal());
            }
            let mut y = decoder.eval(&input)?;
            for v in y.iter_mut() {
                *v += sigma * rng.standard_normal();
            }
            values[s * k_len * d + k * d..s * k_len * d + (k + 1) * d].copy_from_slice(&y);
        }
        if k + 1 < k_len {
            match update_mode {
                UpdateMode::PerPath => {
                    for s in 0..samples {
                        let row = &values[s * k_len * d + k * d..s * k_len * d + (k + 1) * d];
                        lags[s].copy_from_slice(row);
                    }
                }
                UpdateMode::EnsembleAverage => {
                    let mut mean = vec![0.0; d];
                    for s in 0..samples {
                        let row = &values[s * k_len * d + k * d..s * k_len * d + (k + 1) * d];
                        for (m, v) in mean.iter_mut().zip(row) {
                            *m += v;
                        }
                    }
                    for m in mean.iter_mut() {
                        *m /= samples as f64;
                    }
                    for lag in lags.iter_mut() {
                        lag.copy_from_slice(&mean);
                    }
                }
            }
        }
    }
    Ok(PathEnsemble {
        origin: horizon.origin,
        horizon_dates: horizon.dates.clone(),
        sample_count: samples,
        output_dim: d,
        values,
        sigma,
        seed,
    })
}

/// The 1-lag autoregressive scheme: step 1 conditions on the last
/// observation `y_t`; every later step conditions all samples on the
/// previous step's ensemble average.
pub fn forecast_ar1(
    decoder: &Mlp,
    horizon: &HorizonFeatures,
    last_observation: &[f64],
    latent_dim: usize,
    sigma: f64,
    samples: usize,
    seed: u64,
) -> Result<PathEnsemble, ForecastError> {
    forecast_general(
        decoder,
        horizon,
        last_observation,
        latent_dim,
        sigma,
        samples,
        UpdateMode::EnsembleAverage,
        seed,
    )
}

/// Single-origin long-horizon forecast from the end of the training sample.
pub fn long_term_task(
    model: &CvaeModel,
    horizon: &HorizonFeatures,
    last_observation: &[f64],
    sigma: f64,
    samples: usize,
    seed: u64,
) -> Result<PathEnsemble, ForecastError> {
    forecast_ar1(
        model.decoder(),
        horizon,
        last_observation,
        model.latent_dim(),
        sigma,
        samples,
        seed,
    )
}

/// One weekly re-anchored forecast: the horizon features for the week and
/// the actual observation at the origin that seeds the ordinary block.
#[derive(Debug, Clone, PartialEq)]
pub struct RollingWindow {
    pub horizon: HorizonFeatures,
    pub origin_value: Vec<f64>,
}

/// Week-long forecasts over multiple origins; each window restarts from
/// observed data and owns a derived noise stream.
pub fn rolling_task(
    model: &CvaeModel,
    windows: &[RollingWindow],
    sigma: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<PathEnsemble>, ForecastError> {
    windows
        .iter()
        .enumerate()
        .map(|(w, window)| {
            forecast_ar1(
                model.decoder(),
                &window.horizon,
                &window.origin_value,
                model.latent_dim(),
                sigma,
                samples,
                derive_seed(seed, w as u64),
            )
        })
        .collect()
}

/// Replacement of a named slice of the advanced block, on the given dates
/// (all horizon dates when `dates` is `None`).
#[derive(Debug, Clone, PartialEq)]
pub struct SliceOverride {
    pub slice: X0Slice,
    pub dates: Option<Vec<CivilDate>>,
    pub values: Vec<f64>,
}

/// Counterfactual inputs: advanced-block slice replacements and/or a
/// replacement for the initial ordinary input.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioSpec {
    pub x0_overrides: Vec<SliceOverride>,
    pub x1_override: Option<Vec<f64>>,
}

impl ScenarioSpec {
    /// No-op scenario.
    pub fn empty() -> Self {
        ScenarioSpec::default()
    }

    /// Zeroes the rebalance flags over the whole horizon.
    pub fn zero_rb() -> Self {
        ScenarioSpec {
            x0_overrides: vec![SliceOverride {
                slice: X0Slice::Rebalance,
                dates: None,
                values: vec![0.0; crate::features::RB_SLOTS],
            }],
            x1_override: None,
        }
    }

    /// Replaces the initial ordinary input.
    pub fn with_x1(mut self, value: Vec<f64>) -> Self {
        self.x1_override = Some(value);
        self
    }

    /// Applies the advanced-block overrides, validating slice names, dates,
    /// and widths.
    pub fn apply(&self, horizon: &HorizonFeatures) -> Result<HorizonFeatures, ForecastError> {
        let mut out = horizon.clone();
        for ov in &self.x0_overrides {
            let range = horizon
                .layout
                .range_of(ov.slice)
                .ok_or(ForecastError::UnknownSlice { slice: ov.slice })?;
            if ov.values.len() != range.len() {
                return Err(ForecastError::OverrideWidth {
                    expected: range.len(),
                    got: ov.values.len(),
                });
            }
            let indices: Vec<usize> = match &ov.dates {
                None => (0..horizon.dates.len()).collect(),
                Some(dates) => {
                    let mut idx = Vec::with_capacity(dates.len());
                    for &date in dates {
                        let pos = horizon
                            .dates
                            .iter()
                            .position(|&d| d == date)
                            .ok_or(ForecastError::UnknownDate { date })?;
                        idx.push(pos);
                    }
                    idx
                }
            };
            for k in indices {
                out.x0[k][range.clone()].copy_from_slice(&ov.values);
            }
        }
        Ok(out)
    }
}

/// Runs the 1-lag autoregressive forecast twice: unmodified, and with the
/// scenario overrides applied. With `shared_seed` both runs consume the
/// identical noise stream, so path differences are attributable to the
/// overrides alone.
#[allow(clippy::too_many_arguments)]
pub fn counterfactual(
    model: &CvaeModel,
    horizon: &HorizonFeatures,
    last_observation: &[f64],
    spec: &ScenarioSpec,
    sigma: f64,
    samples: usize,
    seed: u64,
    shared_seed: bool,
) -> Result<(PathEnsemble, PathEnsemble), ForecastError> {
    let baseline = long_term_task(model, horizon, last_observation, sigma, samples, seed)?;
    let scenario_horizon = spec.apply(horizon)?;
    let scenario_x1 = spec.x1_override.as_deref().unwrap_or(last_observation);
    let scenario_seed = if shared_seed {
        seed
    } else {
        derive_seed(seed, 1)
    };
    let scenario = long_term_task(
        model,
        &scenario_horizon,
        scenario_x1,
        sigma,
        samples,
        scenario_seed,
    )?;
    Ok((baseline, scenario))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::RebalanceCalendar;
    use crate::linalg::Mat;
    use crate::nn::{Activation, AffineLayer};

    struct ZeroNoise;

    impl NoiseSource for ZeroNoise {
        fn standard_normal(&mut self) -> f64 {
            0.0
        }
    }

    fn d(s: &str) -> CivilDate {
        CivilDate::parse(s).unwrap()
    }

    /// Linear decoder y = coef * x1 + z over the multivariate layout
    /// (x0 width 8, x1 width 1, latent width 1).
    fn linear_decoder(coef: f64) -> Mlp {
        let mut weights = vec![0.0; 10];
        weights[8] = coef;
        weights[9] = 1.0;
        Mlp::new(vec![AffineLayer::new(
            Mat::from_vec(1, 10, weights).unwrap(),
            vec![0.0],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap()
    }

    /// Decoder reading only the rebalance flag at x0 index 5 (the middle
    /// rebalance slot of the multivariate layout): y = gain * rb_mid.
    fn rb_decoder(gain: f64) -> Mlp {
        let mut weights = vec![0.0; 10];
        weights[6] = gain; // dow(5) then rb starts at 5; middle slot index 6
        Mlp::new(vec![AffineLayer::new(
            Mat::from_vec(1, 10, weights).unwrap(),
            vec![0.0],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap()
    }

    fn toy_horizon(n_days: usize, rebalance: Option<&str>) -> HorizonFeatures {
        let all = [
            "2023-03-13",
            "2023-03-14",
            "2023-03-15",
            "2023-03-16",
            "2023-03-17",
        ];
        let dates: Vec<CivilDate> = all[..n_days].iter().map(|s| d(s)).collect();
        let calendar = match rebalance {
            Some(rb) => RebalanceCalendar::new(vec![d(rb)]),
            None => RebalanceCalendar::new(vec![]),
        };
        crate::features::advance_features_multivariate(&calendar, d("2023-03-10"), &dates).unwrap()
    }

    #[test]
    fn generate_step_zero_noise_equals_decode() {
        let decoder = linear_decoder(0.5);
        let horizon = toy_horizon(1, None);
        let x1 = [2.0];
        let samples =
            generate_step(&decoder, &horizon.x0[0], &x1, 0.3, 4, 1, &mut ZeroNoise).unwrap();
        for s in samples {
            assert_eq!(s, vec![1.0]);
        }
    }

    #[test]
    fn generate_step_mean_matches_latent_expectation() {
        // y = 0.5 * x1 + z with z standard normal: E[y] = 0.5 * x1.
        let decoder = linear_decoder(0.5);
        let horizon = toy_horizon(1, None);
        let x1 = [2.0];
        let mut rng = Xoshiro::seed(42);
        let n = 100_000;
        let samples = generate_step(&decoder, &horizon.x0[0], &x1, 0.1, n, 1, &mut rng).unwrap();
        let mean: f64 = samples.iter().map(|s| s[0]).sum::<f64>() / n as f64;
        // Reference expectation from an independent, larger run.
        let mut rng2 = Xoshiro::seed(4242);
        let reference = generate_step(&decoder, &horizon.x0[0], &x1, 0.1, 1_000_000, 1, &mut rng2)
            .unwrap()
            .iter()
            .map(|s| s[0])
            .sum::<f64>()
            / 1e6;
        let sd = (1.0f64 + 0.01).sqrt(); // var(z) + sigma^2
        let se = sd / (n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}");
        assert!((reference - 1.0).abs() < 3.0 * se);
    }

    #[test]
    fn generate_step_rejects_bad_arguments() {
        let decoder = linear_decoder(0.5);
        let horizon = toy_horizon(1, None);
        assert!(matches!(
            generate_step(&decoder, &horizon.x0[0], &[1.0], 0.0, 4, 1, &mut ZeroNoise),
            Err(ForecastError::NonPositiveSigma)
        ));
        assert!(matches!(
            generate_step(&decoder, &horizon.x0[0], &[1.0], 0.1, 0, 1, &mut ZeroNoise),
            Err(ForecastError::ZeroSamples)
        ));
        assert!(matches!(
            generate_step(
                &decoder,
                &horizon.x0[0],
                &[1.0, 2.0],
                0.1,
                4,
                1,
                &mut ZeroNoise
            ),
            Err(ForecastError::DecoderDims { .. })
        ));
    }

    #[test]
    fn forecast_single_step_equals_generate_step() {
        let decoder = linear_decoder(0.7);
        let horizon = toy_horizon(1, None);
        let seed = 9;
        let ensemble = forecast_ar1(&decoder, &horizon, &[1.5], 1, 0.2, 8, seed).unwrap();
        let mut rng = Xoshiro::seed(seed);
        let direct = generate_step(&decoder, &horizon.x0[0], &[1.5], 0.2, 8, 1, &mut rng).unwrap();
        for s in 0..8 {
            assert_eq!(ensemble.value(s, 0, 0), direct[s][0]);
        }
    }

    #[test]
    fn single_sample_per_path_equals_ensemble_average() {
        let decoder = linear_decoder(0.7);
        let horizon = toy_horizon(4, None);
        let a = forecast_general(
            &decoder,
            &horizon,
            &[1.0],
            1,
            0.2,
            1,
            UpdateMode::PerPath,
            3,
        )
        .unwrap();
        let b = forecast_general(
            &decoder,
            &horizon,
            &[1.0],
            1,
            0.2,
            1,
            UpdateMode::EnsembleAverage,
            3,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forecast_ar1_is_ensemble_average_general() {
        let decoder = linear_decoder(0.6);
        let horizon = toy_horizon(5, None);
        let a = forecast_ar1(&decoder, &horizon, &[0.8], 1, 0.5, 16, 21).unwrap();
        let b = forecast_general(
            &decoder,
            &horizon,
            &[0.8],
            1,
            0.5,
            16,
            UpdateMode::EnsembleAverage,
            21,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_path_follows_geometric_recursion() {
        // y_k = a * y_{k-1} + noise, ensemble-averaged: the mean path should
        // track a^k within Monte Carlo error.
        let a = 0.5;
        let decoder = linear_decoder(a);
        let horizon = toy_horizon(5, None);
        let samples = 40_000;
        let ensemble = forecast_ar1(&decoder, &horizon, &[1.0], 1, 1e-9, samples, 123).unwrap();
        let mean = ensemble.mean_path();
        for (k, row) in mean.iter().enumerate() {
            let expected = a.powi(k as i32 + 1);
            assert!(
                (row[0] - expected).abs() < 0.03,
                "step {k}: {} vs {expected}",
                row[0]
            );
        }
    }

    #[test]
    fn decoder_ignoring_lag_makes_origin_irrelevant() {
        let decoder = rb_decoder(3.0);
        let horizon = toy_horizon(5, Some("2023-03-16"));
        let a = forecast_ar1(&decoder, &horizon, &[5.0], 1, 0.4, 32, 7).unwrap();
        let b = forecast_ar1(&decoder, &horizon, &[-5.0], 1, 0.4, 32, 7).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn forecasts_are_seed_deterministic() {
        let decoder = linear_decoder(0.6);
        let horizon = toy_horizon(5, Some("2023-03-15"));
        let a = forecast_ar1(&decoder, &horizon, &[1.0], 1, 0.5, 64, 99).unwrap();
        let b = forecast_ar1(&decoder, &horizon, &[1.0], 1, 0.5, 64, 99).unwrap();
        assert_eq!(a, b);
        let c = forecast_ar1(&decoder, &horizon, &[1.0], 1, 0.5, 64, 100).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn ensemble_shape_and_finiteness() {
        let decoder = linear_decoder(0.9);
        let horizon = toy_horizon(3, None);
        let ensemble = forecast_ar1(&decoder, &horizon, &[1.0], 1, 1.0, 10, 5).unwrap();
        assert_eq!(ensemble.sample_count(), 10);
        assert_eq!(ensemble.horizon_len(), 3);
        assert_eq!(ensemble.output_dim(), 1);
        assert_eq!(ensemble.values.len(), 30);
        assert!(ensemble.values.iter().all(|v| v.is_finite()));
        assert_eq!(ensemble.horizon_dates(), &horizon.dates[..]);
    }

    #[test]
    fn summarize_single_sample_collapses() {
        let decoder = linear_decoder(0.5);
        let horizon = toy_horizon(3, None);
        let ensemble = forecast_ar1(&decoder, &horizon, &[1.0], 1, 0.5, 1, 2).unwrap();
        let summary = summarize_paths(&ensemble).unwrap();
        for k in 0..3 {
            assert_eq!(summary.mean[k][0], ensemble.value(0, k, 0));
            assert_eq!(summary.q025[k][0], summary.mean[k][0]);
            assert_eq!(summary.q975[k][0], summary.mean[k][0]);
        }
    }

    #[test]
    fn summarize_mean_of_known_values() {
        let ensemble = PathEnsemble {
            origin: d("2023-03-10"),
            horizon_dates: vec![d("2023-03-13")],
            sample_count: 3,
            output_dim: 1,
            values: vec![1.0, 2.0, 3.0],
            sigma: 1.0,
            seed: 0,
        };
        let summary = summarize_paths(&ensemble).unwrap();
        assert_eq!(summary.mean[0][0], 2.0);
        assert!(summary.q025[0][0] <= summary.q975[0][0]);
    }

    #[test]
    fn summarize_gaussian_quantiles() {
        let mut rng = Xoshiro::seed(31);
        let n = 10_000;
        let values: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let ensemble = PathEnsemble {
            origin: d("2023-03-10"),
            horizon_dates: vec![d("2023-03-13")],
            sample_count: n,
            output_dim: 1,
            values,
            sigma: 1.0,
            seed: 31,
        };
        let summary = summarize_paths(&ensemble).unwrap();
        assert!(
            (summary.q975[0][0] - 1.96).abs() < 0.05,
            "{}",
            summary.q975[0][0]
        );
        assert!(
            (summary.q025[0][0] + 1.96).abs() < 0.05,
            "{}",
            summary.q025[0][0]
        );
    }

    #[test]
    fn empty_scenario_is_bit_identical_under_shared_seed() {
        let mut rng = Xoshiro::seed(17);
        let model = crate::cvae::CvaeModel::new(
            Mlp::init(&[10, 2], &[Activation::Identity], &mut rng).unwrap(),
            linear_decoder(0.5),
            8 + 1,
            1,
            1,
            1.0,
            alloc::vec::Vec::new(),
        )
        .unwrap();
        let horizon = toy_horizon(5, Some("2023-03-16"));
        let (base, scen) = counterfactual(
            &model,
            &horizon,
            &[1.0],
            &ScenarioSpec::empty(),
            0.5,
            16,
            11,
            true,
        )
        .unwrap();
        assert_eq!(base, scen);
    }

    #[test]
    fn zero_rb_override_zeroes_the_slice() {
        let horizon = toy_horizon(5, Some("2023-03-16"));
        let rb_range = horizon.layout.range_of(X0Slice::Rebalance).unwrap();
        // Sanity: the rebalance flag is present before the override.
        assert!(horizon
            .x0
            .iter()
            .any(|b| b[rb_range.clone()].iter().any(|&v| v != 0.0)));
        let modified = ScenarioSpec::zero_rb().apply(&horizon).unwrap();
        for block in &modified.x0 {
            assert!(block[rb_range.clone()].iter().all(|&v| v == 0.0));
        }
        // Other slices untouched.
        let dow_range = horizon.layout.range_of(X0Slice::DayOfWeek).unwrap();
        for (a, b) in horizon.x0.iter().zip(&modified.x0) {
            assert_eq!(a[dow_range.clone()], b[dow_range.clone()]);
        }
    }

    #[test]
    fn rb_counterfactual_differs_exactly_on_flagged_days() {
        let mut rng = Xoshiro::seed(18);
        let model = crate::cvae::CvaeModel::new(
            Mlp::init(&[10, 2], &[Activation::Identity], &mut rng).unwrap(),
            rb_decoder(3.0),
            9,
            1,
            1,
            1.0,
            alloc::vec::Vec::new(),
        )
        .unwrap();
        let horizon = toy_horizon(5, Some("2023-03-16"));
        let (base, scen) = counterfactual(
            &model,
            &horizon,
            &[0.0],
            &ScenarioSpec::zero_rb(),
            1e-9,
            64,
            5,
            true,
        )
        .unwrap();
        let base_mean = base.mean_path();
        let scen_mean = scen.mean_path();
        // 2023-03-16 is index 3; only that day's mean moves (the decoder
        // reads just the middle rebalance slot).
        for k in 0..5 {
            let gap = (base_mean[k][0] - scen_mean[k][0]).abs();
            if k == 3 {
                assert!(gap > 2.9, "day {k} gap {gap}");
            } else {
                assert!(gap < 1e-6, "day {k} gap {gap}");
            }
        }
    }

    #[test]
    fn x1_override_replaces_initial_lag() {
        let decoder = linear_decoder(0.5);
        let mut rng = Xoshiro::seed(19);
        let model = crate::cvae::CvaeModel::new(
            Mlp::init(&[10, 2], &[Activation::Identity], &mut rng).unwrap(),
            decoder,
            9,
            1,
            1,
            1.0,
            alloc::vec::Vec::new(),
        )
        .unwrap();
        let horizon = toy_horizon(3, None);
        let spec = ScenarioSpec::empty().with_x1(vec![-4.0]);
        let (base, scen) =
            counterfactual(&model, &horizon, &[4.0], &spec, 1e-9, 4096, 23, true).unwrap();
        let base_mean = base.mean_path();
        let scen_mean = scen.mean_path();
        assert!((base_mean[0][0] - 2.0).abs() < 0.05);
        assert!((scen_mean[0][0] + 2.0).abs() < 0.05);
        // Shocks decay toward each other as the horizon grows.
        let gap0 = (base_mean[0][0] - scen_mean[0][0]).abs();
        let gap2 = (base_mean[2][0] - scen_mean[2][0]).abs();
        assert!(gap2 < gap0);
    }

    #[test]
    fn scenario_validation_errors() {
        let horizon = toy_horizon(3, None);
        let bad_slice = ScenarioSpec {
            x0_overrides: vec![SliceOverride {
                slice: X0Slice::Sector,
                dates: None,
                values: vec![0.0; 10],
            }],
            x1_override: None,
        };
        assert!(matches!(
            bad_slice.apply(&horizon),
            Err(ForecastError::UnknownSlice { .. })
        ));
        let bad_width = ScenarioSpec {
            x0_overrides: vec![SliceOverride {
                slice: X0Slice::Rebalance,
                dates: None,
                values: vec![0.0],
            }],
            x1_override: None,
        };
        assert!(matches!(
            bad_width.apply(&horizon),
            Err(ForecastError::OverrideWidth { .. })
        ));
        let bad_date = ScenarioSpec {
            x0_overrides: vec![SliceOverride {
                slice: X0Slice::Rebalance,
                dates: Some(vec![d("2024-01-01")]),
                values: vec![0.0, 0.0, 0.0],
            }],
            x1_override: None,
        };
        assert!(matches!(
            bad_date.apply(&horizon),
            Err(ForecastError::UnknownDate { .. })
        ));
    }

    #[test]
    fn rolling_task_runs_one_ensemble_per_window() {
        let mut rng = Xoshiro::seed(20);
        let model = crate::cvae::CvaeModel::new(
            Mlp::init(&[10, 2], &[Activation::Identity], &mut rng).unwrap(),
            linear_decoder(0.5),
            9,
            1,
            1,
            1.0,
            alloc::vec::Vec::new(),
        )
        .unwrap();
        let windows = vec![
            RollingWindow {
                horizon: toy_horizon(2, None),
                origin_value: vec![1.0],
            },
            RollingWindow {
                horizon: toy_horizon(5, None),
                origin_value: vec![-1.0],
            },
        ];
        let ensembles = rolling_task(&model, &windows, 0.3, 8, 77).unwrap();
        assert_eq!(ensembles.len(), 2);
        assert_eq!(ensembles[0].horizon_len(), 2);
        assert_eq!(ensembles[1].horizon_len(), 5);
        // Windows own derived streams: repeating the call reproduces them.
        let again = rolling_task(&model, &windows, 0.3, 8, 77).unwrap();
        assert_eq!(ensembles, again);
    }
}

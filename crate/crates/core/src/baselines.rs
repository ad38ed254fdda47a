//! Linear baseline models: per-stock ARMA(1,1) and panel VAR(1), with
//! estimation and iterative multi-step forecasting. Both converge to their
//! unconditional mean over long horizons, which is exactly the behavior the
//! generative model is benchmarked against.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{solve, LinalgError, Mat};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineError {
    SeriesTooShort {
        minimum: usize,
        got: usize,
    },
    NonFiniteInput,
    /// Zero variance; nothing to fit.
    DegenerateSeries,
    /// Optimizer hit its iteration cap before the simplex collapsed.
    NonConvergence {
        iterations: usize,
    },
    /// VAR(1) needs T >= N + 2 observations.
    InsufficientData {
        needed: usize,
        got: usize,
    },
    Linalg(LinalgError),
    ShapeMismatch {
        expected: usize,
        got: usize,
    },
}

impl fmt::Display for BaselineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineError::SeriesTooShort { minimum, got } => {
                write!(
                    f,
                    "series too short: need {minimum} observations, got {got}"
                )
            }
            BaselineError::NonFiniteInput => write!(f, "input contains non-finite values"),
            BaselineError::DegenerateSeries => write!(f, "series has zero variance"),
            BaselineError::NonConvergence { iterations } => {
                write!(
                    f,
                    "estimation did not converge within {iterations} iterations"
                )
            }
            BaselineError::InsufficientData { needed, got } => {
                write!(
                    f,
                    "insufficient data: need {needed} observations, got {got}"
                )
            }
            BaselineError::Linalg(e) => write!(f, "{e}"),
            BaselineError::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for BaselineError {}

impl From<LinalgError> for BaselineError {
    fn from(e: LinalgError) -> Self {
        BaselineError::Linalg(e)
    }
}

/// ARMA(1,1) parameters around an unconditional mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Arma11Params {
    pub mean: f64,
    pub ar_coef: f64,
    pub ma_coef: f64,
    pub noise_var: f64,
}

/// Fit result: parameters plus the final in-sample residual, which seeds
/// the one-step-ahead forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct Arma11Fit {
    pub params: Arma11Params,
    pub last_residual: f64,
    /// `|ar_coef|` ended up against the stationarity box.
    pub near_unit_root: bool,
}

const COEF_BOUND: f64 = 0.99;

/// Tiebreak weight (times the sample variance) pulling `(ar, ma)` toward 0.
/// ARMA(1,1) is not identified when the AR and MA roots cancel: on
/// noise-like data the sum of squares is flat along `ar = -ma`, and without
/// a tiebreaker the optimizer can park anywhere on that ridge. The weight
/// is O(1) against a sum of squares that grows with the series length, so
/// it is negligible whenever the model is identified.
const CANCEL_TIEBREAK: f64 = 10.0;

/// Conditional sum of squares for given parameters: the residual recursion
/// `e_t = y_t - mean - ar (y_{t-1} - mean) - ma e_{t-1}` with `e_1 = 0`.
/// Returns the sum of squared residuals and the final residual.
pub fn css(series: &[f64], mean: f64, ar_coef: f64, ma_coef: f64) -> (f64, f64) {
    let mut eps_prev = 0.0;
    let mut sse = 0.0;
    for t in 1..series.len() {
        let eps = series[t] - mean - ar_coef * (series[t - 1] - mean) - ma_coef * eps_prev;
        sse += eps * eps;
        eps_prev = eps;
    }
    (sse, eps_prev)
}

/// Nelder-Mead simplex minimizer, small and dependency-free. Returns the
/// best point and whether the simplex collapsed within the iteration cap.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    objective: F,
    start: &[f64],
    step: &[f64],
    max_iters: usize,
    tol: f64,
) -> (Vec<f64>, bool) {
    let n = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), objective(start)));
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += step[i];
        let f = objective(&v);
        simplex.push((v, f));
    }

    for _ in 0..max_iters {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite objective"));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if (worst - best).abs() <= tol * (1.0 + best.abs()) {
            return (simplex[0].0.clone(), true);
        }
        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let point = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };
        let reflected = point(1.0);
        let f_reflected = objective(&reflected);
        if f_reflected < simplex[0].1 {
            let expanded = point(2.0);
            let f_expanded = objective(&expanded);
            simplex[n] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
        } else if f_reflected < simplex[n - 1].1 {
            simplex[n] = (reflected, f_reflected);
        } else {
            let contracted = point(-0.5);
            let f_contracted = objective(&contracted);
            if f_contracted < simplex[n].1 {
                simplex[n] = (contracted, f_contracted);
            } else {
                let best_point = simplex[0].0.clone();
                for (v, f) in simplex.iter_mut().skip(1) {
                    for (x, b) in v.iter_mut().zip(&best_point) {
                        *x = b + 0.5 * (*x - b);
                    }
                    *f = objective(v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite objective"));
    (simplex[0].0.clone(), false)
}

/// Estimates ARMA(1,1) by minimizing the conditional sum of squares over
/// `(mean, ar, ma)`, with the AR and MA coefficients box-constrained to
/// `±0.99` through a quadratic penalty.
pub fn fit_arma11(series: &[f64]) -> Result<Arma11Fit, BaselineError> {
    const MIN_LEN: usize = 20;
    if series.len() < MIN_LEN {
        return Err(BaselineError::SeriesTooShort {
            minimum: MIN_LEN,
            got: series.len(),
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(BaselineError::NonFiniteInput);
    }
    let n = series.len() as f64;
    let sample_mean = series.iter().sum::<f64>() / n;
    let variance = series
        .iter()
        .map(|v| (v - sample_mean) * (v - sample_mean))
        .sum::<f64>()
        / n;
    if variance <= 0.0 {
        return Err(BaselineError::DegenerateSeries);
    }
    let std = math::sqrt(variance);
    let lag1_cov = series
        .windows(2)
        .map(|w| (w[0] - sample_mean) * (w[1] - sample_mean))
        .sum::<f64>()
        / n;
    let ar_start = (lag1_cov / variance).clamp(-0.9, 0.9);

    let objective = |p: &[f64]| -> f64 {
        let (mean, ar, ma) = (p[0], p[1], p[2]);
        let ar_c = ar.clamp(-COEF_BOUND, COEF_BOUND);
        let ma_c = ma.clamp(-COEF_BOUND, COEF_BOUND);
        let (sse, _) = css(series, mean, ar_c, ma_c);
        let violation = (ar - ar_c) * (ar - ar_c) + (ma - ma_c) * (ma - ma_c);
        let tiebreak = CANCEL_TIEBREAK * variance * (ar_c * ar_c + ma_c * ma_c);
        sse + tiebreak + 1e6 * variance * violation
    };

    let start = [sample_mean, ar_start, 0.0];
    let step = [0.5 * std.max(1e-3), 0.2, 0.2];
    let max_iters = 4000;
    let (best, converged) = nelder_mead(objective, &start, &step, max_iters, 1e-12);
    if !converged {
        return Err(BaselineError::NonConvergence {
            iterations: max_iters,
        });
    }
    let mean = best[0];
    let ar_coef = best[1].clamp(-COEF_BOUND, COEF_BOUND);
    let ma_coef = best[2].clamp(-COEF_BOUND, COEF_BOUND);
    let (sse, last_residual) = css(series, mean, ar_coef, ma_coef);
    Ok(Arma11Fit {
        params: Arma11Params {
            mean,
            ar_coef,
            ma_coef,
            noise_var: sse / (series.len() as f64 - 1.0),
        },
        last_residual,
        near_unit_root: math::abs(ar_coef) > 0.98,
    })
}

/// Residual at every index of `series` under the CSS recursion (index 0
/// carries the conventional 0). Forecasts anchored mid-series take their
/// seeding residual from here.
pub fn residual_trace(series: &[f64], params: &Arma11Params) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    if series.is_empty() {
        return out;
    }
    out.push(0.0);
    for t in 1..series.len() {
        let eps = series[t]
            - params.mean
            - params.ar_coef * (series[t - 1] - params.mean)
            - params.ma_coef * out[t - 1];
        out.push(eps);
    }
    out
}

/// Iterative ARMA(1,1) point forecast:
/// `y_{t+1|t} = mean + ar (y_t - mean) + ma e_t`, then geometric decay
/// `y_{t+k|t} = mean + ar^{k-1} (y_{t+1|t} - mean)`.
pub fn forecast_arma11(
    params: &Arma11Params,
    last_value: f64,
    last_residual: f64,
    horizon: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(horizon);
    if horizon == 0 {
        return out;
    }
    let one_step =
        params.mean + params.ar_coef * (last_value - params.mean) + params.ma_coef * last_residual;
    out.push(one_step);
    let mut deviation = one_step - params.mean;
    for _ in 1..horizon {
        deviation *= params.ar_coef;
        out.push(params.mean + deviation);
    }
    out
}

/// VAR(1) parameters: `y_t = intercept + coef y_{t-1} + e_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Var1Params {
    pub intercept: Vec<f64>,
    /// `N x N` coefficient matrix.
    pub coef: Mat,
    /// Residual covariance of the OLS fit.
    pub resid_cov: Mat,
}

/// Fits VAR(1) by equation-wise ordinary least squares of `y_t` on
/// `(1, y_{t-1})`. `panel` is `N x T` (stocks by dates).
pub fn fit_var1(panel: &Mat) -> Result<Var1Params, BaselineError> {
    let n = panel.rows();
    let t = panel.cols();
    if t < n + 2 {
        return Err(BaselineError::InsufficientData {
            needed: n + 2,
            got: t,
        });
    }
    if panel.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(BaselineError::NonFiniteInput);
    }
    let rows = t - 1;
    let k = n + 1; // intercept + lags
                   // Normal equations: (X'X) B = X'Y with X = [1, y_{t-1}].
    let mut xtx = Mat::zeros(k, k);
    let mut xty = Mat::zeros(k, n);
    for obs in 0..rows {
        let mut x = vec![0.0; k];
        x[0] = 1.0;
        for i in 0..n {
            x[1 + i] = panel.get(i, obs);
        }
        for a in 0..k {
            for b in 0..k {
                xtx.set(a, b, xtx.get(a, b) + x[a] * x[b]);
            }
            for j in 0..n {
                xty.set(a, j, xty.get(a, j) + x[a] * panel.get(j, obs + 1));
            }
        }
    }
    let beta = solve(&xtx, &xty)?;

    let intercept: Vec<f64> = (0..n).map(|j| beta.get(0, j)).collect();
    let mut coef = Mat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            coef.set(j, i, beta.get(1 + i, j));
        }
    }
    let mut resid_cov = Mat::zeros(n, n);
    let mut resid = Mat::zeros(rows, n);
    for obs in 0..rows {
        for j in 0..n {
            let mut fitted = intercept[j];
            for i in 0..n {
                fitted += coef.get(j, i) * panel.get(i, obs);
            }
            resid.set(obs, j, panel.get(j, obs + 1) - fitted);
        }
    }
    for a in 0..n {
        for b in 0..n {
            let mut acc = 0.0;
            for obs in 0..rows {
                acc += resid.get(obs, a) * resid.get(obs, b);
            }
            resid_cov.set(a, b, acc / rows as f64);
        }
    }
    Ok(Var1Params {
        intercept,
        coef,
        resid_cov,
    })
}

/// Iterates `y_{t+k|t} = intercept + coef y_{t+k-1|t}` from `y_t`.
pub fn forecast_var1(
    params: &Var1Params,
    last_values: &[f64],
    horizon: usize,
) -> Result<Vec<Vec<f64>>, BaselineError> {
    let n = params.intercept.len();
    if last_values.len() != n {
        return Err(BaselineError::ShapeMismatch {
            expected: n,
            got: last_values.len(),
        });
    }
    let mut out = Vec::with_capacity(horizon);
    let mut current = last_values.to_vec();
    for _ in 0..horizon {
        let propagated = params.coef.matvec(&current)?;
        current = params
            .intercept
            .iter()
            .zip(&propagated)
            .map(|(c, p)| c + p)
            .collect();
        out.push(current.clone());
    }
    Ok(out)
}

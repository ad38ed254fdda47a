//! Conditional VAE assembly.
//!
//! The encoder is an MLP trunk mapping `(features, target)` to `2q` values,
//! split into a mean head (identity) and a variance head (softplus). The
//! decoder maps `(features, latent)` to the conditional output mean. The
//! training objective is the negative evidence lower bound: a Gaussian
//! reconstruction term estimated with reparameterized latent draws, plus a
//! closed-form KL penalty against the standard-normal prior.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;
use crate::nn::{Activation, AdamState, EarlyStopState, Mlp, NnError};
use crate::rng::{NoiseSource, Xoshiro};

#[derive(Debug, Clone, PartialEq)]
pub enum CvaeError {
    Nn(NnError),
    DimMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    NonPositiveVariance,
    NonPositiveSigma,
    EmptyEpsDraws,
    EmptyDataset,
    /// Validation fraction leaves no training data.
    ValidationSplit,
    /// Non-finite loss or gradient during training.
    Divergence {
        epoch: usize,
    },
}

impl fmt::Display for CvaeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CvaeError::Nn(e) => write!(f, "{e}"),
            CvaeError::DimMismatch {
                what,
                expected,
                got,
            } => {
                write!(f, "{what}: expected length {expected}, got {got}")
            }
            CvaeError::NonPositiveVariance => write!(f, "variance entries must be positive"),
            CvaeError::NonPositiveSigma => write!(f, "sigma must be positive"),
            CvaeError::EmptyEpsDraws => write!(f, "at least one latent draw is required"),
            CvaeError::EmptyDataset => write!(f, "training dataset is empty"),
            CvaeError::ValidationSplit => {
                write!(f, "validation fraction leaves no training data")
            }
            CvaeError::Divergence { epoch } => {
                write!(f, "training diverged (non-finite loss) at epoch {epoch}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CvaeError {}

impl From<NnError> for CvaeError {
    fn from(e: NnError) -> Self {
        CvaeError::Nn(e)
    }
}

/// Per-series normalization statistics carried for de-normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub ticker: String,
    pub mean: f64,
    pub std: f64,
}

/// Network dimensions for a CVAE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvaeArch {
    pub feature_dim: usize,
    pub output_dim: usize,
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
}

impl CvaeArch {
    /// Per-stock configuration: 26 conditioning features, scalar output,
    /// decoder 27 -> 16 -> 8 -> 1.
    pub fn univariate() -> Self {
        CvaeArch {
            feature_dim: 26,
            output_dim: 1,
            latent_dim: 1,
            encoder_hidden: vec![16],
            decoder_hidden: vec![16, 8],
        }
    }

    /// Joint panel configuration for `n_stocks` series: 8 + n features,
    /// n outputs, decoder (8 + n + 1) -> 64 -> 64 -> n.
    pub fn multivariate(n_stocks: usize) -> Self {
        CvaeArch {
            feature_dim: 8 + n_stocks,
            output_dim: n_stocks,
            latent_dim: 1,
            encoder_hidden: vec![64],
            decoder_hidden: vec![64, 64],
        }
    }
}

/// A conditional VAE: encoder trunk with mean/variance heads, decoder, and
/// the dimensions and metadata needed to run and persist it.
#[derive(Debug, Clone, PartialEq)]
pub struct CvaeModel {
    encoder: Mlp,
    decoder: Mlp,
    feature_dim: usize,
    output_dim: usize,
    latent_dim: usize,
    /// Generation-time observation noise scale.
    pub sigma: f64,
    pub norm_stats: Vec<NormStats>,
}

impl CvaeModel {
    pub fn new(
        encoder: Mlp,
        decoder: Mlp,
        feature_dim: usize,
        output_dim: usize,
        latent_dim: usize,
        sigma: f64,
        norm_stats: Vec<NormStats>,
    ) -> Result<Self, CvaeError> {
        if latent_dim == 0 {
            return Err(CvaeError::DimMismatch {
                what: "latent dim",
                expected: 1,
                got: 0,
            });
        }
        if sigma <= 0.0 {
            return Err(CvaeError::NonPositiveSigma);
        }
        if encoder.in_dim() != feature_dim + output_dim {
            return Err(CvaeError::DimMismatch {
                what: "encoder input dim",
                expected: feature_dim + output_dim,
                got: encoder.in_dim(),
            });
        }
        if encoder.out_dim() != 2 * latent_dim {
            return Err(CvaeError::DimMismatch {
                what: "encoder output dim",
                expected: 2 * latent_dim,
                got: encoder.out_dim(),
            });
        }
        if decoder.in_dim() != feature_dim + latent_dim {
            return Err(CvaeError::DimMismatch {
                what: "decoder input dim",
                expected: feature_dim + latent_dim,
                got: decoder.in_dim(),
            });
        }
        if decoder.out_dim() != output_dim {
            return Err(CvaeError::DimMismatch {
                what: "decoder output dim",
                expected: output_dim,
                got: decoder.out_dim(),
            });
        }
        Ok(CvaeModel {
            encoder,
            decoder,
            feature_dim,
            output_dim,
            latent_dim,
            sigma,
            norm_stats,
        })
    }

    /// Fresh model with seeded random weights.
    pub fn init(arch: &CvaeArch, sigma: f64, seed: u64) -> Result<Self, CvaeError> {
        let mut rng = Xoshiro::seed(seed);
        let mut enc_dims = vec![arch.feature_dim + arch.output_dim];
        enc_dims.extend_from_slice(&arch.encoder_hidden);
        enc_dims.push(2 * arch.latent_dim);
        let mut enc_acts = vec![Activation::Relu; arch.encoder_hidden.len()];
        enc_acts.push(Activation::Identity);
        let encoder = Mlp::init(&enc_dims, &enc_acts, &mut rng)?;

        let mut dec_dims = vec![arch.feature_dim + arch.latent_dim];
        dec_dims.extend_from_slice(&arch.decoder_hidden);
        dec_dims.push(arch.output_dim);
        let mut dec_acts = vec![Activation::Relu; arch.decoder_hidden.len()];
        dec_acts.push(Activation::Identity);
        let decoder = Mlp::init(&dec_dims, &dec_acts, &mut rng)?;

        CvaeModel::new(
            encoder,
            decoder,
            arch.feature_dim,
            arch.output_dim,
            arch.latent_dim,
            sigma,
            Vec::new(),
        )
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    /// Encoder parameters followed by decoder parameters.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut p = self.encoder.params_flat();
        p.extend(self.decoder.params_flat());
        p
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<(), CvaeError> {
        let enc_count = self.encoder.param_count();
        if params.len() != self.param_count() {
            return Err(NnError::LayoutMismatch {
                expected: self.param_count(),
                got: params.len(),
            }
            .into());
        }
        self.encoder.set_params_flat(&params[..enc_count])?;
        self.decoder.set_params_flat(&params[enc_count..])?;
        Ok(())
    }

    /// Posterior moments of the latent given `(features, target)`. The
    /// variance head output is floored at the smallest positive double so
    /// it stays strictly positive even where softplus underflows.
    pub fn encode(
        &self,
        features: &[f64],
        target: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), CvaeError> {
        if features.len() != self.feature_dim {
            return Err(CvaeError::DimMismatch {
                what: "encode features",
                expected: self.feature_dim,
                got: features.len(),
            });
        }
        if target.len() != self.output_dim {
            return Err(CvaeError::DimMismatch {
                what: "encode target",
                expected: self.output_dim,
                got: target.len(),
            });
        }
        let mut input = Vec::with_capacity(self.encoder.in_dim());
        input.extend_from_slice(features);
        input.extend_from_slice(target);
        let out = self.encoder.eval(&input)?;
        let mu = out[..self.latent_dim].to_vec();
        let var = out[self.latent_dim..]
            .iter()
            .map(|&u| math::softplus(u).max(f64::MIN_POSITIVE))
            .collect();
        Ok((mu, var))
    }

    /// Conditional mean of the output given `(features, latent)`.
    pub fn decode(&self, features: &[f64], latent: &[f64]) -> Result<Vec<f64>, CvaeError> {
        if features.len() != self.feature_dim {
            return Err(CvaeError::DimMismatch {
                what: "decode features",
                expected: self.feature_dim,
                got: features.len(),
            });
        }
        if latent.len() != self.latent_dim {
            return Err(CvaeError::DimMismatch {
                what: "decode latent",
                expected: self.latent_dim,
                got: latent.len(),
            });
        }
        let mut input = Vec::with_capacity(self.decoder.in_dim());
        input.extend_from_slice(features);
        input.extend_from_slice(latent);
        Ok(self.decoder.eval(&input)?)
    }
}

/// `z = mu + sqrt(var) * eps`, elementwise. `eps` is injected by the caller
/// so sampling stays testable and training can fix its draws.
pub fn reparam_sample(mu: &[f64], var_diag: &[f64], eps: &[f64]) -> Result<Vec<f64>, CvaeError> {
    if var_diag.len() != mu.len() || eps.len() != mu.len() {
        return Err(CvaeError::DimMismatch {
            what: "reparam inputs",
            expected: mu.len(),
            got: if var_diag.len() != mu.len() {
                var_diag.len()
            } else {
                eps.len()
            },
        });
    }
    if var_diag.iter().any(|&v| v <= 0.0) {
        return Err(CvaeError::NonPositiveVariance);
    }
    Ok(mu
        .iter()
        .zip(var_diag)
        .zip(eps)
        .map(|((m, v), e)| m + math::sqrt(*v) * e)
        .collect())
}

/// KL penalty of `N(mu, diag(var))` against the standard-normal prior, in
/// the explicit form `(||mu||^2 + tr(var) - log det(var)) / 2`. This sits
/// `q/2` above the textbook divergence, a constant offset that does not
/// affect gradients; its minimum `q/2` is attained at `mu = 0`, `var = 1`.
pub fn kl_to_prior(mu: &[f64], var_diag: &[f64]) -> Result<f64, CvaeError> {
    if var_diag.len() != mu.len() {
        return Err(CvaeError::DimMismatch {
            what: "kl inputs",
            expected: mu.len(),
            got: var_diag.len(),
        });
    }
    if var_diag.iter().any(|&v| v <= 0.0) {
        return Err(CvaeError::NonPositiveVariance);
    }
    let sq_norm: f64 = mu.iter().map(|m| m * m).sum();
    let trace: f64 = var_diag.iter().sum();
    let log_det: f64 = var_diag.iter().map(|&v| math::ln(v)).sum();
    Ok((sq_norm + trace - log_det) / 2.0)
}

/// Gaussian reconstruction penalty `||y - mean||^2 / (2 sigma^2)`: the
/// negative log-density with the additive constant dropped.
pub fn recon_term(target: &[f64], mean: &[f64], sigma: f64) -> Result<f64, CvaeError> {
    if mean.len() != target.len() {
        return Err(CvaeError::DimMismatch {
            what: "recon inputs",
            expected: target.len(),
            got: mean.len(),
        });
    }
    if sigma <= 0.0 {
        return Err(CvaeError::NonPositiveSigma);
    }
    let sq: f64 = target
        .iter()
        .zip(mean)
        .map(|(t, m)| (t - m) * (t - m))
        .sum();
    Ok(sq / (2.0 * sigma * sigma))
}

/// Negative ELBO estimate: reconstruction averaged over the latent draws
/// plus the closed-form KL. Lower is better.
pub fn elbo_loss(
    model: &CvaeModel,
    features: &[f64],
    target: &[f64],
    eps_draws: &[Vec<f64>],
    sigma: f64,
) -> Result<f64, CvaeError> {
    if eps_draws.is_empty() {
        return Err(CvaeError::EmptyEpsDraws);
    }
    let (mu, var) = model.encode(features, target)?;
    let mut recon_sum = 0.0;
    for eps in eps_draws {
        let z = reparam_sample(&mu, &var, eps)?;
        let mean = model.decode(features, &z)?;
        recon_sum += recon_term(target, &mean, sigma)?;
    }
    Ok(recon_sum / eps_draws.len() as f64 + kl_to_prior(&mu, &var)?)
}

/// Loss together with its exact gradient over the flat parameter layout
/// (encoder then decoder), with the latent draws held fixed.
pub fn elbo_grad(
    model: &CvaeModel,
    features: &[f64],
    target: &[f64],
    eps_draws: &[Vec<f64>],
    sigma: f64,
) -> Result<(f64, Vec<f64>), CvaeError> {
    if eps_draws.is_empty() {
        return Err(CvaeError::EmptyEpsDraws);
    }
    if sigma <= 0.0 {
        return Err(CvaeError::NonPositiveSigma);
    }
    let q = model.latent_dim;
    let draws = eps_draws.len() as f64;

    let mut enc_in = Vec::with_capacity(model.encoder.in_dim());
    enc_in.extend_from_slice(features);
    enc_in.extend_from_slice(target);
    let (enc_out, enc_trace) = model.encoder.forward(&enc_in)?;
    let mu = &enc_out[..q];
    let pre_var = &enc_out[q..];
    let var: Vec<f64> = pre_var
        .iter()
        .map(|&u| math::softplus(u).max(f64::MIN_POSITIVE))
        .collect();
    let sqrt_var: Vec<f64> = var.iter().map(|&v| math::sqrt(v)).collect();

    let mut dec_grads = vec![0.0; model.decoder.param_count()];
    let mut grad_mu = vec![0.0; q];
    let mut grad_var = vec![0.0; q];
    let mut recon_sum = 0.0;

    for eps in eps_draws {
        if eps.len() != q {
            return Err(CvaeError::DimMismatch {
                what: "eps draw",
                expected: q,
                got: eps.len(),
            });
        }
        let mut dec_in = Vec::with_capacity(model.decoder.in_dim());
        dec_in.extend_from_slice(features);
        for i in 0..q {
            dec_in.push(mu[i] + sqrt_var[i] * eps[i]);
        }
        let (mean, dec_trace) = model.decoder.forward(&dec_in)?;
        recon_sum += recon_term(target, &mean, sigma)?;
        let grad_mean: Vec<f64> = mean
            .iter()
            .zip(target)
            .map(|(m, t)| (m - t) / (sigma * sigma))
            .collect();
        let bp = model.decoder.backward(&dec_trace, &grad_mean)?;
        for (acc, g) in dec_grads.iter_mut().zip(&bp.param_grads) {
            *acc += g;
        }
        let grad_z = &bp.input_grad[model.feature_dim..];
        for i in 0..q {
            grad_mu[i] += grad_z[i];
            // dz/dvar = eps / (2 sqrt(var))
            grad_var[i] += grad_z[i] * eps[i] / (2.0 * sqrt_var[i]);
        }
    }
    for g in dec_grads.iter_mut() {
        *g /= draws;
    }
    for i in 0..q {
        grad_mu[i] /= draws;
        grad_var[i] /= draws;
        // KL contributions: d/dmu = mu, d/dvar = (1 - 1/var) / 2.
        grad_mu[i] += mu[i];
        grad_var[i] += (1.0 - 1.0 / var[i]) / 2.0;
    }

    let mut enc_grad_out = Vec::with_capacity(2 * q);
    enc_grad_out.extend_from_slice(&grad_mu);
    for i in 0..q {
        enc_grad_out.push(grad_var[i] * math::sigmoid(pre_var[i]));
    }
    let enc_bp = model.encoder.backward(&enc_trace, &enc_grad_out)?;

    let loss = recon_sum / draws + kl_to_prior(mu, &var)?;
    let mut grads = enc_bp.param_grads;
    grads.extend(dec_grads);
    Ok((loss, grads))
}

/// One `(features, target)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub features: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Latent draws per example in the ELBO Monte Carlo estimate.
    pub mc_samples: usize,
    pub seed: u64,
    /// Chronological tail of the dataset held out for validation.
    pub validation_fraction: f64,
    pub tolerance_factor: f64,
    pub patience_steps: usize,
    /// Sigma used inside the reconstruction weight during training.
    pub train_sigma: f64,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 500,
            batch_size: 32,
            mc_samples: 1,
            seed: 0,
            validation_fraction: 0.1,
            tolerance_factor: 1.01,
            patience_steps: 3,
            train_sigma: 1.0,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLosses {
    pub train: f64,
    pub validation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochLosses>,
    pub stopped_early: bool,
}

/// Trains the model in place with minibatch ADAM and validation early
/// stopping. The dataset is split chronologically; validation latent draws
/// are fixed up front so the early-stopping signal is not re-randomized
/// each epoch. On return the parameters are those of the best validation
/// epoch.
pub fn train(
    model: &mut CvaeModel,
    dataset: &[TrainExample],
    config: &TrainConfig,
) -> Result<TrainHistory, CvaeError> {
    if dataset.is_empty() {
        return Err(CvaeError::EmptyDataset);
    }
    for ex in dataset {
        if ex.features.len() != model.feature_dim || ex.target.len() != model.output_dim {
            return Err(CvaeError::DimMismatch {
                what: "dataset example",
                expected: model.feature_dim,
                got: ex.features.len(),
            });
        }
    }
    let n = dataset.len();
    let n_val = ((config.validation_fraction * n as f64) as usize).max(1);
    if n_val >= n {
        return Err(CvaeError::ValidationSplit);
    }
    let n_train = n - n_val;
    let (train_set, val_set) = dataset.split_at(n_train);

    let mut rng = Xoshiro::seed(config.seed);
    let q = model.latent_dim;
    let draw = |rng: &mut Xoshiro, count: usize| -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| (0..q).map(|_| rng.standard_normal()).collect())
            .collect()
    };
    let val_eps: Vec<Vec<Vec<f64>>> = val_set
        .iter()
        .map(|_| draw(&mut rng, config.mc_samples))
        .collect();

    let mut optimizer = AdamState::new(model.param_count(), config.learning_rate);
    let mut stopper = EarlyStopState::new(config.tolerance_factor, config.patience_steps);
    let mut history = Vec::new();
    let mut stopped_early = false;
    let mut best_params: Option<Vec<f64>> = None;
    let mut best_val = f64::INFINITY;
    let mut order: Vec<usize> = (0..n_train).collect();

    // Anything non-finite mid-training (overflowed params, inf loss, NaN
    // gradients) is a divergence, reported with the epoch it surfaced in.
    let guard = |err: CvaeError, epoch: usize| match err {
        CvaeError::Nn(NnError::NonFiniteParam) | CvaeError::Nn(NnError::NonFiniteGradient) => {
            CvaeError::Divergence { epoch }
        }
        other => other,
    };

    for epoch in 0..config.max_epochs {
        rng.shuffle(&mut order);
        let mut train_loss_sum = 0.0;
        for batch in order.chunks(config.batch_size.max(1)) {
            let mut grad_acc = vec![0.0; model.param_count()];
            for &idx in batch {
                let ex = &train_set[idx];
                let eps = draw(&mut rng, config.mc_samples);
                let (loss, grads) =
                    elbo_grad(model, &ex.features, &ex.target, &eps, config.train_sigma)
                        .map_err(|e| guard(e, epoch))?;
                if !loss.is_finite() {
                    return Err(CvaeError::Divergence { epoch });
                }
                train_loss_sum += loss;
                for (acc, g) in grad_acc.iter_mut().zip(&grads) {
                    *acc += g;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in grad_acc.iter_mut() {
                *g *= scale;
            }
            let mut params = model.params_flat();
            optimizer
                .step(&mut params, &grad_acc)
                .map_err(|_| CvaeError::Divergence { epoch })?;
            model
                .set_params_flat(&params)
                .map_err(|_| CvaeError::Divergence { epoch })?;
        }
        let train_loss = train_loss_sum / n_train as f64;

        let mut val_loss_sum = 0.0;
        for (ex, eps) in val_set.iter().zip(&val_eps) {
            val_loss_sum += elbo_loss(model, &ex.features, &ex.target, eps, config.train_sigma)
                .map_err(|e| guard(e, epoch))?;
        }
        let val_loss = val_loss_sum / n_val as f64;
        if !val_loss.is_finite() {
            return Err(CvaeError::Divergence { epoch });
        }
        if val_loss < best_val {
            best_val = val_loss;
            best_params = Some(model.params_flat());
        }
        history.push(EpochLosses {
            train: train_loss,
            validation: val_loss,
        });
        if stopper.update(val_loss) {
            stopped_early = true;
            break;
        }
    }

    if let Some(best) = best_params {
        model.set_params_flat(&best)?;
    }
    Ok(TrainHistory {
        epochs: history,
        stopped_early,
    })
}

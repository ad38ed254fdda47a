//! Minimal feed-forward network engine.
//!
//! Parameterized affine layers with ReLU / softplus / identity activations,
//! exact reverse-mode gradients, an ADAM optimizer, and a validation
//! early-stopping controller. Parameters of an [`Mlp`] live in a single
//! flat layout (per layer: row-major weights, then bias) shared by the
//! gradient buffers, the optimizer moments, and model persistence.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::Mat;
use crate::math;
use crate::rng::Xoshiro;

#[derive(Debug, Clone, PartialEq)]
pub enum NnError {
    /// Input length does not match the layer/network input dimension.
    InputShape { expected: usize, got: usize },
    /// Layer dimensions do not chain or weights/bias disagree.
    DimensionChain {
        layer: usize,
        expected: usize,
        got: usize,
    },
    /// A parameter entry is not finite.
    NonFiniteParam,
    /// A gradient entry is not finite; training has diverged.
    NonFiniteGradient,
    /// Forward trace does not belong to this network.
    CacheMismatch,
    /// Gradient/moment buffers do not mirror the parameter layout.
    LayoutMismatch { expected: usize, got: usize },
}

impl fmt::Display for NnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NnError::InputShape { expected, got } => {
                write!(f, "input shape mismatch: expected {expected}, got {got}")
            }
            NnError::DimensionChain {
                layer,
                expected,
                got,
            } => write!(
                f,
                "layer {layer} dimension mismatch: expected input {expected}, got {got}"
            ),
            NnError::NonFiniteParam => write!(f, "non-finite parameter entry"),
            NnError::NonFiniteGradient => write!(f, "non-finite gradient (training divergence)"),
            NnError::CacheMismatch => write!(f, "forward trace does not match this network"),
            NnError::LayoutMismatch { expected, got } => {
                write!(f, "buffer layout mismatch: expected {expected}, got {got}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for NnError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Softplus,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Softplus => math::softplus(x),
            Activation::Identity => x,
        }
    }

    /// Derivative with respect to the pre-activation. The ReLU subgradient
    /// at exactly 0 is taken to be 0.
    #[inline]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => math::sigmoid(pre),
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer: `y = activation(W x + b)` with `W` of shape
/// `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    weights: Mat,
    bias: Vec<f64>,
    activation: Activation,
}

impl AffineLayer {
    pub fn new(weights: Mat, bias: Vec<f64>, activation: Activation) -> Result<Self, NnError> {
        if weights.rows() != bias.len() {
            return Err(NnError::DimensionChain {
                layer: 0,
                expected: weights.rows(),
                got: bias.len(),
            });
        }
        if weights
            .as_slice()
            .iter()
            .chain(bias.iter())
            .any(|v| !v.is_finite())
        {
            return Err(NnError::NonFiniteParam);
        }
        Ok(AffineLayer {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Mat {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }
}

/// Record of every pre- and post-activation value of one forward pass,
/// consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `inputs[0]` is the network input; `inputs[l+1]` is layer `l`'s output.
    inputs: Vec<Vec<f64>>,
    /// `pre[l]` is layer `l`'s pre-activation `W x + b`.
    pre: Vec<Vec<f64>>,
}

impl ForwardTrace {
    /// Per-layer pre-activations. Finite-difference oracles use these to
    /// reject probe points sitting on a ReLU kink.
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

/// Gradients produced by one [`Mlp::backward`] call.
#[derive(Debug, Clone)]
pub struct Backprop {
    /// Gradients for every parameter, in the flat parameter layout.
    pub param_grads: Vec<f64>,
    /// Gradient with respect to the network input.
    pub input_grad: Vec<f64>,
}

/// A feed-forward network: an ordered stack of [`AffineLayer`]s whose
/// dimensions chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<AffineLayer>,
}

impl Mlp {
    pub fn new(layers: Vec<AffineLayer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::DimensionChain {
                layer: 0,
                expected: 1,
                got: 0,
            });
        }
        for i in 1..layers.len() {
            if layers[i].in_dim() != layers[i - 1].out_dim() {
                return Err(NnError::DimensionChain {
                    layer: i,
                    expected: layers[i - 1].out_dim(),
                    got: layers[i].in_dim(),
                });
            }
        }
        Ok(Mlp { layers })
    }

    /// Builds a network from `dims = [in, h1, ..., out]` with the given
    /// per-layer activations. Weights are initialized uniformly in
    /// `±sqrt(6 / (in + out))`, biases at zero.
    pub fn init(
        dims: &[usize],
        activations: &[Activation],
        rng: &mut Xoshiro,
    ) -> Result<Self, NnError> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(NnError::DimensionChain {
                layer: 0,
                expected: dims.len().saturating_sub(1),
                got: activations.len(),
            });
        }
        let mut layers = Vec::with_capacity(activations.len());
        for (l, &act) in activations.iter().enumerate() {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64);
            let mut data = vec![0.0; fan_in * fan_out];
            for w in data.iter_mut() {
                *w = rng.uniform(-bound, bound);
            }
            let weights = Mat::from_vec(fan_out, fan_in, data).expect("sized above");
            layers.push(AffineLayer::new(weights, vec![0.0; fan_out], act)?);
        }
        Mlp::new(layers)
    }

    pub fn layers(&self) -> &[AffineLayer] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Copies all parameters into the flat layout.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.as_slice());
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    /// Overwrites all parameters from the flat layout.
    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<(), NnError> {
        if params.len() != self.param_count() {
            return Err(NnError::LayoutMismatch {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteParam);
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let w = layer.weights.rows() * layer.weights.cols();
            layer
                .weights
                .as_mut_slice()
                .copy_from_slice(&params[offset..offset + w]);
            offset += w;
            let b = layer.bias.len();
            layer.bias.copy_from_slice(&params[offset..offset + b]);
            offset += b;
        }
        Ok(())
    }

    /// Forward pass. Returns the output together with the activation trace
    /// needed by [`Mlp::backward`].
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardTrace), NnError> {
        if x.len() != self.in_dim() {
            return Err(NnError::InputShape {
                expected: self.in_dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteParam);
        }
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        inputs.push(x.to_vec());
        let mut current = x.to_vec();
        for layer in &self.layers {
            let mut z = layer.weights.matvec(&current).expect("dims checked");
            for (zv, b) in z.iter_mut().zip(&layer.bias) {
                *zv += b;
            }
            current = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(z);
            inputs.push(current.clone());
        }
        let y = inputs.pop().expect("one entry per layer plus input");
        Ok((y, ForwardTrace { inputs, pre }))
    }

    /// Evaluates the network, discarding the trace.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Exact reverse-mode gradients of the scalar whose output-gradient is
    /// `grad_output`, with respect to every parameter and to the input.
    pub fn backward(&self, trace: &ForwardTrace, grad_output: &[f64]) -> Result<Backprop, NnError> {
        if trace.pre.len() != self.layers.len() || trace.inputs.len() != self.layers.len() {
            return Err(NnError::CacheMismatch);
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if trace.inputs[l].len() != layer.in_dim() || trace.pre[l].len() != layer.out_dim() {
                return Err(NnError::CacheMismatch);
            }
        }
        if grad_output.len() != self.out_dim() {
            return Err(NnError::InputShape {
                expected: self.out_dim(),
                got: grad_output.len(),
            });
        }

        let mut param_grads = vec![0.0; self.param_count()];
        // Offsets of each layer's block in the flat layout.
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for layer in &self.layers {
            offsets.push(acc);
            acc += layer.param_count();
        }

        let mut grad = grad_output.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let pre = &trace.pre[l];
            let input = &trace.inputs[l];
            // dL/dz = dL/da * act'(z)
            let gz: Vec<f64> = grad
                .iter()
                .zip(pre)
                .map(|(g, &z)| g * layer.activation.derivative(z))
                .collect();
            let (out_dim, in_dim) = (layer.out_dim(), layer.in_dim());
            let base = offsets[l];
            for r in 0..out_dim {
                let gw = &mut param_grads[base + r * in_dim..base + (r + 1) * in_dim];
                let gzr = gz[r];
                for (slot, xv) in gw.iter_mut().zip(input) {
                    *slot += gzr * xv;
                }
            }
            let bias_base = base + out_dim * in_dim;
            param_grads[bias_base..bias_base + out_dim].copy_from_slice(&gz);
            grad = layer.weights.matvec_transpose(&gz).expect("dims checked");
        }
        Ok(Backprop {
            param_grads,
            input_grad: grad,
        })
    }
}

/// ADAM optimizer state. Moment buffers mirror the flat parameter layout.
#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Defaults match the optimizer configuration used for training:
    /// lr 0.001, beta1 0.9, beta2 0.999, epsilon 1e-7.
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        AdamState {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    /// One bias-corrected ADAM update applied in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.first_moment.len() || grads.len() != self.first_moment.len() {
            return Err(NnError::LayoutMismatch {
                expected: self.first_moment.len(),
                got: if params.len() != self.first_moment.len() {
                    params.len()
                } else {
                    grads.len()
                },
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient);
        }
        self.step_count += 1;
        let bc1 = 1.0 - math::powi(self.beta1, self.step_count as i32);
        let bc2 = 1.0 - math::powi(self.beta2, self.step_count as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.first_moment[i] = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            self.second_moment[i] = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first_moment[i] / bc1;
            let v_hat = self.second_moment[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (math::sqrt(v_hat) + self.epsilon);
        }
        Ok(())
    }
}

/// Validation early-stopping controller: halt when the latest validation
/// loss exceeds `tolerance_factor` times the running minimum and the
/// minimum has not improved within the last `patience_steps` checks.
#[derive(Debug, Clone)]
pub struct EarlyStopState {
    validation_history: Vec<f64>,
    best_loss: f64,
    last_improvement: Option<usize>,
    pub tolerance_factor: f64,
    pub patience_steps: usize,
}

impl Default for EarlyStopState {
    fn default() -> Self {
        EarlyStopState::new(1.01, 3)
    }
}

impl EarlyStopState {
    pub fn new(tolerance_factor: f64, patience_steps: usize) -> Self {
        EarlyStopState {
            validation_history: Vec::new(),
            best_loss: f64::INFINITY,
            last_improvement: None,
            tolerance_factor,
            patience_steps,
        }
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn history(&self) -> &[f64] {
        &self.validation_history
    }

    /// Records a validation loss; returns `true` when training should halt.
    /// A step that sets a new best loss never halts.
    pub fn update(&mut self, new_val_loss: f64) -> bool {
        let index = self.validation_history.len();
        self.validation_history.push(new_val_loss);
        if new_val_loss < self.best_loss {
            self.best_loss = new_val_loss;
            self.last_improvement = Some(index);
            return false;
        }
        let stale = match self.last_improvement {
            Some(at) => index - at >= self.patience_steps,
            None => index + 1 >= self.patience_steps,
        };
        new_val_loss > self.tolerance_factor * self.best_loss && stale
    }
}

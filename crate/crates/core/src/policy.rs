//! Per-tile zoom policies: a small MLP mapping a grayscale observation to
//! one Bernoulli probability per tile, plus the action-sampling and
//! likelihood machinery policy-gradient training needs.
//!
//! The network is `input -> hidden layers (ReLU or tanh) -> sigmoid
//! outputs`. During
//! training the output probabilities are temperature-scaled toward 0.5
//! (`s' = alpha * s + (1 - alpha) * (1 - s)`) to keep exploration alive; the
//! scaled value is used both for sampling and inside the differentiated
//! log-likelihood, while greedy evaluation thresholds the raw probabilities
//! at 0.5. Probabilities are clamped away from {0, 1} before any logarithm.

use crate::error::{Error, Result};
use crate::math;
use crate::rng::RngStream;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Clamp bound keeping probabilities strictly inside (0, 1) for logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Stream domain tag for weight initialization.
const DOMAIN_INIT: u64 = 0x57;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// Zero-centered hidden activations. With nonnegative inputs (rasters)
    /// and nonnegative rectifier features, every channel has a positive
    /// mean, so any nonzero mean in the advantage signal drifts all outputs
    /// together; tanh removes that common-mode channel and leaves the
    /// covariance (signal) term.
    Tanh,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(name: &str) -> Option<Activation> {
        match name {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }

    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => math::tanh(z),
        }
    }

    /// Derivative expressed through the post-activation value `a = f(z)`
    /// (and the pre-activation `z` for the rectifier's gate).
    fn derivative(&self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z <= 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Training hyperparameters shared by both policy stages.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Temperature pulling sampling probabilities toward 0.5.
    pub alpha: f64,
    /// Per-object recall margin the fine tier must beat.
    pub beta: f64,
    /// Cost-reward weight component.
    pub sigma: f64,
    /// Cost-reward weight component.
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: 0.8,
            beta: 0.05,
            sigma: 0.25,
            lambda: 0.25,
            learning_rate: 1e-4,
            batch_size: 64,
            epochs: 200,
            seed: 7,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        for (name, v) in [("beta", self.beta), ("sigma", self.sigma), ("lambda", self.lambda)] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} {v} must be >= 0")));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    /// Per-slot zoom cost; the oracle zooms a tile only when its recall
    /// gain exceeds this.
    pub fn cost_threshold(&self, slots: usize) -> f64 {
        (self.sigma + self.lambda) / slots as f64
    }
}

/// Binary zoom decisions, one per tile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionVector {
    pub bits: Vec<bool>,
}

impl ActionVector {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn zoom_fraction(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.ones() as f64 / self.bits.len() as f64
        }
    }
}

/// The stock two-hidden-layer architecture for a policy with the given
/// observation and decision sizes.
pub fn default_layer_dims(input_dim: usize, outputs: usize) -> Vec<usize> {
    vec![input_dim, 128, 64, outputs]
}

/// Fully-connected policy network. Weight matrices are stored flat,
/// row-major, one row per output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    /// `[input, hidden..., outputs]`; outputs = number of decision slots.
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub activation: Activation,
}

impl PolicyModel {
    /// Seeded initialization: weights uniform in +-1/sqrt(fan_in), biases
    /// zero. Draw order is layer-major then index order within the layer.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::Config("a model needs at least input and output layers".into()));
        }
        if layer_dims.contains(&0) {
            return Err(Error::Config("layer dimensions must be positive".into()));
        }
        let mut rng = RngStream::derive(seed, &[DOMAIN_INIT]);
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for l in 0..layer_dims.len() - 1 {
            let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
            let bound = 1.0 / math::sqrt(fan_in as f64);
            weights.push((0..fan_in * fan_out).map(|_| rng.uniform(-bound, bound)).collect());
            biases.push(vec![0.0; fan_out]);
        }
        Ok(PolicyModel {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            activation: Activation::Relu,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated non-empty")
    }

    pub fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    /// Checks stored shapes against `layer_dims`.
    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 || self.layer_dims.contains(&0) {
            return Err(Error::Config("invalid layer dimensions".into()));
        }
        if self.weights.len() != self.n_layers() || self.biases.len() != self.n_layers() {
            return Err(Error::Config("layer count does not match dimensions".into()));
        }
        for l in 0..self.n_layers() {
            if self.weights[l].len() != self.layer_dims[l] * self.layer_dims[l + 1] {
                return Err(Error::Config(format!("weight matrix {l} has the wrong shape")));
            }
            if self.biases[l].len() != self.layer_dims[l + 1] {
                return Err(Error::Config(format!("bias vector {l} has the wrong shape")));
            }
        }
        Ok(())
    }

    /// Runs the network, keeping every intermediate needed by `backward`.
    pub fn forward(&self, input: &[f64]) -> Result<ForwardPass> {
        if input.len() != self.input_dim() {
            return Err(Error::Argument(format!(
                "input has {} values, model expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layer_dims.len());
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(self.n_layers());
        activations.push(input.to_vec());
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let prev = &activations[l];
            let w = &self.weights[l];
            let mut z = self.biases[l].clone();
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut acc = 0.0;
                for i in 0..n_in {
                    acc += row[i] * prev[i];
                }
                z[o] += acc;
            }
            let act: Vec<f64> = if l + 1 == self.n_layers() {
                z.iter().map(|v| math::sigmoid(*v)).collect()
            } else {
                z.iter().map(|v| self.activation.apply(*v)).collect()
            };
            zs.push(z);
            activations.push(act);
        }
        Ok(ForwardPass { activations, zs })
    }

    /// Gradient of `scale * log pi_alpha(action)` with respect to every
    /// parameter, where `pi_alpha` is the product-Bernoulli likelihood of
    /// the temperature-scaled output probabilities. Pass `alpha = 1.0` for
    /// an unscaled likelihood. The clamp applied before logarithms is part
    /// of the differentiated function (zero gradient outside its range).
    pub fn backward(
        &self,
        pass: &ForwardPass,
        action: &ActionVector,
        scale: f64,
        alpha: f64,
    ) -> Result<Gradients> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Argument(format!("alpha {alpha} outside (0, 1]")));
        }
        if pass.activations.len() != self.layer_dims.len()
            || pass
                .activations
                .iter()
                .zip(self.layer_dims.iter())
                .any(|(a, d)| a.len() != *d)
        {
            return Err(Error::Internal(
                "forward cache does not match this model's shape".into(),
            ));
        }
        if action.len() != self.output_dim() {
            return Err(Error::Argument(format!(
                "action has {} bits, model has {} outputs",
                action.len(),
                self.output_dim()
            )));
        }

        let mut grads = Gradients::zeros_like(self);
        let probs = pass.probs();
        // d log pi / d s_scaled, gated by the clamp, then chain through the
        // affine temperature map (slope 2*alpha - 1) and the sigmoid.
        let mut delta: Vec<f64> = Vec::with_capacity(probs.len());
        for (i, &s_raw) in probs.iter().enumerate() {
            let s_scaled = alpha * s_raw + (1.0 - alpha) * (1.0 - s_raw);
            let inside = s_scaled > PROB_CLAMP && s_scaled < 1.0 - PROB_CLAMP;
            let g = if !inside {
                0.0
            } else if action.bits[i] {
                1.0 / s_scaled
            } else {
                -1.0 / (1.0 - s_scaled)
            };
            let dsig = s_raw * (1.0 - s_raw);
            delta.push(scale * g * (2.0 * alpha - 1.0) * dsig);
        }

        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let prev = &pass.activations[l];
            for (o, &d) in delta.iter().enumerate() {
                grads.biases[l][o] += d;
                let row = &mut grads.weights[l][o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    row[i] += d * prev[i];
                }
            }
            if l > 0 {
                let w = &self.weights[l];
                let mut prev_delta = vec![0.0; n_in];
                for o in 0..n_out {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        prev_delta[i] += row[i] * delta[o];
                    }
                }
                // Nonlinearity gate from the layer below.
                for (i, pd) in prev_delta.iter_mut().enumerate() {
                    *pd *= self
                        .activation
                        .derivative(pass.zs[l - 1][i], pass.activations[l][i]);
                }
                delta = prev_delta;
            }
        }
        Ok(grads)
    }
}

/// Intermediates of one forward run: layer inputs, pre-activations, and the
/// raw sigmoid outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    activations: Vec<Vec<f64>>,
    zs: Vec<Vec<f64>>,
}

impl ForwardPass {
    /// Raw output probabilities (no temperature applied).
    pub fn probs(&self) -> &[f64] {
        self.activations.last().expect("non-empty by construction")
    }
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &PolicyModel) -> Self {
        Gradients {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(other.weights.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(other.biases.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for w in &mut self.weights {
            for x in w {
                *x *= k;
            }
        }
        for b in &mut self.biases {
            for x in b {
                *x *= k;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        let mut acc = 0.0;
        for w in &self.weights {
            for x in w {
                acc += x * x;
            }
        }
        for b in &self.biases {
            for x in b {
                acc += x * x;
            }
        }
        math::sqrt(acc)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.biases.iter()).all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Pulls probabilities toward 0.5: `alpha * s + (1 - alpha) * (1 - s)`.
/// `alpha = 1` is the identity; smaller alpha means more exploration.
pub fn temperature_scale(s: &[f64], alpha: f64) -> Vec<f64> {
    s.iter().map(|&v| alpha * v + (1.0 - alpha) * (1.0 - v)).collect()
}

/// Independent Bernoulli draw per slot, in slot order.
pub fn sample_actions(s: &[f64], rng: &mut RngStream) -> ActionVector {
    ActionVector { bits: s.iter().map(|&p| rng.bernoulli(p)).collect() }
}

/// Deterministic thresholding: zoom where s exceeds 0.5 strictly.
pub fn greedy_actions(s: &[f64]) -> ActionVector {
    ActionVector { bits: s.iter().map(|&p| p > 0.5).collect() }
}

/// Log-likelihood of a joint action under independent Bernoulli slots,
/// with probabilities clamped away from {0, 1}.
pub fn log_likelihood(s: &[f64], action: &ActionVector) -> Result<f64> {
    if s.len() != action.len() {
        return Err(Error::Argument(format!(
            "{} probabilities vs {} action bits",
            s.len(),
            action.len()
        )));
    }
    let mut ll = 0.0;
    for (p, &bit) in s.iter().zip(action.bits.iter()) {
        let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        ll += math::ln(if bit { p } else { 1.0 - p });
    }
    Ok(ll)
}

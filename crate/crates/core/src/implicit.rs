//! Implicit ranking function: a small fully connected network over
//! standardized `(ln ectr, ln bid)` with three hidden layers and a linear
//! score head, trained on mini-batch SAUC with AdaGrad.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AuctionRecord, Dataset};
use crate::explicit::{sauc_score_gradient, shuffled_batches, FitTrace};
use crate::metrics::{auc_r, sauc, MetricError};
use crate::{score_records, RankingFunction};

#[derive(Debug, Error)]
pub enum ImplicitError {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Softplus,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Softplus => {
                if z > 30.0 {
                    z
                } else {
                    z.exp().ln_1p()
                }
            }
            Activation::Linear => z,
        }
    }

    /// Derivative given the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Softplus => crate::metrics::sigmoid(z),
            Activation::Linear => 1.0,
        }
    }
}

/// Affine input standardization `(f − mean) / std` of `(ln ectr, ln bid)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl Standardization {
    pub fn identity() -> Self {
        Standardization {
            mean: [0.0; 2],
            std: [1.0; 2],
        }
    }

    /// Fits mean and standard deviation of the log features of `ds`.
    pub fn fit(ds: &Dataset) -> Self {
        let n = ds.len() as f64;
        let mut mean = [0.0; 2];
        for r in ds.records() {
            let f = raw_features(r);
            mean[0] += f[0];
            mean[1] += f[1];
        }
        mean[0] /= n;
        mean[1] /= n;
        let mut var = [0.0; 2];
        for r in ds.records() {
            let f = raw_features(r);
            var[0] += (f[0] - mean[0]).powi(2);
            var[1] += (f[1] - mean[1]).powi(2);
        }
        let sd = |v: f64| {
            let s = (v / n).sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        };
        Standardization {
            mean,
            std: [sd(var[0]), sd(var[1])],
        }
    }

    fn apply(&self, r: &AuctionRecord) -> [f64; 2] {
        let f = raw_features(r);
        [(f[0] - self.mean[0]) / self.std[0], (f[1] - self.mean[1]) / self.std[1]]
    }
}

fn raw_features(r: &AuctionRecord) -> [f64; 2] {
    [r.ectr.ln(), r.bid.ln()]
}

/// Weights (row-major, `out × in`) and biases of every layer. The same shape
/// holds parameters, gradients and AdaGrad accumulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl LayerParams {
    pub fn zeros(dims: &[usize]) -> Self {
        LayerParams {
            weights: dims.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect(),
            biases: dims.windows(2).map(|w| vec![0.0; w[1]]).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().flatten().chain(self.biases.iter().flatten())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .flatten()
            .chain(self.biases.iter_mut().flatten())
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn l2_norm(&self) -> f64 {
        self.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn same_shape(&self, other: &LayerParams) -> bool {
        self.weights.len() == other.weights.len()
            && self.biases.len() == other.biases.len()
            && self.weights.iter().zip(&other.weights).all(|(a, b)| a.len() == b.len())
            && self.biases.iter().zip(&other.biases).all(|(a, b)| a.len() == b.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpRanker {
    /// `[2, h1, h2, h3, 1]`.
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub standardization: Standardization,
    pub params: LayerParams,
    pub adagrad_accum: LayerParams,
}

impl MlpRanker {
    /// All-zero network with the given hidden widths.
    pub fn zeros(
        hidden: [usize; 3],
        activation: Activation,
        standardization: Standardization,
    ) -> Result<Self, ImplicitError> {
        if hidden.contains(&0) {
            return Err(ImplicitError::InvalidNetwork("hidden widths must be >= 1".into()));
        }
        let dims = vec![2, hidden[0], hidden[1], hidden[2], 1];
        Ok(MlpRanker {
            params: LayerParams::zeros(&dims),
            adagrad_accum: LayerParams::zeros(&dims),
            layer_dims: dims,
            activation,
            standardization,
        })
    }

    /// Weights drawn from `U(−1/√fan_in, 1/√fan_in)`, biases zero.
    pub fn init(
        hidden: [usize; 3],
        activation: Activation,
        standardization: Standardization,
        seed: u64,
    ) -> Result<Self, ImplicitError> {
        let mut net = Self::zeros(hidden, activation, standardization)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (l, w) in net.params.weights.iter_mut().enumerate() {
            let bound = 1.0 / (net.layer_dims[l] as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    /// Width-1 linear network computing `β·ln(ectr) + ln(bid)` exactly.
    pub fn from_explicit(beta: f64, standardization: Standardization) -> Self {
        let mut net = Self::zeros([1, 1, 1], Activation::Linear, standardization).expect("unit widths are valid");
        let s = standardization;
        net.params.weights[0] = vec![beta * s.std[0], s.std[1]];
        net.params.biases[0] = vec![beta * s.mean[0] + s.mean[1]];
        for l in 1..4 {
            net.params.weights[l] = vec![1.0];
        }
        net
    }

    pub fn validate(&self) -> Result<(), ImplicitError> {
        let d = &self.layer_dims;
        if d.len() != 5 || d[0] != 2 || d[4] != 1 || d.contains(&0) {
            return Err(ImplicitError::InvalidNetwork(format!("bad layer dims {d:?}")));
        }
        let expect = LayerParams::zeros(d);
        if !self.params.same_shape(&expect) || !self.adagrad_accum.same_shape(&expect) {
            return Err(ImplicitError::InvalidNetwork(
                "parameter shapes do not match layer_dims".into(),
            ));
        }
        if self.adagrad_accum.iter().any(|a| *a < 0.0) {
            return Err(ImplicitError::InvalidNetwork("negative AdaGrad accumulator".into()));
        }
        Ok(())
    }

    fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    /// Per-layer pre-activations and outputs; `outputs[0]` is the input.
    fn forward_cached(&self, rec: &AuctionRecord) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut outputs = vec![self.standardization.apply(rec).to_vec()];
        let mut pre = Vec::with_capacity(self.n_layers());
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let w = &self.params.weights[l];
            let b = &self.params.biases[l];
            let h = &outputs[l];
            let z: Vec<f64> = (0..n_out)
                .map(|o| b[o] + (0..n_in).map(|i| w[o * n_in + i] * h[i]).sum::<f64>())
                .collect();
            let last = l + 1 == self.n_layers();
            let a = if last {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(z);
            outputs.push(a);
        }
        (pre, outputs)
    }

    /// Adds `upstream · ∂score/∂params` into `grad`.
    fn backprop_into(&self, rec: &AuctionRecord, upstream: f64, grad: &mut LayerParams) {
        let (pre, outputs) = self.forward_cached(rec);
        let mut delta = vec![upstream];
        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let h = &outputs[l];
            let gw = &mut grad.weights[l];
            for o in 0..n_out {
                grad.biases[l][o] += delta[o];
                for i in 0..n_in {
                    gw[o * n_in + i] += delta[o] * h[i];
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params.weights[l];
            delta = (0..n_in)
                .map(|i| {
                    let back: f64 = (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum();
                    back * self.activation.derivative(pre[l - 1][i], outputs[l][i])
                })
                .collect();
        }
    }
}

impl RankingFunction for MlpRanker {
    fn score(&self, rec: &AuctionRecord) -> f64 {
        forward(self, rec)
    }
}

pub fn forward(net: &MlpRanker, rec: &AuctionRecord) -> f64 {
    let (_, outputs) = net.forward_cached(rec);
    outputs[net.n_layers()][0]
}

/// Reverse-mode gradient of −SAUC of `batch` (batch-local `Z`).
pub fn backward(net: &MlpRanker, batch: &[AuctionRecord], temperature: f64) -> Result<LayerParams, ImplicitError> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(MetricError::InvalidTemperature(temperature).into());
    }
    let mut grad = LayerParams::zeros(&net.layer_dims);
    if batch.len() < 2 {
        return Ok(grad);
    }
    let scores: Vec<f64> = batch.iter().map(|r| forward(net, r)).collect();
    let labels: Vec<f64> = batch.iter().map(|r| r.y).collect();
    let upstream = sauc_score_gradient(&scores, &labels, temperature);
    for (r, u) in batch.iter().zip(upstream) {
        if u != 0.0 {
            net.backprop_into(r, -u, &mut grad);
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(ImplicitError::NonFiniteGradient);
    }
    Ok(grad)
}

/// `accum += g²; param −= lr · g / (√accum + ε)`, element-wise.
pub fn adagrad_step(net: &mut MlpRanker, grad: &LayerParams, learning_rate: f64, epsilon: f64) {
    for ((p, a), g) in net.params.iter_mut().zip(net.adagrad_accum.iter_mut()).zip(grad.iter()) {
        if *g == 0.0 {
            continue;
        }
        *a += g * g;
        *p -= learning_rate * g / (a.sqrt() + epsilon);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImplicitConfig {
    pub hidden: [usize; 3],
    pub activation: Activation,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub temperature: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for ImplicitConfig {
    fn default() -> Self {
        ImplicitConfig {
            hidden: [16, 16, 8],
            activation: Activation::Tanh,
            learning_rate: 0.05,
            epsilon: 1e-8,
            temperature: 0.03,
            batch_size: 100,
            max_epochs: 30,
            rel_tol: 1e-6,
            seed: 0,
        }
    }
}

fn epoch_objectives(
    ds: &Dataset,
    net: &MlpRanker,
    epoch: usize,
    temperature: f64,
    trace: &mut FitTrace,
) -> Result<f64, ImplicitError> {
    let scored = score_records(ds, net);
    if scored.iter().any(|s| !s.score.is_finite()) {
        return Err(ImplicitError::Diverged { epoch });
    }
    let s = sauc(&scored, temperature)?;
    let a = auc_r(&scored)?;
    let norm = net.params.l2_norm();
    trace.push(epoch, norm, &s);
    trace.push(epoch, norm, &a);
    Ok(s.value)
}

/// Trains a freshly initialized network on `ds`. Batches come from one
/// seeded shuffle and are revisited every epoch; an epoch that improves the
/// full-dataset SAUC by less than `rel_tol · |SAUC|` is rolled back and ends
/// training.
pub fn fit_implicit(ds: &Dataset, config: &ImplicitConfig) -> Result<(MlpRanker, FitTrace), ImplicitError> {
    if config.batch_size < 2 {
        return Err(ImplicitError::InvalidNetwork("batch_size must be >= 2".into()));
    }
    let mut net = MlpRanker::init(config.hidden, config.activation, Standardization::fit(ds), config.seed)?;
    let mut trace = FitTrace::default();
    let mut best = epoch_objectives(ds, &net, 0, config.temperature, &mut trace)?;
    let batches = shuffled_batches(ds.len(), config.batch_size, config.seed.wrapping_add(1));
    let records = ds.records();
    let mut buf: Vec<AuctionRecord> = Vec::with_capacity(config.batch_size);
    for epoch in 1..=config.max_epochs {
        let before = net.clone();
        for b in &batches {
            buf.clear();
            buf.extend(b.iter().map(|&i| records[i].clone()));
            let g = backward(&net, &buf, config.temperature)?;
            adagrad_step(&mut net, &g, config.learning_rate, config.epsilon);
        }
        let value = epoch_objectives(ds, &net, epoch, config.temperature, &mut trace)?;
        if value - best < config.rel_tol * best.abs().max(1e-12) {
            net = before;
            break;
        }
        best = value;
    }
    Ok((net, trace))
}

//! Dense feed-forward regressor with a single linear output unit.
//!
//! Inputs should be standardized beforehand. The target is standardized
//! internally with its weighted mean and standard deviation, and
//! predictions are mapped back to target units.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_xyw, Predictor};
use crate::error::{Error, Result};
use crate::frame::FeatureMatrix;

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    LeakyRelu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match (self, z > 0.0) {
            (_, true) => 1.0,
            (Activation::Relu, false) => 0.0,
            (Activation::LeakyRelu, false) => LEAKY_SLOPE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    SgdMomentum,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpParams {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden_layers: vec![10, 10],
            activation: Activation::Relu,
            epochs: 50,
            batch_size: 32,
            optimizer: Optimizer::Adam,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.is_empty() {
            return Err(Error::InvalidParam("at least one hidden layer is required".into()));
        }
        if self.hidden_layers.iter().any(|&w| w < 1) {
            return Err(Error::InvalidParam("hidden layer widths must be >= 1".into()));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidParam("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidParam("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParam("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out x n_in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<DenseLayer>,
    pub activation: Activation,
    pub y_mean: f64,
    pub y_scale: f64,
}

impl Network {
    /// Glorot-uniform weights, zero biases, identity target scaling.
    pub fn init(n_in: usize, hidden: &[usize], activation: Activation, rng: &mut impl Rng) -> Self {
        let mut sizes = vec![n_in];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                DenseLayer {
                    n_in: fan_in,
                    n_out: fan_out,
                    weights: (0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)).collect(),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Self {
            layers,
            activation,
            y_mean: 0.0,
            y_scale: 1.0,
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All weights then biases, layer by layer.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[k..k + nw]);
            k += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[k..k + nb]);
            k += nb;
        }
    }

    /// Raw network output (standardized target units).
    fn forward_raw(&self, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let mut z = l.bias.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &l.weights[o * l.n_in..(o + 1) * l.n_in];
                *zo += row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>();
            }
            a = if li == last { z } else { z.into_iter().map(|v| self.activation.apply(v)).collect() };
        }
        a[0]
    }

    /// Weighted mean squared error `sum w (f(x) - y)^2 / sum w` over the given
    /// rows (targets in network units) and its gradient in `params()` order.
    pub fn loss_and_gradient(&self, rows: &[&[f64]], y: &[f64], w: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.n_params()];
        let sw: f64 = w.iter().sum();
        let mut loss = 0.0;
        let nl = self.layers.len();
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |acc, l| {
                let o = *acc;
                *acc += l.weights.len() + l.bias.len();
                Some(o)
            })
            .collect();
        for ((x, &t), &wi) in rows.iter().zip(y).zip(w) {
            // Forward, keeping pre-activations and activations.
            let mut acts: Vec<Vec<f64>> = vec![x.to_vec()];
            let mut pres: Vec<Vec<f64>> = Vec::with_capacity(nl);
            for (li, l) in self.layers.iter().enumerate() {
                let a = &acts[li];
                let z: Vec<f64> = (0..l.n_out)
                    .map(|o| {
                        l.bias[o]
                            + l.weights[o * l.n_in..(o + 1) * l.n_in]
                                .iter()
                                .zip(a)
                                .map(|(w, v)| w * v)
                                .sum::<f64>()
                    })
                    .collect();
                let next = if li == nl - 1 { z.clone() } else { z.iter().map(|&v| self.activation.apply(v)).collect() };
                pres.push(z);
                acts.push(next);
            }
            let out = acts[nl][0];
            let e = out - t;
            loss += wi * e * e;
            // Backward.
            let mut delta = vec![2.0 * wi * e / sw];
            for li in (0..nl).rev() {
                let l = &self.layers[li];
                let a = &acts[li];
                let off = offsets[li];
                for o in 0..l.n_out {
                    for i in 0..l.n_in {
                        grad[off + o * l.n_in + i] += delta[o] * a[i];
                    }
                    grad[off + l.weights.len() + o] += delta[o];
                }
                if li > 0 {
                    let zprev = &pres[li - 1];
                    delta = (0..l.n_in)
                        .map(|i| {
                            let back: f64 = (0..l.n_out).map(|o| l.weights[o * l.n_in + i] * delta[o]).sum();
                            back * self.activation.derivative(zprev[i])
                        })
                        .collect();
                }
            }
        }
        (loss / sw, grad)
    }
}

impl Predictor for Network {
    fn n_features(&self) -> usize {
        self.layers[0].n_in
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        self.y_mean + self.y_scale * self.forward_raw(x)
    }
}

enum OptState {
    Momentum { velocity: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

const MOMENTUM: f64 = 0.9;
const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl OptState {
    fn new(kind: Optimizer, n: usize) -> Self {
        match kind {
            Optimizer::SgdMomentum => OptState::Momentum { velocity: vec![0.0; n] },
            Optimizer::Adam => OptState::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            OptState::Momentum { velocity } => {
                for ((p, g), v) in params.iter_mut().zip(grad).zip(velocity.iter_mut()) {
                    *v = MOMENTUM * *v - lr * g;
                    *p += *v;
                }
            }
            OptState::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - ADAM_B1.powi(*t);
                let c2 = 1.0 - ADAM_B2.powi(*t);
                for i in 0..params.len() {
                    m[i] = ADAM_B1 * m[i] + (1.0 - ADAM_B1) * grad[i];
                    v[i] = ADAM_B2 * v[i] + (1.0 - ADAM_B2) * grad[i] * grad[i];
                    params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Mini-batch training of weighted squared error. Rows are reshuffled every
/// epoch from a seeded RNG; training runs single-threaded.
pub fn fit_mlp(x: &FeatureMatrix, y: &[f64], w: &[f64], params: &MlpParams) -> Result<Network> {
    check_xyw(x, y, w)?;
    params.validate()?;
    if x.as_slice().iter().chain(y).chain(w).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam("mlp inputs must be finite".into()));
    }
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return Err(Error::InvalidParam("weights sum to zero".into()));
    }
    let y_mean = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let var = y.iter().zip(w).map(|(a, b)| b * (a - y_mean) * (a - y_mean)).sum::<f64>() / sw;
    let y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    let target: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut net = Network::init(x.n_cols(), &params.hidden_layers, params.activation, &mut rng);
    let mut flat = net.params();
    let mut opt = OptState::new(params.optimizer, flat.len());
    let mut order: Vec<usize> = (0..n).collect();
    let bs = params.batch_size.min(n);
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(bs) {
            let rows: Vec<&[f64]> = batch.iter().map(|&i| x.row(i)).collect();
            let yb: Vec<f64> = batch.iter().map(|&i| target[i]).collect();
            let wb: Vec<f64> = batch.iter().map(|&i| w[i]).collect();
            if wb.iter().sum::<f64>() <= 0.0 {
                continue;
            }
            let (loss, grad) = net.loss_and_gradient(&rows, &yb, &wb);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch: epoch + 1 });
            }
            epoch_loss += loss;
            opt.step(&mut flat, &grad, params.learning_rate);
            net.set_params(&flat);
        }
        if !epoch_loss.is_finite() || flat.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch: epoch + 1 });
        }
    }
    net.y_mean = y_mean;
    net.y_scale = y_scale;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_hidden_layers_rejected() {
        let p = MlpParams {
            hidden_layers: vec![],
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn divergence_names_epoch() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 10.0]).collect();
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let x = FeatureMatrix::anonymous(1, &rows).unwrap();
        let p = MlpParams {
            hidden_layers: vec![8],
            optimizer: Optimizer::SgdMomentum,
            learning_rate: 1e6,
            activation: Activation::LeakyRelu,
            ..Default::default()
        };
        match fit_mlp(&x, &y, &[1.0; 20], &p) {
            Err(Error::Divergence { epoch }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{GrowInput, Grower, RegressionTree, SortedColumns, TreeParams};
use super::{check_xyw, stream_seed, Predictor};
use crate::error::{Error, Result};
use crate::frame::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GbtLoss {
    SquaredError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub tree: TreeParams,
    pub l2_leaf_regularization: f64,
    pub loss: GbtLoss,
    /// Only used when `tree.feature_subsample < 1`.
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_rounds: 200,
            learning_rate: 0.1,
            tree: TreeParams {
                max_depth: 4,
                ..TreeParams::default()
            },
            l2_leaf_regularization: 1.0,
            loss: GbtLoss::SquaredError,
            seed: 0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        self.tree.validate()?;
        if self.n_rounds < 1 {
            return Err(Error::InvalidParam("n_rounds must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidParam("learning_rate must lie in (0, 1]".into()));
        }
        if !(self.l2_leaf_regularization >= 0.0) {
            return Err(Error::InvalidParam("l2_leaf_regularization must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    /// Weighted training MSE after stage 0 and after each round.
    pub train_loss: Vec<f64>,
}

impl Predictor for BoostedTrees {
    fn n_features(&self) -> usize {
        self.trees.first().map_or(0, |t| t.n_features)
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>()
    }
}

fn weighted_mse(y: &[f64], f: &[f64], w: &[f64], sw: f64) -> f64 {
    y.iter().zip(f).zip(w).map(|((a, b), wi)| wi * (a - b) * (a - b)).sum::<f64>() / sw
}

/// Gradient boosting on squared error: stage 0 is the weighted mean, each
/// round fits a tree to the current residuals with leaf values
/// `sum(w r) / (sum(w) + l2)` and adds it scaled by the learning rate.
pub fn fit_gbt(x: &FeatureMatrix, y: &[f64], w: &[f64], params: &GbtParams) -> Result<BoostedTrees> {
    check_xyw(x, y, w)?;
    params.validate()?;
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return Err(Error::InvalidParam("weights sum to zero".into()));
    }
    let base_score = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let cols = SortedColumns::new(x);
    let count = vec![1u32; y.len()];
    let mut pred = vec![base_score; y.len()];
    let mut residual = vec![0.0; y.len()];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut train_loss = vec![weighted_mse(y, &pred, w, sw)];
    for round in 0..params.n_rounds {
        for i in 0..y.len() {
            residual[i] = y[i] - pred[i];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(params.seed, round as u64));
        let input = GrowInput {
            target: &residual,
            weight: w,
            count: &count,
        };
        let tree = Grower::new(&cols, input, &params.tree, params.l2_leaf_regularization, &mut rng).grow();
        for (i, row) in x.rows().enumerate() {
            pred[i] += params.learning_rate * tree.predict_row(row);
        }
        train_loss.push(weighted_mse(y, &pred, w, sw));
        trees.push(tree);
    }
    Ok(BoostedTrees {
        base_score,
        learning_rate: params.learning_rate,
        trees,
        train_loss,
    })
}

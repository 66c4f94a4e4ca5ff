use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{GrowInput, Grower, RegressionTree, SortedColumns, TreeParams};
use super::{check_xyw, stream_seed, Predictor};
use crate::error::{Error, Result};
use crate::frame::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    /// Weighted bootstrap per tree; disabling it fits every tree on all rows.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            tree: TreeParams {
                max_depth: 32,
                min_samples_leaf: 1,
                min_weighted_samples_split: 0.0,
                feature_subsample: 1.0 / 3.0,
            },
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<RegressionTree>,
}

impl Predictor for Forest {
    fn n_features(&self) -> usize {
        self.trees.first().map_or(0, |t| t.n_features)
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Random forest of CART trees.
///
/// Each tree draws `n` rows with replacement with probability proportional
/// to the sample weights, and the drawn multiplicities times the weights
/// also enter the split criterion. Tree `k` uses its own RNG stream derived
/// from `(seed, k)`, so the result does not depend on evaluation order.
pub fn fit_random_forest(x: &FeatureMatrix, y: &[f64], w: &[f64], params: &ForestParams) -> Result<Forest> {
    check_xyw(x, y, w)?;
    params.tree.validate()?;
    if params.n_trees < 1 {
        return Err(Error::InvalidParam("n_trees must be >= 1".into()));
    }
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let cols = SortedColumns::new(x);
    let sampler = if params.bootstrap {
        Some(WeightedIndex::new(w).map_err(|e| Error::InvalidParam(format!("bootstrap weights: {e}")))?)
    } else {
        None
    };
    let mut trees = Vec::with_capacity(params.n_trees);
    for k in 0..params.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(params.seed, k as u64));
        let mut count = vec![0u32; n];
        match &sampler {
            Some(s) => {
                for _ in 0..n {
                    count[s.sample(&mut rng)] += 1;
                }
            }
            None => count.iter_mut().for_each(|c| *c = 1),
        }
        let eff: Vec<f64> = w.iter().zip(&count).map(|(wi, c)| wi * *c as f64).collect();
        let input = GrowInput {
            target: y,
            weight: &eff,
            count: &count,
        };
        trees.push(Grower::new(&cols, input, &params.tree, 0.0, &mut rng).grow());
    }
    Ok(Forest { trees })
}

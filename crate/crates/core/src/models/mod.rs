//! Weighted regressors behind one fit/predict contract.

mod forest;
mod gbt;
mod grid;
mod linear;
mod mlp;
mod tree;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FeatureMatrix;

pub use forest::{fit_random_forest, Forest, ForestParams};
pub use gbt::{fit_gbt, BoostedTrees, GbtLoss, GbtParams};
pub use grid::{grid_search, gbt_grid, mlp_grid, GridCell, GridResult};
pub use linear::{fit_linear, LinearModel, RIDGE_JITTER};
pub use mlp::{fit_mlp, Activation, DenseLayer, MlpParams, Network, Optimizer, LEAKY_SLOPE};
pub use tree::{fit_tree, RegressionTree, TreeNode, TreeParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Anything that maps a feature row to a prediction.
pub trait Predictor {
    fn n_features(&self) -> usize;

    fn predict_row(&self, x: &[f64]) -> f64;

    /// Predictions for a row-major block of rows.
    fn predict_block(&self, rows: &[f64]) -> Vec<f64> {
        let p = self.n_features();
        if p == 0 {
            return Vec::new();
        }
        rows.chunks(p).map(|r| self.predict_row(r)).collect()
    }
}

impl<F: Fn(&[f64]) -> f64> Predictor for (usize, F) {
    fn n_features(&self) -> usize {
        self.0
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        (self.1)(x)
    }
}

pub(crate) fn check_xyw(x: &FeatureMatrix, y: &[f64], w: &[f64]) -> Result<()> {
    if x.n_rows() != y.len() || y.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows, y {} values, w {} weights",
            x.n_rows(),
            y.len(),
            w.len()
        )));
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidParam("weights must be finite and nonnegative".into()));
    }
    if x.as_slice().iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam("features and target must be finite (impute first)".into()));
    }
    Ok(())
}

/// SplitMix64 of `(seed, stream)`: independent RNG seeds per tree, round,
/// fold or treatment.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Tree,
    Forest,
    Gbt,
    Mlp,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Tree => "tree",
            ModelKind::Forest => "forest",
            ModelKind::Gbt => "gbt",
            ModelKind::Mlp => "mlp",
        }
    }
}

/// A model kind plus its hyperparameters; what `fit` consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Linear,
    Tree {
        #[serde(default)]
        params: TreeParams,
        #[serde(default)]
        seed: u64,
    },
    Forest {
        #[serde(default)]
        params: ForestParams,
    },
    Gbt {
        #[serde(default)]
        params: GbtParams,
    },
    Mlp {
        #[serde(default)]
        params: MlpParams,
    },
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Linear => ModelKind::Linear,
            ModelSpec::Tree { .. } => ModelKind::Tree,
            ModelSpec::Forest { .. } => ModelKind::Forest,
            ModelSpec::Gbt { .. } => ModelKind::Gbt,
            ModelSpec::Mlp { .. } => ModelKind::Mlp,
        }
    }

    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Linear => ModelSpec::Linear,
            ModelKind::Tree => ModelSpec::Tree {
                params: TreeParams::default(),
                seed: 0,
            },
            ModelKind::Forest => ModelSpec::Forest {
                params: ForestParams::default(),
            },
            ModelKind::Gbt => ModelSpec::Gbt {
                params: GbtParams::default(),
            },
            ModelKind::Mlp => ModelSpec::Mlp {
                params: MlpParams::default(),
            },
        }
    }

    /// Same spec with every RNG seed replaced by `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut s = self.clone();
        match &mut s {
            ModelSpec::Linear => {}
            ModelSpec::Tree { seed: t, .. } => *t = seed,
            ModelSpec::Forest { params } => params.seed = seed,
            ModelSpec::Gbt { params } => params.seed = seed,
            ModelSpec::Mlp { params } => params.seed = seed,
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum Fitted {
    Linear(LinearModel),
    Tree(RegressionTree),
    Forest(Forest),
    Gbt(BoostedTrees),
    Mlp(Network),
}

/// A fitted model with its training feature list and config snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    #[serde(flatten)]
    pub fitted: Fitted,
    pub version: u32,
    pub feature_names: Vec<String>,
    pub spec: ModelSpec,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    pub fn predictor(&self) -> &dyn Predictor {
        match &self.fitted {
            Fitted::Linear(m) => m,
            Fitted::Tree(m) => m,
            Fitted::Forest(m) => m,
            Fitted::Gbt(m) => m,
            Fitted::Mlp(m) => m,
        }
    }

    fn check_features(&self, names: &[String]) -> Result<()> {
        if names == self.feature_names.as_slice() {
            return Ok(());
        }
        let mut offending: Vec<String> = names
            .iter()
            .filter(|n| !self.feature_names.contains(n))
            .cloned()
            .collect();
        offending.extend(self.feature_names.iter().filter(|n| !names.contains(n)).cloned());
        if offending.is_empty() {
            // Same set, different order.
            offending = names
                .iter()
                .zip(&self.feature_names)
                .filter(|(a, b)| a != b)
                .map(|(a, _)| a.clone())
                .collect();
        }
        Err(Error::FeatureMismatch(offending))
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_features(x.names())?;
        let p = self.predictor();
        let out: Vec<f64> = x.rows().map(|r| p.predict_row(r)).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("model produced non-finite predictions".into()));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(text)?;
        if m.version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported model format version {}", m.version)));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Fits the model described by `spec` on weighted rows.
pub fn fit(spec: &ModelSpec, x: &FeatureMatrix, y: &[f64], w: &[f64]) -> Result<TrainedModel> {
    let fitted = match spec {
        ModelSpec::Linear => Fitted::Linear(fit_linear(x, y, w)?),
        ModelSpec::Tree { params, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Fitted::Tree(fit_tree(x, y, w, params, &mut rng)?)
        }
        ModelSpec::Forest { params } => Fitted::Forest(fit_random_forest(x, y, w, params)?),
        ModelSpec::Gbt { params } => Fitted::Gbt(fit_gbt(x, y, w, params)?),
        ModelSpec::Mlp { params } => Fitted::Mlp(fit_mlp(x, y, w, params)?),
    };
    Ok(TrainedModel {
        fitted,
        version: MODEL_FORMAT_VERSION,
        feature_names: x.names().to_vec(),
        spec: spec.clone(),
    })
}

pub fn predict(model: &TrainedModel, x: &FeatureMatrix) -> Result<Vec<f64>> {
    model.predict(x)
}

/// Total split gain per feature across all trees, normalized to sum to 1.
/// A model without any split scores every feature 0.
pub fn impurity_importance(model: &TrainedModel) -> Result<Vec<f64>> {
    let trees: &[RegressionTree] = match &model.fitted {
        Fitted::Forest(f) => &f.trees,
        Fitted::Gbt(g) => &g.trees,
        Fitted::Tree(t) => std::slice::from_ref(t),
        Fitted::Linear(_) => return Err(Error::Unsupported("linear")),
        Fitted::Mlp(_) => return Err(Error::Unsupported("mlp")),
    };
    let mut acc = vec![0.0; model.feature_names.len()];
    for t in trees {
        t.accumulate_gains(&mut acc);
    }
    let total: f64 = acc.iter().sum();
    if total > 0.0 {
        acc.iter_mut().for_each(|v| *v /= total);
    }
    Ok(acc)
}

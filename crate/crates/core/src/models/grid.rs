use serde::{Deserialize, Serialize};

use super::{fit, Activation, GbtParams, MlpParams, ModelSpec, Optimizer, TrainedModel};
use crate::dataset::SplitPlan;
use crate::error::{Error, Result};
use crate::frame::FeatureMatrix;
use crate::metrics::evaluate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub spec: ModelSpec,
    pub valid_r2: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: TrainedModel,
    pub best_index: usize,
    pub table: Vec<GridCell>,
}

/// Fits every grid point on the train rows and keeps the one with the
/// highest validation R²; the earliest cell wins ties. Failing cells are
/// recorded in the table and skipped.
pub fn grid_search(
    grid: &[ModelSpec],
    x: &FeatureMatrix,
    y: &[f64],
    w: &[f64],
    split: &SplitPlan,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::InvalidParam("empty parameter grid".into()));
    }
    let xt = x.select_rows(&split.train);
    let yt: Vec<f64> = split.train.iter().map(|&i| y[i]).collect();
    let wt: Vec<f64> = split.train.iter().map(|&i| w[i]).collect();
    let xv = x.select_rows(&split.valid);
    let yv: Vec<f64> = split.valid.iter().map(|&i| y[i]).collect();

    let mut table = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64, TrainedModel)> = None;
    for (k, spec) in grid.iter().enumerate() {
        let scored = fit(spec, &xt, &yt, &wt).and_then(|m| {
            let pred = m.predict(&xv)?;
            let r2 = evaluate(&yv, &pred, None)?.r2;
            Ok((m, r2))
        });
        match scored {
            Ok((m, r2)) => {
                if let Some(score) = r2 {
                    if best.as_ref().is_none_or(|(_, b, _)| score > *b) {
                        best = Some((k, score, m));
                    }
                }
                table.push(GridCell {
                    spec: spec.clone(),
                    valid_r2: r2,
                    error: None,
                });
            }
            Err(e) => table.push(GridCell {
                spec: spec.clone(),
                valid_r2: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let (best_index, _, best) =
        best.ok_or_else(|| Error::InvalidParam("no grid cell produced a validation score".into()))?;
    Ok(GridResult {
        best,
        best_index,
        table,
    })
}

/// Feed-forward grid over depth (number of hidden layers), optimizer and
/// activation, each hidden layer `width` units wide.
pub fn mlp_grid(
    base: &MlpParams,
    depths: &[usize],
    width: usize,
    optimizers: &[Optimizer],
    activations: &[Activation],
) -> Vec<ModelSpec> {
    let mut out = Vec::new();
    for &d in depths {
        for &opt in optimizers {
            for &act in activations {
                out.push(ModelSpec::Mlp {
                    params: MlpParams {
                        hidden_layers: vec![width; d],
                        optimizer: opt,
                        activation: act,
                        ..base.clone()
                    },
                });
            }
        }
    }
    out
}

pub fn gbt_grid(base: &GbtParams, depths: &[usize], learning_rates: &[f64], rounds: &[usize]) -> Vec<ModelSpec> {
    let mut out = Vec::new();
    for &d in depths {
        for &lr in learning_rates {
            for &r in rounds {
                let mut p = base.clone();
                p.tree.max_depth = d;
                p.learning_rate = lr;
                p.n_rounds = r;
                out.push(ModelSpec::Gbt { params: p });
            }
        }
    }
    out
}

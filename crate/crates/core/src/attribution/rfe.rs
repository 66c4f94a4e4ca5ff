use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AttributionResult, Method};
use crate::dataset::SplitPlan;
use crate::error::{Error, Result};
use crate::frame::FeatureMatrix;
use crate::metrics::evaluate;
use crate::models::{fit, impurity_importance, ForestParams, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeStep {
    pub features: Vec<String>,
    pub valid_r2: Option<f64>,
    /// Feature dropped after scoring this step; `None` on the last step.
    pub removed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeTrace {
    pub steps: Vec<RfeStep>,
    /// First-removed first.
    pub elimination_order: Vec<String>,
    pub selected: Vec<String>,
    pub selected_r2: Option<f64>,
}

impl RfeTrace {
    fn from_steps(steps: Vec<RfeStep>) -> Self {
        let elimination_order = steps.iter().filter_map(|s| s.removed.clone()).collect();
        // Later steps hold fewer features, so `>=` prefers the smaller subset on ties.
        let mut best: Option<&RfeStep> = None;
        for s in &steps {
            let score = s.valid_r2.unwrap_or(f64::NEG_INFINITY);
            if best.is_none_or(|b| score >= b.valid_r2.unwrap_or(f64::NEG_INFINITY)) {
                best = Some(s);
            }
        }
        let (selected, selected_r2) = best.map(|b| (b.features.clone(), b.valid_r2)).unwrap_or_default();
        Self {
            steps,
            elimination_order,
            selected,
            selected_r2,
        }
    }

    /// Scores for rank comparison: the k-th removed feature scores k, and
    /// the survivors share the top score.
    pub fn attribution(&self, all_features: &[String], seed: u64) -> Result<AttributionResult> {
        let survivor = self.elimination_order.len() as f64 + 1.0;
        let scores = all_features
            .iter()
            .map(|f| {
                self.elimination_order
                    .iter()
                    .position(|e| e == f)
                    .map_or(survivor, |k| k as f64 + 1.0)
            })
            .collect();
        let mut meta = BTreeMap::new();
        meta.insert("model_kind".into(), "forest".into());
        meta.insert("seed".into(), seed.to_string());
        meta.insert("steps".into(), self.steps.len().to_string());
        meta.insert("selected".into(), self.selected.join(";"));
        AttributionResult::from_scores(Method::Rfe, all_features.to_vec(), scores, meta)
    }
}

/// A fit failure part-way through elimination, with the steps completed so far.
#[derive(Debug)]
pub struct RfeAbort {
    pub partial: RfeTrace,
    pub error: Error,
}

impl From<RfeAbort> for Error {
    fn from(a: RfeAbort) -> Self {
        a.error
    }
}

/// Recursive feature elimination with a random forest: fit on the train
/// rows, score validation R², drop the feature with the lowest impurity
/// importance (the later one on ties), until `min_features` remain.
pub fn rfe(
    x: &FeatureMatrix,
    y: &[f64],
    w: &[f64],
    learner: &ForestParams,
    split: &SplitPlan,
    min_features: usize,
    seed: u64,
) -> std::result::Result<RfeTrace, RfeAbort> {
    let abort = |steps: Vec<RfeStep>, error| RfeAbort {
        partial: RfeTrace::from_steps(steps),
        error,
    };
    if min_features == 0 || min_features > x.n_cols() {
        return Err(abort(
            vec![],
            Error::InvalidParam(format!("min_features must be in 1..={}, got {min_features}", x.n_cols())),
        ));
    }
    let spec = ModelSpec::Forest {
        params: ForestParams {
            seed,
            ..learner.clone()
        },
    };
    let pick = |idx: &[usize]| -> (Vec<f64>, Vec<f64>) { (idx.iter().map(|&i| y[i]).collect(), idx.iter().map(|&i| w[i]).collect()) };
    let (yt, wt) = pick(&split.train);
    let (yv, _) = pick(&split.valid);

    let mut current: Vec<String> = x.names().to_vec();
    let mut steps = Vec::new();
    loop {
        let scored = (|| -> Result<(Option<f64>, Vec<f64>)> {
            let xs = x.select_columns(&current)?;
            let model = fit(&spec, &xs.select_rows(&split.train), &yt, &wt)?;
            let pred = model.predict(&xs.select_rows(&split.valid))?;
            let r2 = evaluate(&yv, &pred, None)?.r2;
            Ok((r2, impurity_importance(&model)?))
        })();
        let (r2, importance) = match scored {
            Ok(v) => v,
            Err(e) => return Err(abort(steps, e)),
        };
        let done = current.len() <= min_features;
        let removed = (!done).then(|| {
            let mut worst = 0;
            for (j, v) in importance.iter().enumerate() {
                if *v <= importance[worst] {
                    worst = j;
                }
            }
            current[worst].clone()
        });
        steps.push(RfeStep {
            features: current.clone(),
            valid_r2: r2,
            removed: removed.clone(),
        });
        match removed {
            Some(name) => current.retain(|c| *c != name),
            None => break,
        }
    }
    Ok(RfeTrace::from_steps(steps))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(n: usize, r2: Option<f64>, removed: Option<&str>) -> RfeStep {
        RfeStep {
            features: (0..n).map(|i| format!("f{i}")).collect(),
            valid_r2: r2,
            removed: removed.map(String::from),
        }
    }

    #[test]
    fn ties_select_smaller_subset() {
        let t = RfeTrace::from_steps(vec![
            step(3, Some(0.5), Some("f2")),
            step(2, Some(0.5), Some("f1")),
            step(1, Some(0.2), None),
        ]);
        assert_eq!(t.selected.len(), 2);
        assert_eq!(t.elimination_order, vec!["f2", "f1"]);
    }

    #[test]
    fn attribution_orders_by_survival() {
        let t = RfeTrace::from_steps(vec![step(3, Some(0.1), Some("f2")), step(2, Some(0.2), Some("f0")), step(1, Some(0.3), None)]);
        let names: Vec<String> = (0..3).map(|i| format!("f{i}")).collect();
        let a = t.attribution(&names, 0).unwrap();
        assert_eq!(a.scores, vec![2.0, 3.0, 1.0]);
        assert_eq!(a.ranks, vec![2.0, 1.0, 3.0]);
    }
}

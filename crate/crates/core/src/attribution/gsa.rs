use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::sobol::{sobol_design, sobol_indices, SaltelliDesign, SobolIndices};
use super::{AttributionResult, Method};
use crate::error::{Error, Result};
use crate::frame::FeatureMatrix;
use crate::models::TrainedModel;

/// How design points are placed for each input. Both treat inputs as
/// independent, ignoring correlation in the data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GsaSampling {
    /// Uniform over the observed `[min, max]`.
    #[default]
    Uniform,
    /// Empirical quantile function of the observed values.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GsaOutput {
    pub s1: AttributionResult,
    pub st: AttributionResult,
    pub indices: SobolIndices,
}

fn map_design(design: &mut SaltelliDesign, f: impl Fn(usize, f64) -> f64) {
    let p = design.p;
    let apply = |m: &mut Vec<f64>| {
        for (k, v) in m.iter_mut().enumerate() {
            *v = f(k % p, *v);
        }
    };
    apply(&mut design.a);
    apply(&mut design.b);
    design.ab.iter_mut().for_each(apply);
}

/// Sobol indices of a trained model over inputs drawn independently per
/// feature from the training data's range (or marginal).
pub fn gsa_over_model(
    model: &TrainedModel,
    train: &FeatureMatrix,
    n_base: usize,
    n_bootstrap: usize,
    sampling: GsaSampling,
    seed: u64,
) -> Result<GsaOutput> {
    if train.names() != model.feature_names.as_slice() {
        return Err(Error::FeatureMismatch(
            train.names().iter().filter(|n| !model.feature_names.contains(n)).cloned().collect(),
        ));
    }
    if train.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let p = train.n_cols();
    let mut sorted = train.columns();
    sorted.iter_mut().for_each(|c| c.sort_by(f64::total_cmp));
    let mut design = sobol_design(&vec![(0.0, 1.0); p], n_base, None)?;
    let mut constant = Vec::new();
    match sampling {
        GsaSampling::Uniform => map_design(&mut design, |j, u| {
            let (lo, hi) = (sorted[j][0], *sorted[j].last().unwrap());
            lo + (hi - lo) * u
        }),
        GsaSampling::Empirical => map_design(&mut design, |j, u| {
            let c = &sorted[j];
            c[((u * c.len() as f64) as usize).min(c.len() - 1)]
        }),
    }
    for (j, c) in sorted.iter().enumerate() {
        if c[0] == *c.last().unwrap() {
            constant.push(train.names()[j].clone());
        }
    }
    let indices = sobol_indices(model.predictor(), &design, n_bootstrap, seed)?;

    let mut meta = BTreeMap::new();
    meta.insert("model_kind".into(), model.kind().as_str().into());
    meta.insert("n_base".into(), n_base.to_string());
    meta.insert("evals".into(), indices.evals.to_string());
    meta.insert("n_bootstrap".into(), n_bootstrap.to_string());
    meta.insert("seed".into(), seed.to_string());
    meta.insert(
        "sampling".into(),
        match sampling {
            GsaSampling::Uniform => "independent uniform over observed [min, max]; input correlation ignored",
            GsaSampling::Empirical => "independent empirical marginals; input correlation ignored",
        }
        .into(),
    );
    if indices.constant_model {
        meta.insert("constant_model".into(), "true".into());
    }
    if !constant.is_empty() {
        meta.insert("constant_inputs".into(), constant.join(";"));
    }
    let names = train.names().to_vec();
    let s1 = AttributionResult::from_scores(Method::GsaS1, names.clone(), indices.s1.clone(), meta.clone())?;
    let st = AttributionResult::from_scores(Method::GsaSt, names, indices.st.clone(), meta)?;
    Ok(GsaOutput { s1, st, indices })
}

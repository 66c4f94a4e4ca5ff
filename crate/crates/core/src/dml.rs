//! Cross-fitted double machine learning: residualize outcome and treatment
//! on the covariates with out-of-fold nuisance models, then regress residual
//! on residual.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::{fit, stream_seed, GbtParams, ModelKind, ModelSpec, TreeParams};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEGENERATE_TREATMENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmlConfig {
    pub learner: ModelSpec,
    pub k_folds: usize,
    pub alpha: f64,
    /// Fit an intercept in the final residual regression.
    pub intercept: bool,
}

impl Default for DmlConfig {
    fn default() -> Self {
        Self {
            // Boosted stumps: additive nuisance fits with low out-of-fold
            // variance, which keeps the residual-on-residual slope unbiased.
            learner: ModelSpec::Gbt {
                params: GbtParams {
                    n_rounds: 500,
                    tree: TreeParams {
                        max_depth: 1,
                        min_samples_leaf: 20,
                        ..TreeParams::default()
                    },
                    ..GbtParams::default()
                },
            },
            k_folds: DEFAULT_FOLDS,
            alpha: DEFAULT_ALPHA,
            intercept: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalEstimate {
    pub treatment: String,
    pub theta: f64,
    pub stderr: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub n: usize,
    pub nuisance_kind: ModelKind,
    pub folds: usize,
    pub significant: bool,
    /// Outcome units per treatment unit, when both are known.
    pub units: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPair {
    pub outcome: Vec<f64>,
    pub treatment: Vec<f64>,
    pub folds: Vec<usize>,
}

/// Shuffles the distinct group labels with `seed` and deals them round-robin
/// into `k` folds; every row inherits its group's fold.
pub fn assign_folds(groups: &[String], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidParam(format!("k_folds must be at least 2, got {k}")));
    }
    let mut distinct: Vec<&String> = groups.iter().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    if distinct.len() < k {
        return Err(Error::FoldInfeasible {
            groups: distinct.len(),
            folds: k,
        });
    }
    distinct.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of: BTreeMap<&String, usize> = distinct.iter().enumerate().map(|(i, g)| (*g, i % k)).collect();
    Ok(groups.iter().map(|g| fold_of[g]).collect())
}

fn residualize_with_folds(
    ds: &Dataset,
    column: &str,
    covariates: &[String],
    learner: &ModelSpec,
    folds: &[usize],
    k: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if covariates.iter().any(|c| c == column) {
        return Err(Error::InvalidParam(format!("`{column}` is listed among its own covariates")));
    }
    let target = ds.numeric_dense(column)?;
    let x = ds.feature_matrix_of(covariates)?;
    let w = ds.weights();
    let mut resid = vec![f64::NAN; ds.n_rows()];
    for f in 0..k {
        let train: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] != f).collect();
        let held: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] == f).collect();
        let yt: Vec<f64> = train.iter().map(|&i| target[i]).collect();
        let wt: Vec<f64> = train.iter().map(|&i| w[i]).collect();
        let pred = if covariates.is_empty() {
            let sw: f64 = wt.iter().sum();
            let m = if sw > 0.0 {
                yt.iter().zip(&wt).map(|(a, b)| a * b).sum::<f64>() / sw
            } else {
                yt.iter().sum::<f64>() / yt.len() as f64
            };
            vec![m; held.len()]
        } else {
            let spec = learner.with_seed(stream_seed(seed, f as u64));
            let model = fit(&spec, &x.select_rows(&train), &yt, &wt)?;
            model.predict(&x.select_rows(&held))?
        };
        for (&i, p) in held.iter().zip(pred) {
            resid[i] = target[i] - p;
        }
    }
    Ok(resid)
}

/// Out-of-fold residuals of `column` on `covariates`, folds grouped by drill.
pub fn residualize(
    ds: &Dataset,
    column: &str,
    covariates: &[String],
    learner: &ModelSpec,
    k_folds: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let folds = assign_folds(&ds.drill_labels()?, k_folds, seed)?;
    let r = residualize_with_folds(ds, column, covariates, learner, &folds, k_folds, seed)?;
    Ok((r, folds))
}

/// Final stage: `theta = sum(T~ Y~) / sum(T~^2)` with HC0 standard error and
/// a two-sided t test on `n - 1` degrees of freedom. With `intercept` both
/// residual vectors are centered first.
pub fn residual_regression(
    treatment: &str,
    pair: &ResidualPair,
    intercept: bool,
) -> Result<(f64, f64, f64, f64)> {
    let n = pair.outcome.len();
    if n < 2 || pair.treatment.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} outcome and {} treatment residuals",
            n,
            pair.treatment.len()
        )));
    }
    let center = |v: &[f64]| -> Vec<f64> {
        if intercept {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| x - m).collect()
        } else {
            v.to_vec()
        }
    };
    let t = center(&pair.treatment);
    let y = center(&pair.outcome);
    let stt: f64 = t.iter().map(|v| v * v).sum();
    if stt < DEGENERATE_TREATMENT_TOL {
        return Err(Error::DegenerateTreatment(treatment.to_string()));
    }
    let theta = t.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / stt;
    let meat: f64 = t.iter().zip(&y).map(|(a, b)| (a * (b - theta * a)).powi(2)).sum();
    let stderr = meat.sqrt() / stt;
    let t_stat = if stderr > 0.0 {
        theta / stderr
    } else if theta == 0.0 {
        0.0
    } else {
        theta.signum() * f64::INFINITY
    };
    let p_value = if t_stat.is_infinite() {
        0.0
    } else {
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::InvalidParam(e.to_string()))?;
        (2.0 * dist.sf(t_stat.abs())).clamp(0.0, 1.0)
    };
    Ok((theta, stderr, t_stat, p_value))
}

/// Effect of `treatment` on `outcome` adjusting for `covariates`.
pub fn dml_effect(
    ds: &Dataset,
    treatment: &str,
    outcome: &str,
    covariates: &[String],
    cfg: &DmlConfig,
    seed: u64,
) -> Result<CausalEstimate> {
    if treatment == outcome {
        return Err(Error::InvalidParam("treatment and outcome must differ".into()));
    }
    if covariates.iter().any(|c| c == treatment || c == outcome) {
        return Err(Error::InvalidParam("covariates must exclude treatment and outcome".into()));
    }
    let folds = assign_folds(&ds.drill_labels()?, cfg.k_folds, seed)?;
    let pair = ResidualPair {
        outcome: residualize_with_folds(ds, outcome, covariates, &cfg.learner, &folds, cfg.k_folds, seed)?,
        treatment: residualize_with_folds(ds, treatment, covariates, &cfg.learner, &folds, cfg.k_folds, seed)?,
        folds,
    };
    let (theta, stderr, t_stat, p_value) = residual_regression(treatment, &pair, cfg.intercept)?;
    let units = match (&ds.column(outcome)?.spec.units, &ds.column(treatment)?.spec.units) {
        (Some(o), Some(t)) => Some(format!("{o} per {t}")),
        (Some(o), None) => Some(format!("{o} per unit")),
        _ => None,
    };
    Ok(CausalEstimate {
        treatment: treatment.to_string(),
        theta,
        stderr,
        t_stat,
        p_value,
        n: ds.n_rows(),
        nuisance_kind: cfg.learner.kind(),
        folds: cfg.k_folds,
        significant: p_value < cfg.alpha,
        units,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanFailure {
    pub treatment: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmlScan {
    pub outcome: String,
    /// Sorted by `|theta|`, largest first.
    pub estimates: Vec<CausalEstimate>,
    pub failures: Vec<ScanFailure>,
    pub alpha: f64,
}

impl DmlScan {
    pub fn significant(&self) -> impl Iterator<Item = &CausalEstimate> {
        self.estimates.iter().filter(|e| e.significant)
    }

    pub fn get(&self, treatment: &str) -> Option<&CausalEstimate> {
        self.estimates.iter().find(|e| e.treatment == treatment)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.estimates)?)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| treatment | theta | stderr | p | significant | units |\n|---|---|---|---|---|---|\n");
        for e in &self.estimates {
            out.push_str(&format!(
                "| {} | {:.4e} | {:.3e} | {:.3e} | {} | {} |\n",
                e.treatment,
                e.theta,
                e.stderr,
                e.p_value,
                if e.significant { "yes" } else { "no" },
                e.units.as_deref().unwrap_or("")
            ));
        }
        for f in &self.failures {
            out.push_str(&format!("| {} | failed: {} | | | | |\n", f.treatment, f.error));
        }
        out
    }
}

/// Every numeric predictor in turn as treatment, the rest as covariates.
/// Each treatment uses its own seed stream; failures are recorded and the
/// scan moves on.
// One-hot siblings of a treatment determine it exactly, so they are left out
// of its nuisance covariates.
fn same_indicator_family(a: &str, b: &str) -> bool {
    match (a.split_once('='), b.split_once('=')) {
        (Some((sa, _)), Some((sb, _))) => sa == sb,
        _ => false,
    }
}

pub fn dml_scan(ds: &Dataset, outcome: &str, cfg: &DmlConfig, seed: u64) -> Result<DmlScan> {
    let predictors: Vec<String> = ds.feature_names().into_iter().filter(|f| f != outcome).collect();
    if predictors.is_empty() {
        return Err(Error::InvalidParam("DML scan needs at least one predictor".into()));
    }
    // Fold feasibility does not depend on the treatment; fail the scan once.
    assign_folds(&ds.drill_labels()?, cfg.k_folds, seed)?;
    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    for (idx, t) in predictors.iter().enumerate() {
        let covariates: Vec<String> = predictors
            .iter()
            .filter(|c| *c != t && !same_indicator_family(c, t))
            .cloned()
            .collect();
        match dml_effect(ds, t, outcome, &covariates, cfg, stream_seed(seed, idx as u64)) {
            Ok(e) => estimates.push(e),
            Err(e) => failures.push(ScanFailure {
                treatment: t.clone(),
                error: e.to_string(),
            }),
        }
    }
    estimates.sort_by(|a, b| b.theta.abs().total_cmp(&a.theta.abs()));
    Ok(DmlScan {
        outcome: outcome.to_string(),
        estimates,
        failures,
        alpha: cfg.alpha,
    })
}

//! Regression metrics and Spearman rank correlation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// MAE / RMSE / R² for one prediction vector. `r2` is `None` when the
/// target has zero (weighted) variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mae: f64,
    pub rmse: f64,
    pub r2: Option<f64>,
    pub n: usize,
    pub weighted: bool,
}

pub fn evaluate(y: &[f64], yhat: &[f64], w: Option<&[f64]>) -> Result<EvalReport> {
    if y.len() != yhat.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} targets vs {} predictions",
            y.len(),
            yhat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::InvalidParam("evaluate needs at least one row".into()));
    }
    if let Some(w) = w {
        if w.len() != y.len() {
            return Err(Error::DimensionMismatch(format!("{} weights for {} rows", w.len(), y.len())));
        }
    }
    let weight = |i: usize| w.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..y.len()).map(weight).sum();
    if !(sw > 0.0) {
        return Err(Error::InvalidParam("weights sum to zero".into()));
    }
    let ybar = (0..y.len()).map(|i| weight(i) * y[i]).sum::<f64>() / sw;
    let (mut abs, mut sq, mut tot) = (0.0, 0.0, 0.0);
    for i in 0..y.len() {
        let wi = weight(i);
        let e = y[i] - yhat[i];
        abs += wi * e.abs();
        sq += wi * e * e;
        tot += wi * (y[i] - ybar) * (y[i] - ybar);
    }
    Ok(EvalReport {
        mae: abs / sw,
        rmse: (sq / sw).sqrt(),
        r2: (tot > 0.0).then(|| 1.0 - sq / tot),
        n: y.len(),
        weighted: w.is_some(),
    })
}

/// Average ranks, ascending: the smallest value gets rank 1; ties share the
/// mean of the positions they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho as the Pearson correlation of average ranks.
/// `Ok(None)` when either side is entirely tied.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} scores", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InvalidParam("spearman needs at least two values".into()));
    }
    Ok(crate::stats::pearson(&average_ranks(a), &average_ranks(b)))
}

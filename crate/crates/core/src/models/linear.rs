use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_xyw, Predictor};
use crate::error::{Error, Result};
use crate::frame::FeatureMatrix;

/// Ridge jitter added to the (scaled) Gram matrix diagonal.
pub const RIDGE_JITTER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl Predictor for LinearModel {
    fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

/// Weighted least squares via the normal equations.
///
/// Columns are centered at their weighted means and scaled to unit weighted
/// variance before the solve, so the jitter acts on a correlation-like Gram
/// matrix; coefficients are mapped back to raw units afterwards. Columns
/// with zero spread get a zero coefficient.
pub fn fit_linear(x: &FeatureMatrix, y: &[f64], w: &[f64]) -> Result<LinearModel> {
    check_xyw(x, y, w)?;
    if x.n_rows() < 2 {
        return Err(Error::InvalidParam("linear fit needs at least two rows".into()));
    }
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return Err(Error::InvalidParam("weights sum to zero".into()));
    }
    let n = x.n_rows();
    let p = x.n_cols();
    let ybar = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut xbar = vec![0.0; p];
    for (i, row) in x.rows().enumerate() {
        for (m, v) in xbar.iter_mut().zip(row) {
            *m += w[i] * v;
        }
    }
    xbar.iter_mut().for_each(|m| *m /= sw);
    let mut scale = vec![0.0; p];
    for (i, row) in x.rows().enumerate() {
        for j in 0..p {
            let d = row[j] - xbar[j];
            scale[j] += w[i] * d * d;
        }
    }
    let scale: Vec<f64> = scale.iter().map(|s| (s / sw).sqrt()).collect();
    let active: Vec<usize> = (0..p).filter(|&j| scale[j] > 0.0).collect();
    let k = active.len();

    let mut coefficients = vec![0.0; p];
    if k > 0 {
        let mut z = DMatrix::<f64>::zeros(n, k);
        let mut t = DVector::<f64>::zeros(n);
        for (i, row) in x.rows().enumerate() {
            let sq = w[i].sqrt();
            for (c, &j) in active.iter().enumerate() {
                z[(i, c)] = sq * (row[j] - xbar[j]) / scale[j];
            }
            t[i] = sq * (y[i] - ybar);
        }
        let gram = z.transpose() * &z;
        let mut jittered = gram.clone();
        for d in 0..k {
            jittered[(d, d)] += RIDGE_JITTER;
        }
        let rhs = z.transpose() * t;
        let chol = jittered
            .cholesky()
            .ok_or_else(|| Error::Singular("weighted Gram matrix is not positive definite".into()))?;
        // One refinement step against the unjittered system removes the
        // first-order shrinkage the jitter introduces.
        let mut beta = chol.solve(&rhs);
        let resid = &rhs - &gram * &beta;
        beta += chol.solve(&resid);
        for (c, &j) in active.iter().enumerate() {
            coefficients[j] = beta[c] / scale[j];
        }
    }
    let intercept = ybar - coefficients.iter().zip(&xbar).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearModel {
        intercept,
        coefficients,
    })
}

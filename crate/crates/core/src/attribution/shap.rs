//! Shapley-value attributions with an interventional value function:
//! `v(S)` is the mean model output over background rows `b` of the
//! composite row that takes `x` on `S` and `b` elsewhere.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AttributionResult, Method};
use crate::error::{Error, Result};
use crate::frame::FeatureMatrix;
use crate::models::{stream_seed, Predictor};

/// Largest feature count for exact enumeration (2^p coalitions).
pub const MAX_EXACT_FEATURES: usize = 15;
/// Kernel mode keys coalitions by a 128-bit mask.
pub const MAX_KERNEL_FEATURES: usize = 128;
pub const DEFAULT_BACKGROUND_SIZE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ShapMode {
    Exact,
    Kernel { n_coalitions: usize },
}

/// Background rows for the value function, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    pub p: usize,
    pub rows: Vec<f64>,
    pub descriptor: String,
}

impl Background {
    pub fn from_matrix(x: &FeatureMatrix, descriptor: impl Into<String>) -> Result<Self> {
        if x.n_rows() == 0 {
            return Err(Error::InvalidParam("background set is empty".into()));
        }
        Ok(Self {
            p: x.n_cols(),
            rows: x.as_slice().to_vec(),
            descriptor: descriptor.into(),
        })
    }

    /// Seeded uniform subsample of `min(max_rows, n)` rows without replacement.
    pub fn sample(x: &FeatureMatrix, max_rows: usize, seed: u64) -> Result<Self> {
        let n = x.n_rows();
        if n == 0 {
            return Err(Error::InvalidParam("background set is empty".into()));
        }
        let k = max_rows.min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, n, k).into_vec();
        idx.sort_unstable();
        let sub = x.select_rows(&idx);
        Self::from_matrix(&sub, format!("uniform subsample of {k} of {n} rows, seed {seed}"))
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.p.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn mean_output(&self, model: &dyn Predictor) -> f64 {
        let n = self.len();
        model.predict_block(&self.rows).iter().sum::<f64>() / n as f64
    }
}

/// Value of coalition `in_set` for instance `x`.
fn coalition_value(model: &dyn Predictor, x: &[f64], bg: &Background, in_set: impl Fn(usize) -> bool) -> f64 {
    let p = bg.p;
    let mut block = bg.rows.clone();
    for j in (0..p).filter(|&j| in_set(j)) {
        for r in 0..bg.len() {
            block[r * p + j] = x[j];
        }
    }
    model.predict_block(&block).iter().sum::<f64>() / bg.len() as f64
}

fn check_inputs(model: &dyn Predictor, x: &[f64], bg: &Background) -> Result<()> {
    if bg.is_empty() {
        return Err(Error::InvalidParam("background set is empty".into()));
    }
    if x.len() != model.n_features() || bg.p != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "instance has {} features, model {}, background {}",
            x.len(),
            model.n_features(),
            bg.p
        )));
    }
    Ok(())
}

/// Exact Shapley values by enumerating all `2^p` coalitions.
/// Returns `(phi, base_value)` with `base_value = v(empty)`.
pub fn shap_exact(model: &dyn Predictor, x: &[f64], bg: &Background) -> Result<(Vec<f64>, f64)> {
    check_inputs(model, x, bg)?;
    let p = x.len();
    if p > MAX_EXACT_FEATURES {
        return Err(Error::ShapBudget {
            features: p,
            limit: MAX_EXACT_FEATURES,
        });
    }
    let n_sets = 1usize << p;
    let values: Vec<f64> = (0..n_sets)
        .map(|mask| coalition_value(model, x, bg, |j| mask >> j & 1 == 1))
        .collect();
    // |S|! (p - |S| - 1)! / p!
    let mut fact = vec![1.0f64; p + 1];
    for k in 1..=p {
        fact[k] = fact[k - 1] * k as f64;
    }
    let weight: Vec<f64> = (0..p).map(|s| fact[s] * fact[p - s - 1] / fact[p]).collect();
    let mut phi = vec![0.0; p];
    for (j, ph) in phi.iter_mut().enumerate() {
        let bit = 1usize << j;
        for mask in (0..n_sets).filter(|m| m & bit == 0) {
            *ph += weight[mask.count_ones() as usize] * (values[mask | bit] - values[mask]);
        }
    }
    Ok((phi, values[0]))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Kernel SHAP: efficiency-constrained weighted least squares over
/// coalitions with Shapley kernel weights.
///
/// When the budget covers every non-trivial coalition (`2^p - 2`) they are
/// all enumerated with their exact kernel weights. Otherwise coalition sizes
/// are drawn with probability proportional to the total kernel weight of
/// each size, members uniformly within a size, and every draw is paired with
/// its complement; repeated coalitions accumulate weight. The empty and full
/// coalitions enter through the constraint `sum(phi) = f(x) - base`, which
/// is eliminated by substituting the last coordinate.
pub fn shap_kernel(
    model: &dyn Predictor,
    x: &[f64],
    bg: &Background,
    n_coalitions: usize,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    check_inputs(model, x, bg)?;
    let p = x.len();
    if n_coalitions < 2 * p + 2 {
        return Err(Error::InvalidParam(format!(
            "kernel SHAP needs at least 2p+2 = {} coalitions, got {n_coalitions}",
            2 * p + 2
        )));
    }
    if p > MAX_KERNEL_FEATURES {
        return Err(Error::InvalidParam(format!("kernel SHAP supports at most {MAX_KERNEL_FEATURES} features")));
    }
    let base = bg.mean_output(model);
    let fx = model.predict_row(x);
    let delta = fx - base;
    if p == 1 {
        return Ok((vec![delta], base));
    }

    let mut coalitions: BTreeMap<u128, f64> = BTreeMap::new();
    let exhaustive = p < 127 && (1u128 << p) - 2 <= n_coalitions as u128;
    if exhaustive {
        for mask in 1..(1u128 << p) - 1 {
            let s = mask.count_ones() as usize;
            let w = (p - 1) as f64 / (binomial(p, s) * s as f64 * (p - s) as f64);
            coalitions.insert(mask, w);
        }
    } else {
        let size_weight: Vec<f64> = (1..p).map(|s| (p - 1) as f64 / (s * (p - s)) as f64).collect();
        let total: f64 = size_weight.iter().sum();
        let full: u128 = if p == 128 { u128::MAX } else { (1u128 << p) - 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n_coalitions / 2 {
            let mut u = rng.random::<f64>() * total;
            let mut s = 1;
            for (k, w) in size_weight.iter().enumerate() {
                if u < *w {
                    s = k + 1;
                    break;
                }
                u -= w;
                s = k + 1;
            }
            let mut mask = 0u128;
            for j in sample(&mut rng, p, s) {
                mask |= 1u128 << j;
            }
            *coalitions.entry(mask).or_default() += 1.0;
            *coalitions.entry(full & !mask).or_default() += 1.0;
        }
    }

    // Reduced system in phi_0..phi_{p-2}; phi_{p-1} = delta - sum(others).
    let m = p - 1;
    let mut ata = DMatrix::<f64>::zeros(m, m);
    let mut atb = DVector::<f64>::zeros(m);
    let mut row = vec![0.0; m];
    for (&mask, &w) in &coalitions {
        let v = coalition_value(model, x, bg, |j| mask >> j & 1 == 1);
        let z_last = (mask >> (p - 1) & 1) as f64;
        let target = v - base - z_last * delta;
        for (j, r) in row.iter_mut().enumerate() {
            *r = (mask >> j & 1) as f64 - z_last;
        }
        for a in 0..m {
            if row[a] == 0.0 {
                continue;
            }
            atb[a] += w * row[a] * target;
            for b in 0..m {
                ata[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    let sol = ata
        .lu()
        .solve(&atb)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or_else(|| {
            Error::Singular(format!(
                "kernel SHAP regression is singular with {n_coalitions} coalitions; increase the budget"
            ))
        })?;
    let mut phi: Vec<f64> = sol.iter().copied().collect();
    let last = delta - phi.iter().sum::<f64>();
    phi.push(last);
    Ok((phi, base))
}

/// Per-row, per-feature contributions plus the shared base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub feature_names: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub predictions: Vec<f64>,
    pub base_value: f64,
    pub background: String,
    pub mode: ShapMode,
    /// Largest `|sum(phi) + base - prediction|` over rows.
    pub max_efficiency_gap: f64,
}

impl ShapExplanation {
    pub fn mean_abs(&self) -> Vec<f64> {
        let p = self.feature_names.len();
        let n = self.values.len().max(1) as f64;
        (0..p)
            .map(|j| self.values.iter().map(|r| r[j].abs()).sum::<f64>() / n)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.feature_names.join(",");
        out.push('\n');
        for r in &self.values {
            let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Explains every row of `x` and ranks features by mean |phi|.
pub fn shap_summary(
    model: &dyn Predictor,
    x: &FeatureMatrix,
    bg: &Background,
    mode: ShapMode,
    seed: u64,
) -> Result<(AttributionResult, ShapExplanation)> {
    if x.n_rows() == 0 {
        return Err(Error::InvalidParam("no rows to explain".into()));
    }
    let mut values = Vec::with_capacity(x.n_rows());
    let mut predictions = Vec::with_capacity(x.n_rows());
    let mut base_value = 0.0;
    let mut gap: f64 = 0.0;
    for (i, row) in x.rows().enumerate() {
        let (phi, base) = match mode {
            ShapMode::Exact => shap_exact(model, row, bg)?,
            ShapMode::Kernel { n_coalitions } => shap_kernel(model, row, bg, n_coalitions, stream_seed(seed, i as u64))?,
        };
        let pred = model.predict_row(row);
        gap = gap.max((phi.iter().sum::<f64>() + base - pred).abs());
        base_value = base;
        values.push(phi);
        predictions.push(pred);
    }
    let explanation = ShapExplanation {
        feature_names: x.names().to_vec(),
        values,
        predictions,
        base_value,
        background: bg.descriptor.clone(),
        mode,
        max_efficiency_gap: gap,
    };
    let mut meta = BTreeMap::new();
    meta.insert("rows_explained".into(), x.n_rows().to_string());
    meta.insert("background".into(), bg.descriptor.clone());
    meta.insert("seed".into(), seed.to_string());
    match mode {
        ShapMode::Exact => meta.insert("mode".into(), "exact".into()),
        ShapMode::Kernel { n_coalitions } => meta.insert("mode".into(), format!("kernel n_coalitions={n_coalitions}")),
    };
    meta.insert("max_efficiency_gap".into(), format!("{gap:e}"));
    let result = AttributionResult::from_scores(Method::Shap, x.names().to_vec(), explanation.mean_abs(), meta)?;
    Ok((result, explanation))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bg(rows: &[Vec<f64>]) -> Background {
        Background::from_matrix(&FeatureMatrix::anonymous(rows[0].len(), rows).unwrap(), "test").unwrap()
    }

    #[test]
    fn null_player_and_symmetry() {
        let f = (3usize, |x: &[f64]| x[0] + x[1]);
        let b = bg(&[vec![0.0, 0.0, 0.0]]);
        let (phi, base) = shap_exact(&f, &[1.0, 1.0, 5.0], &b).unwrap();
        assert_eq!(base, 0.0);
        assert!((phi[0] - phi[1]).abs() < 1e-12);
        assert!(phi[2].abs() < 1e-12);
        assert!((phi.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn interaction_split_evenly() {
        let f = (2usize, |x: &[f64]| x[0] * x[1]);
        let (phi, _) = shap_exact(&f, &[1.0, 1.0], &bg(&[vec![0.0, 0.0]])).unwrap();
        assert!((phi[0] - 0.5).abs() < 1e-12 && (phi[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exact_budget_guard() {
        let f = (16usize, |x: &[f64]| x[0]);
        let b = bg(&[vec![0.0; 16]]);
        assert!(matches!(shap_exact(&f, &[0.0; 16], &b).unwrap_err(), Error::ShapBudget { .. }));
    }

    #[test]
    fn single_player_kernel() {
        let f = (1usize, |x: &[f64]| 3.0 * x[0] + 1.0);
        let (phi, base) = shap_kernel(&f, &[2.0], &bg(&[vec![0.0], vec![1.0]]), 4, 0).unwrap();
        assert_eq!(base, 2.5);
        assert_eq!(phi, vec![4.5]);
    }

    #[test]
    fn kernel_budget_floor() {
        let f = (3usize, |x: &[f64]| x[0]);
        assert!(shap_kernel(&f, &[0.0; 3], &bg(&[vec![0.0; 3]]), 7, 0).is_err());
    }

    #[test]
    fn kernel_exhaustive_matches_exact() {
        let f = (4usize, |x: &[f64]| x[0] * x[1] + (x[2] - x[3]).max(0.0) + x[3].sin());
        let b = bg(&[vec![0.1, -0.3, 0.5, 1.0], vec![1.0, 0.4, -0.2, 0.0], vec![-1.0, 2.0, 0.3, 0.7]]);
        let x = [0.7, 1.2, -0.4, 0.9];
        let (e, be) = shap_exact(&f, &x, &b).unwrap();
        let (k, bk) = shap_kernel(&f, &x, &b, 14, 3).unwrap();
        assert!((be - bk).abs() < 1e-12);
        for (a, c) in e.iter().zip(&k) {
            assert!((a - c).abs() < 1e-9, "{e:?} vs {k:?}");
        }
    }

    #[test]
    fn background_sampling_bounds_size() {
        let rows: Vec<Vec<f64>> = (0..250).map(|i| vec![i as f64]).collect();
        let x = FeatureMatrix::anonymous(1, &rows).unwrap();
        assert_eq!(Background::sample(&x, 100, 1).unwrap().len(), 100);
        let small = x.select_rows(&[0, 1, 2]);
        assert_eq!(Background::sample(&small, 100, 1).unwrap().len(), 3);
        assert_eq!(Background::sample(&x, 100, 9).unwrap(), Background::sample(&x, 100, 9).unwrap());
    }
}

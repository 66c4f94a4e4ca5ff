use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{fmt_param, Column, ColumnData, ColumnKind, ColumnSpec, Dataset};
use crate::error::{Error, Result};
use crate::stats;

pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 4000.0;
pub const DEFAULT_VARIANCE_EPS: f64 = 1e-12;
pub const DEFAULT_CORRELATION_THRESHOLD: f64 = 0.95;

/// Drops rows whose target exceeds `threshold` (strictly) or is missing.
pub fn filter_salinity_outliers(ds: &Dataset, threshold: f64) -> Result<Dataset> {
    let target = ds.target();
    let vals = target.numeric_values().expect("target is numeric storage");
    let keep: Vec<usize> = vals
        .iter()
        .enumerate()
        .filter_map(|(i, v)| match v {
            Some(x) if *x <= threshold => Some(i),
            _ => None,
        })
        .collect();
    let mut out = ds.select_rows(&keep);
    out.log_step(
        "filter_salinity_outliers",
        &[("threshold", fmt_param(threshold))],
        ds.n_rows(),
    );
    Ok(out)
}

fn observed(values: &[Option<f64>]) -> Vec<f64> {
    values.iter().flatten().copied().collect()
}

/// Removes numeric predictors whose sample variance is at most `eps`.
pub fn drop_low_variance(ds: &Dataset, eps: f64) -> Result<Dataset> {
    let mut dropped = Vec::new();
    let (columns, weights, provenance) = ds.clone().into_parts();
    let kept: Vec<Column> = columns
        .into_iter()
        .filter(|c| {
            if c.kind() != ColumnKind::Numeric {
                return true;
            }
            let var = stats::sample_variance(&observed(c.numeric_values().unwrap()));
            let keep = var > eps;
            if !keep {
                dropped.push(c.spec.name.clone());
            }
            keep
        })
        .collect();
    let mut out = Dataset::from_parts(kept, weights, provenance);
    out.log_step(
        "drop_low_variance",
        &[("eps", fmt_param(eps)), ("dropped", dropped.join(","))],
        ds.n_rows(),
    );
    Ok(out)
}

/// Greedy left-to-right pruning: a predictor is dropped when its absolute
/// Pearson correlation with any already-kept predictor exceeds `threshold`.
/// Correlations use rows where both cells are observed.
pub fn prune_correlated(ds: &Dataset, threshold: f64) -> Result<Dataset> {
    let numeric: Vec<(usize, &[Option<f64>])> = ds
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.kind() == ColumnKind::Numeric)
        .map(|(i, c)| (i, c.numeric_values().unwrap()))
        .collect();
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped_idx = BTreeSet::new();
    for (pos, (_, vals)) in numeric.iter().enumerate() {
        let collides = kept.iter().any(|&k| {
            let other = numeric[k].1;
            let (a, b): (Vec<f64>, Vec<f64>) = vals
                .iter()
                .zip(other)
                .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                .unzip();
            stats::pearson(&a, &b).is_some_and(|r| r.abs() > threshold)
        });
        if collides {
            dropped_idx.insert(numeric[pos].0);
        } else {
            kept.push(pos);
        }
    }
    let dropped: Vec<String> = dropped_idx
        .iter()
        .map(|&i| ds.columns()[i].spec.name.clone())
        .collect();
    let (columns, weights, provenance) = ds.clone().into_parts();
    let columns = columns
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !dropped_idx.contains(i))
        .map(|(_, c)| c)
        .collect();
    let mut out = Dataset::from_parts(columns, weights, provenance);
    out.log_step(
        "prune_correlated",
        &[("threshold", fmt_param(threshold)), ("dropped", dropped.join(","))],
        ds.n_rows(),
    );
    Ok(out)
}

/// Fills numeric cells with the unweighted column mean and text cells with
/// the column mode (lexicographically smallest level on count ties).
pub fn impute_mean(ds: &Dataset) -> Result<Dataset> {
    let mut filled = 0usize;
    let (columns, weights, provenance) = ds.clone().into_parts();
    let columns = columns
        .into_iter()
        .map(|c| {
            let missing = c.data.missing_count();
            if missing == 0 {
                return Ok(c);
            }
            filled += missing;
            let data = match c.data {
                ColumnData::Numeric(v) => {
                    let obs = observed(&v);
                    if obs.is_empty() {
                        return Err(Error::Unimputable(c.spec.name.clone()));
                    }
                    let m = stats::mean(&obs);
                    ColumnData::Numeric(v.into_iter().map(|x| Some(x.unwrap_or(m))).collect())
                }
                ColumnData::Text(v) => {
                    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                    for s in v.iter().flatten() {
                        *counts.entry(s.as_str()).or_default() += 1;
                    }
                    // `max_by_key` keeps the last maximum; reversed key order
                    // makes that the smallest level among ties.
                    let mode = counts
                        .iter()
                        .rev()
                        .max_by_key(|(_, n)| **n)
                        .map(|(k, _)| k.to_string())
                        .ok_or_else(|| Error::Unimputable(c.spec.name.clone()))?;
                    ColumnData::Text(
                        v.iter()
                            .map(|x| Some(x.clone().unwrap_or_else(|| mode.clone())))
                            .collect(),
                    )
                }
            };
            Ok(Column { spec: c.spec, data })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Dataset::from_parts(columns, weights, provenance);
    out.log_step("impute_mean", &[("filled", filled.to_string())], ds.n_rows());
    Ok(out)
}

/// Replaces each named categorical column with `<col>=<level>` indicator
/// columns, levels in lexicographic order, at the original position.
pub fn one_hot_encode(ds: &Dataset, names: &[String]) -> Result<Dataset> {
    for n in names {
        let c = ds.column(n)?;
        if c.kind() != ColumnKind::Categorical {
            return Err(Error::ColumnKind {
                column: n.clone(),
                expected: "categorical",
                actual: c.kind().as_str(),
            });
        }
        if c.data.missing_count() > 0 {
            return Err(Error::InvalidParam(format!(
                "column `{n}` has missing cells; impute before encoding"
            )));
        }
    }
    let (columns, weights, provenance) = ds.clone().into_parts();
    let mut out_cols = Vec::with_capacity(columns.len());
    for c in columns {
        if !names.contains(&c.spec.name) {
            out_cols.push(c);
            continue;
        }
        let vals = c.text_values().unwrap();
        let levels: BTreeSet<&str> = vals.iter().flatten().map(String::as_str).collect();
        for level in levels {
            let ind = vals
                .iter()
                .map(|v| Some(if v.as_deref() == Some(level) { 1.0 } else { 0.0 }))
                .collect();
            out_cols.push(Column::numeric(
                ColumnSpec::new(format!("{}={}", c.spec.name, level), ColumnKind::Numeric),
                ind,
            ));
        }
    }
    let mut seen = BTreeSet::new();
    for c in &out_cols {
        if !seen.insert(c.spec.name.clone()) {
            return Err(Error::DuplicateColumn(c.spec.name.clone()));
        }
    }
    let mut out = Dataset::from_parts(out_cols, weights, provenance);
    out.log_step("one_hot_encode", &[("columns", names.join(","))], ds.n_rows());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledColumn {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

/// Per-column location and scale; standard deviation uses the `n - 1` denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub columns: Vec<ScaledColumn>,
}

impl ScalerParams {
    fn map(&self, ds: &Dataset, f: impl Fn(f64, &ScaledColumn) -> f64) -> Result<Dataset> {
        let mut out = ds.clone();
        for sc in &self.columns {
            let vals = out.numeric_dense(&sc.name)?;
            out = out.with_numeric_column(&sc.name, vals.into_iter().map(|x| f(x, sc)).collect())?;
        }
        Ok(out)
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        self.map(ds, |x, sc| (x - sc.mean) / sc.std)
    }

    pub fn invert(&self, ds: &Dataset) -> Result<Dataset> {
        self.map(ds, |x, sc| x * sc.std + sc.mean)
    }

    pub fn apply_row(&self, names: &[String], row: &mut [f64]) {
        for (v, n) in row.iter_mut().zip(names) {
            if let Some(sc) = self.columns.iter().find(|c| &c.name == n) {
                *v = (*v - sc.mean) / sc.std;
            }
        }
    }
}

/// Standardizes every numeric predictor; the target is left in its units.
pub fn standardize(ds: &Dataset) -> Result<(Dataset, ScalerParams)> {
    let mut cols = Vec::new();
    for name in ds.feature_names() {
        let vals = ds.numeric_dense(&name)?;
        let std = stats::sample_variance(&vals).sqrt();
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::ZeroVariance(name));
        }
        cols.push(ScaledColumn {
            name,
            mean: stats::mean(&vals),
            std,
        });
    }
    let params = ScalerParams { columns: cols };
    let mut out = params.apply(ds)?;
    out.log_step(
        "standardize",
        &[("columns", params.columns.len().to_string()), ("ddof", "1".into())],
        ds.n_rows(),
    );
    Ok((out, params))
}

/// Rescales weights by one constant so their mean is 1.
pub fn finalize_weights(ds: &Dataset) -> Result<Dataset> {
    let n = ds.n_rows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let total: f64 = ds.weights().iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidParam("weights sum to zero".into()));
    }
    let scale = n as f64 / total;
    let w = ds.weights().iter().map(|w| w * scale).collect();
    ds.with_weights(w)
}

fn group_weights(
    ds: &Dataset,
    group: &str,
    raw: impl Fn(&str, usize) -> Result<f64>,
) -> Result<(Dataset, BTreeMap<String, usize>)> {
    if ds.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let labels = ds.group_labels(group)?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for l in &labels {
        *counts.entry(l.clone()).or_default() += 1;
    }
    let n = labels.len() as f64;
    let mut per_group: BTreeMap<&str, f64> = BTreeMap::new();
    for (g, &c) in &counts {
        per_group.insert(g.as_str(), raw(g, c)?);
    }
    // Normalize per group rather than per row so rows of one group stay bit-identical.
    let total: f64 = counts.iter().map(|(g, &c)| per_group[g.as_str()] * c as f64).sum();
    let scale = n / total;
    for v in per_group.values_mut() {
        *v *= scale;
    }
    let w = labels.iter().map(|l| per_group[l.as_str()]).collect();
    Ok((ds.with_weights(w)?, counts))
}

/// Inverse square-root density weights: each row of group `g` gets
/// `1 / sqrt(n_g)` with `n_g` the in-dataset row count, rescaled to mean 1.
pub fn basin_weights(ds: &Dataset, group: &str) -> Result<Dataset> {
    let (mut out, counts) = group_weights(ds, group, |_, c| Ok(1.0 / (c as f64).sqrt()))?;
    out.log_step(
        "basin_weights",
        &[
            ("group", group.to_string()),
            ("groups", counts.len().to_string()),
            ("density", "row-count".into()),
        ],
        ds.n_rows(),
    );
    Ok(out)
}

/// As [`basin_weights`] with an externally supplied density per group.
pub fn basin_weights_from_density(
    ds: &Dataset,
    group: &str,
    density: &BTreeMap<String, f64>,
) -> Result<Dataset> {
    let (mut out, counts) = group_weights(ds, group, |g, _| {
        let d = density
            .get(g)
            .ok_or_else(|| Error::InvalidParam(format!("no density for group `{g}`")))?;
        if !(*d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidParam(format!("density for group `{g}` must be positive")));
        }
        Ok(1.0 / d.sqrt())
    })?;
    out.log_step(
        "basin_weights",
        &[
            ("group", group.to_string()),
            ("groups", counts.len().to_string()),
            ("density", "external".into()),
        ],
        ds.n_rows(),
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(name: &str, kind: ColumnKind) -> ColumnSpec {
        ColumnSpec::new(name, kind)
    }

    fn num(name: &str, v: &[f64]) -> Column {
        Column::numeric(spec(name, ColumnKind::Numeric), v.iter().map(|x| Some(*x)).collect())
    }

    fn target(v: &[f64]) -> Column {
        Column::numeric(spec("cl", ColumnKind::Target), v.iter().map(|x| Some(*x)).collect())
    }

    fn ds(cols: Vec<Column>) -> Dataset {
        Dataset::new(cols, None).unwrap()
    }

    #[test]
    fn outlier_boundary_is_retained() {
        let d = ds(vec![target(&[3999.0, 4000.0, 4001.0])]);
        let out = filter_salinity_outliers(&d, 4000.0).unwrap();
        assert_eq!(out.target_values().unwrap(), vec![3999.0, 4000.0]);
        assert_eq!(
            out.provenance().last().unwrap(),
            "STEP filter_salinity_outliers threshold=4000 3->2"
        );
    }

    #[test]
    fn outlier_identity_and_all_removed() {
        let d = ds(vec![target(&[1.0, 2.0])]);
        assert_eq!(filter_salinity_outliers(&d, 4000.0).unwrap().n_rows(), 2);
        let d = ds(vec![target(&[5000.0, 6000.0])]);
        assert_eq!(filter_salinity_outliers(&d, 4000.0).unwrap().n_rows(), 0);
    }

    #[test]
    fn outlier_drops_missing_target() {
        let t = Column::numeric(spec("cl", ColumnKind::Target), vec![Some(1.0), None]);
        let out = filter_salinity_outliers(&ds(vec![t]), 4000.0).unwrap();
        assert_eq!(out.n_rows(), 1);
    }

    #[test]
    fn low_variance_rules() {
        let d = ds(vec![num("c", &[5.0, 5.0, 5.0]), num("v", &[1.0, 2.0, 3.0]), target(&[5.0, 5.0, 5.0])]);
        let out = drop_low_variance(&d, 1e-12).unwrap();
        assert_eq!(out.column_names(), vec!["v", "cl"]);
        let out = drop_low_variance(&d, 0.0).unwrap();
        assert_eq!(out.column_names(), vec!["v", "cl"]);
    }

    #[test]
    fn correlated_later_column_dropped() {
        let a = [1.0, 4.0, 2.0, 8.0, 5.0];
        let b: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
        let d = ds(vec![num("a", &a), num("b", &b), target(&[0.0; 5])]);
        let out = prune_correlated(&d, 0.95).unwrap();
        assert_eq!(out.column_names(), vec!["a", "cl"]);
        assert!(out.provenance().last().unwrap().contains("dropped=b"));
    }

    #[test]
    fn triple_duplicate_keeps_first_only() {
        // Brute-force check of every pairwise correlation on the fixture first.
        let a = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0];
        let a1: Vec<f64> = a.iter().map(|x| x * 3.0 - 1.0).collect();
        let a2: Vec<f64> = a.iter().map(|x| -0.5 * x + 7.0).collect();
        let noise = [0.3, -1.2, 0.8, 2.0, -0.7, 0.1, 1.5, -0.4, -2.2, 0.9];
        let cols = [a.to_vec(), a1.clone(), a2.clone(), noise.to_vec()];
        for i in 0..3 {
            for j in 0..3 {
                assert!((stats::pearson(&cols[i], &cols[j]).unwrap().abs() - 1.0).abs() < 1e-12);
            }
            assert!(stats::pearson(&cols[i], &cols[3]).unwrap().abs() < 0.95);
        }
        let d = ds(vec![num("a", &a), num("a1", &a1), num("a2", &a2), num("n", &noise), target(&[0.0; 10])]);
        let out = prune_correlated(&d, 0.95).unwrap();
        assert_eq!(out.feature_names(), vec!["a", "n"]);
    }

    #[test]
    fn mean_and_mode_imputation() {
        let c = Column::numeric(spec("x", ColumnKind::Numeric), vec![Some(1.0), None, Some(3.0)]);
        let k = Column::text(
            spec("lulc", ColumnKind::Categorical),
            vec![Some("ag".into()), Some("ag".into()), None],
        );
        let d = ds(vec![c, k, target(&[0.0; 3])]);
        let out = impute_mean(&d).unwrap();
        assert_eq!(out.numeric_dense("x").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(out.column("lulc").unwrap().text_values().unwrap()[2].as_deref(), Some("ag"));
        assert_eq!(out.missing_cells(), 0);
    }

    #[test]
    fn mode_counts_levels() {
        let k = Column::text(
            spec("lulc", ColumnKind::Categorical),
            vec![Some("ag".into()), Some("ag".into()), None, Some("natural".into())],
        );
        let out = impute_mean(&ds(vec![k, target(&[0.0; 4])])).unwrap();
        assert_eq!(out.column("lulc").unwrap().text_values().unwrap()[2].as_deref(), Some("ag"));
    }

    #[test]
    fn impute_identity_and_unimputable() {
        let d = ds(vec![num("x", &[1.0, 2.0]), target(&[0.0; 2])]);
        let out = impute_mean(&d).unwrap();
        assert_eq!(out.columns(), d.columns());
        let c = Column::numeric(spec("x", ColumnKind::Numeric), vec![None, None]);
        let err = impute_mean(&ds(vec![c, target(&[0.0; 2])])).unwrap_err();
        assert!(matches!(err, Error::Unimputable(n) if n == "x"));
    }

    fn cat(name: &str, v: &[&str]) -> Column {
        Column::text(
            spec(name, ColumnKind::Categorical),
            v.iter().map(|s| Some(s.to_string())).collect(),
        )
    }

    #[test]
    fn one_hot_two_levels() {
        let d = ds(vec![cat("LULC", &["natural", "agricultural"]), target(&[0.0; 2])]);
        let out = one_hot_encode(&d, &["LULC".into()]).unwrap();
        assert_eq!(out.feature_names(), vec!["LULC=agricultural", "LULC=natural"]);
        assert_eq!(out.numeric_dense("LULC=agricultural").unwrap(), vec![0.0, 1.0]);
        assert_eq!(out.numeric_dense("LULC=natural").unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn one_hot_single_level_then_variance_prune() {
        let d = ds(vec![cat("L", &["a", "a", "a"]), num("x", &[1.0, 2.0, 3.0]), target(&[0.0; 3])]);
        let out = one_hot_encode(&d, &["L".into()]).unwrap();
        assert_eq!(out.numeric_dense("L=a").unwrap(), vec![1.0; 3]);
        let out = drop_low_variance(&out, DEFAULT_VARIANCE_EPS).unwrap();
        assert_eq!(out.feature_names(), vec!["x"]);
    }

    #[test]
    fn one_hot_rows_sum_to_one() {
        let d = ds(vec![cat("L", &["b", "a", "c", "a", "b"]), target(&[0.0; 5])]);
        let out = one_hot_encode(&d, &["L".into()]).unwrap();
        let m = out.feature_matrix().unwrap();
        assert_eq!(m.n_cols(), 3);
        for r in m.rows() {
            assert_eq!(r.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn one_hot_rejects_numeric() {
        let d = ds(vec![num("x", &[1.0]), target(&[0.0])]);
        assert!(matches!(
            one_hot_encode(&d, &["x".into()]).unwrap_err(),
            Error::ColumnKind { .. }
        ));
    }

    #[test]
    fn standardize_symmetry_and_round_trip() {
        let d = ds(vec![num("x", &[1.0, 2.0, 3.0]), target(&[7.0, 8.0, 9.0])]);
        let (s, params) = standardize(&d).unwrap();
        assert_eq!(s.numeric_dense("x").unwrap(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(s.target_values().unwrap(), vec![7.0, 8.0, 9.0]);
        let back = params.invert(&s).unwrap();
        for (a, b) in back.numeric_dense("x").unwrap().iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-9);
        }
        let (again, _) = standardize(&s).unwrap();
        for (a, b) in again.numeric_dense("x").unwrap().iter().zip(s.numeric_dense("x").unwrap()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn standardize_zero_std_errors() {
        let d = ds(vec![num("x", &[2.0, 2.0]), target(&[0.0; 2])]);
        assert!(matches!(standardize(&d).unwrap_err(), Error::ZeroVariance(_)));
    }

    fn grouped(groups: &[&str]) -> Dataset {
        ds(vec![cat("basin", groups), target(&vec![0.0; groups.len()])])
    }

    #[test]
    fn basin_weights_hand_computed() {
        // raw: A -> 1/sqrt(4) = 0.5, B -> 1; mean raw = (4*0.5 + 1)/5 = 0.6.
        let out = basin_weights(&grouped(&["A", "A", "A", "A", "B"]), "basin").unwrap();
        let w = out.weights();
        for x in &w[..4] {
            assert!((x - 5.0 / 6.0).abs() < 1e-12);
        }
        assert!((w[4] - 5.0 / 3.0).abs() < 1e-12);
        assert!((w.iter().sum::<f64>() / 5.0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn basin_weights_uniform_cases() {
        let out = basin_weights(&grouped(&["A", "B", "A", "B"]), "basin").unwrap();
        assert!(out.weights().iter().all(|&w| w == 1.0));
        let out = basin_weights(&grouped(&["A", "A", "A"]), "basin").unwrap();
        assert!(out.weights().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn basin_weights_errors() {
        assert!(matches!(
            basin_weights(&grouped(&[]), "basin").unwrap_err(),
            Error::EmptyDataset
        ));
        let k = Column::text(spec("basin", ColumnKind::Categorical), vec![Some("A".into()), None]);
        let d = ds(vec![k, target(&[0.0; 2])]);
        assert!(matches!(basin_weights(&d, "basin").unwrap_err(), Error::MissingGroup { row: 1, .. }));
    }

    #[test]
    fn external_density_override() {
        let mut dens = BTreeMap::new();
        dens.insert("A".to_string(), 4.0);
        dens.insert("B".to_string(), 1.0);
        let out = basin_weights_from_density(&grouped(&["A", "B"]), "basin", &dens).unwrap();
        let w = out.weights();
        assert!((w[1] / w[0] - 2.0).abs() < 1e-12);
        assert!((w[0] + w[1] - 2.0).abs() < 1e-12);
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ColumnKind, Dataset};
use crate::error::{Error, Result};

pub const DEFAULT_VALID_FRACTION: f64 = 0.2;

/// Disjoint train/validation row partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub rule: String,
}

/// Chronological tail split within each drill group.
///
/// Rows of a group are ordered by year (row order breaks ties); the last
/// `ceil(valid_fraction * n)` rows are held out, capped at `n - 1` so every
/// group keeps at least one training row. Single-row groups go to train.
pub fn temporal_split(ds: &Dataset, valid_fraction: f64) -> Result<SplitPlan> {
    if !(valid_fraction > 0.0 && valid_fraction < 1.0) {
        return Err(Error::InvalidParam(format!(
            "valid_fraction must lie in (0, 1), got {valid_fraction}"
        )));
    }
    let group_col = ds
        .column_of_kind(ColumnKind::GroupKey)
        .ok_or_else(|| Error::Schema("temporal split requires a group-key column".into()))?;
    let time_col = ds
        .column_of_kind(ColumnKind::TimeKey)
        .ok_or_else(|| Error::Schema("temporal split requires a time-key column".into()))?;
    let groups = ds.group_labels(&group_col.spec.name.clone())?;
    let years = ds.numeric_dense(&time_col.spec.name.clone())?;

    let mut by_group: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        by_group.entry(g.as_str()).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for rows in by_group.values_mut() {
        rows.sort_by(|&a, &b| years[a].total_cmp(&years[b]).then(a.cmp(&b)));
        let n = rows.len();
        let n_valid = if n < 2 {
            0
        } else {
            ((valid_fraction * n as f64 - 1e-9).ceil() as usize).min(n - 1)
        };
        train.extend_from_slice(&rows[..n - n_valid]);
        valid.extend_from_slice(&rows[n - n_valid..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    Ok(SplitPlan {
        train,
        valid,
        rule: format!(
            "temporal group={} time={} valid_fraction={valid_fraction}",
            group_col.spec.name, time_col.spec.name
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, ColumnSpec};

    fn fixture(rows: &[(&str, f64)]) -> Dataset {
        Dataset::new(
            vec![
                Column::text(
                    ColumnSpec::new("drill", ColumnKind::GroupKey),
                    rows.iter().map(|r| Some(r.0.to_string())).collect(),
                ),
                Column::numeric(
                    ColumnSpec::new("year", ColumnKind::TimeKey),
                    rows.iter().map(|r| Some(r.1)).collect(),
                ),
                Column::numeric(ColumnSpec::new("cl", ColumnKind::Target), vec![Some(0.0); rows.len()]),
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn chronological_tail() {
        // Rows deliberately out of order.
        let rows: Vec<(&str, f64)> = (0..10).rev().map(|k| ("D", 2000.0 + k as f64)).collect();
        let ds = fixture(&rows);
        let plan = temporal_split(&ds, 0.2).unwrap();
        let years = ds.numeric_dense("year").unwrap();
        let mut v: Vec<f64> = plan.valid.iter().map(|&i| years[i]).collect();
        v.sort_by(f64::total_cmp);
        assert_eq!(v, vec![2008.0, 2009.0]);
        assert_eq!(plan.train.len(), 8);
    }

    #[test]
    fn single_row_group_goes_to_train() {
        let plan = temporal_split(&fixture(&[("A", 2000.0)]), 0.2).unwrap();
        assert_eq!(plan.train, vec![0]);
        assert!(plan.valid.is_empty());
    }

    #[test]
    fn two_drills_of_five() {
        let mut rows = Vec::new();
        for k in 0..5 {
            rows.push(("A", 2000.0 + k as f64));
            rows.push(("B", 1990.0 + k as f64));
        }
        let ds = fixture(&rows);
        let plan = temporal_split(&ds, 0.2).unwrap();
        assert_eq!(plan.valid.len(), 2);
        let years = ds.numeric_dense("year").unwrap();
        let labels = ds.group_labels("drill").unwrap();
        let mut got: Vec<(String, f64)> = plan.valid.iter().map(|&i| (labels[i].clone(), years[i])).collect();
        got.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(got, vec![("A".into(), 2004.0), ("B".into(), 1994.0)]);
    }

    #[test]
    fn fraction_out_of_range() {
        let ds = fixture(&[("A", 2000.0)]);
        assert!(temporal_split(&ds, 0.0).is_err());
        assert!(temporal_split(&ds, 1.0).is_err());
    }
}

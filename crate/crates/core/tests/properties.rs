use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use salix_core::dataset::{
    basin_weights, one_hot_encode, standardize, temporal_split, Column, ColumnKind, ColumnSpec, Dataset,
};
use salix_core::dml::assign_folds;
use salix_core::metrics::{average_ranks, spearman};

struct Fixture {
    ds: Dataset,
    drills: Vec<String>,
}

fn fixture(rows: &[(u8, u8, u8, f64, f64)]) -> Fixture {
    let drills: Vec<String> = rows.iter().map(|r| format!("d{}", r.0)).collect();
    let text = |v: Vec<String>| v.into_iter().map(Some).collect();
    let num = |v: Vec<f64>| v.into_iter().map(Some).collect();
    let ds = Dataset::new(
        vec![
            Column::text(ColumnSpec::new("drill", ColumnKind::GroupKey), text(drills.clone())),
            Column::text(
                ColumnSpec::new("basin", ColumnKind::Categorical),
                text(rows.iter().map(|r| format!("b{}", r.0 % 3)).collect()),
            ),
            Column::numeric(
                ColumnSpec::new("year", ColumnKind::TimeKey),
                num(rows.iter().map(|r| 2000.0 + r.1 as f64).collect()),
            ),
            Column::text(
                ColumnSpec::new("soil", ColumnKind::Categorical),
                text(rows.iter().map(|r| ["clay", "loam", "sand", "silt"][r.2 as usize % 4].to_string()).collect()),
            ),
            Column::numeric(ColumnSpec::new("x", ColumnKind::Numeric), num(rows.iter().map(|r| r.3).collect())),
            Column::numeric(ColumnSpec::new("y", ColumnKind::Target), num(rows.iter().map(|r| r.4).collect())),
        ],
        None,
    )
    .unwrap();
    Fixture { ds, drills }
}

fn rows() -> impl Strategy<Value = Vec<(u8, u8, u8, f64, f64)>> {
    prop::collection::vec((0u8..8, 0u8..10, 0u8..4, -50.0f64..50.0, 0.0f64..3000.0), 2..60)
}

proptest! {
    #[test]
    fn one_hot_rows_sum_to_one(r in rows()) {
        let f = fixture(&r);
        let out = one_hot_encode(&f.ds, &["soil".to_string()]).unwrap();
        let cols: Vec<Vec<f64>> = out
            .column_names()
            .into_iter()
            .filter(|n| n.starts_with("soil="))
            .map(|n| out.numeric_dense(&n).unwrap())
            .collect();
        prop_assert!(!cols.is_empty());
        for i in 0..out.n_rows() {
            prop_assert_eq!(cols.iter().map(|c| c[i]).sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn basin_weights_follow_inverse_sqrt_counts(r in rows()) {
        let f = fixture(&r);
        let out = basin_weights(&f.ds, "basin").unwrap();
        let labels = out.group_labels("basin").unwrap();
        let mut counts = BTreeMap::<&str, f64>::new();
        for l in &labels {
            *counts.entry(l.as_str()).or_default() += 1.0;
        }
        let w = out.weights();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        prop_assert!((mean - 1.0).abs() < 1e-9);
        let k0 = w[0] * counts[labels[0].as_str()].sqrt();
        for (l, wi) in labels.iter().zip(w) {
            prop_assert!((wi * counts[l.as_str()].sqrt() - k0).abs() < 1e-9 * k0);
        }
    }

    #[test]
    fn standardize_round_trips(r in rows()) {
        let f = fixture(&r);
        let (scaled, params) = standardize(&f.ds).unwrap();
        let back = params.invert(&scaled).unwrap();
        let (a, b) = (f.ds.numeric_dense("x").unwrap(), back.numeric_dense("x").unwrap());
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() < 1e-9 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn temporal_split_partitions_and_orders(r in rows(), frac in 0.05f64..0.95) {
        let f = fixture(&r);
        let plan = temporal_split(&f.ds, frac).unwrap();
        let mut all: Vec<usize> = plan.train.iter().chain(&plan.valid).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..f.ds.n_rows()).collect::<Vec<_>>());
        let years = f.ds.numeric_dense("year").unwrap();
        for &v in &plan.valid {
            let same: Vec<&usize> = plan.train.iter().filter(|&&t| f.drills[t] == f.drills[v]).collect();
            prop_assert!(!same.is_empty());
            prop_assert!(same.iter().all(|&&t| years[t] <= years[v]));
        }
    }

    #[test]
    fn folds_never_split_a_group(groups in prop::collection::vec(0u8..30, 10..80), k in 2usize..6, seed in any::<u64>()) {
        let labels: Vec<String> = groups.iter().map(|g| format!("g{g}")).collect();
        let distinct = labels.iter().collect::<BTreeSet<_>>().len();
        match assign_folds(&labels, k, seed) {
            Ok(f) => {
                prop_assert!(distinct >= k);
                for i in 0..labels.len() {
                    for j in 0..labels.len() {
                        if labels[i] == labels[j] {
                            prop_assert_eq!(f[i], f[j]);
                        }
                    }
                }
                prop_assert_eq!(f.iter().collect::<BTreeSet<_>>().len(), k);
            }
            Err(_) => prop_assert!(distinct < k),
        }
    }

    #[test]
    fn ranks_and_spearman_are_well_formed(a in prop::collection::vec(-5i32..5, 2..30), b in prop::collection::vec(-5i32..5, 30)) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b[..a.len()].iter().map(|v| f64::from(*v)).collect();
        let n = a.len() as f64;
        prop_assert!((average_ranks(&a).iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
        let ab = spearman(&a, &b).unwrap();
        prop_assert_eq!(ab, spearman(&b, &a).unwrap());
        if let Some(r) = ab {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        }
    }
}

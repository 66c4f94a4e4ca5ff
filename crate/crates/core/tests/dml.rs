use salix_core::dataset::{Column, ColumnKind, ColumnSpec, Dataset};
use salix_core::dml::{dml_effect, dml_scan, residual_regression, DmlConfig, ResidualPair};
use salix_core::models::{fit_linear, ModelSpec};
use salix_core::pipeline::{prepare, PreprocessConfig};
use salix_core::synth::{gen_hydro, gen_linear_causal, SynthSpec};

fn covariates(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("x{i}")).collect()
}

fn linear() -> DmlConfig {
    DmlConfig {
        learner: ModelSpec::Linear,
        ..DmlConfig::default()
    }
}

#[test]
fn noiseless_linear_design_is_identified() {
    let (ds, truth) = gen_linear_causal(400, 4, 2.0, 0.0, 3).unwrap();
    let e = dml_effect(&ds, "t", "y", &covariates(4), &linear(), 1).unwrap();
    assert!((e.theta - truth.theta).abs() < 1e-6, "theta {}", e.theta);
}

#[test]
fn exact_residual_relation_gives_zero_stderr() {
    let t = vec![0.5, -1.0, 2.0, 0.25, -0.75, 1.5];
    let pair = ResidualPair {
        outcome: t.iter().map(|v| -3.0 * v).collect(),
        treatment: t,
        folds: vec![0, 1, 2, 0, 1, 2],
    };
    let (theta, se, _, p) = residual_regression("t", &pair, false).unwrap();
    assert!((theta + 3.0).abs() < 1e-12);
    assert!(se < 1e-12);
    assert_eq!(p, 0.0);
}

#[test]
fn linear_nuisance_tracks_multiple_regression() {
    let p = 4;
    for seed in 0..5 {
        let (ds, _) = gen_linear_causal(1500, p, 2.0, 1.0, seed).unwrap();
        let mut names = covariates(p);
        names.push("t".into());
        let x = ds.feature_matrix_of(&names).unwrap();
        let y = ds.target_values().unwrap();
        let ols = fit_linear(&x, &y, &vec![1.0; y.len()]).unwrap();
        let e = dml_effect(&ds, "t", "y", &covariates(p), &linear(), seed).unwrap();
        assert!(
            (e.theta - ols.coefficients[p]).abs() <= 2.0 * e.stderr,
            "seed {seed}: dml {} ols {} se {}",
            e.theta,
            ols.coefficients[p],
            e.stderr
        );
    }
}

#[test]
fn inert_hydro_columns_are_rarely_significant() {
    for inert in ["fishponds_n", "factories_n"] {
        let mut quiet = 0;
        for seed in 0..20u64 {
            let (ds, truth) = gen_hydro(&SynthSpec {
                seed,
                ..SynthSpec::default()
            })
            .unwrap();
            assert!(truth.inert.contains(&inert.to_string()));
            let d = prepare(&ds, &PreprocessConfig::default()).unwrap().data;
            let cov: Vec<String> = d
                .feature_names()
                .into_iter()
                .filter(|f| f != inert && f != "cl_mg_l")
                .collect();
            let e = dml_effect(&d, inert, "cl_mg_l", &cov, &DmlConfig::default(), seed).unwrap();
            quiet += (!e.significant) as usize;
        }
        assert!(quiet >= 17, "{inert}: non-significant in {quiet}/20 seeds");
    }
}

fn numeric(name: &str, kind: ColumnKind, v: &[f64]) -> Column {
    Column::numeric(ColumnSpec::new(name, kind), v.iter().map(|x| Some(*x)).collect())
}

#[test]
fn scan_sorts_by_magnitude_and_keeps_going_past_failures() {
    let n = 120;
    let a: Vec<f64> = (0..n).map(|i| ((i * 37) % 17) as f64).collect();
    let b: Vec<f64> = (0..n).map(|i| ((i * 11) % 13) as f64 / 4.0).collect();
    let noise: Vec<f64> = (0..n).map(|i| ((i * 7919) % 101) as f64 / 101.0 - 0.5).collect();
    let y: Vec<f64> = (0..n).map(|i| 0.5 * a[i] - 4.0 * b[i] + noise[i]).collect();
    let drills: Vec<Option<String>> = (0..n).map(|i| Some(format!("d{}", i % 12))).collect();
    let ds = Dataset::new(
        vec![
            Column::text(ColumnSpec::new("drill", ColumnKind::GroupKey), drills),
            numeric("a", ColumnKind::Numeric, &a),
            numeric("b", ColumnKind::Numeric, &b),
            numeric("flat", ColumnKind::Numeric, &vec![2.0; n]),
            numeric("y", ColumnKind::Target, &y),
        ],
        None,
    )
    .unwrap();
    let scan = dml_scan(&ds, "y", &linear(), 4).unwrap();
    let names: Vec<&str> = scan.estimates.iter().map(|e| e.treatment.as_str()).collect();
    assert_eq!(names, ["b", "a"]);
    assert!((scan.get("b").unwrap().theta + 4.0).abs() < 0.1);
    assert_eq!(scan.failures.len(), 1);
    assert_eq!(scan.failures[0].treatment, "flat");
    assert!(scan.to_markdown().contains("| b |"));
}

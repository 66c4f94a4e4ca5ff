use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use salix_core::dataset::SplitPlan;
use salix_core::frame::FeatureMatrix;
use salix_core::metrics::evaluate;
use salix_core::models::{
    fit, fit_gbt, fit_mlp, fit_random_forest, fit_tree, gbt_grid, grid_search, impurity_importance, Fitted,
    ForestParams, GbtParams, MlpParams, ModelSpec, Network, Optimizer, Predictor, TrainedModel, TreeParams,
};
use salix_core::Error;

fn line(n: usize) -> (FeatureMatrix, Vec<f64>) {
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64 * 4.0 - 2.0]).collect();
    let y = rows.iter().map(|r| 3.0 * r[0] + 1.0).collect();
    (FeatureMatrix::anonymous(1, &rows).unwrap(), y)
}

fn planted(n: usize, seed: u64) -> (FeatureMatrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y = rows
        .iter()
        .map(|r| (3.0 * r[0]).sin() * 4.0 + r[0] * r[0] + rng.random_range(-0.2..0.2))
        .collect();
    (FeatureMatrix::anonymous(5, &rows).unwrap(), y)
}

fn r2(model: &dyn Predictor, x: &FeatureMatrix, y: &[f64]) -> f64 {
    evaluate(y, &model.predict_block(x.as_slice()), None).unwrap().r2.unwrap()
}

#[test]
fn boosting_fits_a_line_with_monotone_loss() {
    let (x, y) = line(200);
    let m = fit_gbt(&x, &y, &vec![1.0; 200], &GbtParams::default()).unwrap();
    assert!(r2(&m, &x, &y) > 0.999);
    assert_eq!(m.train_loss.len(), 201);
    for pair in m.train_loss.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-12, "{} then {}", pair[0], pair[1]);
    }
}

#[test]
fn one_round_of_boosting_is_mean_plus_tree() {
    let (x, y) = planted(120, 1);
    let w = vec![1.0; 120];
    let tree = TreeParams {
        max_depth: 6,
        ..TreeParams::default()
    };
    let params = GbtParams {
        n_rounds: 1,
        learning_rate: 1.0,
        l2_leaf_regularization: 0.0,
        tree: tree.clone(),
        ..GbtParams::default()
    };
    let m = fit_gbt(&x, &y, &w, &params).unwrap();
    let mean = y.iter().sum::<f64>() / 120.0;
    let resid: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let t = fit_tree(&x, &resid, &w, &tree, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    for r in x.rows() {
        assert!((m.predict_row(r) - (mean + t.predict_row(r))).abs() < 1e-9);
    }
    let zero = GbtParams {
        n_rounds: 0,
        ..GbtParams::default()
    };
    assert!(fit_gbt(&x, &y, &w, &zero).is_err());
}

#[test]
fn single_unbootstrapped_tree_forest_equals_a_tree() {
    let (x, y) = planted(150, 2);
    let w = vec![1.0; 150];
    let tree = TreeParams {
        max_depth: 5,
        feature_subsample: 1.0,
        ..TreeParams::default()
    };
    let forest = fit_random_forest(
        &x,
        &y,
        &w,
        &ForestParams {
            n_trees: 1,
            tree: tree.clone(),
            bootstrap: false,
            seed: 3,
        },
    )
    .unwrap();
    let single = fit_tree(&x, &y, &w, &tree, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    for r in x.rows() {
        assert_eq!(forest.predict_row(r), single.predict_row(r));
    }
}

#[test]
fn forest_seeds_differ_but_agree_on_quality() {
    let (x, y) = planted(500, 4);
    let (xv, yv) = planted(300, 5);
    let w = vec![1.0; 500];
    let fit_seed = |seed| {
        fit_random_forest(
            &x,
            &y,
            &w,
            &ForestParams {
                seed,
                ..ForestParams::default()
            },
        )
        .unwrap()
    };
    let (a, b) = (fit_seed(1), fit_seed(2));
    assert_ne!(a.trees[0], b.trees[0]);
    assert!((r2(&a, &xv, &yv) - r2(&b, &xv, &yv)).abs() < 0.1);
    assert_eq!(a, fit_seed(1));
}

#[test]
fn constant_targets_give_constant_predictions() {
    let (x, _) = planted(60, 6);
    let y = vec![7.5; 60];
    let w = vec![1.0; 60];
    let forest = fit_random_forest(&x, &y, &w, &ForestParams::default()).unwrap();
    let gbt = fit_gbt(&x, &y, &w, &GbtParams::default()).unwrap();
    for r in x.rows() {
        assert_eq!(forest.predict_row(r), 7.5);
        assert!((gbt.predict_row(r) - 7.5).abs() < 1e-12);
    }
}

#[test]
fn importance_finds_the_planted_signal() {
    let (x, y) = planted(500, 7);
    for spec in [ModelSpec::default_for(salix_core::models::ModelKind::Forest), ModelSpec::default_for(salix_core::models::ModelKind::Gbt)] {
        let m = fit(&spec, &x, &y, &vec![1.0; 500]).unwrap();
        let imp = impurity_importance(&m).unwrap();
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let top = (0..5).max_by(|&a, &b| imp[a].total_cmp(&imp[b])).unwrap();
        assert_eq!(top, 0);
    }
    let lin = fit(&ModelSpec::Linear, &x, &y, &vec![1.0; 500]).unwrap();
    assert!(matches!(impurity_importance(&lin), Err(Error::Unsupported(_))));
}

#[test]
fn small_mlp_learns_a_line() {
    let (x, y) = line(200);
    let params = MlpParams {
        hidden_layers: vec![1],
        activation: salix_core::models::Activation::LeakyRelu,
        learning_rate: 0.01,
        ..MlpParams::default()
    };
    let net = fit_mlp(&x, &y, &vec![1.0; 200], &params).unwrap();
    assert!(r2(&net, &x, &y) > 0.9);
}

#[test]
fn full_batch_mlp_ignores_row_order() {
    let (x, y) = planted(64, 8);
    let params = MlpParams {
        batch_size: 64,
        epochs: 20,
        optimizer: Optimizer::SgdMomentum,
        learning_rate: 0.01,
        ..MlpParams::default()
    };
    let order: Vec<usize> = (0..64).rev().collect();
    let xp = x.select_rows(&order);
    let yp: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let a: Network = fit_mlp(&x, &y, &vec![1.0; 64], &params).unwrap();
    let b: Network = fit_mlp(&xp, &yp, &vec![1.0; 64], &params).unwrap();
    for (u, v) in a.params().iter().zip(b.params()) {
        assert!((u - v).abs() < 1e-9);
    }
}

#[test]
fn grid_search_picks_the_best_and_keeps_the_first_tie() {
    let (x, y) = planted(300, 9);
    let split = SplitPlan {
        train: (0..240).collect(),
        valid: (240..300).collect(),
        rule: "head/tail".into(),
    };
    let w = vec![1.0; 300];
    let grid = gbt_grid(&GbtParams::default(), &[1, 3], &[0.1], &[100]);
    let res = grid_search(&grid, &x, &y, &w, &split).unwrap();
    let best = res.table[res.best_index].valid_r2.unwrap();
    assert!(res.table.iter().all(|c| c.valid_r2.unwrap() <= best));

    let twins = vec![ModelSpec::Linear, ModelSpec::Linear];
    assert_eq!(grid_search(&twins, &x, &y, &w, &split).unwrap().best_index, 0);
}

#[test]
fn predictions_are_pure_and_checked_against_feature_names() {
    let (x, y) = planted(80, 10);
    let m = fit(&ModelSpec::default_for(salix_core::models::ModelKind::Gbt), &x, &y, &vec![1.0; 80]).unwrap();
    assert_eq!(m.predict(&x).unwrap(), m.predict(&x).unwrap());
    let empty = FeatureMatrix::new(x.names().to_vec(), 0, Vec::new()).unwrap();
    assert!(m.predict(&empty).unwrap().is_empty());
    let renamed = FeatureMatrix::new(
        vec!["x1".into(), "x2".into(), "x3".into(), "x4".into(), "zz".into()],
        x.n_rows(),
        x.as_slice().to_vec(),
    )
    .unwrap();
    match m.predict(&renamed).unwrap_err() {
        Error::FeatureMismatch(names) => assert!(names.contains(&"zz".to_string()) && names.contains(&"x5".to_string())),
        other => panic!("unexpected {other}"),
    }
    let back = TrainedModel::from_json(&m.to_json().unwrap()).unwrap();
    assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());
    assert!(matches!(back.fitted, Fitted::Gbt(_)));
}

#[test]
fn linear_model_at_the_mean_predicts_intercept_plus_slope_times_mean() {
    let (x, y) = planted(100, 11);
    let m = fit(&ModelSpec::Linear, &x, &y, &vec![1.0; 100]).unwrap();
    let Fitted::Linear(lin) = &m.fitted else { panic!() };
    let mean: Vec<f64> = (0..5).map(|j| x.column(j).iter().sum::<f64>() / 100.0).collect();
    let expect = lin.intercept + lin.coefficients.iter().zip(&mean).map(|(b, v)| b * v).sum::<f64>();
    assert!((lin.predict_row(&mean) - expect).abs() < 1e-12);
    // OLS with an intercept passes through the mean point.
    assert!((expect - y.iter().sum::<f64>() / 100.0).abs() < 1e-9);
}

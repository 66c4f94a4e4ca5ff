//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use salix_core::attribution::{rank_compare, shap_exact, shap_kernel, sobol_design, sobol_indices, Background};
use salix_core::dataset::ColumnKind;
use salix_core::dml::{dml_effect, DmlConfig};
use salix_core::frame::FeatureMatrix;
use salix_core::metrics::spearman;
use salix_core::models::{
    fit_gbt, Activation, GbtParams, LinearModel, ModelKind, ModelSpec, Network, Predictor, TreeParams,
};
use salix_core::pipeline::{
    prepare, run_gsa, run_pipeline, run_rfe, run_shap, train_model, AttributionConfig, PreprocessConfig, RunConfig,
};
use salix_core::stats::pearson;
use salix_core::synth::{gen_hydro, gen_ishigami, gen_linear_causal, SynthSpec};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> FeatureMatrix {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    FeatureMatrix::anonymous(p, &rows).unwrap()
}

fn sobol_oracle() -> Outcome {
    let start = Instant::now();
    let (f, truth) = gen_ishigami();
    let design = sobol_design(&f.bounds(), 1 << 14, None).map_err(err)?;
    let idx = sobol_indices(&f, &design, 100, 7).map_err(err)?;
    let elapsed = start.elapsed();
    let d1 = (0..3).map(|i| (idx.s1[i] - truth.s1[i]).abs()).fold(0.0, f64::max);
    let dt = (0..3).map(|i| (idx.st[i] - truth.st[i]).abs()).fold(0.0, f64::max);
    check(
        d1 <= 0.03 && dt <= 0.05 && elapsed < Duration::from_secs(30),
        format!(
            "S1 {:.4?} (max err {d1:.4}), ST {:.4?} (max err {dt:.4}), {:.2}s",
            idx.s1,
            idx.st,
            elapsed.as_secs_f64()
        ),
    )
}

fn shap_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    // Linear model: phi_j = beta_j (x_j - mean_j) over the background.
    let p = 6;
    let model = LinearModel {
        intercept: 0.7,
        coefficients: vec![1.5, -2.0, 0.25, 3.0, 0.0, -0.8],
    };
    let bg_x = random_matrix(&mut rng, 64, p);
    let bg = Background::from_matrix(&bg_x, "random").map_err(err)?;
    let means: Vec<f64> = (0..p).map(|j| bg_x.column(j).iter().sum::<f64>() / 64.0).collect();
    let (mut lin_gap, mut lin_eff) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let x: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (phi, base) = shap_exact(&model, &x, &bg).map_err(err)?;
        for j in 0..p {
            lin_gap = lin_gap.max((phi[j] - model.coefficients[j] * (x[j] - means[j])).abs());
        }
        lin_eff = lin_eff.max((phi.iter().sum::<f64>() - (model.predict_row(&x) - base)).abs());
    }

    // 8-feature GBT with interactions: kernel vs exact enumeration.
    let p = 8;
    let train = random_matrix(&mut rng, 400, p);
    let y: Vec<f64> = train
        .rows()
        .map(|r| 2.0 * r[0] + r[1] * r[2] + (r[3] > 0.0) as u8 as f64 * 3.0 - r[4].abs() + 0.5 * r[5] * r[6])
        .collect();
    let params = GbtParams {
        n_rounds: 60,
        tree: TreeParams {
            max_depth: 3,
            ..TreeParams::default()
        },
        ..GbtParams::default()
    };
    let gbt = fit_gbt(&train, &y, &vec![1.0; 400], &params).map_err(err)?;
    let bg = Background::sample(&train, 40, 3).map_err(err)?;
    let bg_pred = gbt.predict_block(&bg.rows);
    let range = bg_pred.iter().cloned().fold(f64::MIN, f64::max) - bg_pred.iter().cloned().fold(f64::MAX, f64::min);
    let (mut k_gap, mut ex_eff, mut k_eff) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..10 {
        let x = train.row(i * 7).to_vec();
        let (exact, base) = shap_exact(&gbt, &x, &bg).map_err(err)?;
        let (kernel, kbase) = shap_kernel(&gbt, &x, &bg, 2000, i as u64).map_err(err)?;
        let fx = gbt.predict_row(&x);
        for j in 0..p {
            k_gap = k_gap.max((exact[j] - kernel[j]).abs());
        }
        ex_eff = ex_eff.max((exact.iter().sum::<f64>() - (fx - base)).abs());
        k_eff = k_eff.max((kernel.iter().sum::<f64>() - (fx - kbase)).abs());
    }
    check(
        lin_gap <= 1e-9 && lin_eff <= 1e-9 && k_gap <= 0.02 * range && ex_eff <= 1e-9 && k_eff <= 1e-9,
        format!(
            "linear max |phi - beta(x - mean)| {lin_gap:.2e}; kernel vs exact max gap {k_gap:.2e} \
             (limit {:.2e}); efficiency gaps linear {lin_eff:.1e}, exact {ex_eff:.1e}, kernel {k_eff:.1e}",
            0.02 * range
        ),
    )
}

fn covariates(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("x{i}")).collect()
}

fn dml_oracle() -> Outcome {
    let p = 5;
    let cfg = DmlConfig::default();
    let (mut covered, mut null_ok) = (0, 0);
    for seed in 0..20u64 {
        let (ds, _) = gen_linear_causal(2000, p, 2.0, 1.0, seed).map_err(err)?;
        let e = dml_effect(&ds, "t", "y", &covariates(p), &cfg, seed).map_err(err)?;
        covered += ((e.theta - 2.0).abs() <= 2.0 * e.stderr) as usize;
        let (ds, _) = gen_linear_causal(2000, p, 0.0, 1.0, 100 + seed).map_err(err)?;
        let e = dml_effect(&ds, "t", "y", &covariates(p), &cfg, seed).map_err(err)?;
        null_ok += (e.p_value > 0.05) as usize;
    }

    let linear = DmlConfig {
        learner: ModelSpec::Linear,
        ..DmlConfig::default()
    };
    let (ds, _) = gen_linear_causal(2000, p, 2.0, 1.0, 5).map_err(err)?;
    let base = dml_effect(&ds, "t", "y", &covariates(p), &linear, 9).map_err(err)?;
    let t = ds.numeric_dense("t").map_err(err)?;
    let (mut dt, mut dp) = (0.0f64, 0.0f64);
    for (a, b) in [(3.7, 0.0), (-0.25, 12.0), (1e3, -5.0)] {
        let scaled = ds
            .with_numeric_column("t", t.iter().map(|v| a * v + b).collect())
            .map_err(err)?;
        let e = dml_effect(&scaled, "t", "y", &covariates(p), &linear, 9).map_err(err)?;
        dt = dt.max((e.t_stat.abs() - base.t_stat.abs()).abs());
        dp = dp.max((e.p_value - base.p_value).abs());
    }
    check(
        covered >= 18 && null_ok >= 17 && dt <= 1e-9 && dp <= 1e-9,
        format!("coverage {covered}/20, null p > 0.05 in {null_ok}/20, affine |dt| {dt:.1e}, |dp| {dp:.1e}"),
    )
}

fn model_ordering() -> Outcome {
    let start = Instant::now();
    let kinds = [ModelKind::Linear, ModelKind::Forest, ModelKind::Gbt];
    let mut r2: Vec<Vec<f64>> = vec![Vec::new(); 3];
    for seed in 0..5u64 {
        let (ds, _) = gen_hydro(&SynthSpec {
            seed,
            ..SynthSpec::default()
        })
        .map_err(err)?;
        let prep = prepare(&ds, &PreprocessConfig::default()).map_err(err)?;
        for (slot, k) in kinds.iter().enumerate() {
            let (_, rep) = train_model(&prep, &ModelSpec::default_for(*k), seed, slot).map_err(err)?;
            r2[slot].push(rep.valid.r2.ok_or("validation R2 undefined")?);
        }
    }
    let elapsed = start.elapsed();
    let m: Vec<f64> = r2.into_iter().map(median).collect();
    check(
        m[2] > m[1] && m[1] > m[0] && m[2] > 0.5 && elapsed < Duration::from_secs(120),
        format!(
            "median validation R2: gbt {:.4} > forest {:.4} > linear {:.4}, {:.1}s",
            m[2],
            m[1],
            m[0],
            elapsed.as_secs_f64()
        ),
    )
}

fn preprocessing_contracts() -> Outcome {
    let (ds, _) = gen_hydro(&SynthSpec::default()).map_err(err)?;
    let prep = prepare(&ds, &PreprocessConfig::default()).map_err(err)?;
    let d = &prep.data;
    let mut problems = Vec::new();

    let y = d.target_values().map_err(err)?;
    let max_y = y.iter().cloned().fold(f64::MIN, f64::max);
    if max_y > 4000.0 {
        problems.push(format!("max target {max_y}"));
    }
    if d.missing_cells() != 0 {
        problems.push(format!("{} missing cells", d.missing_cells()));
    }

    let names: Vec<String> = d.feature_names().into_iter().filter(|n| n != d.target_name()).collect();
    let cols: Vec<Vec<f64>> = names.iter().map(|n| d.numeric_dense(n)).collect::<Result<_, _>>().map_err(err)?;
    let mut max_r = 0.0f64;
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            if let Some(r) = pearson(&cols[i], &cols[j]) {
                max_r = max_r.max(r.abs());
            }
        }
    }
    if max_r > 0.95 {
        problems.push(format!("predictor pair with |r| {max_r:.4}"));
    }

    let basins = d.group_labels("basin").map_err(err)?;
    let w = d.weights();
    let mut counts = std::collections::BTreeMap::<&str, usize>::new();
    for b in &basins {
        *counts.entry(b.as_str()).or_default() += 1;
    }
    // w * sqrt(n_g) must be one constant across all rows.
    let k: Vec<f64> = basins.iter().zip(w).map(|(b, w)| w * (counts[b.as_str()] as f64).sqrt()).collect();
    let spread = k.iter().map(|v| (v - k[0]).abs()).fold(0.0, f64::max);
    let mean_w = w.iter().sum::<f64>() / w.len() as f64;
    if spread > 1e-9 * k[0] || (mean_w - 1.0).abs() > 1e-9 {
        problems.push(format!("weights: w*sqrt(n_g) spread {spread:.1e}, mean {mean_w}"));
    }

    let drills = d.drill_labels().map_err(err)?;
    let year_col = d.column_of_kind(ColumnKind::TimeKey).ok_or("no time key")?.name().to_string();
    let years = d.numeric_dense(&year_col).map_err(err)?;
    let mut last_train = std::collections::BTreeMap::<&str, f64>::new();
    for &i in &prep.split.train {
        let e = last_train.entry(drills[i].as_str()).or_insert(f64::MIN);
        *e = e.max(years[i]);
    }
    let mut order_violations = 0;
    for &i in &prep.split.valid {
        match last_train.get(drills[i].as_str()) {
            Some(&t) if years[i] >= t => {}
            _ => order_violations += 1,
        }
    }
    if order_violations > 0 {
        problems.push(format!("{order_violations} validation rows precede or lack their drill's training rows"));
    }
    let detail = format!(
        "max target {max_y:.1}, max |r| {max_r:.4}, missing {}, weight mean {mean_w:.12}, {} train / {} valid",
        d.missing_cells(),
        prep.split.train.len(),
        prep.split.valid.len()
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}

fn triangulation() -> Outcome {
    let (ds, truth) = gen_hydro(&SynthSpec::default()).map_err(err)?;
    let prep = prepare(&ds, &PreprocessConfig::default()).map_err(err)?;
    let a = AttributionConfig::default();
    let (model, _) = train_model(&prep, &ModelSpec::default_for(ModelKind::Gbt), 0, 2).map_err(err)?;
    let (_, rfe) = run_rfe(&prep, &a, 0).map_err(err)?;
    let (shap, _) = run_shap(&prep, &model, &a, 0).map_err(err)?;
    let (s1, st, _) = run_gsa(&prep, &model, &a, 0).map_err(err)?;
    let mut problems = Vec::new();
    for r in [&rfe, &shap, &s1, &st] {
        let top5 = r.top(5);
        for d in &truth.top_drivers {
            if !top5.contains(&d.as_str()) {
                problems.push(format!("{} misses {d} in top 5 {top5:?}", r.method.as_str()));
            }
        }
    }

    let cmp = rank_compare(&[rfe, shap, s1, st]).map_err(err)?;
    let m = cmp.rho.len();
    for i in 0..m {
        if cmp.rho[i][i] != Some(1.0) {
            problems.push(format!("diagonal {i} is {:?}", cmp.rho[i][i]));
        }
        for j in 0..m {
            if cmp.rho[i][j] != cmp.rho[j][i] {
                problems.push(format!("asymmetric at ({i}, {j})"));
            }
        }
    }

    let ident = [1.0, 2.0, 3.0, 4.0, 5.0];
    let mut worst = 0.0f64;
    let perms = permutations(5);
    for p in &perms {
        let b: Vec<f64> = p.iter().map(|&v| v as f64 + 1.0).collect();
        let d2: f64 = ident.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        let closed = 1.0 - 6.0 * d2 / (5.0 * 24.0);
        let got = spearman(&ident, &b).map_err(err)?.ok_or("spearman undefined")?;
        worst = worst.max((got - closed).abs());
    }
    if perms.len() != 120 || worst > 1e-12 {
        problems.push(format!("spearman vs d2 formula: {} permutations, max gap {worst:.1e}", perms.len()));
    }
    let detail = format!(
        "planted top-3 {:?}; {m}x{m} rank matrix; spearman max gap {worst:.1e} over {} permutations",
        truth.top_drivers,
        perms.len()
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

fn mlp_gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let net = Network::init(2, &[3], Activation::Relu, &mut rng);
        let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let y = [rng.random_range(-1.0..1.0)];
        let rows: [&[f64]; 1] = [&x];
        let (_, grad) = net.loss_and_gradient(&rows, &y, &[1.0]);
        let theta = net.params();
        for k in 0..theta.len() {
            let mut probe = net.clone();
            let mut t = theta.clone();
            t[k] += h;
            probe.set_params(&t);
            let up = probe.loss_and_gradient(&rows, &y, &[1.0]).0;
            t[k] -= 2.0 * h;
            probe.set_params(&t);
            let down = probe.loss_and_gradient(&rows, &y, &[1.0]).0;
            let numeric = (up - down) / (2.0 * h);
            let scale = grad[k].abs().max(numeric.abs());
            if scale > 1e-10 {
                worst = worst.max((grad[k] - numeric).abs() / scale);
            }
        }
    }
    check(worst < 1e-4, format!("max relative error {worst:.2e} over 5 points of a 2-3-1 network"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let cfg = RunConfig {
        synth: Some(SynthSpec {
            n_drills: 40,
            years_per_drill: 10,
            basin_sizes: vec![16, 12, 6, 4, 2],
            seed: 3,
            ..SynthSpec::default()
        }),
        out_dir: dir.path().to_path_buf(),
        seed: 17,
        ..RunConfig::default()
    };
    let path = dir.path().join("report.json");
    run_pipeline(&cfg).map_err(err)?;
    let first = std::fs::read(&path).map_err(err)?;
    run_pipeline(&cfg).map_err(err)?;
    let second = std::fs::read(&path).map_err(err)?;
    check(
        first == second,
        format!("report.json {} bytes on first run, {} on rerun", first.len(), second.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("sobol oracle", sobol_oracle),
        ("shap exactness", shap_exactness),
        ("dml oracle", dml_oracle),
        ("model ordering", model_ordering),
        ("preprocessing contracts", preprocessing_contracts),
        ("attribution triangulation", triangulation),
        ("mlp gradient check", mlp_gradient_check),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

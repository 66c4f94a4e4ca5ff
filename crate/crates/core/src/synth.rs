//! Synthetic generators with planted ground truth.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, ColumnKind, ColumnSpec, Dataset};
use crate::error::{Error, Result};
use crate::models::{stream_seed, Predictor};

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("finite sd").sample(rng)
}

// ---------------------------------------------------------------------------
// Linear causal design

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCausalTruth {
    pub theta: f64,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub rho: f64,
    pub noise_sd: f64,
    pub treatment: String,
    pub outcome: String,
}

/// `X ~ N(0, Σ)` with AR(1) correlation `ρ = 0.3`, `T = Xγ + ν` with
/// `ν ~ N(0, 1)`, `Y = θT + Xβ + ε` with `ε ~ N(0, noise_sd²)`.
/// Columns `x1..xp`, `t`, and the target `y`; no group key, so every row is
/// its own fold group.
pub fn gen_linear_causal(
    n: usize,
    p: usize,
    theta: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<(Dataset, LinearCausalTruth)> {
    if n < 50 || p < 1 {
        return Err(Error::InvalidParam(format!("need n >= 50 and p >= 1, got n={n}, p={p}")));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidParam("noise_sd must be finite and nonnegative".into()));
    }
    const RHO: f64 = 0.3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
    let innov_sd = (1.0 - RHO * RHO).sqrt();
    let mut xs = vec![Vec::with_capacity(n); p];
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut prev = normal(&mut rng, 0.0, 1.0);
        let mut row = Vec::with_capacity(p);
        row.push(prev);
        for _ in 1..p {
            prev = RHO * prev + normal(&mut rng, 0.0, innov_sd);
            row.push(prev);
        }
        let ti = row.iter().zip(&gamma).map(|(a, b)| a * b).sum::<f64>() + normal(&mut rng, 0.0, 1.0);
        let eps = if noise_sd > 0.0 { normal(&mut rng, 0.0, noise_sd) } else { 0.0 };
        y.push(theta * ti + row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + eps);
        t.push(ti);
        for (c, v) in xs.iter_mut().zip(row) {
            c.push(v);
        }
    }
    let wrap = |v: Vec<f64>| v.into_iter().map(Some).collect();
    let mut columns: Vec<Column> = xs
        .into_iter()
        .enumerate()
        .map(|(j, c)| Column::numeric(ColumnSpec::new(format!("x{}", j + 1), ColumnKind::Numeric), wrap(c)))
        .collect();
    columns.push(Column::numeric(ColumnSpec::new("t", ColumnKind::Numeric), wrap(t)));
    columns.push(Column::numeric(ColumnSpec::new("y", ColumnKind::Target), wrap(y)));
    let ds = Dataset::new(columns, None)?;
    Ok((
        ds,
        LinearCausalTruth {
            theta,
            gamma,
            beta,
            rho: RHO,
            noise_sd,
            treatment: "t".into(),
            outcome: "y".into(),
        },
    ))
}

// ---------------------------------------------------------------------------
// Ishigami

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ishigami {
    pub a: f64,
    pub b: f64,
}

impl Default for Ishigami {
    fn default() -> Self {
        Self { a: 7.0, b: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IshigamiTruth {
    pub variance: f64,
    pub s1: [f64; 3],
    pub st: [f64; 3],
}

impl Ishigami {
    pub fn bounds(&self) -> [(f64, f64); 3] {
        [(-PI, PI); 3]
    }

    /// Closed-form variance decomposition for inputs uniform on `[-π, π]³`.
    pub fn truth(&self) -> IshigamiTruth {
        let (a, b) = (self.a, self.b);
        let v1 = 0.5 * (1.0 + b * PI.powi(4) / 5.0).powi(2);
        let v2 = a * a / 8.0;
        let v13 = 8.0 * b * b * PI.powi(8) / 225.0;
        let v = v1 + v2 + v13;
        IshigamiTruth {
            variance: v,
            s1: [v1 / v, v2 / v, 0.0],
            st: [(v1 + v13) / v, v2 / v, v13 / v],
        }
    }
}

impl Predictor for Ishigami {
    fn n_features(&self) -> usize {
        3
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        x[0].sin() + self.a * x[1].sin().powi(2) + self.b * x[2].powi(4) * x[0].sin()
    }
}

/// The standard Ishigami test function (a = 7, b = 0.1) and its analytic indices.
pub fn gen_ishigami() -> (Ishigami, IshigamiTruth) {
    let f = Ishigami::default();
    (f, f.truth())
}

// ---------------------------------------------------------------------------
// Borehole-year hydro table

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum EffectForm {
    /// `coef * x`
    Linear,
    /// `coef * max(0, x - at)`
    Threshold { at: f64 },
    /// `coef * x * with`
    Interaction { with: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Effect {
    /// Column name, or `column=level` for a categorical indicator.
    pub feature: String,
    pub coefficient: f64,
    pub form: EffectForm,
}

impl Effect {
    pub fn linear(feature: &str, coefficient: f64) -> Self {
        Self {
            feature: feature.into(),
            coefficient,
            form: EffectForm::Linear,
        }
    }

    pub fn threshold(feature: &str, coefficient: f64, at: f64) -> Self {
        Self {
            feature: feature.into(),
            coefficient,
            form: EffectForm::Threshold { at },
        }
    }

    pub fn interaction(feature: &str, with: &str, coefficient: f64) -> Self {
        Self {
            feature: feature.into(),
            coefficient,
            form: EffectForm::Interaction { with: with.into() },
        }
    }
}

pub const HYDRO_FEATURES: [&str; 17] = [
    "precip_mm",
    "max_temp_c",
    "twi",
    "dist_saline_m",
    "dist_river_m",
    "shoreline_dist_m",
    "drill_depth_m",
    "tww_cl_mg_l",
    "tww_irrigated_area_m2",
    "agri_field_area_m2",
    "clay_pct",
    "sand_pct",
    "silt_pct",
    "lulc",
    "population_density",
    "fishponds_n",
    "factories_n",
];

const HYDRO_UNITS: [&str; 17] = [
    "mm/yr", "degC", "index", "m", "m", "m", "m", "mg/L", "m2", "m2", "%", "%", "%", "", "people/km2", "count", "count",
];

const LULC_LEVELS: [&str; 3] = ["agri", "natural", "urban"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_drills: usize,
    pub years_per_drill: usize,
    pub basin_sizes: Vec<usize>,
    pub intercept: f64,
    pub effects: Vec<Effect>,
    pub noise_sd: f64,
    /// Share of feature cells blanked at random.
    pub missing_rate: f64,
    /// Rows whose target is pushed above 4000 mg/L.
    pub n_outliers: usize,
    pub start_year: i64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_drills: 200,
            years_per_drill: 15,
            basin_sizes: vec![80, 60, 30, 20, 10],
            intercept: 1100.0,
            effects: vec![
                Effect::linear("precip_mm", -1.4),
                Effect::linear("twi", 25.0),
                Effect::threshold("twi", 100.0, 9.0),
                Effect::linear("max_temp_c", 12.0),
                Effect::linear("dist_saline_m", -0.12),
                Effect::threshold("dist_saline_m", 0.11, 3000.0),
                Effect::interaction("tww_cl_mg_l", "tww_irrigated_area_m2", 2e-5),
                Effect::linear("drill_depth_m", 0.8),
                Effect::linear("clay_pct", 2.0),
                Effect::linear("population_density", 0.05),
                Effect::linear("lulc=agri", 20.0),
            ],
            noise_sd: 60.0,
            missing_rate: 0.02,
            n_outliers: 6,
            start_year: 2005,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(format!("synth spec: {m}")));
        if self.basin_sizes.iter().sum::<usize>() != self.n_drills {
            return bad(format!(
                "basin sizes sum to {}, n_drills is {}",
                self.basin_sizes.iter().sum::<usize>(),
                self.n_drills
            ));
        }
        if self.basin_sizes.contains(&0) {
            return bad("empty basin".into());
        }
        if self.years_per_drill == 0 {
            return bad("years_per_drill must be positive".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd must be finite and nonnegative".into());
        }
        if !(0.0..0.5).contains(&self.missing_rate) {
            return bad("missing_rate must be in [0, 0.5)".into());
        }
        if self.n_outliers > self.n_drills * self.years_per_drill {
            return bad("more outliers than rows".into());
        }
        for e in &self.effects {
            let base = e.feature.split('=').next().unwrap_or_default();
            if !HYDRO_FEATURES.contains(&base) {
                return bad(format!("unknown effect feature `{}`", e.feature));
            }
            if base == "lulc" && !LULC_LEVELS.iter().any(|l| e.feature == format!("lulc={l}")) {
                return bad(format!("lulc effects name a level, e.g. `lulc=agri`, got `{}`", e.feature));
            }
            if let EffectForm::Interaction { with } = &e.form {
                if !HYDRO_FEATURES.contains(&with.as_str()) || with == "lulc" {
                    return bad(format!("interaction on `{}` needs a numeric partner, got `{with}`", e.feature));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydroTruth {
    pub intercept: f64,
    pub effects: Vec<Effect>,
    /// Net direction of each planted feature's effect.
    pub signs: BTreeMap<String, i8>,
    /// Columns with no effect on the target.
    pub inert: Vec<String>,
    /// Planted features ordered by the variance of their contribution, largest first.
    pub drivers_by_variance: Vec<String>,
    pub top_drivers: Vec<String>,
    pub noise_sd: f64,
    pub outlier_rows: Vec<usize>,
    pub target: String,
}

struct Row {
    values: BTreeMap<&'static str, f64>,
    lulc: &'static str,
}

impl Row {
    fn get(&self, name: &str) -> f64 {
        match name.split_once('=') {
            Some((_, level)) => f64::from(u8::from(self.lulc == level)),
            None => self.values[name],
        }
    }
}

fn effect_value(e: &Effect, row: &Row) -> f64 {
    let x = row.get(&e.feature);
    e.coefficient
        * match &e.form {
            EffectForm::Linear => x,
            EffectForm::Threshold { at } => (x - at).max(0.0),
            EffectForm::Interaction { with } => x * row.get(with),
        }
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

/// Borehole-year table: drills nested in basins, one row per drill-year.
///
/// Static per drill: TWI, distances, depth, soil texture, land use.
/// Varying by year: rainfall (basin-level climate plus a basin-year shock),
/// temperature, wastewater chloride and irrigated area, population, and the
/// inert counts (drawn per row). The
/// target is `intercept + sum(effects) + N(0, noise_sd²)` floored at 5 mg/L,
/// then missing cells and outliers are injected.
pub fn gen_hydro(spec: &SynthSpec) -> Result<(Dataset, HydroTruth)> {
    spec.validate()?;
    let seed = spec.seed;
    let years = spec.years_per_drill;
    let n_basins = spec.basin_sizes.len();
    let mut climate = ChaCha8Rng::seed_from_u64(stream_seed(seed, u64::MAX));
    let precip_shock: Vec<Vec<f64>> = (0..n_basins)
        .map(|_| (0..years).map(|_| normal(&mut climate, 0.0, 70.0)).collect())
        .collect();
    let temp_shock: Vec<f64> = (0..years).map(|_| normal(&mut climate, 0.0, 1.0)).collect();
    let tww_year: Vec<f64> = (0..years).map(|_| normal(&mut climate, 250.0, 25.0)).collect();

    let mut drill_col = Vec::new();
    let mut basin_col = Vec::new();
    let mut year_col = Vec::new();
    let mut rows: Vec<Row> = Vec::new();
    let mut drill = 0usize;
    for (b, &size) in spec.basin_sizes.iter().enumerate() {
        let basin_precip = 620.0 - 70.0 * b as f64;
        for _ in 0..size {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, drill as u64));
            let twi = normal(&mut rng, 8.0, 2.5).clamp(2.0, 16.0);
            let dist_saline = rng.random_range(200.0..20000.0);
            let dist_river = rng.random_range(100.0..10000.0);
            let shoreline = (0.6 * dist_saline + normal(&mut rng, 0.0, 3000.0)).max(50.0);
            let depth = normal(&mut rng, 80.0, 30.0).clamp(10.0, 250.0);
            let clay = rng.random_range(5.0..45.0);
            let silt = rng.random_range(10.0..40.0);
            let sand = (100.0 - clay - silt + normal(&mut rng, 0.0, 3.0)).max(0.0);
            let lulc = match rng.random_range(0.0..1.0) {
                u if u < 0.5 => "agri",
                u if u < 0.8 => "natural",
                _ => "urban",
            };
            let agri_base = rng.random_range(0.0..100_000.0);
            let pop_base = LogNormal::new(5.5, 0.6).expect("valid").sample(&mut rng);
            for t in 0..years {
                let precip = (basin_precip + precip_shock[b][t] + normal(&mut rng, 0.0, 40.0)).clamp(150.0, 1000.0);
                let values = BTreeMap::from([
                    ("precip_mm", precip),
                    ("max_temp_c", 30.0 + temp_shock[t] + 0.3 * b as f64 + normal(&mut rng, 0.0, 1.5)),
                    ("twi", twi),
                    ("dist_saline_m", dist_saline),
                    ("dist_river_m", dist_river),
                    ("shoreline_dist_m", shoreline),
                    ("drill_depth_m", depth),
                    ("tww_cl_mg_l", tww_year[t] + normal(&mut rng, 0.0, 20.0)),
                    ("tww_irrigated_area_m2", rng.random_range(0.0..40_000.0)),
                    ("agri_field_area_m2", agri_base * (1.0 + normal(&mut rng, 0.0, 0.05))),
                    ("clay_pct", clay),
                    ("sand_pct", sand),
                    ("silt_pct", silt),
                    ("population_density", pop_base * (1.0 + 0.01 * t as f64)),
                    ("fishponds_n", f64::from(rng.random_range(0..=5u8))),
                    ("factories_n", f64::from(rng.random_range(0..=3u8))),
                ]);
                rows.push(Row { values, lulc });
                drill_col.push(Some(format!("D{:03}", drill + 1)));
                basin_col.push(Some(format!("B{}", b + 1)));
                year_col.push(Some((spec.start_year + t as i64) as f64));
            }
            drill += 1;
        }
    }
    let n = rows.len();

    let mut noise_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, u64::MAX - 1));
    let contributions: Vec<Vec<f64>> = spec.effects.iter().map(|e| rows.iter().map(|r| effect_value(e, r)).collect()).collect();
    let mut target: Vec<f64> = (0..n)
        .map(|i| {
            let signal = spec.intercept + contributions.iter().map(|c| c[i]).sum::<f64>();
            let eps = if spec.noise_sd > 0.0 { normal(&mut noise_rng, 0.0, spec.noise_sd) } else { 0.0 };
            signal + eps
        })
        .collect();
    if spec.noise_sd > 0.0 {
        target.iter_mut().for_each(|v| *v = v.max(5.0));
    }
    let mut outlier_rows = sample(&mut noise_rng, n, spec.n_outliers).into_vec();
    outlier_rows.sort_unstable();
    for &i in &outlier_rows {
        target[i] = 4000.0 + noise_rng.random_range(200.0..2000.0);
    }

    let mut miss_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, u64::MAX - 2));
    let blank = |rng: &mut ChaCha8Rng| spec.missing_rate > 0.0 && rng.random::<f64>() < spec.missing_rate;
    let mut columns = vec![
        Column::text(ColumnSpec::new("drill", ColumnKind::GroupKey), drill_col),
        Column::text(ColumnSpec::new("basin", ColumnKind::Categorical), basin_col),
        Column::numeric(ColumnSpec::new("year", ColumnKind::TimeKey), year_col),
    ];
    for (name, units) in HYDRO_FEATURES.iter().zip(HYDRO_UNITS) {
        let mut spec_col = ColumnSpec::new(*name, if *name == "lulc" { ColumnKind::Categorical } else { ColumnKind::Numeric });
        if !units.is_empty() {
            spec_col = spec_col.with_units(units);
        }
        let col = if *name == "lulc" {
            let v = rows
                .iter()
                .map(|r| (!blank(&mut miss_rng)).then(|| r.lulc.to_string()))
                .collect();
            Column::text(spec_col, v)
        } else {
            let v = rows.iter().map(|r| (!blank(&mut miss_rng)).then(|| r.values[name])).collect();
            Column::numeric(spec_col, v)
        };
        columns.push(col);
    }
    columns.push(Column::numeric(
        ColumnSpec::new("cl_mg_l", ColumnKind::Target).with_units("mg/L"),
        target.into_iter().map(Some).collect(),
    ));
    let ds = Dataset::new(columns, None)?;

    // Ground truth: per-feature contribution variance and net sign.
    let mut per_feature: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (e, c) in spec.effects.iter().zip(&contributions) {
        let key = e.feature.split('=').next().unwrap_or_default().to_string();
        let acc = per_feature.entry(key).or_insert_with(|| vec![0.0; n]);
        acc.iter_mut().zip(c).for_each(|(a, v)| *a += v);
    }
    let mut ranked: Vec<(String, f64)> = per_feature.iter().map(|(k, v)| (k.clone(), variance(v))).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut signs = BTreeMap::new();
    for e in &spec.effects {
        let key = e.feature.split('=').next().unwrap_or_default().to_string();
        if let Some(v) = per_feature.get(&key) {
            let x: Vec<f64> = rows.iter().map(|r| if key == "lulc" { r.get(&e.feature) } else { r.get(&key) }).collect();
            let mx = x.iter().sum::<f64>() / n as f64;
            let mv = v.iter().sum::<f64>() / n as f64;
            let cov: f64 = x.iter().zip(v).map(|(a, b)| (a - mx) * (b - mv)).sum();
            signs.insert(key, if cov > 0.0 { 1 } else if cov < 0.0 { -1 } else { 0 });
        }
    }
    let inert = HYDRO_FEATURES
        .iter()
        .filter(|f| !per_feature.contains_key(**f))
        .map(|f| f.to_string())
        .collect();
    let drivers_by_variance: Vec<String> = ranked.into_iter().map(|(k, _)| k).collect();
    let truth = HydroTruth {
        intercept: spec.intercept,
        effects: spec.effects.clone(),
        signs,
        inert,
        top_drivers: drivers_by_variance.iter().take(3).cloned().collect(),
        drivers_by_variance,
        noise_sd: spec.noise_sd,
        outlier_rows,
        target: "cl_mg_l".into(),
    };
    Ok((ds, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ishigami_origin_and_truth() {
        let (f, t) = gen_ishigami();
        assert_eq!(f.predict_row(&[0.0, 0.0, 0.0]), 0.0);
        assert!((t.s1[0] - 0.3139).abs() < 1e-4);
        assert!((t.s1[1] - 0.4424).abs() < 1e-4);
        assert!((t.st[0] - 0.5576).abs() < 1e-4);
        assert!((t.st[2] - 0.2437).abs() < 1e-4);
        assert_eq!(t.st[1], t.s1[1]);
    }

    #[test]
    fn linear_causal_shape_and_determinism() {
        let (a, ta) = gen_linear_causal(60, 3, 2.0, 1.0, 4).unwrap();
        let (b, _) = gen_linear_causal(60, 3, 2.0, 1.0, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.column_names(), vec!["x1", "x2", "x3", "t", "y"]);
        assert_eq!(ta.gamma.len(), 3);
        assert!(gen_linear_causal(49, 3, 2.0, 1.0, 4).is_err());
    }

    fn small_spec() -> SynthSpec {
        SynthSpec {
            n_drills: 12,
            years_per_drill: 4,
            basin_sizes: vec![6, 4, 2],
            ..SynthSpec::default()
        }
    }

    #[test]
    fn hydro_layout() {
        let (ds, truth) = gen_hydro(&small_spec()).unwrap();
        assert_eq!(ds.n_rows(), 48);
        assert_eq!(ds.target_name(), "cl_mg_l");
        assert_eq!(truth.outlier_rows.len(), 6);
        let y = ds.target().numeric_values().unwrap();
        assert_eq!(y.iter().filter(|v| v.unwrap() > 4000.0).count(), 6);
        assert!(truth.inert.contains(&"fishponds_n".to_string()));
        assert!(truth.inert.contains(&"factories_n".to_string()));
        assert_eq!(truth.signs["precip_mm"], -1);
        assert_eq!(truth.signs["twi"], 1);
        assert_eq!(truth.signs["dist_saline_m"], -1);
        assert_eq!(truth.signs["max_temp_c"], 1);
    }

    #[test]
    fn hydro_rejects_bad_spec() {
        let mut s = small_spec();
        s.basin_sizes = vec![5, 5];
        assert!(gen_hydro(&s).is_err());
        let mut s = small_spec();
        s.effects.push(Effect::linear("nope", 1.0));
        assert!(gen_hydro(&s).is_err());
        let mut s = small_spec();
        s.effects.push(Effect::linear("lulc", 1.0));
        assert!(gen_hydro(&s).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = SynthSpec::default();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<SynthSpec>(&text).unwrap(), s);
        assert!(serde_json::from_str::<SynthSpec>(r#"{"bogus": 1}"#).is_err());
    }
}

//! Config-driven end-to-end run: preprocess, weight, split, train, evaluate,
//! DML scan, attribution, rank comparison, and report files.
//!
//! Every stage is a public function so the CLI subcommands and
//! [`run_pipeline`] share one code path and one seed derivation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attribution::{
    bar_chart_svg, gsa_over_model, grouped_bar_chart_svg, rank_compare, rfe, shap_summary, sobol_csv,
    AttributionResult, Background, GsaSampling, RankComparison, RfeTrace, ShapMode, SobolIndices,
    DEFAULT_BACKGROUND_SIZE,
};
use crate::dataset::{
    basin_weights, drop_low_variance, filter_salinity_outliers, impute_mean, load_csv, load_schema, one_hot_encode,
    prune_correlated, standardize, temporal_split, write_csv_string, ColumnKind, Dataset, ScalerParams, SplitPlan,
    DEFAULT_CORRELATION_THRESHOLD, DEFAULT_OUTLIER_THRESHOLD, DEFAULT_VALID_FRACTION, DEFAULT_VARIANCE_EPS,
};
use crate::dml::{dml_scan, DmlConfig, DmlScan};
use crate::error::{Error, Result};
use crate::frame::FeatureMatrix;
use crate::metrics::{evaluate, EvalReport};
use crate::models::{fit, stream_seed, ForestParams, ModelKind, ModelSpec, TrainedModel, TreeParams};
use crate::synth::{gen_hydro, SynthSpec};

pub const REPORT_VERSION: u32 = 1;

// Seed streams per stage.
const STREAM_MODELS: u64 = 1;
const STREAM_DML: u64 = 2;
const STREAM_RFE: u64 = 3;
const STREAM_SHAP: u64 = 4;
const STREAM_GSA: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub outlier_threshold: f64,
    pub impute: bool,
    /// Categorical columns to expand; `None` means every categorical column
    /// except the basin column.
    pub one_hot: Option<Vec<String>>,
    pub drop_low_variance: bool,
    pub variance_eps: f64,
    pub prune_correlated: bool,
    pub correlation_threshold: f64,
    /// Grouping column for inverse square-root density weights; `None` keeps unit weights.
    pub basin_column: Option<String>,
    pub valid_fraction: f64,
    pub standardize: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            outlier_threshold: DEFAULT_OUTLIER_THRESHOLD,
            impute: true,
            one_hot: None,
            drop_low_variance: true,
            variance_eps: DEFAULT_VARIANCE_EPS,
            prune_correlated: true,
            correlation_threshold: DEFAULT_CORRELATION_THRESHOLD,
            basin_column: Some("basin".into()),
            valid_fraction: DEFAULT_VALID_FRACTION,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmlSettings {
    pub enabled: bool,
    /// Defaults to the dataset's target column.
    pub outcome: Option<String>,
    pub standardize_before_dml: bool,
    pub learner: ModelSpec,
    pub k_folds: usize,
    pub alpha: f64,
    pub intercept: bool,
}

impl Default for DmlSettings {
    fn default() -> Self {
        let d = DmlConfig::default();
        Self {
            enabled: true,
            outcome: None,
            standardize_before_dml: false,
            learner: d.learner,
            k_folds: d.k_folds,
            alpha: d.alpha,
            intercept: d.intercept,
        }
    }
}

impl DmlSettings {
    pub fn dml_config(&self) -> DmlConfig {
        DmlConfig {
            learner: self.learner.clone(),
            k_folds: self.k_folds,
            alpha: self.alpha,
            intercept: self.intercept,
        }
    }
}

/// Which Sobol index stands in for GSA in the rank comparison.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GsaIndex {
    #[default]
    S1,
    St,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionConfig {
    pub enabled: bool,
    /// Model kinds to explain; `None` explains every trained model.
    pub models: Option<Vec<ModelKind>>,
    pub shap: ShapMode,
    /// Validation rows explained by SHAP (seeded subsample when fewer than available).
    pub shap_rows: usize,
    pub background_size: usize,
    pub gsa_n_base: usize,
    pub gsa_bootstrap: usize,
    pub gsa_sampling: GsaSampling,
    pub gsa_compare_index: GsaIndex,
    pub rfe_min_features: usize,
    pub rfe_learner: ForestParams,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            models: None,
            shap: ShapMode::Kernel { n_coalitions: 512 },
            shap_rows: 24,
            background_size: DEFAULT_BACKGROUND_SIZE,
            gsa_n_base: 1024,
            gsa_bootstrap: 200,
            gsa_sampling: GsaSampling::Uniform,
            gsa_compare_index: GsaIndex::S1,
            rfe_min_features: 1,
            rfe_learner: ForestParams {
                n_trees: 50,
                tree: TreeParams {
                    max_depth: 16,
                    min_samples_leaf: 2,
                    ..ForestParams::default().tree
                },
                ..ForestParams::default()
            },
        }
    }
}

/// The whole run, validated before any work. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    /// Generate the input instead of reading `data`.
    pub synth: Option<SynthSpec>,
    pub preprocess: PreprocessConfig,
    pub models: Vec<ModelSpec>,
    pub dml: DmlSettings,
    pub attribution: AttributionConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            schema: None,
            synth: None,
            preprocess: PreprocessConfig::default(),
            models: vec![
                ModelSpec::Linear,
                ModelSpec::default_for(ModelKind::Forest),
                ModelSpec::default_for(ModelKind::Gbt),
            ],
            dml: DmlSettings::default(),
            attribution: AttributionConfig::default(),
            seed: 0,
            out_dir: PathBuf::from("salix-out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            match msg.strip_prefix("unknown field `").and_then(|r| r.split('`').next()) {
                Some(key) => Error::UnknownConfigKey(key.to_string()),
                None => Error::Config(msg),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        match (&self.data, &self.synth) {
            (Some(_), Some(_)) => return bad("set either `data` or `synth`, not both"),
            (None, None) => return bad("one of `data` or `synth` is required"),
            (Some(_), None) if self.schema.is_none() => return bad("`data` requires `schema`"),
            _ => {}
        }
        if let Some(s) = &self.synth {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        let p = &self.preprocess;
        if !(p.valid_fraction > 0.0 && p.valid_fraction < 1.0) {
            return bad("preprocess.valid_fraction must lie in (0, 1)");
        }
        if !(p.correlation_threshold > 0.0 && p.correlation_threshold <= 1.0) {
            return bad("preprocess.correlation_threshold must lie in (0, 1]");
        }
        if self.models.is_empty() {
            return bad("at least one model is required");
        }
        let mut kinds: Vec<ModelKind> = self.models.iter().map(ModelSpec::kind).collect();
        kinds.sort();
        if kinds.windows(2).any(|w| w[0] == w[1]) {
            return bad("each model kind may appear once");
        }
        if self.dml.k_folds < 2 {
            return bad("dml.k_folds must be at least 2");
        }
        if !(self.dml.alpha > 0.0 && self.dml.alpha < 1.0) {
            return bad("dml.alpha must lie in (0, 1)");
        }
        let a = &self.attribution;
        if a.gsa_n_base < 2 || !a.gsa_n_base.is_power_of_two() {
            return bad("attribution.gsa_n_base must be a power of two >= 2");
        }
        if a.rfe_min_features == 0 {
            return bad("attribution.rfe_min_features must be at least 1");
        }
        if a.shap_rows == 0 || a.background_size == 0 {
            return bad("attribution.shap_rows and background_size must be positive");
        }
        if let Some(ms) = &a.models {
            if let Some(k) = ms.iter().find(|k| !kinds.contains(k)) {
                return Err(Error::Config(format!("attribution.models names untrained kind `{}`", k.as_str())));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Stages

/// Output of the preprocessing chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prepared {
    /// After every transform and weighting, before standardization.
    pub data: Dataset,
    /// `data` with standardized predictors (identical when standardization is off).
    pub scaled: Dataset,
    pub scaler: Option<ScalerParams>,
    pub split: SplitPlan,
}

impl Prepared {
    pub fn features(&self) -> Vec<String> {
        self.scaled.feature_names()
    }

    /// Standardized design matrix, target, and weights over all rows.
    pub fn xyw(&self) -> Result<(FeatureMatrix, Vec<f64>, Vec<f64>)> {
        Ok((self.scaled.feature_matrix()?, self.scaled.target_values()?, self.scaled.weights().to_vec()))
    }

    pub fn train_matrix(&self) -> Result<FeatureMatrix> {
        Ok(self.scaled.feature_matrix()?.select_rows(&self.split.train))
    }

    pub fn valid_matrix(&self) -> Result<FeatureMatrix> {
        Ok(self.scaled.feature_matrix()?.select_rows(&self.split.valid))
    }

    pub fn provenance(&self) -> &[String] {
        self.scaled.provenance()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn load_input(cfg: &RunConfig) -> Result<Dataset> {
    match (&cfg.synth, &cfg.data, &cfg.schema) {
        (Some(spec), _, _) => Ok(gen_hydro(spec)?.0),
        (None, Some(data), Some(schema)) => load_csv(data, &load_schema(schema)?),
        _ => Err(Error::Config("one of `data` or `synth` is required".into())),
    }
}

/// filter → impute → one-hot → drop constant → prune correlated → weight → split → standardize.
pub fn prepare(ds: &Dataset, p: &PreprocessConfig) -> Result<Prepared> {
    let mut ds = filter_salinity_outliers(ds, p.outlier_threshold)?;
    if ds.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if p.impute {
        ds = impute_mean(&ds)?;
    }
    let one_hot = match &p.one_hot {
        Some(v) => v.clone(),
        None => ds
            .columns()
            .iter()
            .filter(|c| c.kind() == ColumnKind::Categorical && Some(c.name()) != p.basin_column.as_deref())
            .map(|c| c.name().to_string())
            .collect(),
    };
    if !one_hot.is_empty() {
        ds = one_hot_encode(&ds, &one_hot)?;
    }
    if p.drop_low_variance {
        ds = drop_low_variance(&ds, p.variance_eps)?;
    }
    if p.prune_correlated {
        ds = prune_correlated(&ds, p.correlation_threshold)?;
    }
    if let Some(b) = &p.basin_column {
        ds = basin_weights(&ds, b)?;
    }
    let split = temporal_split(&ds, p.valid_fraction)?;
    let (scaled, scaler) = if p.standardize {
        let (s, params) = standardize(&ds)?;
        (s, Some(params))
    } else {
        (ds.clone(), None)
    };
    Ok(Prepared {
        data: ds,
        scaled,
        scaler,
        split,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub kind: ModelKind,
    pub spec: ModelSpec,
    pub train: EvalReport,
    pub valid: EvalReport,
}

/// The spec with its seed derived from the run seed and the model's slot.
pub fn seeded_spec(spec: &ModelSpec, seed: u64, slot: usize) -> ModelSpec {
    spec.with_seed(stream_seed(stream_seed(seed, STREAM_MODELS), slot as u64))
}

/// Fits on the weighted train rows; reports weighted train and unweighted validation metrics.
pub fn train_model(prep: &Prepared, spec: &ModelSpec, seed: u64, slot: usize) -> Result<(TrainedModel, ModelReport)> {
    let (x, y, w) = prep.xyw()?;
    let pick = |idx: &[usize], v: &[f64]| -> Vec<f64> { idx.iter().map(|&i| v[i]).collect() };
    let (tr, va) = (&prep.split.train, &prep.split.valid);
    let xt = x.select_rows(tr);
    let (yt, wt) = (pick(tr, &y), pick(tr, &w));
    let model = fit(&seeded_spec(spec, seed, slot), &xt, &yt, &wt)?;
    let train = evaluate(&yt, &model.predict(&xt)?, Some(&wt))?;
    let valid = evaluate(&pick(va, &y), &model.predict(&x.select_rows(va))?, None)?;
    let report = ModelReport {
        kind: model.kind(),
        spec: model.spec.clone(),
        train,
        valid,
    };
    Ok((model, report))
}

pub fn evaluate_model(prep: &Prepared, model: &TrainedModel) -> Result<ModelReport> {
    let (x, y, w) = prep.xyw()?;
    let pick = |idx: &[usize], v: &[f64]| -> Vec<f64> { idx.iter().map(|&i| v[i]).collect() };
    let (tr, va) = (&prep.split.train, &prep.split.valid);
    let train = evaluate(&pick(tr, &y), &model.predict(&x.select_rows(tr))?, Some(&pick(tr, &w)))?;
    let valid = evaluate(&pick(va, &y), &model.predict(&x.select_rows(va))?, None)?;
    Ok(ModelReport {
        kind: model.kind(),
        spec: model.spec.clone(),
        train,
        valid,
    })
}

pub fn run_dml(prep: &Prepared, s: &DmlSettings, seed: u64) -> Result<DmlScan> {
    let ds = if s.standardize_before_dml { &prep.scaled } else { &prep.data };
    let outcome = s.outcome.clone().unwrap_or_else(|| ds.target_name().to_string());
    dml_scan(ds, &outcome, &s.dml_config(), stream_seed(seed, STREAM_DML))
}

pub fn run_rfe(prep: &Prepared, a: &AttributionConfig, seed: u64) -> Result<(RfeTrace, AttributionResult)> {
    let (x, y, w) = prep.xyw()?;
    let s = stream_seed(seed, STREAM_RFE);
    let min = a.rfe_min_features.min(x.n_cols());
    let trace = rfe(&x, &y, &w, &a.rfe_learner, &prep.split, min, s)?;
    let result = trace.attribution(x.names(), s)?;
    Ok((trace, result))
}

/// Background from the train rows, explained rows from the validation rows.
pub fn shap_inputs(prep: &Prepared, a: &AttributionConfig, seed: u64) -> Result<(Background, FeatureMatrix)> {
    let s = stream_seed(seed, STREAM_SHAP);
    let bg = Background::sample(&prep.train_matrix()?, a.background_size, s)?;
    let valid = prep.valid_matrix()?;
    let rows = if valid.n_rows() > 0 { valid } else { prep.train_matrix()? };
    let explain = Background::sample(&rows, a.shap_rows, stream_seed(s, 1))?;
    let explain = FeatureMatrix::new(rows.names().to_vec(), explain.len(), explain.rows)?;
    Ok((bg, explain))
}

pub fn run_shap(
    prep: &Prepared,
    model: &TrainedModel,
    a: &AttributionConfig,
    seed: u64,
) -> Result<(AttributionResult, crate::attribution::ShapExplanation)> {
    let (bg, explain) = shap_inputs(prep, a, seed)?;
    let (mut result, expl) = shap_summary(model.predictor(), &explain, &bg, a.shap, stream_seed(seed, STREAM_SHAP))?;
    result.metadata.insert("model_kind".into(), model.kind().as_str().into());
    Ok((result, expl))
}

/// Seed handed to the Sobol bootstrap for a run seed.
pub fn gsa_seed(seed: u64) -> u64 {
    stream_seed(seed, STREAM_GSA)
}

pub fn run_gsa(
    prep: &Prepared,
    model: &TrainedModel,
    a: &AttributionConfig,
    seed: u64,
) -> Result<(AttributionResult, AttributionResult, SobolIndices)> {
    let g = gsa_over_model(
        model,
        &prep.train_matrix()?,
        a.gsa_n_base,
        a.gsa_bootstrap,
        a.gsa_sampling,
        gsa_seed(seed),
    )?;
    Ok((g.s1, g.st, g.indices))
}

// ---------------------------------------------------------------------------
// Report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAttribution {
    pub kind: ModelKind,
    pub rfe: AttributionResult,
    pub shap: AttributionResult,
    pub gsa_s1: AttributionResult,
    pub gsa_st: AttributionResult,
    pub sobol: SobolIndices,
    pub shap_max_efficiency_gap: f64,
    pub comparison: RankComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

/// Everything a run produced except wall-clock timings, which live in
/// `timings.json` so that reruns give byte-identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub config: RunConfig,
    pub provenance: Vec<String>,
    pub n_rows: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub features: Vec<String>,
    pub models: Vec<ModelReport>,
    pub dml: Option<DmlScan>,
    pub rfe: Option<RfeTrace>,
    pub attribution: Vec<ModelAttribution>,
    pub failure: Option<StageFailure>,
}

impl RunReport {
    fn empty(cfg: &RunConfig) -> Self {
        Self {
            version: REPORT_VERSION,
            config: cfg.clone(),
            provenance: Vec::new(),
            n_rows: 0,
            n_train: 0,
            n_valid: 0,
            features: Vec::new(),
            models: Vec::new(),
            dml: None,
            rfe: None,
            attribution: Vec::new(),
            failure: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn model(&self, kind: ModelKind) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.kind == kind)
    }

    pub fn attribution_for(&self, kind: ModelKind) -> Option<&ModelAttribution> {
        self.attribution.iter().find(|m| m.kind == kind)
    }

    pub fn to_markdown(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"));
        let mut md = String::from("# salix run report\n\n");
        md.push_str(&format!(
            "{} rows after preprocessing ({} train, {} validation), {} features, seed {}.\n\n",
            self.n_rows,
            self.n_train,
            self.n_valid,
            self.features.len(),
            self.config.seed
        ));
        if let Some(f) = &self.failure {
            md.push_str(&format!("**Run aborted in stage `{}`:** {}\n\n", f.stage, f.message));
        }
        md.push_str("## Preprocessing\n\n```\n");
        for line in &self.provenance {
            md.push_str(line);
            md.push('\n');
        }
        md.push_str("```\n\n");
        if !self.models.is_empty() {
            md.push_str("## Model comparison (validation, unweighted)\n\n| model | R² | RMSE | MAE | train R² (weighted) |\n|---|---|---|---|---|\n");
            for m in &self.models {
                md.push_str(&format!(
                    "| {} | {} | {:.2} | {:.2} | {} |\n",
                    m.kind.as_str(),
                    opt(m.valid.r2),
                    m.valid.rmse,
                    m.valid.mae,
                    opt(m.train.r2)
                ));
            }
            md.push('\n');
        }
        if let Some(d) = &self.dml {
            md.push_str(&format!("## DML effects on `{}` (alpha = {})\n\n", d.outcome, d.alpha));
            md.push_str(&d.to_markdown());
            md.push('\n');
        }
        if let Some(r) = &self.rfe {
            md.push_str(&format!(
                "## Recursive feature elimination\n\nSelected {} features (validation R² {}): {}\n\nElimination order: {}\n\n",
                r.selected.len(),
                opt(r.selected_r2),
                r.selected.join(", "),
                r.elimination_order.join(", ")
            ));
        }
        for a in &self.attribution {
            md.push_str(&format!("## Attribution: {}\n\n", a.kind.as_str()));
            md.push_str("| feature | RFE rank | SHAP rank | S1 rank | ST rank | mean abs SHAP | S1 | ST |\n|---|---|---|---|---|---|---|---|\n");
            let mut order: Vec<usize> = (0..a.shap.feature_names.len()).collect();
            order.sort_by(|&i, &j| a.shap.ranks[i].total_cmp(&a.shap.ranks[j]));
            for i in order {
                md.push_str(&format!(
                    "| {} | {} | {} | {} | {} | {:.3} | {:.3} | {:.3} |\n",
                    a.shap.feature_names[i],
                    a.rfe.ranks[i],
                    a.shap.ranks[i],
                    a.gsa_s1.ranks[i],
                    a.gsa_st.ranks[i],
                    a.shap.scores[i],
                    a.gsa_s1.scores[i],
                    a.gsa_st.scores[i]
                ));
            }
            md.push_str("\nSpearman rank correlation:\n\n");
            md.push_str(&a.comparison.to_markdown(a.kind.as_str()));
            md.push('\n');
        }
        md
    }
}

struct Timer {
    timings: BTreeMap<String, f64>,
}

impl Timer {
    fn run<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> std::result::Result<T, (String, Error)> {
        let t0 = Instant::now();
        let out = f();
        self.timings.insert(stage.to_string(), t0.elapsed().as_secs_f64());
        out.map_err(|e| (stage.to_string(), e))
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs every stage and writes `report.json`, `report.md`, `timings.json`
/// and `artifacts/` under `cfg.out_dir`. On a stage error the partial report
/// is still written, then the error is returned tagged with the stage name.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let mut report = RunReport::empty(cfg);
    let mut timer = Timer {
        timings: BTreeMap::new(),
    };
    let mut artifacts: Vec<(String, String)> = Vec::new();
    let outcome = run_stages(cfg, &mut report, &mut timer, &mut artifacts);
    if let Err((stage, e)) = &outcome {
        report.failure = Some(StageFailure {
            stage: stage.clone(),
            message: e.to_string(),
        });
    }
    let art_dir = cfg.out_dir.join("artifacts");
    std::fs::create_dir_all(&art_dir).map_err(|e| Error::io(&art_dir, e))?;
    for (name, body) in &artifacts {
        write(&art_dir.join(name), body)?;
    }
    write(&cfg.out_dir.join("report.json"), &report.to_json()?)?;
    write(&cfg.out_dir.join("report.md"), &report.to_markdown())?;
    write(&cfg.out_dir.join("timings.json"), &serde_json::to_string_pretty(&timer.timings)?)?;
    match outcome {
        Ok(()) => Ok(report),
        Err((stage, e)) => Err(e.at_stage(stage)),
    }
}

fn run_stages(
    cfg: &RunConfig,
    report: &mut RunReport,
    timer: &mut Timer,
    artifacts: &mut Vec<(String, String)>,
) -> std::result::Result<(), (String, Error)> {
    let seed = cfg.seed;
    let raw = timer.run("load", || load_input(cfg))?;
    let prep = timer.run("preprocess", || prepare(&raw, &cfg.preprocess))?;
    report.provenance = prep.provenance().to_vec();
    report.n_rows = prep.data.n_rows();
    report.n_train = prep.split.train.len();
    report.n_valid = prep.split.valid.len();
    report.features = prep.features();
    artifacts.push((
        "prepared.csv".into(),
        timer.run("preprocess", || write_csv_string(&prep.data))?,
    ));

    let mut trained = Vec::new();
    for (slot, spec) in cfg.models.iter().enumerate() {
        let stage = format!("train:{}", spec.kind().as_str());
        let (model, mr) = timer.run(&stage, || train_model(&prep, spec, seed, slot))?;
        report.models.push(mr);
        trained.push(model);
    }
    let mut eval_csv = String::from("model,split,r2,rmse,mae,n,weighted\n");
    for m in &report.models {
        for (name, e) in [("train", &m.train), ("valid", &m.valid)] {
            eval_csv.push_str(&format!(
                "{},{name},{},{},{},{},{}\n",
                m.kind.as_str(),
                e.r2.map_or_else(|| "NA".into(), |v| v.to_string()),
                e.rmse,
                e.mae,
                e.n,
                e.weighted
            ));
        }
    }
    artifacts.push(("eval.csv".into(), eval_csv));

    if cfg.dml.enabled {
        let scan = timer.run("dml", || run_dml(&prep, &cfg.dml, seed))?;
        artifacts.push(("dml.md".into(), scan.to_markdown()));
        artifacts.push(("dml.json".into(), scan.to_json().map_err(|e| ("dml".to_string(), e))?));
        let labels: Vec<String> = scan.estimates.iter().map(|e| e.treatment.clone()).collect();
        let t: Vec<f64> = scan.estimates.iter().map(|e| e.t_stat.abs().min(1e6)).collect();
        artifacts.push(("dml_abs_t.svg".into(), bar_chart_svg("DML |t| by treatment", &labels, &t)));
        report.dml = Some(scan);
    }

    let a = &cfg.attribution;
    if a.enabled {
        let (trace, rfe_result) = timer.run("rfe", || run_rfe(&prep, a, seed))?;
        artifacts.push(("rfe.csv".into(), rfe_result.to_csv()));
        report.rfe = Some(trace);
        for model in &trained {
            if a.models.as_ref().is_some_and(|ms| !ms.contains(&model.kind())) {
                continue;
            }
            let kind = model.kind().as_str();
            let (shap, expl) = timer.run(&format!("shap:{kind}"), || run_shap(&prep, model, a, seed))?;
            let (s1, st, sobol) = timer.run(&format!("gsa:{kind}"), || run_gsa(&prep, model, a, seed))?;
            let gsa = match a.gsa_compare_index {
                GsaIndex::S1 => s1.clone(),
                GsaIndex::St => st.clone(),
            };
            let comparison = timer.run(&format!("compare:{kind}"), || rank_compare(&[rfe_result.clone(), shap.clone(), gsa]))?;
            let names = shap.feature_names.clone();
            artifacts.push((format!("shap_{kind}.csv"), expl.to_csv()));
            artifacts.push((format!("shap_{kind}.svg"), bar_chart_svg(&format!("mean |SHAP| ({kind})"), &names, &shap.scores)));
            artifacts.push((format!("sobol_{kind}.csv"), sobol_csv(&names, &sobol)));
            artifacts.push((
                format!("sobol_{kind}.svg"),
                grouped_bar_chart_svg(
                    &format!("Sobol indices ({kind})"),
                    &names,
                    &[("S1", sobol.s1.clone()), ("ST", sobol.st.clone())],
                ),
            ));
            artifacts.push((format!("compare_{kind}.md"), comparison.to_markdown(kind)));
            artifacts.push((
                format!("compare_{kind}.json"),
                comparison.to_json().map_err(|e| ("compare".to_string(), e))?,
            ));
            for r in [&shap, &s1, &st] {
                artifacts.push((format!("attribution_{kind}_{}.csv", r.method.as_str()), r.to_csv()));
            }
            report.attribution.push(ModelAttribution {
                kind: model.kind(),
                rfe: rfe_result.clone(),
                shap,
                gsa_s1: s1,
                gsa_st: st,
                sobol,
                shap_max_efficiency_gap: expl.max_efficiency_gap,
                comparison,
            });
        }
    }
    Ok(())
}

/// Reads the named numeric columns of a headed CSV as a feature matrix;
/// extra columns are ignored.
pub fn read_feature_matrix(path: impl AsRef<Path>, names: &[String]) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let missing: Vec<String> = names.iter().filter(|n| !header.contains(n)).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::FeatureMismatch(missing));
    }
    let idx: Vec<usize> = names.iter().map(|n| header.iter().position(|h| h == n).unwrap()).collect();
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = idx
            .iter()
            .zip(names)
            .map(|(&j, n)| {
                rec.get(j)
                    .and_then(|c| c.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::InvalidParam(format!("row {}: column `{n}` is not a finite number", r + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    FeatureMatrix::from_rows(names.to_vec(), &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_named() {
        let err = RunConfig::from_json(r#"{"synth": {}, "foo": 1}"#).unwrap_err();
        assert!(err.to_string().contains("foo"), "{err}");
        assert_eq!(err.class(), crate::error::ErrorClass::Config);
        let err = RunConfig::from_json(r#"{"synth": {}, "preprocess": {"bar": true}}"#).unwrap_err();
        assert!(err.to_string().contains("bar"), "{err}");
    }

    #[test]
    fn source_required() {
        assert!(RunConfig::from_json("{}").is_err());
        assert!(RunConfig::from_json(r#"{"data": "x.csv"}"#).is_err());
        assert!(RunConfig::from_json(r#"{"synth": {}}"#).is_ok());
    }

    #[test]
    fn duplicate_model_kind_rejected() {
        let err = RunConfig::from_json(r#"{"synth": {}, "models": [{"kind": "linear"}, {"kind": "linear"}]}"#).unwrap_err();
        assert!(err.to_string().contains("once"));
    }

    #[test]
    fn default_config_round_trips() {
        let cfg = RunConfig {
            synth: Some(SynthSpec::default()),
            ..RunConfig::default()
        };
        let back = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}

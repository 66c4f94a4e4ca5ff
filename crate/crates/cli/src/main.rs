use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use salix_core::attribution::{bar_chart_svg, grouped_bar_chart_svg, rank_compare, sobol_csv, AttributionResult};
use salix_core::dataset::{load_schema, write_csv, write_csv_string};
use salix_core::models::{ModelKind, ModelSpec, TrainedModel};
use salix_core::pipeline::{self, Prepared, RunConfig};
use salix_core::synth::{gen_hydro, SynthSpec};
use salix_core::{Error, Result};

#[derive(Parser)]
#[command(name = "salix", version, about = "Explainable regression workflow: preprocess, model, DML, attribution")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic borehole-year table with planted effects.
    Synth {
        /// Generator spec (JSON); defaults to the built-in spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Ground-truth record (JSON).
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Column schema (JSON); defaults to `<out>.schema.json`.
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Run the preprocessing chain and write the prepared bundle (JSON) plus a CSV.
    Preprocess {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Fit one model on the train rows of a prepared bundle.
    Train {
        #[arg(long)]
        prepared: PathBuf,
        #[arg(long)]
        kind: ModelKindArg,
    },
    /// Train and validation metrics for saved models.
    Eval {
        #[arg(long)]
        prepared: PathBuf,
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
    },
    /// Double machine learning scan over every predictor.
    Dml {
        #[arg(long)]
        prepared: PathBuf,
        #[arg(long)]
        outcome: Option<String>,
    },
    /// Recursive feature elimination with a random forest.
    Rfe {
        #[arg(long)]
        prepared: PathBuf,
    },
    /// SHAP attributions for a saved model.
    Shap {
        #[arg(long)]
        prepared: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Sobol sensitivity indices for a saved model.
    Gsa {
        #[arg(long)]
        model: PathBuf,
        /// CSV with the model's feature columns (training rows).
        #[arg(long, conflicts_with = "prepared")]
        data: Option<PathBuf>,
        #[arg(long)]
        prepared: Option<PathBuf>,
        #[arg(long)]
        n_base: Option<usize>,
    },
    /// Spearman rank agreement between attribution CSVs.
    Compare {
        #[arg(long = "input", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Row label for the table.
        #[arg(long, default_value = "model")]
        label: String,
    },
    /// Run the whole pipeline and write report.json, report.md and artifacts.
    Report,
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Preprocess { .. } => "preprocess",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Dml { .. } => "dml",
            Command::Rfe { .. } => "rfe",
            Command::Shap { .. } => "shap",
            Command::Gsa { .. } => "gsa",
            Command::Compare { .. } => "compare",
            Command::Report => "report",
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModelKindArg {
    Linear,
    Tree,
    Forest,
    Gbt,
    Mlp,
}

impl From<ModelKindArg> for ModelKind {
    fn from(k: ModelKindArg) -> Self {
        match k {
            ModelKindArg::Linear => ModelKind::Linear,
            ModelKindArg::Tree => ModelKind::Tree,
            ModelKindArg::Forest => ModelKind::Forest,
            ModelKindArg::Gbt => ModelKind::Gbt,
            ModelKindArg::Mlp => ModelKind::Mlp,
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

/// Config from `--config`, or the defaults; `--seed` wins over the file.
fn config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_or(g: &Global, default: &str) -> PathBuf {
    g.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn load_prepared(path: &Path) -> Result<Prepared> {
    Prepared::from_json(&read(path)?)
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Synth { spec, truth, schema } => {
            let mut s = match spec {
                Some(p) => serde_json::from_str::<SynthSpec>(&read(&p)?)?,
                None => SynthSpec::default(),
            };
            if let Some(seed) = g.seed {
                s.seed = seed;
            }
            let (ds, t) = gen_hydro(&s)?;
            let out = out_or(g, "data.csv");
            write(&out, &write_csv_string(&ds)?)?;
            let schema = schema.unwrap_or_else(|| sibling(&out, "schema.json"));
            write(&schema, &serde_json::to_string_pretty(&ds.schema())?)?;
            if let Some(tp) = truth {
                write(&tp, &serde_json::to_string_pretty(&t)?)?;
            }
        }
        Command::Preprocess { data, schema } => {
            let cfg = config(g)?;
            let raw = match (data, schema) {
                (Some(d), Some(s)) => salix_core::dataset::load_csv(d, &load_schema(s)?)?,
                (Some(_), None) | (None, Some(_)) => {
                    return Err(Error::Config("--data and --schema go together".into()));
                }
                (None, None) => pipeline::load_input(&cfg)?,
            };
            let prep = pipeline::prepare(&raw, &cfg.preprocess)?;
            let out = out_or(g, "prepared.json");
            write(&out, &prep.to_json()?)?;
            write_csv(sibling(&out, "csv"), &prep.data)?;
        }
        Command::Train { prepared, kind } => {
            let cfg = config(g)?;
            let kind = ModelKind::from(kind);
            let prep = load_prepared(&prepared)?;
            let (slot, spec) = match cfg.models.iter().position(|m| m.kind() == kind) {
                Some(i) => (i, cfg.models[i].clone()),
                None => (cfg.models.len(), ModelSpec::default_for(kind)),
            };
            let (model, report) = pipeline::train_model(&prep, &spec, cfg.seed, slot)?;
            let out = out_or(g, &format!("{}.model.json", kind.as_str()));
            model.save(&out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Eval { prepared, models } => {
            let prep = load_prepared(&prepared)?;
            let reports = models
                .iter()
                .map(|p| pipeline::evaluate_model(&prep, &TrainedModel::load(p)?))
                .collect::<Result<Vec<_>>>()?;
            let text = serde_json::to_string_pretty(&reports)?;
            match &g.out {
                Some(o) => write(o, &text)?,
                None => println!("{text}"),
            }
        }
        Command::Dml { prepared, outcome } => {
            let mut cfg = config(g)?;
            if outcome.is_some() {
                cfg.dml.outcome = outcome;
            }
            let scan = pipeline::run_dml(&load_prepared(&prepared)?, &cfg.dml, cfg.seed)?;
            match &g.out {
                Some(o) => {
                    write(o, &scan.to_markdown())?;
                    write(&sibling(o, "json"), &scan.to_json()?)?;
                }
                None => print!("{}", scan.to_markdown()),
            }
        }
        Command::Rfe { prepared } => {
            let cfg = config(g)?;
            let (trace, result) = pipeline::run_rfe(&load_prepared(&prepared)?, &cfg.attribution, cfg.seed)?;
            let out = out_or(g, "rfe.csv");
            write(&out, &result.to_csv())?;
            write(&sibling(&out, "trace.json"), &serde_json::to_string_pretty(&trace)?)?;
        }
        Command::Shap { prepared, model } => {
            let cfg = config(g)?;
            let model = TrainedModel::load(&model)?;
            let (result, expl) = pipeline::run_shap(&load_prepared(&prepared)?, &model, &cfg.attribution, cfg.seed)?;
            let dir = out_or(g, "shap");
            let kind = model.kind().as_str();
            write(&dir.join(format!("attribution_{kind}_shap.csv")), &result.to_csv())?;
            write(&dir.join(format!("shap_{kind}.csv")), &expl.to_csv())?;
            write(
                &dir.join(format!("shap_{kind}.svg")),
                &bar_chart_svg(&format!("mean |SHAP| ({kind})"), &result.feature_names, &result.scores),
            )?;
        }
        Command::Gsa {
            model,
            data,
            prepared,
            n_base,
        } => {
            let mut cfg = config(g)?;
            if let Some(n) = n_base {
                cfg.attribution.gsa_n_base = n;
            }
            let model = TrainedModel::load(&model)?;
            let (s1, st, sobol) = match (data, prepared) {
                (Some(d), None) => {
                    let x = pipeline::read_feature_matrix(&d, &model.feature_names)?;
                    let a = &cfg.attribution;
                    let out = salix_core::attribution::gsa_over_model(
                        &model,
                        &x,
                        a.gsa_n_base,
                        a.gsa_bootstrap,
                        a.gsa_sampling,
                        pipeline::gsa_seed(cfg.seed),
                    )?;
                    (out.s1, out.st, out.indices)
                }
                (None, Some(p)) => pipeline::run_gsa(&load_prepared(&p)?, &model, &cfg.attribution, cfg.seed)?,
                _ => return Err(Error::Config("gsa needs --data or --prepared".into())),
            };
            let dir = out_or(g, "gsa");
            let kind = model.kind().as_str();
            let names = &s1.feature_names;
            write(&dir.join(format!("sobol_{kind}.csv")), &sobol_csv(names, &sobol))?;
            write(
                &dir.join(format!("sobol_{kind}.svg")),
                &grouped_bar_chart_svg(
                    &format!("Sobol indices ({kind})"),
                    names,
                    &[("S1", sobol.s1.clone()), ("ST", sobol.st.clone())],
                ),
            )?;
            write(&dir.join(format!("attribution_{kind}_gsa-s1.csv")), &s1.to_csv())?;
            write(&dir.join(format!("attribution_{kind}_gsa-st.csv")), &st.to_csv())?;
        }
        Command::Compare { inputs, label } => {
            let results = inputs
                .iter()
                .map(|p| AttributionResult::from_csv(&read(p)?))
                .collect::<Result<Vec<_>>>()?;
            let cmp = rank_compare(&results)?;
            match &g.out {
                Some(o) => {
                    write(o, &cmp.to_markdown(&label))?;
                    write(&sibling(o, "json"), &cmp.to_json()?)?;
                }
                None => print!("{}", cmp.to_markdown(&label)),
            }
        }
        Command::Report => {
            let mut cfg = config(g)?;
            if let Some(o) = &g.out {
                cfg.out_dir = o.clone();
            }
            let report = pipeline::run_pipeline(&cfg)?;
            for m in &report.models {
                println!(
                    "{:<7} valid R² {}",
                    m.kind.as_str(),
                    m.valid.r2.map_or_else(|| "n/a".into(), |v| format!("{v:.3}"))
                );
            }
            println!("report written to {}", cfg.out_dir.join("report.json").display());
        }
    }
    Ok(())
}

fn diagnostic(e: &Error) -> serde_json::Value {
    let stage = match e {
        Error::Stage { stage, .. } => Some(stage.clone()),
        _ => None,
    };
    serde_json::json!({
        "error": e.class().as_str(),
        "exit_code": e.class().exit_code(),
        "stage": stage,
        "message": e.to_string(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = cli.command.stage();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let e = match e {
                Error::Stage { .. } => e,
                other => other.at_stage(stage),
            };
            eprintln!("{}", diagnostic(&e));
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}

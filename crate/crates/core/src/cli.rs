//! Command-line entry point.
//!
//! Stages communicate only through files in `--out`, so each stage's output
//! is a valid input of the next.

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evaluation::{self, ComparisonTable, RpReport, DEFAULT_PS};
use crate::features::{self, FeatureSet, SplitTag};
use crate::io::{self, Meta, PredictionRow, SchemaArtifact, SeasonArtifact, SeasonFitRow};
use crate::model::{train_variant, Backend, ModelConfig, TrainedModel, Variant};
use crate::pipeline::{self, PipelineConfig};
use crate::seasonality::{self, GroupAssignment};
use crate::synthetic::{self, SynthConfig};

/// Settings for `sweep-rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub grid: Vec<f64>,
    pub backend: Backend,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { grid: evaluation::default_rho_grid(), backend: Backend::Gbdt }
    }
}

/// Contents of `--config`: one section per stage. Flags override it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    /// Used by `season` and `features`.
    pub pipeline: PipelineConfig,
    /// Used by `train`, `eval --compare` and `sweep-rho`.
    pub train: ModelConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Parser)]
#[command(name = "retail-forecast", version, about = "Retailer sales forecasting pipeline")]
pub struct Cli {
    /// JSON config with sections seed, synth, pipeline, train, sweep.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct PipelineFlags {
    /// Number of retailer groups.
    #[arg(long)]
    pub k: Option<usize>,
    /// Fourier order of group profiles.
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub train_end: Option<i32>,
    #[arg(long)]
    pub valid_end: Option<i32>,
}

#[derive(Debug, Args)]
pub struct FeatureInput {
    /// Feature matrix CSV.
    #[arg(long)]
    pub features: PathBuf,
    /// Schema sidecar; defaults to schema.json next to the matrix.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub train_end: Option<i32>,
    #[arg(long)]
    pub valid_end: Option<i32>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic panel with ground truth.
    Synth {
        #[arg(long)]
        n_retailers: Option<usize>,
        #[arg(long)]
        n_months: Option<usize>,
    },
    /// Cluster retailers and fit group seasonal profiles.
    Season {
        #[arg(long)]
        panel: PathBuf,
        #[command(flatten)]
        flags: PipelineFlags,
    },
    /// Build the feature matrix and schema sidecar.
    Features {
        #[arg(long)]
        panel: PathBuf,
        /// Reuse a `season` output instead of recomputing it.
        #[arg(long)]
        season: Option<PathBuf>,
        #[command(flatten)]
        flags: PipelineFlags,
    },
    /// Train one model variant on the training months.
    Train {
        #[command(flatten)]
        input: FeatureInput,
        #[arg(long, value_parser = parse_variant)]
        variant: Variant,
        #[arg(long, value_parser = parse_backend)]
        backend: Backend,
        /// Tweedie power for T variants.
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Write sales forecasts for every feature row.
    Predict {
        #[command(flatten)]
        input: FeatureInput,
        #[arg(long)]
        model: PathBuf,
    },
    /// RP@p reports for models, prediction files, or a full comparison.
    #[command(group(ArgGroup::new("source").required(true).multiple(true).args(["model", "predictions", "compare"])))]
    Eval {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        train_end: Option<i32>,
        #[arg(long)]
        valid_end: Option<i32>,
        /// Model JSON files (repeatable).
        #[arg(long)]
        model: Vec<PathBuf>,
        /// Prediction CSV files (repeatable).
        #[arg(long)]
        predictions: Vec<PathBuf>,
        /// Train and compare every variant of each backend.
        #[arg(long)]
        compare: bool,
        /// Restrict `--compare` to one backend.
        #[arg(long, value_parser = parse_backend)]
        backend: Option<Backend>,
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Validation RP@p across a grid of Tweedie powers.
    SweepRho {
        #[command(flatten)]
        input: FeatureInput,
        #[arg(long, value_parser = parse_backend)]
        backend: Option<Backend>,
        /// Comma-separated grid, e.g. 1.1,1.3,1.5.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_backend(s: &str) -> std::result::Result<Backend, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses `args` and runs; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg: RunConfig = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.synth.seed = cfg.seed;
    Ok(cfg)
}

fn apply_pipeline_flags(cfg: &mut PipelineConfig, f: &PipelineFlags) {
    if let Some(k) = f.k {
        cfg.k = k;
    }
    if let Some(o) = f.order {
        cfg.order = o;
    }
    if let Some(t) = f.train_end {
        cfg.train_end = t;
    }
    if let Some(v) = f.valid_end {
        cfg.valid_end = v;
    }
}

fn meta(cfg: &RunConfig) -> Result<Meta> {
    Meta::new(cfg.seed, cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = load_config(cli)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Synth { n_retailers, n_months } => {
            if let Some(n) = n_retailers {
                cfg.synth.n_retailers = *n;
            }
            if let Some(n) = n_months {
                cfg.synth.n_months = *n;
            }
            let (panel, truth) = synthetic::generate(&cfg.synth)?;
            let m = meta(&cfg)?;
            io::write_panel(&out.join("panel.csv"), &panel, &m)?;
            io::write_truth(out, &truth, &m)?;
            println!("wrote {} records to {}", panel.records.len(), out.join("panel.csv").display());
        }
        Command::Season { panel, flags } => {
            apply_pipeline_flags(&mut cfg.pipeline, flags);
            let panel = features::filter_cap(&io::read_panel(panel)?, cfg.pipeline.cap);
            let (assignment, profiles) = pipeline::build_seasonality(&panel, &cfg.pipeline, cfg.seed)?;
            let m = meta(&cfg)?;
            write_season(out, &panel, &assignment, profiles.into_values().collect(), &cfg.pipeline, &m)?;
            println!("{} groups, sizes {:?}", assignment.k, assignment.group_sizes());
        }
        Command::Features { panel, season, flags } => {
            apply_pipeline_flags(&mut cfg.pipeline, flags);
            let pc = &cfg.pipeline;
            let panel = features::filter_cap(&io::read_panel(panel)?, pc.cap);
            let m = meta(&cfg)?;
            let (assignment, profiles) = match season {
                Some(path) => {
                    let (_, art): (Meta, SeasonArtifact) = io::read_json(path)?;
                    let map = art.profile_map();
                    (art.assignment, map)
                }
                None => {
                    let (a, p) = pipeline::build_seasonality(&panel, pc, cfg.seed)?;
                    write_season(out, &panel, &a, p.values().cloned().collect(), pc, &m)?;
                    (a, p)
                }
            };
            let set = features::assemble(&panel, &profiles, &assignment, pc.log_sales_features)?;
            features::time_split(&set, pc.train_end, pc.valid_end)?;
            io::write_features(&out.join("features.csv"), &set, &m)?;
            let sidecar = SchemaArtifact {
                schema_hash: set.schema.hash(),
                schema: set.schema.clone(),
                train_end: pc.train_end,
                valid_end: pc.valid_end,
            };
            io::write_json(&out.join("schema.json"), &m, &sidecar)?;
            println!("wrote {} rows x {} features to {}", set.len(), set.schema.dim(), out.join("features.csv").display());
        }
        Command::Train { input, variant, backend, rho } => {
            if let Some(r) = rho {
                cfg.train.rho = *r;
            }
            let (set, train_end, valid_end) = load_features(input)?;
            let split = features::time_split(&set, train_end, valid_end)?;
            let model = train_variant(&split.train, *backend, *variant, &cfg.train, cfg.seed)?;
            let path = out.join(format!("model_{}.json", model.tag().to_ascii_lowercase()));
            io::write_json(&path, &meta(&cfg)?, &model)?;
            println!("wrote {}", path.display());
        }
        Command::Predict { input, model } => {
            let (set, train_end, valid_end) = load_features(input)?;
            let (_, model): (Meta, TrainedModel) = io::read_json(model)?;
            let rows = prediction_rows(&model, &set, train_end, valid_end)?;
            let path = out.join(format!("predictions_{}.csv", model.tag().to_ascii_lowercase()));
            io::write_predictions(&path, &rows, &meta(&cfg)?)?;
            println!("wrote {} forecasts to {}", rows.len(), path.display());
        }
        Command::Eval {
            features,
            schema,
            train_end,
            valid_end,
            model,
            predictions,
            compare,
            backend,
            rho,
        } => {
            if let Some(r) = rho {
                cfg.train.rho = *r;
            }
            let feature_input = |name: &str| -> Result<FeatureInput> {
                let features = features
                    .clone()
                    .ok_or_else(|| Error::Argument(format!("{name} requires --features")))?;
                Ok(FeatureInput { features, schema: schema.clone(), train_end: *train_end, valid_end: *valid_end })
            };
            let mut reports = Vec::new();
            let mut text = String::new();
            if *compare {
                let (set, te, ve) = load_features(&feature_input("--compare")?)?;
                let split = features::time_split(&set, te, ve)?;
                let backends = backend.map_or(Backend::ALL.to_vec(), |b| vec![b]);
                let table = evaluation::compare_models(&split, &backends, &cfg.train, cfg.seed, &DEFAULT_PS)?;
                text.push_str(&render_comparison(&table));
                reports.extend(table.cells.iter().flat_map(|c| [c.valid.clone(), c.test.clone()]));
            }
            if !model.is_empty() {
                let (set, te, ve) = load_features(&feature_input("--model")?)?;
                for path in model {
                    let (_, m): (Meta, TrainedModel) = io::read_json(path)?;
                    reports.extend(reports_from_rows(&prediction_rows(&m, &set, te, ve)?)?);
                }
            }
            for path in predictions {
                reports.extend(reports_from_rows(&io::read_predictions(path)?)?);
            }
            if text.is_empty() {
                text = render_reports(&reports);
            }
            let m = meta(&cfg)?;
            io::write_reports(&out.join("report.csv"), &reports, &m)?;
            std::fs::write(out.join("report.txt"), &text)?;
            print!("{text}");
        }
        Command::SweepRho { input, backend, grid } => {
            if let Some(b) = backend {
                cfg.sweep.backend = *b;
            }
            if let Some(g) = grid {
                cfg.sweep.grid = g.clone();
            }
            let (set, te, ve) = load_features(input)?;
            let split = features::time_split(&set, te, ve)?;
            let sweep = evaluation::rho_sweep(
                &split.train,
                &split.valid,
                &cfg.sweep.grid,
                cfg.sweep.backend,
                &cfg.train,
                cfg.seed,
            )?;
            let m = meta(&cfg)?;
            io::write_sweep(&out.join("sweep.csv"), &sweep, &m)?;
            io::write_json(&out.join("sweep.json"), &m, &sweep)?;
            for (rho, v) in sweep.curve(0.1) {
                println!("rho={rho:.2} RP@0.1={v:.4}");
            }
            println!("best rho: {}", sweep.best_rho);
        }
    }
    Ok(())
}

fn write_season(
    out: &Path,
    panel: &features::Panel,
    assignment: &GroupAssignment,
    profiles: Vec<seasonality::SeasonalProfile>,
    pc: &PipelineConfig,
    m: &Meta,
) -> Result<()> {
    let series = seasonality::group_mean_log_sales(panel, assignment);
    let mut rows = Vec::new();
    for p in &profiles {
        let (Some(values), Some(counts)) = (series.series.get(&p.group), series.counts.get(&p.group)) else {
            continue;
        };
        for (i, (&actual, &members)) in values.iter().zip(counts).enumerate() {
            let month = series.start_month + i as i32;
            rows.push(SeasonFitRow {
                group_id: p.group,
                month,
                members,
                actual,
                fitted: seasonality::eval_profile(p, month),
                in_fit_window: month <= pc.train_end,
            });
        }
    }
    io::write_groups(&out.join("groups.csv"), assignment, m)?;
    io::write_season_fit(&out.join("season_fit.csv"), &rows, m)?;
    let art = SeasonArtifact { assignment: assignment.clone(), profiles };
    io::write_json(&out.join("season.json"), m, &art)
}

fn load_features(input: &FeatureInput) -> Result<(FeatureSet, i32, i32)> {
    let schema_path = input.schema.clone().unwrap_or_else(|| {
        input.features.parent().unwrap_or(Path::new(".")).join("schema.json")
    });
    let (_, sidecar): (Meta, SchemaArtifact) = io::read_json(&schema_path)?;
    if sidecar.schema.hash() != sidecar.schema_hash {
        return Err(Error::Data(format!("{}: schema hash mismatch", schema_path.display())));
    }
    let set = io::read_features(&input.features, &sidecar.schema)?;
    Ok((
        set,
        input.train_end.unwrap_or(sidecar.train_end),
        input.valid_end.unwrap_or(sidecar.valid_end),
    ))
}

fn prediction_rows(model: &TrainedModel, set: &FeatureSet, train_end: i32, valid_end: i32) -> Result<Vec<PredictionRow>> {
    let yhat = model.predict_sales(set)?;
    let tag = model.tag();
    Ok(set
        .rows
        .iter()
        .zip(yhat)
        .map(|(r, yhat)| PredictionRow {
            model: tag.clone(),
            retailer_id: r.retailer.0,
            month: r.month,
            split: SplitTag::of(r.month, train_end, valid_end).to_string(),
            y: r.y_next,
            yhat,
        })
        .collect())
}

/// One report per (model, split) of the valid and test rows, in file order.
fn reports_from_rows(rows: &[PredictionRow]) -> Result<Vec<RpReport>> {
    let mut groups: Vec<((String, String), (Vec<f64>, Vec<f64>))> = Vec::new();
    let mut index = BTreeMap::new();
    for r in rows.iter().filter(|r| r.split != "train") {
        let key = (r.model.clone(), r.split.clone());
        let i = *index.entry(key.clone()).or_insert_with(|| {
            groups.push((key, (Vec::new(), Vec::new())));
            groups.len() - 1
        });
        groups[i].1 .0.push(r.y);
        groups[i].1 .1.push(r.yhat);
    }
    groups
        .into_iter()
        .map(|((model, split), (y, yhat))| RpReport::compute(&model, &split, &y, &yhat, &DEFAULT_PS))
        .collect()
}

fn render_reports(reports: &[RpReport]) -> String {
    let mut out = format!("{:<24} {:<6} {:>8}", "model", "split", "n");
    for p in DEFAULT_PS {
        out.push_str(&format!(" {:>8}", format!("RP@{p}")));
    }
    out.push('\n');
    for r in reports {
        out.push_str(&format!("{:<24} {:<6} {:>8}", r.model, r.split, r.n));
        for p in DEFAULT_PS {
            out.push_str(&format!(" {:>8.4}", r.at(p).unwrap_or(f64::NAN)));
        }
        out.push('\n');
    }
    out
}

fn render_comparison(table: &ComparisonTable) -> String {
    let mut out = table.render();
    out.push('\n');
    for (a, b, r) in table.improvements(0.1) {
        out.push_str(&format!("{a} vs {b}: {:+.2}% RP@0.1\n", 100.0 * r));
    }
    out
}

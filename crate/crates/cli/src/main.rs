//! `recog`: command-line front end for the recognizability pipeline.
//!
//! Every subcommand starts from the defaults of [`RunConfig`], applies an
//! optional `--config` TOML file, then applies command-line flags. The
//! resolved configuration is echoed next to the main output.
//!
//! Set `RECOG_THREADS` to bound the worker pool; results do not depend on it.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use recognizability::aggregation::PolicyKind;
use recognizability::io::{CenterChoice, RunConfig, ScoreOrigin};
use recognizability::pipeline::{self, ConditionInput, QualitySpec};
use recognizability::predictor::{LabelMode, TargetSource};
use recognizability::synth::SynthConfig;
use recognizability::Error;

const THREADS_ENV: &str = "RECOG_THREADS";

#[derive(Parser)]
#[command(
    name = "recog",
    version,
    about = "Recognizability labels, prediction heads, template aggregation and verification metrics",
    after_help = "Environment:\n  RECOG_THREADS  worker threads (default: all cores); outputs are identical for any value"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Main input file (embeddings, templates or labels, depending on the stage)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Main output file; side artifacts are written next to it
    #[arg(long)]
    output: Option<PathBuf>,
    /// TOML run configuration; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for data generation, training and impostor sampling
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone, Default)]
struct Inputs {
    /// Ground-truth labels table
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Predictions table
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct EvalArgs {
    /// Quality signal ordering the ERC discards:
    /// constant, or {gt|pred}_{ccs|ccas|cr|calibrated_ccas} (repeatable)
    #[arg(long, alias = "score")]
    quality: Vec<String>,
    /// Target false match rate (repeatable)
    #[arg(long = "target-fmr")]
    target_fmr: Vec<f64>,
    /// Class centers for image-level pairing
    #[arg(long, value_parser = parse_centers)]
    centers: Option<CenterChoice>,
    /// Number of uniform ERC grid points over [0, 1]
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic embedding dataset
    Synth {
        #[command(flatten)]
        common: Common,
        /// Start from the saturated-similarity preset
        #[arg(long)]
        saturation: bool,
        #[arg(long)]
        num_classes: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        /// Dimension of the shared nuisance subspace (must be below --dim)
        #[arg(long)]
        nuisance_dim: Option<usize>,
    },
    /// Compute CCS, NNCCS, CCAS and CR labels
    Label {
        #[command(flatten)]
        common: Common,
        /// Class centers from gallery samples only or from every sample
        #[arg(long, value_parser = parse_centers)]
        centers: Option<CenterChoice>,
    },
    /// Fit a sigmoid calibration to a labels table and add calibrated columns
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Train a regression head on embeddings and labels
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// joint, ccs_only, ccas_only or cr_only
        #[arg(long, value_parser = parse_label_mode)]
        label_mode: Option<LabelMode>,
        /// Train on calibrated targets
        #[arg(long)]
        calibrated: bool,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Predict recognizability with a trained head
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        head: Option<PathBuf>,
    },
    /// Build templates with a filtering/weighting policy
    Aggregate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        /// Aggregation policy (e.g. average, ccas_filter_plus_ccs_weight)
        #[arg(long, value_parser = parse_policy)]
        policy: Option<PolicyKind>,
        /// Score source: gt or pred (a {gt|pred}_<kind> value selects its source)
        #[arg(long, value_parser = parse_origin)]
        score: Option<ScoreOrigin>,
    },
    /// Verification metrics (TAR@FMR, ROC, optional ERC and Spearman)
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Error-versus-reject curves for one or more quality signals
    Erc {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Print saved metrics reports, or build a per-condition report
    Report {
        /// Directory of metrics JSON files
        #[arg(long)]
        input: Option<PathBuf>,
        /// name=labels.csv,predictions.csv (repeatable)
        #[arg(long = "condition")]
        conditions: Vec<String>,
        /// Where to write the condition report JSON
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Convert a string-keyed CSV table into numeric-id embeddings
    Remap {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn parse_centers(s: &str) -> Result<CenterChoice, String> {
    match s {
        "gallery" | "gallery_only" => Ok(CenterChoice::Gallery),
        "full" | "full_set" => Ok(CenterChoice::Full),
        _ => Err(format!("expected gallery or full, got {s:?}")),
    }
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_label_mode(s: &str) -> Result<LabelMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_origin(s: &str) -> Result<ScoreOrigin, String> {
    match s.split('_').next() {
        Some("gt") => Ok(ScoreOrigin::Gt),
        Some("pred") => Ok(ScoreOrigin::Pred),
        _ => Err(format!("expected gt or pred, got {s:?}")),
    }
}

fn base_config(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if common.input.is_some() {
        cfg.input.clone_from(&common.input);
    }
    if common.output.is_some() {
        cfg.output.clone_from(&common.output);
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn apply_inputs(cfg: &mut RunConfig, inputs: &Inputs) {
    if inputs.labels.is_some() {
        cfg.labels.clone_from(&inputs.labels);
    }
    if inputs.predictions.is_some() {
        cfg.predictions.clone_from(&inputs.predictions);
    }
}

fn apply_eval(cfg: &mut RunConfig, eval: &EvalArgs) -> Result<(), Error> {
    for q in &eval.quality {
        q.parse::<QualitySpec>()?;
    }
    if !eval.quality.is_empty() {
        cfg.quality.clone_from(&eval.quality);
    }
    if !eval.target_fmr.is_empty() {
        cfg.target_fmrs.clone_from(&eval.target_fmr);
    }
    if let Some(c) = eval.centers {
        cfg.centers = c;
    }
    if let Some(g) = eval.grid {
        cfg.grid = g;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth {
            common,
            saturation,
            num_classes,
            dim,
            nuisance_dim,
        } => {
            let mut cfg = base_config(&common)?;
            if saturation {
                let preset = SynthConfig {
                    seed: cfg.seed,
                    ..SynthConfig::saturation_preset()
                };
                cfg = cfg.with_synth(&preset);
            }
            if let Some(k) = num_classes {
                cfg.num_classes = k;
            }
            if let Some(d) = dim {
                cfg.dim = d;
            }
            if let Some(m) = nuisance_dim {
                cfg.nuisance_dim = m;
            }
            pipeline::run_synth(&cfg)
        }
        Command::Label { common, centers } => {
            let mut cfg = base_config(&common)?;
            if let Some(c) = centers {
                cfg.centers = c;
            }
            pipeline::run_label(&cfg)
        }
        Command::Calibrate { common } => {
            let params = pipeline::run_calibrate(&base_config(&common)?)?;
            println!(
                "offset {:.6} scale {:.6} brier {:.6}",
                params.offset, params.scale, params.brier
            );
            Ok(())
        }
        Command::Train {
            common,
            labels,
            label_mode,
            calibrated,
            epochs,
        } => {
            let mut cfg = base_config(&common)?;
            if labels.is_some() {
                cfg.labels = labels;
            }
            if let Some(m) = label_mode {
                cfg.label_mode = m;
            }
            if calibrated {
                cfg.targets = TargetSource::Calibrated;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            pipeline::run_train(&cfg)
        }
        Command::Predict { common, head } => {
            let mut cfg = base_config(&common)?;
            if head.is_some() {
                cfg.head = head;
            }
            pipeline::run_predict(&cfg)
        }
        Command::Aggregate {
            common,
            inputs,
            policy,
            score,
        } => {
            let mut cfg = base_config(&common)?;
            apply_inputs(&mut cfg, &inputs);
            if let Some(p) = policy {
                if p != cfg.policy {
                    cfg.cutoff = None;
                }
                cfg.policy = p;
            }
            if let Some(s) = score {
                cfg.score = s;
            }
            pipeline::run_aggregate(&cfg)
        }
        Command::Evaluate {
            common,
            inputs,
            eval,
        } => {
            let mut cfg = base_config(&common)?;
            apply_inputs(&mut cfg, &inputs);
            apply_eval(&mut cfg, &eval)?;
            print!("{}", pipeline::evaluate(&cfg, "evaluate")?.to_text());
            Ok(())
        }
        Command::Erc {
            common,
            inputs,
            eval,
        } => {
            let mut cfg = base_config(&common)?;
            apply_inputs(&mut cfg, &inputs);
            apply_eval(&mut cfg, &eval)?;
            print!("{}", pipeline::evaluate(&cfg, "erc")?.to_text());
            Ok(())
        }
        Command::Report {
            input,
            conditions,
            output,
        } => {
            if conditions.is_empty() {
                let dir = input.ok_or_else(|| {
                    Error::Config("report needs --input <dir> or --condition".into())
                        .in_stage("report")
                })?;
                print!("{}", pipeline::run_report(&dir)?);
            } else {
                let parsed = conditions
                    .iter()
                    .map(|c| c.parse::<ConditionInput>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| e.in_stage("report"))?;
                print!(
                    "{}",
                    pipeline::run_conditions(&parsed, output.as_deref())?.to_text()
                );
            }
            Ok(())
        }
        Command::Remap { input, output } => pipeline::run_remap(&input, &output),
    }
}

fn init_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v.parse().map_err(|_| {
        Error::Config(format!(
            "{THREADS_ENV} must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

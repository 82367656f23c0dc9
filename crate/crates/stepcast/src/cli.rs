//! Argument parsing and dispatch.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{self, EvaluateOptions, ExportOptions, Mode, PredictOptions, SplitName, SynthKind, SynthOptions};
use crate::config::{self, RunConfig};
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "stepcast",
    version,
    about = "Anticipate upcoming recipe steps from text or video context",
    after_help = "Any config key can be overridden with --<key>=<value>, e.g. --lr=0.005 --out_dir=runs/a"
)]
pub struct Cli {
    /// Flat TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for prediction and embedding export.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the corpus, write the split manifest and build vocabularies.
    Ingest,
    /// Rebuild word, ingredient and verb vocabularies from the training split.
    BuildVocab,
    /// Stage one: train the text model.
    TrainText,
    /// Stage two: train the video encoder against the frozen text model.
    TrainVideo,
    /// Predict upcoming steps for a split.
    Predict {
        #[arg(long, value_enum, default_value = "text")]
        mode: Mode,
        /// Observe exactly this many steps (default: every context length).
        #[arg(long)]
        context: Option<usize>,
        /// Deepest horizon to predict (default: config `horizon`).
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
        /// Checkpoint stem (default: `<out_dir>/checkpoints/<stage>`).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions: recall, BLEU, METEOR-lite and max-future-match.
    Evaluate {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Finite-difference gradient verification at tiny dims.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write whole-recipe embeddings for external visualization.
    ExportEmbeddings {
        #[arg(long, value_enum, default_value = "all")]
        split: SplitName,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded synthetic corpus.
    Synth {
        #[arg(long, value_enum, default_value = "random")]
        kind: SynthKind,
        #[arg(long, default_value_t = 20)]
        recipes: usize,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        /// Attach per-step feature segments of this dimension.
        #[arg(long, default_value_t = 0)]
        features: usize,
        #[arg(long, default_value_t = 4)]
        frames: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        splits: Option<PathBuf>,
    },
}

fn execute(cli: Cli, overrides: &[(String, String)]) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), overrides)?;
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
        cfg.validate()?;
    }
    match cli.command {
        Command::Ingest => {
            commands::ingest(&cfg)?;
        }
        Command::BuildVocab => {
            commands::build_vocabs(&cfg)?;
        }
        Command::TrainText => {
            commands::train_text(&cfg)?;
        }
        Command::TrainVideo => {
            commands::train_video(&cfg)?;
        }
        Command::Predict {
            mode,
            context,
            horizon,
            split,
            checkpoint,
            out,
        } => {
            commands::predict(
                &cfg,
                &PredictOptions {
                    mode,
                    context,
                    horizon,
                    split,
                    checkpoint,
                    out,
                },
            )?;
        }
        Command::Evaluate {
            predictions,
            report,
            curves,
        } => {
            let r = commands::evaluate_predictions(
                &cfg,
                &EvaluateOptions {
                    predictions,
                    report,
                    curves,
                },
            )?;
            for (metric, value) in &r.report.next_step {
                println!("{metric}\t{value:.4}");
            }
        }
        Command::Gradcheck { seed } => {
            let outcome = commands::gradcheck(seed)?;
            for (name, err) in &outcome.primitives {
                println!("{name}\t{err:.3e}");
            }
            println!("full_loss\t{:.3e}", outcome.full_loss);
            let worst = outcome.max_error();
            println!("max relative error {worst:.3e}");
            if !(worst < commands::GRADCHECK_TOLERANCE) {
                return Err(Error::Numerical(format!(
                    "max relative error {worst:.3e} exceeds {:.0e}",
                    commands::GRADCHECK_TOLERANCE
                )));
            }
        }
        Command::ExportEmbeddings { split, checkpoint, out } => {
            commands::export_embeddings(&cfg, &ExportOptions { split, checkpoint, out })?;
        }
        Command::Synth {
            kind,
            recipes,
            steps,
            features,
            frames,
            noise,
            out,
            splits,
        } => {
            let n = commands::synth(
                &cfg,
                &SynthOptions {
                    kind,
                    recipes,
                    steps,
                    feature_dim: features,
                    frames,
                    noise,
                    out,
                    splits,
                },
            )?;
            println!("{n} recipes");
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run(args: Vec<String>) -> i32 {
    let (rest, overrides) = config::extract_overrides(args);
    let cli = match Cli::try_parse_from(rest) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, &overrides) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! `inpaint`: corpus generation, training, evaluation, ablation and
//! single-clip inpainting from the command line.
//!
//! Configuration precedence is CLI flags > `--config` file > defaults.
//! `--seed` re-derives every per-consumer seed from one root, and `--set`
//! overrides any key of the resolved config (dotted path, JSON value).

mod commands;
mod overrides;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<inpaint_core::Error> for CliError {
    fn from(e: inpaint_core::Error) -> Self {
        use inpaint_core::Error as E;
        match e {
            E::InvalidParams(_) | E::Mask(_) => CliError::Usage(e.to_string()),
            E::Numeric(_) | E::Training(_) => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "inpaint", version, about = "Long-gap audio inpainting toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every configurable subcommand.
#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// JSON config file layered over the defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed; every consumer's seed is derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override a config key, e.g. `--set train.steps=500` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TrainTarget {
    Waveform,
    Spectrogram,
    BackboneWaveform,
    BackboneSpectrogram,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PipelineArg {
    Wave,
    Spec,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic corpus (WAV clips and manifest.json).
    GenCorpus {
        /// Corpus preset: toy-sc or toy-esc.
        #[arg(long, default_value = "toy-sc")]
        preset: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train an inpainting model or a perceptual backbone on a corpus.
    Train {
        #[arg(long, value_enum)]
        target: TrainTarget,
        /// Corpus directory written by gen-corpus.
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory for checkpoints, loss curve and config snapshot.
        #[arg(long)]
        out: PathBuf,
        /// Backbone stem (path without extension) for the perceptual loss term.
        #[arg(long)]
        backbone: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score trained pipelines and the reference rows on a corpus's test split.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        /// Waveform model checkpoint (.ckpt, with config.json alongside).
        #[arg(long)]
        wave_ckpt: Option<PathBuf>,
        /// Spectrogram model checkpoint (.ckpt, with config.json alongside).
        #[arg(long)]
        spec_ckpt: Option<PathBuf>,
        /// Waveform backbone stem.
        #[arg(long)]
        wave_backbone: PathBuf,
        /// Spectrogram backbone stem.
        #[arg(long)]
        spec_backbone: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (results do not depend on this).
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the mask-length by receptive-field grid.
    Ablate {
        #[arg(long)]
        out: PathBuf,
        /// Spectrogram backbone stem; trained on the ablation corpus when absent.
        #[arg(long)]
        backbone: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Fill one masked interval of a WAV file.
    Inpaint {
        #[arg(long = "in")]
        input: PathBuf,
        /// Mask start in seconds.
        #[arg(long)]
        mask_start: f64,
        /// Mask end in seconds (exclusive).
        #[arg(long)]
        mask_end: f64,
        #[arg(long, value_enum)]
        pipeline: PipelineArg,
        /// Model checkpoint (.ckpt).
        #[arg(long)]
        ckpt: PathBuf,
        /// Model config; defaults to config.json next to the checkpoint.
        #[arg(long)]
        model_config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Griffin-Lim iterations for the spectrogram pipeline.
        #[arg(long, default_value_t = 60)]
        griffin_lim_iterations: usize,
    },
    /// Everything end to end: corpus, backbones, both models, report.
    Benchmark {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenCorpus { preset, out, cfg } => commands::gen_corpus(&preset, &out, &cfg),
        Command::Train {
            target,
            corpus,
            out,
            backbone,
            cfg,
        } => commands::train(target, &corpus, &out, backbone.as_deref(), &cfg),
        Command::Evaluate {
            corpus,
            wave_ckpt,
            spec_ckpt,
            wave_backbone,
            spec_backbone,
            out,
            jobs,
            cfg,
        } => commands::evaluate(
            &corpus,
            wave_ckpt.as_deref(),
            spec_ckpt.as_deref(),
            &wave_backbone,
            &spec_backbone,
            &out,
            jobs,
            &cfg,
        ),
        Command::Ablate { out, backbone, jobs, cfg } => commands::ablate(&out, backbone.as_deref(), jobs, &cfg),
        Command::Inpaint {
            input,
            mask_start,
            mask_end,
            pipeline,
            ckpt,
            model_config,
            out,
            griffin_lim_iterations,
        } => commands::inpaint(
            &input,
            mask_start,
            mask_end,
            pipeline,
            &ckpt,
            model_config.as_deref(),
            &out,
            griffin_lim_iterations,
        ),
        Command::Benchmark { out, jobs, cfg } => commands::benchmark(&out, jobs, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("inpaint: {e}");
            ExitCode::from(e.code())
        }
    }
}

//! Command-line pipeline for reward fine-tuned question generation.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use qgrl_core::oracles::RewardSet;

use config::{split_overrides, Flags, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "qgrl",
    version,
    about = "Question generation fine-tuned with fluency, relevance and answerability rewards",
    after_help = "Any configuration key can be overridden as --section.key VALUE, e.g. --generator.hidden_size 64."
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML configuration file layered over the built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Sets every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Rewards to fine-tune with, e.g. `F,R,A`, `R` or `none`.
    #[arg(long, global = true)]
    pub rewards: Option<RewardSet>,
    /// Beam width for decoding.
    #[arg(long, global = true)]
    pub beam: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the templated synthetic corpus to the data directory.
    Synthesize,
    /// Maximum-likelihood pretraining of the generator.
    Pretrain,
    /// Train the fluency language model.
    TrainLm,
    /// Build the labeled relevance pairs.
    MakeNegatives,
    /// Train the relevance discriminator.
    TrainDisc,
    /// Train the span QA model.
    TrainQa,
    /// Fine-tune the pretrained generator with the selected rewards.
    Finetune,
    /// Decode the test split with one or more models.
    Generate {
        /// `pretrain` or a fine-tuned label such as `FRA`; repeatable.
        /// Defaults to every available model.
        #[arg(long)]
        model: Vec<String>,
    },
    /// Score generated questions and write the comparison table.
    Evaluate {
        /// Score this file of questions (one per line) instead of the run's models.
        #[arg(long, requires = "reference")]
        hyp: Option<PathBuf>,
        #[arg(long = "ref", requires = "hyp")]
        reference: Option<PathBuf>,
    },
    /// Reward scores against human ratings.
    Analyze,
    /// Run every stage in order.
    Pipeline,
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run(args: Vec<String>) -> Result<()> {
    let (args, overrides) = split_overrides(args)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => e.exit(),
            _ => {
                let msg = e.to_string();
                let first = msg.lines().next().unwrap_or("invalid arguments");
                anyhow::bail!("{}", first.trim_start_matches("error: "));
            }
        },
    };
    let flags = Flags {
        seed: cli.common.seed,
        data_dir: cli.common.data_dir.clone(),
        out_dir: cli.common.out_dir.clone(),
        rewards: cli.common.rewards,
        beam: cli.common.beam,
    };
    let mut cfg = RunConfig::resolve(cli.common.config.as_deref(), &overrides, &flags)?;
    match cli.command {
        Command::Synthesize => commands::synthesize(&cfg),
        Command::Pretrain => commands::pretrain(&cfg),
        Command::TrainLm => commands::train_language_model(&cfg),
        Command::MakeNegatives => commands::negatives(&cfg),
        Command::TrainDisc => commands::train_discriminator(&cfg),
        Command::TrainQa => commands::train_span_qa(&cfg),
        Command::Finetune => commands::finetune(&cfg),
        Command::Generate { model } => commands::generate(&cfg, &model),
        Command::Evaluate { hyp, reference } => commands::evaluate(&cfg, hyp.as_deref(), reference.as_deref()),
        Command::Analyze => commands::analyze(&cfg),
        Command::Pipeline => {
            if let Some(r) = flags.rewards {
                cfg.pipeline.finetune_sets = vec![r];
            }
            commands::pipeline(&cfg)
        }
    }
}

/// Collapses an error chain onto one line.
pub fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}").replace('\n', " ")
}

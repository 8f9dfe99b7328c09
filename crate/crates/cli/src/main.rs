//! `entlm`: command-line pipeline for few-shot NER with EntLM.
//!
//! Every command reads and writes fixed file names under the output root,
//! chosen by `--out`, then `ENTLM_OUTPUT_ROOT`, then `paths.output` in the
//! config, then `./entlm-out`.

mod commands;
mod config;
mod run_all;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Overrides};
use workspace::Workspace;

#[derive(Parser)]
#[command(name = "entlm", version, about = "Template-free prompt tuning for few-shot NER")]
struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root for all artifacts.
    #[arg(long, global = true, env = "ENTLM_OUTPUT_ROOT")]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the gazetteer, noisy lexicon, unlabeled corpus and gold splits.
    Generate,
    /// Tag the unlabeled corpus with the lexicon and build the vocabulary.
    Annotate,
    /// Draw a K-shot support set from the train split.
    Sample,
    /// Search label words and write the label-word map.
    Select,
    /// MLM-pretrain a fresh model on the unlabeled corpus.
    Pretrain,
    /// Fine-tune the pretrained model on the support set.
    Finetune,
    /// Tag sentences with the fine-tuned model.
    Decode {
        /// CoNLL input; the test split by default.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Span-level precision, recall and F1.
    Eval {
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
    },
    /// Count forward passes and time one-pass against per-span decoding.
    Bench,
    /// Run the whole method × K × seed matrix and write the results table.
    RunAll,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    cfg.apply(&cli.overrides);
    cfg.validate()?;
    let root = cli
        .out
        .or_else(|| cfg.paths.output.clone())
        .unwrap_or_else(|| PathBuf::from("entlm-out"));
    let w = Workspace::new(root)?;
    match cli.command {
        Command::Generate => commands::generate(&cfg, &w),
        Command::Annotate => commands::annotate(&cfg, &w),
        Command::Sample => commands::sample(&cfg, &w),
        Command::Select => commands::select(&cfg, &w),
        Command::Pretrain => commands::pretrain(&cfg, &w),
        Command::Finetune => commands::finetune(&cfg, &w),
        Command::Decode { input } => commands::decode(&cfg, &w, input.as_deref()),
        Command::Eval { gold, pred } => commands::eval(&w, gold.as_deref(), pred.as_deref()),
        Command::Bench => commands::bench(&cfg, &w),
        Command::RunAll => run_all::run_all(&cfg, &w),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

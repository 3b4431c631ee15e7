use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use ctrlsum_cli::commands::{cmd_align, cmd_evaluate, cmd_preprocess, cmd_summarize, cmd_synth, cmd_train};
use ctrlsum_cli::config::RunConfig;

#[derive(Parser)]
#[command(name = "ctrlsum", version, about = "Controllable summarization pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus (length_copy, entity_facts, style_pair, remainder_tags).
    Synth,
    /// Anonymize, bin, prefix and encode a corpus.
    Preprocess,
    /// Train a model on a preprocessed directory.
    Train,
    /// Decode a corpus with a trained checkpoint.
    Summarize,
    /// Score a decode file against its reference corpus.
    Evaluate,
    /// Print summary-to-article alignments and remainder boundaries.
    Align,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` file; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Any config key, as key=value. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    task: Option<String>,
    #[arg(long, global = true)]
    size: Option<usize>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    dev_corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    decodes: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    length_bin: Option<usize>,
    /// Requested entity token. Repeatable.
    #[arg(long = "entity", global = true)]
    entities: Vec<String>,
    #[arg(long, global = true)]
    style: Option<usize>,
    #[arg(long, global = true)]
    boundary: Option<usize>,
    #[arg(long, global = true)]
    beam: Option<usize>,
    #[arg(long, global = true)]
    min_len: Option<usize>,
    #[arg(long, global = true)]
    max_len: Option<usize>,
    #[arg(long, global = true)]
    no_trigram_block: bool,
}

fn resolve(c: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &c.config {
        cfg.apply_file(p)?;
    }
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v)?;
    }
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let num = |v: Option<usize>| v.map(|v| v.to_string());
    let flags = [
        ("seed", c.seed.map(|v| v.to_string())),
        ("task", c.task.clone()),
        ("size", num(c.size)),
        ("corpus", path(&c.corpus)),
        ("dev_corpus", path(&c.dev_corpus)),
        ("data_dir", path(&c.data_dir)),
        ("checkpoint", path(&c.checkpoint)),
        ("decodes", path(&c.decodes)),
        ("out", path(&c.out)),
        ("length_bin", num(c.length_bin)),
        ("style", num(c.style)),
        ("boundary", num(c.boundary)),
        ("beam", num(c.beam)),
        ("min_len", num(c.min_len)),
        ("max_len", num(c.max_len)),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    if !c.entities.is_empty() {
        cfg.entities = c.entities.clone();
    }
    if c.no_trigram_block {
        cfg.trigram_block = false;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli.common)?;
    match cli.command {
        Command::Synth => cmd_synth(&cfg).map(drop),
        Command::Preprocess => cmd_preprocess(&cfg).map(drop),
        Command::Train => {
            let report = cmd_train(&cfg)?;
            log::info!(
                "trained {} epochs, best validation perplexity {:.4}",
                report.epochs.len(),
                report.best_val_ppl
            );
            Ok(())
        }
        Command::Summarize => cmd_summarize(&cfg).map(drop),
        Command::Evaluate => cmd_evaluate(&cfg).map(drop),
        Command::Align => cmd_align(&cfg).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}

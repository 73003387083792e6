use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use newsgate::config::Settings;
use newsgate::pipeline::{self, PipelineConfig};
use newsgate::Result;

/// Positive-news gate: annotate, filtrate, train and stream-filter news.
#[derive(Parser)]
#[command(name = "newsgate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a jsonl or tsv corpus and write it as jsonl.
    Ingest(Common),
    /// Weak-label documents with the valence lexicon.
    Annotate(Common),
    /// Quarantine weakly positive documents claimed by the one-class model.
    Filtrate(Common),
    /// Train the gate classifier on an 80/20 split.
    Train(Common),
    /// Score a labeled corpus with a saved model.
    Evaluate(Common),
    /// Filter a jsonl stream from stdin, emitting predicted positives.
    Gate(Common),
    /// Check CNN gradients against central differences.
    Gradcheck(Common),
}

#[derive(Args)]
struct Common {
    /// Settings file (`key = value` lines with `[section]` headers).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Setting overrides as `--key value` or `--section.key value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

fn settings(c: &Common) -> Result<Settings> {
    let mut s = match &c.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    s.apply_flags(&c.overrides)?;
    Ok(s)
}

fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut err = io::stderr();
    match cli.command {
        Command::Gradcheck(c) => pipeline::run_gradcheck(&settings(&c)?, &mut out),
        Command::Ingest(c) => pipeline::run_ingest(&PipelineConfig::from_settings(&settings(&c)?)?, &mut out),
        Command::Annotate(c) => {
            pipeline::run_annotate(&PipelineConfig::from_settings(&settings(&c)?)?, &mut out, &mut err)
        }
        Command::Filtrate(c) => pipeline::run_filtrate(&PipelineConfig::from_settings(&settings(&c)?)?, &mut out),
        Command::Train(c) => pipeline::run_train(&PipelineConfig::from_settings(&settings(&c)?)?, &mut out),
        Command::Evaluate(c) => pipeline::run_evaluate(&PipelineConfig::from_settings(&settings(&c)?)?, &mut out),
        Command::Gate(c) => {
            let cfg = PipelineConfig::from_settings(&settings(&c)?)?;
            let stdin = io::stdin();
            let mut input = stdin.lock();
            let mut buffered = io::BufWriter::new(out);
            pipeline::run_gate(&cfg, &mut input, &mut buffered, &mut err)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = io::stdout().flush();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

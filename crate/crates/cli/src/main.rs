use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use attrqa::{commands, exit, CliError, PipelineConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "attrqa", version, about = "Event attribute extraction as extractive QA")]
struct Args {
    /// TOML pipeline config.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set regime.budget=16`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert annotated ads into SQuAD-v2 records.
    Convert,
    /// Translate a SQuAD-v2 file and re-anchor its answers.
    Align,
    /// Run one training/evaluation regime and persist the result.
    Run,
    /// Tabulate F1 over run directories.
    Report { runs: Vec<PathBuf> },
    /// Compare pseudo-perplexity of scorers on unlabeled text.
    Perplexity,
    /// Agreement between two annotators' versions of the same ads.
    Iaa { a: PathBuf, b: PathBuf },
}

fn dispatch(args: &Args) -> Result<String, CliError> {
    if let Command::Report { runs } = &args.command {
        return commands::report(runs);
    }
    let cfg = PipelineConfig::load(args.config.as_deref(), &args.overrides)?;
    match &args.command {
        Command::Convert => commands::convert(&cfg),
        Command::Align => commands::align(&cfg),
        Command::Run => {
            let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
            commands::run(&cfg, &stamp).map(|dir| format!("{}\n", dir.display()))
        }
        Command::Perplexity => commands::perplexity(&cfg),
        Command::Iaa { a, b } => commands::iaa(&cfg, a, b),
        Command::Report { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    match dispatch(&args) {
        Ok(out) => {
            let _ = std::io::stdout().write_all(out.as_bytes());
            ExitCode::from(exit::OK as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

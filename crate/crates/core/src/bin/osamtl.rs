use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use osamtl::cli;

#[derive(Parser)]
#[command(name = "osamtl", version, about = "Abductive multi-target learning from diverse noisy labels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from an experiment config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check that a dataset's noisy label samples are pairwise diverse.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Run the one-step reasoning and write the abduced targets.
    Abduce {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate, abduce, train and evaluate for every configured seed.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    let result = match &args.command {
        Command::Generate { config, out } => cli::cmd_generate(config, out, &mut stdout),
        Command::Validate { dataset, tau } => cli::cmd_validate(dataset, *tau, &mut stdout),
        Command::Abduce { dataset, config, out } => cli::cmd_abduce(dataset, config, out, &mut stdout),
        Command::Pipeline { config, out, csv } => cli::cmd_pipeline(config, out, csv.as_deref(), &mut stdout),
    };
    match result {
        Ok(()) => ExitCode::from(cli::EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use discreg::config::{ExperimentConfig, ExperimentKind};
use discreg::experiment::run_experiment;
use discreg::Error;

#[derive(Parser)]
#[command(name = "discreg", version, about = "Tikhonov regularization experiments with discrepancy-based parameter choice")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory (default: ./out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 1 runs sequentially, 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named by the config's `kind`.
    Run { config: PathBuf },
    /// Run the convergence-rate study.
    Rates { config: PathBuf },
    /// Compare gradient descent against closed-form minimizers.
    Oracle { config: PathBuf },
    /// Parse the config and print the effective settings.
    Validate { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_EXHAUSTED: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (path, kind) = match &cli.command {
        Command::Run { config } => (config, None),
        Command::Rates { config } => (config, Some(ExperimentKind::RateStudy)),
        Command::Oracle { config } => (config, Some(ExperimentKind::LinearOracle)),
        Command::Validate { config } => (config, None),
    };
    let mut cfg = match ExperimentConfig::from_file(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(k) = kind {
        cfg.kind = k;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("{}: {e}", path.display());
        return ExitCode::from(EXIT_CONFIG);
    }
    if let Command::Validate { .. } = cli.command {
        print!("{}", cfg.to_text());
        return ExitCode::SUCCESS;
    }
    let Format::Csv = cli.format;
    let out = cli.out.unwrap_or_else(|| PathBuf::from("out"));
    match run_experiment(&cfg, &out) {
        Ok(report) => {
            for l in &report.lines {
                println!("{l}");
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            if report.exhausted {
                eprintln!("{}: the selection rule found no admissible result", cfg.kind.label());
                ExitCode::from(EXIT_EXHAUSTED)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use klr::commands::{cmd_bm_rate, cmd_generate, cmd_study, cmd_test, emit, BmRateConfig, Output, RunOptions};
use klr::config::Settings;
use klr::klr_core::analytic::DEFAULT_TERMS;
use klr::klr_core::synthetic::Side;
use klr::{CliError, CliResult};

/// Regularized kernel likelihood-ratio two-sample tests.
#[derive(Parser)]
#[command(name = "klr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file with default settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Record wall time in the report.
    #[arg(long)]
    timing: bool,
    /// Print progress to standard error.
    #[arg(long)]
    progress: bool,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    P,
    Q,
}

#[derive(Subcommand)]
enum Command {
    /// Test whether two delimited-text samples share a distribution.
    Test {
        x: PathBuf,
        y: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Rejection rates of a synthetic model over replications.
    Bench {
        #[command(flatten)]
        common: Common,
    },
    /// Rejection rates with both samples drawn from the reference distribution.
    NullCalibration {
        #[command(flatten)]
        common: Common,
    },
    /// Brownian-motion Hilbert-Schmidt series against its small-ridge limit.
    BmRate {
        #[arg(long, default_value_t = 1.0)]
        v1: f64,
        #[arg(long, default_value_t = 2.0)]
        v2: f64,
        #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-3,1e-4")]
        gammas: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_TERMS)]
        terms: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic sample as comma-separated text.
    Generate {
        #[arg(long, value_enum, default_value = "q")]
        side: SideArg,
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let load = |c: Common| -> CliResult<(Settings, RunOptions)> {
        let opts = RunOptions {
            timing: c.timing,
            progress: c.progress,
        };
        Ok((Settings::load(c.config.as_deref(), c.settings)?, opts))
    };
    match cli.command {
        Command::Test { x, y, common } => {
            let (s, opts) = load(common)?;
            emit(&cmd_test(&x, &y, &s, opts)?, &s)
        }
        Command::Bench { common } => {
            let (s, opts) = load(common)?;
            emit(&cmd_study(&s, false, opts)?, &s)
        }
        Command::NullCalibration { common } => {
            let (s, opts) = load(common)?;
            emit(&cmd_study(&s, true, opts)?, &s)
        }
        Command::BmRate { v1, v2, gammas, terms, common } => {
            let (s, opts) = load(common)?;
            emit(&cmd_bm_rate(BmRateConfig { v1, v2, gammas, terms }, &s, opts)?, &s)
        }
        Command::Generate { side, common } => {
            let (s, _) = load(common)?;
            let side = match side {
                SideArg::P => Side::P,
                SideArg::Q => Side::Q,
            };
            let text = cmd_generate(&s, side)?;
            emit(&Output { report: text, table: None }, &s)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { CliError::config("").exit() } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit()
        }
    }
}

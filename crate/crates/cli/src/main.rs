//! Command-line front end: ingest or synthesize market data, train the
//! policy network, run comparison backtests and merge reports.

mod commands;
mod config;
mod dataset;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{parse_seed_list, CliOverrides, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "folio",
    version,
    about = "Portfolio management experiments: a convolutional policy network \
             trained on log returns, six classic strategies, and a \
             commission-aware backtester"
)]
struct Cli {
    /// Config file of `key = value` lines; flags override file values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Training seeds, comma separated (e.g. `0,1,2`).
    #[arg(long, global = true, value_name = "LIST")]
    seeds: Option<String>,

    /// Small-scale preset: narrow topology, 20000 steps at learning rate 1e-3.
    #[arg(long, global = true)]
    desk_scale: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a CSV price/volume history into a dataset file.
    Ingest {
        /// CSV input: timestamp_unix_seconds,asset_symbol,price_in_quote,volume_in_quote
        #[arg(long, value_name = "CSV")]
        input: PathBuf,
        /// Dataset file to write.
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,
    },
    /// Generate a synthetic dataset from the configured price process.
    Synth {
        /// Dataset file to write.
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,
    },
    /// Train the policy network, selecting the best seed on cross-validation.
    Train {
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,
        /// Output directory for checkpoint, tables and logs.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Simulate policies over the test range and write reports.
    Backtest {
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Trained agent checkpoint; enables the "agent" policy.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Policies to run, comma separated:
        /// ubah,beststock,ucrp,up,ons,pamr,agent
        #[arg(long, value_name = "LIST")]
        strategies: Option<String>,
        /// Also write capital curves as CSV for external plotting.
        #[arg(long)]
        emit_curves: bool,
    },
    /// Merge backtest reports into one table sorted by final value.
    Compare {
        /// Report JSON files produced by `backtest`.
        #[arg(required = true, value_name = "REPORT")]
        reports: Vec<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = CliOverrides {
        seeds: cli.seeds.as_deref().map(parse_seed_list).transpose()?,
        desk_scale: cli.desk_scale,
        strategies: match &cli.command {
            Command::Backtest { strategies: Some(list), .. } => {
                Some(list.split(',').map(|s| s.trim().to_string()).collect())
            }
            _ => None,
        },
    };
    let config = RunConfig::resolve(cli.config.as_deref(), &overrides)?;
    match &cli.command {
        Command::Ingest { input, dataset } => commands::cmd_ingest(input, dataset, &config),
        Command::Synth { dataset } => commands::cmd_synth(dataset, &config),
        Command::Train { dataset, out } => commands::cmd_train(dataset, out, &config),
        Command::Backtest { dataset, out, checkpoint, emit_curves, .. } => {
            commands::cmd_backtest(dataset, out, checkpoint.as_deref(), *emit_curves, &config)
        }
        Command::Compare { reports, out } => commands::cmd_compare(reports, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

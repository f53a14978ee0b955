//! `rdple`: partial linear regression-discontinuity estimation from the
//! command line.

mod commands;
mod config;
mod error;
mod input;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rdple::estimate::{BandwidthRule, EstimateConfig};
use rdple::variance::VarianceMethod;
use rdple::Kernel;

use crate::commands::{DataArgs, Format, Treated};
use crate::error::CliResult;

#[derive(Parser)]
#[command(name = "rdple", version, about = "Partial linear estimation for sharp regression discontinuity designs")]
struct Cli {
    /// Worker threads; 0 uses all cores, 1 runs sequentially.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataOpts {
    /// CSV file with a header row.
    input: PathBuf,
    /// Running-variable column.
    #[arg(long, default_value = "x")]
    x: String,
    /// Response column.
    #[arg(long, default_value = "y")]
    y: String,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    cutoff: f64,
}

impl DataOpts {
    fn args(&self) -> DataArgs<'_> {
        DataArgs {
            input: &self.input,
            x: &self.x,
            y: &self.y,
            cutoff: self.cutoff,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the jump at the cutoff.
    Estimate {
        #[command(flatten)]
        data: DataOpts,
        #[arg(long, default_value_t = 1)]
        degree: u32,
        #[arg(long, default_value = "epanechnikov")]
        kernel: Kernel,
        /// sm, ik or fixed:<h>.
        #[arg(long, default_value = "sm")]
        rule: BandwidthRule,
        #[arg(long, default_value = "ple_wu")]
        variance: VarianceMethod,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Side of the cutoff that receives treatment.
        #[arg(long, value_enum, default_value = "above")]
        treated: Treated,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo study described by a TOML file.
    Simulate {
        config: PathBuf,
        /// Overrides the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a dataset from one of the simulation designs (columns x, y, d).
    Dgp {
        #[arg(long)]
        id: u8,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report the bandwidth selection and its intermediate quantities.
    Bandwidth {
        #[command(flatten)]
        data: DataOpts,
        #[arg(long, default_value_t = 1)]
        degree: u32,
        #[arg(long, default_value = "epanechnikov")]
        kernel: Kernel,
        #[arg(long, default_value = "sm")]
        rule: BandwidthRule,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Estimate {
            data,
            degree,
            kernel,
            rule,
            variance,
            alpha,
            treated,
            format,
            out,
        } => {
            let config = EstimateConfig {
                degree,
                kernel,
                rule,
                variance,
                alpha,
            };
            commands::estimate(&data.args(), &config, treated, cli.workers, format, out.as_deref())
        }
        Command::Simulate { config, seed, out } => commands::simulate(&config, seed, cli.workers, out),
        Command::Dgp { id, n, seed, out } => commands::dgp(id, n, seed, out.as_deref()),
        Command::Bandwidth {
            data,
            degree,
            kernel,
            rule,
            format,
            out,
        } => commands::bandwidth(&data.args(), degree, kernel, rule, format, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

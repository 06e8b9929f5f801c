// Copyright 2026 The bgrape Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use bgrape_cli::commands::{self, BaselineKind, CliError, Common, FieldSource};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Robust quantum control by mini-batch stochastic GRAPE.
///
/// Exit status: 0 on success (including diverged runs, which are flagged in
/// the manifest), 1 for I/O failures, 2 for config or input errors, 3 for
/// numeric failures.
#[derive(Parser)]
#[command(name = "bgrape", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write into an existing non-empty output directory instead of a fresh
    /// timestamped sibling.
    #[arg(long)]
    force: bool,
}

impl From<CommonArgs> for Common {
    fn from(a: CommonArgs) -> Self {
        Self {
            config: a.config,
            seed: a.seed,
            threads: a.threads,
            out: a.out,
            force: a.force,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Rectangular,
    Gaussian,
}

impl From<Baseline> for BaselineKind {
    fn from(b: Baseline) -> Self {
        match b {
            Baseline::Rectangular => Self::Rectangular,
            Baseline::Gaussian => Self::Gaussian,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a control field.
    Optimize {
        #[command(flatten)]
        common: CommonArgs,
        /// Start from this field instead of the seeded random guess.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Infidelity over a grid of the two coupling errors.
    Landscape {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        field: PathBuf,
        /// Grid points per axis.
        #[arg(long)]
        grid: Option<usize>,
        /// Extra level-set threshold for area.json.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Monte-Carlo gate-error distribution of a field.
    Distribution {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
        field: Option<PathBuf>,
        /// Evaluate a textbook π-pulse instead of a field file.
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Write a textbook π-pulse as a field file.
    Baseline {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "rectangular")]
        baseline: Baseline,
    },
    /// Nominal and held-out infidelity of a field.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        field: PathBuf,
    },
}

fn dispatch(command: Command) -> Result<commands::Outcome, CliError> {
    match command {
        Command::Optimize { common, field } => commands::optimize(&common.into(), field.as_deref()),
        Command::Landscape {
            common,
            field,
            grid,
            threshold,
        } => commands::landscape_cmd(&common.into(), &field, grid, threshold),
        Command::Distribution {
            common,
            field,
            baseline,
            samples,
        } => {
            let source = match (&field, baseline) {
                (Some(p), _) => FieldSource::File(p),
                (None, Some(b)) => FieldSource::Baseline(b.into()),
                (None, None) => unreachable!("clap requires one of --field and --baseline"),
            };
            commands::distribution(&common.into(), source, samples)
        }
        Command::Baseline { common, baseline } => commands::baseline(&common.into(), baseline.into()),
        Command::Evaluate { common, field } => commands::evaluate(&common.into(), &field),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(outcome) => {
            println!("wrote {}", outcome.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("bgrape: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

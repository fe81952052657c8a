use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

use commands::Failure;

/// Boundary observer-based control of semilinear stochastic heat equations
/// on boxes: spectra, LMI synthesis, noise sweeps and Monte Carlo runs.
#[derive(Debug, Parser)]
#[command(name = "heatctl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List eigenvalues, N0, d and the measurement residue constant.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the design inequalities and write a gain bundle.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "bundle.toml")]
        out: PathBuf,
    },
    /// Bisect the largest admissible noise intensities for every N.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Override `design.sweep`.
        #[arg(long, value_enum)]
        mode: Option<SweepMode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo simulation of the closed loop with a synthesized bundle.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "bundle.toml")]
        bundle: PathBuf,
        /// CSV output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write a plot of the mean energy next to the CSV.
        #[arg(long)]
        svg: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepMode {
    Table1,
    Table2,
    Custom,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(f) = commands::init_threads() {
        return report(f);
    }
    let result = match cli.command {
        Command::Spectrum { config, out } => commands::spectrum(&config, out.as_deref()),
        Command::Synthesize { config, out } => commands::synthesize(&config, &out),
        Command::Sweep { config, mode, out } => {
            let mode = mode.map(|m| match m {
                SweepMode::Table1 => heatctl_core::config::SweepKind::Table1,
                SweepMode::Table2 => heatctl_core::config::SweepKind::Table2,
                SweepMode::Custom => heatctl_core::config::SweepKind::Custom,
            });
            commands::sweep(&config, mode, out.as_deref())
        }
        Command::Simulate {
            config,
            bundle,
            out,
            paths,
            seed,
            svg,
        } => commands::simulate(&commands::SimulateArgs {
            config,
            bundle,
            out,
            paths,
            seed,
            svg,
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    eprintln!("error: {}", f.message);
    ExitCode::from(f.code)
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use optospring::UnitMode;

mod commands;
mod config;
mod error;
mod output;

use commands::{FigureId, FigureSpec};
use config::{FlagOverrides, Format, GridSpec, OptimizeMode, RunConfig};
use error::CliError;

/// Quantum-noise spectra, optima and stability maps for a detuned
/// Fabry-Perot cavity with a movable mirror.
///
/// Exit codes: 0 success, 2 configuration error, 3 numerical singularity,
/// 4 optimizer non-convergence.
#[derive(Parser, Debug)]
#[command(name = "optospring", version, about)]
struct Cli {
    /// TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file (directory for `figure`); stdout when omitted
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Frequency grid as lo:hi:points-per-decade
    #[arg(long, global = true)]
    grid: Option<GridSpec>,

    /// hbar = 1 units (default)
    #[arg(long, global = true, conflicts_with = "si")]
    normalized: bool,

    /// SI units
    #[arg(long, global = true)]
    si: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Equivalent input noise spectra for the configured working points
    Spectrum,
    /// Minimize the noise over the coupling (and detuning)
    Optimize {
        #[arg(long, value_enum)]
        mode: Option<OptimizeMode>,
        /// Comma-separated absolute frequencies
        #[arg(long, value_delimiter = ',')]
        frequencies: Vec<f64>,
    },
    /// Static and dynamic stability on a (xi^2, detuning) grid
    Stability,
    /// Data for one of the published figures, one file per curve plus a manifest
    Figure {
        #[arg(value_enum)]
        id: FigureId,
        /// Comma-separated detunings in units of gamma
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        detunings: Vec<f64>,
        /// Comma-separated cavity bandwidths in units of Omega_SQL (fig4 only)
        #[arg(long, value_delimiter = ',')]
        bandwidths: Vec<f64>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let units = match (cli.normalized, cli.si) {
        (_, true) => Some(UnitMode::Si),
        (true, _) => Some(UnitMode::Normalized),
        _ => None,
    };
    let flags = FlagOverrides {
        units,
        format: cli.format,
        out: cli.out.clone(),
        grid: cli.grid,
    };
    let mut config = RunConfig::load(cli.config.as_deref(), std::env::vars(), &flags)?;
    match cli.command {
        Command::Spectrum => {
            let table = commands::spectrum(&config)?;
            let format = config.format.unwrap_or(Format::Csv);
            output::emit(config.out.as_deref(), &table.render(format)?)
        }
        Command::Optimize { mode, frequencies } => {
            if let Some(mode) = mode {
                config.optimize.mode = mode;
            }
            if !frequencies.is_empty() {
                config.optimize.frequencies = Some(frequencies);
            }
            config.validate()?;
            let report = commands::optimize(&config)?;
            let format = config.format.unwrap_or(Format::Json);
            output::emit(config.out.as_deref(), &report.table.render(format)?)?;
            if report.unconverged.is_empty() {
                Ok(())
            } else {
                Err(CliError::NonConvergence(format!(
                    "no converged optimum at omega = {:?} (see report)",
                    report.unconverged
                )))
            }
        }
        Command::Stability => {
            let table = commands::stability(&config)?;
            let format = config.format.unwrap_or(Format::Csv);
            output::emit(config.out.as_deref(), &table.render(format)?)
        }
        Command::Figure {
            id,
            detunings,
            bandwidths,
        } => {
            if config.units == UnitMode::Si {
                return Err(CliError::Config(
                    "figures are defined in normalized units".into(),
                ));
            }
            let spec = FigureSpec::new(id, detunings, bandwidths)?;
            let format = config.format.unwrap_or(Format::Csv);
            let fig = commands::figure(&spec, format, cli.grid)?;
            let dir = config
                .out
                .clone()
                .unwrap_or_else(|| commands::default_figure_dir(id));
            for (name, table) in &fig.files {
                output::write_atomic(&dir.join(name), &table.render(format)?)?;
            }
            let mut manifest = serde_json::to_vec_pretty(&fig.manifest)?;
            manifest.push(b'\n');
            output::write_atomic(&dir.join("manifest.json"), &manifest)
        }
    }
}

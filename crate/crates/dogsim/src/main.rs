use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dogsim::commands::{cmd_data, cmd_matrix, cmd_run, cmd_sweep, SweepAxis};
use dogsim::CliError;

#[derive(Parser)]
#[command(name = "dogsim", version, about = "Decentralized online gradient descent simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Beta,
    Nodes,
    Topology,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write metrics.csv, resolved.cfg and summary.txt
    Run {
        config: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Worker threads for per-node gradient evaluation
        #[arg(long, default_value_t = default_threads())]
        threads: usize,
    },
    /// Run a base experiment across several values of one parameter
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values, e.g. 0.9,0.7,0.5 or ring,watts_strogatz:0.5
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = default_threads())]
        threads: usize,
    },
    /// Print the mixing matrix as CSV with its rho and stochasticity deviations
    Matrix { config: PathBuf },
    /// Dump the first COUNT samples of every node in LIBSVM format
    Data {
        config: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, short)]
        output: PathBuf,
    },
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn warn(lines: &[String]) {
    for w in lines {
        eprintln!("warning: {w}");
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out, threads } => {
            let outcome = cmd_run(&config, &out, threads)?;
            warn(&outcome.warnings);
        }
        Command::Sweep { config, axis, values, out, threads } => {
            let axis = match axis {
                Axis::Beta => SweepAxis::Beta,
                Axis::Nodes => SweepAxis::Nodes,
                Axis::Topology => SweepAxis::Topology,
            };
            let values: Vec<String> = values.into_iter().filter(|v| !v.is_empty()).collect();
            cmd_sweep(&config, axis, &values, &out, threads)?;
        }
        Command::Matrix { config } => {
            let (report, warnings) = cmd_matrix(&config)?;
            print!("{report}");
            warn(&warnings);
        }
        Command::Data { config, count, output } => {
            cmd_data(&config, count, &output)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

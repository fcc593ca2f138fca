use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use reachctl::{cmd_analyze, cmd_plot, cmd_simulate, cmd_synthesize, cmd_verify, CliError, Flags, Output};

#[derive(Parser)]
#[command(name = "reachctl", version, about = "Reach control synthesis on simplices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Barycentric grid density for verification starts.
    #[arg(long)]
    grid: Option<usize>,
    /// Integration step.
    #[arg(long)]
    dt: Option<f64>,
    /// Time horizon per trajectory.
    #[arg(long)]
    tmax: Option<f64>,
    /// Tolerance on the boundary invariance check.
    #[arg(long)]
    tol: Option<f64>,
    /// Pin file replacing the pins in the problem file.
    #[arg(long, value_name = "FILE")]
    pin_controls: Option<PathBuf>,
    /// Write the result document here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Print equilibrium set, G, indices, route and assumption checks.
    Analyze {
        problem: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Build a controller and write it in the controller format.
    Synthesize {
        problem: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a controller from a start grid and check the closed loop.
    Verify {
        problem: PathBuf,
        controller: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate one trajectory and write it as CSV.
    Simulate {
        problem: PathBuf,
        controller: PathBuf,
        /// Initial state as comma separated values (default: centroid).
        #[arg(long, allow_hyphen_values = true, value_parser = parse_state)]
        x0: Option<State>,
        #[command(flatten)]
        common: Common,
    },
    /// Render the closed-loop field of a planar instance as SVG.
    Plot {
        problem: PathBuf,
        controller: PathBuf,
        /// Draw the vector field only.
        #[arg(long)]
        no_trajectories: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Debug)]
struct State(Vec<f64>);

fn parse_state(s: &str) -> Result<State, String> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<Result<_, _>>()
        .map(State)
}

fn flags(c: &Common) -> Flags {
    Flags {
        grid: c.grid,
        dt: c.dt,
        tmax: c.tmax,
        tol: c.tol,
        pin_controls: c.pin_controls.clone(),
        seed: std::env::var("REACHCTL_SEED").ok().and_then(|s| s.parse().ok()),
    }
}

fn emit(out: Output, dest: Option<&Path>, document_on_stdout: bool) -> Result<(), CliError> {
    match (dest, out.document) {
        (Some(path), Some(doc)) => {
            std::fs::write(path, doc).map_err(|source| CliError::Write {
                path: path.to_path_buf(),
                source,
            })?;
            print!("{}", out.summary);
        }
        (None, Some(doc)) if document_on_stdout => {
            eprint!("{}", out.summary);
            print!("{doc}");
        }
        _ => print!("{}", out.summary),
    }
    match out.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze { problem, common } => emit(cmd_analyze(&problem)?, common.out.as_deref(), false),
        Command::Synthesize { problem, common } => {
            emit(cmd_synthesize(&problem, &flags(&common))?, common.out.as_deref(), true)
        }
        Command::Verify {
            problem,
            controller,
            common,
        } => emit(cmd_verify(&problem, &controller, &flags(&common))?, common.out.as_deref(), false),
        Command::Simulate {
            problem,
            controller,
            x0,
            common,
        } => emit(
            cmd_simulate(&problem, &controller, x0.as_ref().map(|s| s.0.as_slice()), &flags(&common))?,
            common.out.as_deref(),
            true,
        ),
        Command::Plot {
            problem,
            controller,
            no_trajectories,
            common,
        } => emit(
            cmd_plot(&problem, &controller, !no_trajectories, &flags(&common))?,
            common.out.as_deref(),
            true,
        ),
    }
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

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gvimp::runner::{run_scenario, RunOptions};
use gvimp::scenario::{make_sdf, Mode, Scenario};
use gvimp::Error;

/// Gaussian variational inference motion planner.
#[derive(Debug, Parser)]
#[command(name = "gvimp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a scenario and write result files.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the scenario's mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Number of trajectory samples to write.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rasterize an obstacle spec into an SDF file.
    MakeSdf { spec: PathBuf, out: PathBuf },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Gvi,
    Map,
    Both,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Gvi => Mode::Gvi,
            ModeArg::Map => Mode::Map,
            ModeArg::Both => Mode::Both,
        }
    }
}

const EXIT_USAGE: u8 = 1;
const EXIT_NO_PROGRESS: u8 = 2;
const EXIT_IO: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(&e))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::MakeSdf { spec, out } => match make_sdf(&spec, &out) {
            Ok(g) => {
                println!("wrote {} ({} x {})", out.display(), g.rows(), g.cols());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Run {
            scenario,
            out,
            mode,
            samples,
            seed,
        } => {
            let scn = match Scenario::load(&scenario) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let opts = RunOptions {
                mode: mode.map(Mode::from),
                samples,
                seed,
            };
            let outcome = match run_scenario(&scn, &out, &opts) {
                Ok(o) => o,
                Err(e) => return fail(e),
            };
            if let Some(g) = &outcome.gvi {
                let r = g.result.final_report();
                println!(
                    "gvi: {:?} after {} iterations, prior {:.6} collision {:.6} entropy {:.6} total {:.6} (collision at mean {:.6})",
                    g.result.status,
                    g.result.history.len() - 1,
                    r.prior,
                    r.collision,
                    r.entropy,
                    r.total,
                    g.mean_collision
                );
            }
            if let Some(m) = &outcome.map {
                let r = m.final_report();
                println!(
                    "map: {:?} after {} iterations, prior {:.6} collision {:.6} total {:.6}",
                    m.status,
                    m.history.len() - 1,
                    r.prior,
                    r.collision,
                    r.total
                );
            }
            println!("results in {}", out.display());
            if outcome.no_progress() {
                eprintln!("error: solver stopped without progress");
                return ExitCode::from(EXIT_NO_PROGRESS);
            }
            ExitCode::SUCCESS
        }
    }
}

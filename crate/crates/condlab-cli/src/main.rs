// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use condlab::par::Exec;
use condlab_cli::commands::{self, EXIT_ERROR, EXIT_OK};
use condlab_cli::{examples, scenario};

#[derive(Parser)]
#[command(name = "condlab", version, about = "Type problems for weighted Laplacians with conductivity tensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide W-parabolicity of the scenario and print the report.
    Classify {
        scenario: PathBuf,
        /// Recompute every certificate margin and require bit-identical values.
        #[arg(long)]
        replay: bool,
    },
    /// Estimate the condenser capacity of the scenario's annulus.
    Capacity { scenario: PathBuf },
    /// Run a named verification example and print its claim table.
    VerifyExample {
        name: String,
        /// Print rows as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Write report.json and CSV plot data to a directory.
    Report {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        replay: bool,
    },
}

/// Sizes the global pool from CONDLAB_THREADS; a cap of 1 selects the
/// sequential path outright.
fn configure_threads() -> anyhow::Result<Exec> {
    let Ok(raw) = std::env::var("CONDLAB_THREADS") else {
        return Ok(Exec::Parallel);
    };
    let n: usize = raw.trim().parse().with_context(|| format!("CONDLAB_THREADS must be a positive integer, got '{raw}'"))?;
    anyhow::ensure!(n >= 1, "CONDLAB_THREADS must be at least 1");
    if n == 1 {
        return Ok(Exec::Sequential);
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("cannot size the thread pool")?;
    Ok(Exec::Parallel)
}

fn load(path: &Path, exec: Exec) -> anyhow::Result<scenario::Resolved> {
    let (sc, text) = scenario::load(path)?;
    scenario::resolve(&sc, &text, exec).with_context(|| format!("in {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let exec = configure_threads()?;
    match cli.command {
        Command::Classify { scenario, replay } => {
            let res = load(&scenario, exec)?;
            let rep = commands::classify(&res, replay)?;
            print!("{}", rep.to_json());
            Ok(rep.exit_code())
        }
        Command::Capacity { scenario } => {
            let res = load(&scenario, exec)?;
            let rep = commands::capacity(&res)?;
            print!("{}", rep.to_json());
            Ok(rep.exit_code())
        }
        Command::Report { scenario, out, replay } => {
            let res = load(&scenario, exec)?;
            let rep = commands::full_report(&res, replay)?;
            for f in commands::write_report(&res, &rep, &out)? {
                println!("{}", out.join(f).display());
            }
            Ok(rep.exit_code())
        }
        Command::VerifyExample { name, json } => {
            let rows = examples::run(&name)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                print!("{}", examples::render(&rows));
            }
            Ok(if examples::all_passed(&rows) { EXIT_OK } else { EXIT_ERROR })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}

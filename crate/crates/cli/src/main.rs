//! `anylab`: topology, control, measurement and report commands over one
//! simulated anycast lab.

mod ctl;
mod measure;
mod report;
mod topo;

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use anylab_core::topology::{load_topology, tangled_fixture_with, AsTopology, FixtureConfig};
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "anylab",
    version,
    about = "Desk-scale simulated anycast laboratory"
)]
struct Cli {
    /// Seed for the fixture topology, synthetic hit lists and probe loss.
    #[arg(long, global = true, env = "ANYLAB_SEED", default_value_t = 1)]
    seed: u64,
    /// Topology file; the built-in fixture is used when absent.
    #[arg(long, global = true, value_name = "FILE")]
    topology: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate, validate or summarize topologies.
    Topo {
        #[command(subcommand)]
        action: topo::TopoCommand,
    },
    /// Announce, withdraw and inspect per-site announcements.
    Ctl(ctl::CtlArgs),
    /// Replay timestamped control scripts.
    Scenario {
        #[command(subcommand)]
        action: ctl::ScenarioCommand,
    },
    /// Catchment measurement over the simulated data plane.
    Measure {
        #[command(subcommand)]
        action: measure::MeasureCommand,
    },
    /// Reports over reply CSV files.
    Report {
        #[command(subcommand)]
        action: report::ReportCommand,
    },
}

/// Settings shared by every subcommand.
pub struct Env {
    pub seed: u64,
    pub topology: Option<PathBuf>,
}

impl Env {
    pub fn topology(&self) -> Result<Arc<AsTopology>> {
        match &self.topology {
            Some(path) => {
                let text = read_input(path)?;
                let t =
                    load_topology(&text).with_context(|| format!("loading {}", path.display()))?;
                Ok(Arc::new(t))
            }
            None => Ok(Arc::new(tangled_fixture_with(&FixtureConfig {
                seed: self.seed,
                ..FixtureConfig::default()
            }))),
        }
    }
}

/// Reads a file, or stdin for `-`.
pub fn read_input(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut text = String::new();
        io::stdin().read_to_string(&mut text)?;
        return Ok(text);
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn print_stdout(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let env = Env {
        seed: cli.seed,
        topology: cli.topology,
    };
    let result = match cli.command {
        Command::Topo { action } => topo::run(&env, action),
        Command::Ctl(args) => ctl::run(&env, args),
        Command::Scenario { action } => ctl::run_scenario_cmd(&env, action),
        Command::Measure { action } => measure::run(&env, action),
        Command::Report { action } => report::run(action),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.downcast_ref::<io::Error>()
        .is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
}

/// Exits with status 2 and clap's usage formatting.
pub fn usage_error(message: impl std::fmt::Display) -> ! {
    use clap::CommandFactory;
    Cli::command()
        .error(clap::error::ErrorKind::ArgumentConflict, message)
        .exit()
}

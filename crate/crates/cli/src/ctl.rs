use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use anylab_core::controller::{
    parse_script, run_scenario, status, Command, ControlError, ControlState, Family, LogEntry,
    Outcome,
};
use anylab_core::routing::parse_communities;
use anylab_core::topology::{AsTopology, Asn, SiteId};
use clap::{ArgGroup, Args, Subcommand};
use ipnet::IpNet;

use crate::{print_stdout, read_input, usage_error, Env};

/// Default control-log location, relative to the working directory.
pub const DEFAULT_STATE: &str = "anylab.state";

const LOG_HEADER: &str = "# anylab control log\n";

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("family").args(["v4", "v6"])))]
pub struct CtlArgs {
    /// IPv4 prefix.
    #[arg(short = '4')]
    v4: bool,
    /// IPv6 prefix.
    #[arg(short = '6')]
    v6: bool,
    /// Announce the prefix from the site.
    #[arg(short = 'A', long = "announce", conflicts_with = "withdraw")]
    announce: bool,
    /// Withdraw the prefix from the site.
    #[arg(short = 'W', long = "withdraw")]
    withdraw: bool,
    /// Site id, e.g. br-poa.
    #[arg(short = 't', long = "site", value_name = "SITE")]
    site: Option<String>,
    /// Prefix to act on; needs -4 or -6.
    #[arg(
        short = 'r',
        long = "prefix",
        value_name = "PREFIX",
        requires = "family"
    )]
    prefix: Option<String>,
    /// AS-path prepends at the site.
    #[arg(short = 'P', long = "prepend", value_name = "N", requires = "announce")]
    prepend: Option<u32>,
    /// Comma-separated communities, e.g. noPeer,selective-prepend:20473:2.
    #[arg(
        short = 'C',
        long = "community",
        value_name = "LIST",
        requires = "announce"
    )]
    community: Option<String>,
    /// Comma-separated ASNs to poison in the announced path.
    #[arg(
        long,
        value_name = "ASNS",
        value_delimiter = ',',
        requires = "announce"
    )]
    poison: Vec<Asn>,
    /// Prepend N at every announcing site except -t.
    #[arg(
        short = 'R',
        long = "reverse-prepend",
        value_name = "N",
        conflicts_with_all = ["announce", "withdraw"]
    )]
    reverse_prepend: Option<u32>,
    /// Print per-site status after applying the command.
    #[arg(long)]
    status: bool,
    /// Control log file.
    #[arg(long, env = "ANYLAB_STATE", default_value = DEFAULT_STATE, value_name = "FILE")]
    state: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCommand {
    /// Apply a script in timestamp order and print a routing snapshot per command.
    Run {
        file: PathBuf,
        /// Also write the resulting control log here.
        #[arg(long, value_name = "FILE")]
        save: Option<PathBuf>,
    },
}

pub fn run(env: &Env, args: CtlArgs) -> Result<()> {
    let acting = args.announce || args.withdraw || args.reverse_prepend.is_some();
    if acting && (args.site.is_none() || args.prefix.is_none()) {
        usage_error("-A, -W and -R need both -t <site> and -r <prefix>");
    }
    let topology = env.topology()?;
    let mut state = load_state(&topology, &args.state)?;
    if !acting {
        return print_stdout(&status(&state));
    }

    let site = SiteId::new(args.site.as_deref().unwrap_or_default())?;
    let text = args.prefix.as_deref().unwrap_or_default();
    let family = if args.v6 { Family::V6 } else { Family::V4 };
    let command = match text.parse::<IpNet>() {
        Err(_) => Err(ControlError::MalformedPrefix(text.to_string())),
        Ok(prefix) if !args.announce && Family::of(&prefix) != family => {
            Err(ControlError::FamilyMismatch { prefix, family })
        }
        Ok(prefix) if args.announce => Ok(Command::Announce {
            site,
            prefix,
            family,
            prepend: args.prepend.unwrap_or(0),
            communities: parse_communities(args.community.as_deref().unwrap_or(""))?,
            poisoned: args.poison.iter().copied().collect::<BTreeSet<_>>(),
        }),
        Ok(prefix) if args.withdraw => Ok(Command::Withdraw { site, prefix }),
        Ok(prefix) => Ok(Command::ReversePrepend {
            prefix,
            keep: site,
            n: args.reverse_prepend.unwrap_or(0),
        }),
    };
    let command = command?;

    let t = last_timestamp(&args.state).max(state.clock()) + 1;
    let result = state.apply_at(t, command.clone());
    append_entry(&state, &args.state)?;
    match result {
        Ok(Outcome::NoOp) => eprintln!("no change: {command}"),
        Ok(_) => eprintln!("applied: {command}"),
        Err(e) => return Err(anyhow!(e)),
    }
    if args.status {
        print_stdout(&status(&state))?;
    }
    Ok(())
}

/// Rebuilds the controller from a control log; a missing file gives an
/// empty state.
pub fn load_state(topology: &Arc<AsTopology>, path: &Path) -> Result<ControlState> {
    let mut state = ControlState::new(topology.clone());
    if !path.exists() {
        return Ok(state);
    }
    let text = read_input(path)?;
    let lines = parse_script(&text).with_context(|| format!("reading {}", path.display()))?;
    for l in lines {
        let _ = state.apply_at(l.t, l.command);
    }
    Ok(state)
}

/// Highest timestamp in a control log, counting commented-out failures.
fn last_timestamp(path: &Path) -> u64 {
    let text = fs::read_to_string(path).unwrap_or_default();
    text.lines()
        .filter_map(|l| {
            l.trim_start_matches(['#', ' '])
                .split_whitespace()
                .next()?
                .parse::<u64>()
                .ok()
        })
        .max()
        .unwrap_or(0)
}

/// Failed commands are kept as comments so a reload never re-applies them.
fn render_entry(e: &LogEntry) -> String {
    match &e.outcome {
        Outcome::Failed(msg) => format!("# {} {} failed: {msg}\n", e.timestamp, e.command),
        _ => format!("{} {}\n", e.timestamp, e.command),
    }
}

pub fn render_log(state: &ControlState) -> String {
    let mut out = String::from(LOG_HEADER);
    for e in state.log() {
        out.push_str(&render_entry(e));
    }
    out
}

fn append_entry(state: &ControlState, path: &Path) -> Result<()> {
    let entry = state.log().last().expect("command was just applied");
    let mut text = if path.exists() {
        String::new()
    } else {
        LOG_HEADER.to_string()
    };
    text.push_str(&render_entry(entry));
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .with_context(|| format!("writing {}", path.display()))
}

fn save_state(state: &ControlState, path: &Path) -> Result<()> {
    fs::write(path, render_log(state)).with_context(|| format!("writing {}", path.display()))
}

pub fn run_scenario_cmd(env: &Env, action: ScenarioCommand) -> Result<()> {
    let ScenarioCommand::Run { file, save } = action;
    let topology = env.topology()?;
    let script =
        parse_script(&read_input(&file)?).with_context(|| format!("parsing {}", file.display()))?;
    let run = run_scenario(ControlState::new(topology), &script);

    let mut out = String::new();
    for snap in &run.snapshots {
        let line = &script[snap.index - 1];
        let _ = writeln!(
            out,
            "#{} t={} {}: {} route(s) over {} prefix(es)",
            snap.index,
            snap.t,
            line.command,
            snap.rib.len(),
            snap.rib.prefixes().count()
        );
    }
    out.push_str(&status(&run.state));
    print_stdout(&out)?;
    if let Some(path) = save {
        save_state(&run.state, &path)?;
    }
    if let Some((index, err)) = run.failure {
        let line = &script[index - 1];
        bail!(
            "command {index} (line {}, t={}) failed: {err}",
            line.line,
            line.t
        );
    }
    Ok(())
}

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use anylab_core::csvio::write_replies_csv;
use anylab_core::probe::{
    estimate_duration, hitlist_to_csv, load_hitlist, pace_check, run_measurement,
    synthetic_hitlist, MeasurementPlan, DEFAULT_ACCESS_LATENCY_MS, DEFAULT_PACE_THRESHOLD_PPS,
    DEFAULT_RATE_PPS,
};
use anylab_core::routing::{propagate, Announcement};
use anylab_core::topology::{AsTopology, SiteId};
use clap::{Args, Subcommand};
use ipnet::IpNet;

use crate::ctl::{load_state, DEFAULT_STATE};
use crate::{print_stdout, read_input, Env};

#[derive(Debug, Subcommand)]
pub enum MeasureCommand {
    /// Probe every hit-list entry and write one CSV row per reply.
    Run(RunArgs),
    /// Write a synthetic hit list drawn from the topology's client ASes.
    Hitlist {
        /// Number of vantage points.
        #[arg(long, default_value_t = 10_000)]
        vps: usize,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Hit-list CSV (address,cc,asn); a synthetic list is drawn when absent.
    #[arg(long, value_name = "FILE")]
    hitlist: Option<PathBuf>,
    /// Size of the synthetic hit list.
    #[arg(long, default_value_t = 10_000, conflicts_with = "hitlist")]
    vps: usize,
    /// Comma-separated sites that send probes.
    #[arg(long, value_name = "SITES", value_delimiter = ',', required = true)]
    pingers: Vec<String>,
    /// Probes per second at each pinger.
    #[arg(long, default_value_t = DEFAULT_RATE_PPS)]
    rate: u32,
    /// Worker threads; output does not depend on this.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Probability that a reply is lost.
    #[arg(long, default_value_t = 0.0)]
    loss: f64,
    /// One-way latency between an end host and its AS, in ms.
    #[arg(long, default_value_t = DEFAULT_ACCESS_LATENCY_MS)]
    access_latency: f64,
    /// Anycast prefix to probe; defaults to the topology's first IPv4 prefix.
    #[arg(long, value_name = "PREFIX")]
    prefix: Option<IpNet>,
    /// Announce the prefix from every site instead of reading the control log.
    #[arg(long)]
    announce_all: bool,
    /// Control log providing the active announcements.
    #[arg(long, env = "ANYLAB_STATE", default_value = DEFAULT_STATE, value_name = "FILE")]
    state: PathBuf,
    /// Print the duration estimate and exit without probing.
    #[arg(long)]
    dry_run: bool,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

pub fn run(env: &Env, action: MeasureCommand) -> Result<()> {
    match action {
        MeasureCommand::Hitlist { vps } => {
            let t = env.topology()?;
            print_stdout(&hitlist_to_csv(&synthetic_hitlist(&t, vps, env.seed)))
        }
        MeasureCommand::Run(args) => measure(env, args),
    }
}

fn default_prefix(t: &AsTopology) -> Result<IpNet> {
    t.anycast_prefixes()
        .iter()
        .map(|p| p.net)
        .find(|n| matches!(n, IpNet::V4(_)))
        .ok_or_else(|| anyhow!("topology declares no IPv4 anycast prefix; pass --prefix"))
}

fn measure(env: &Env, args: RunArgs) -> Result<()> {
    let topology = env.topology()?;
    let prefix = match args.prefix {
        Some(p) => p,
        None => default_prefix(&topology)?,
    };
    let hitlist = match &args.hitlist {
        Some(path) => load_hitlist(&read_input(path)?, &topology)
            .with_context(|| format!("loading {}", path.display()))?,
        None => synthetic_hitlist(&topology, args.vps, env.seed),
    };
    let pingers = args
        .pingers
        .iter()
        .map(|s| SiteId::new(s))
        .collect::<Result<Vec<_>, _>>()?;

    let mut plan = MeasurementPlan::new(&hitlist, pingers, prefix);
    plan.rate_pps = args.rate;
    plan.loss = args.loss;
    plan.access_latency_ms = args.access_latency;
    plan.seed = env.seed;
    plan.check(&topology)?;

    let secs = estimate_duration(&plan);
    if args.dry_run {
        return print_stdout(&format!(
            "{} VPs, {} pinger(s) at {} pps: estimated {secs} s\n",
            hitlist.len(),
            plan.pinger_sites.len(),
            plan.rate_pps
        ));
    }
    eprintln!(
        "probing {} VPs from {} pinger(s) at {} pps: estimated {secs} s",
        hitlist.len(),
        plan.pinger_sites.len(),
        plan.rate_pps
    );
    if let Some(w) = pace_check(&plan, DEFAULT_PACE_THRESHOLD_PPS) {
        eprintln!("warning: {w}");
    }

    let rib = if args.announce_all {
        let anns: Vec<Announcement> = topology
            .sites()
            .iter()
            .map(|s| Announcement::new(s.site_id.clone(), prefix))
            .collect();
        propagate(&topology, &anns)?
    } else {
        let state = load_state(&topology, &args.state)?;
        if state.active_count() == 0 {
            bail!(
                "no active announcements in {}; use `anylab ctl -A` or --announce-all",
                args.state.display()
            );
        }
        state.rib()?
    };
    if args.workers == 0 {
        bail!("--workers must be at least 1");
    }
    let records = run_measurement(&topology, &rib, &plan, args.workers)?;

    let bytes = match &args.out {
        Some(path) => {
            let file =
                File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut sink = BufWriter::new(file);
            let n = write_replies_csv(&records, &mut sink)?;
            sink.flush()?;
            n
        }
        None => {
            let mut sink = BufWriter::new(io::stdout().lock());
            let n = write_replies_csv(&records, &mut sink)?;
            sink.flush()?;
            n
        }
    };
    let per_row = if records.is_empty() {
        0.0
    } else {
        bytes as f64 / records.len() as f64
    };
    eprintln!(
        "wrote {} rows from {} VPs, {bytes} bytes ({per_row:.1} bytes/row)",
        records.len(),
        hitlist.len()
    );
    Ok(())
}

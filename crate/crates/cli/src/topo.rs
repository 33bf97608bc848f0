use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Result};
use anylab_core::topology::{
    advisories, load_topology, serialize_topology, tangled_fixture_with, AsTopology, FixtureConfig,
    Relation, TopologyError,
};
use clap::Subcommand;

use crate::{print_stdout, read_input, Env};

#[derive(Debug, Subcommand)]
pub enum TopoCommand {
    /// Print the built-in twelve-site topology in file format.
    Fixture {
        /// Number of generated stub client ASes.
        #[arg(long, default_value_t = 200)]
        stubs: usize,
    },
    /// Check a topology file and list every violation.
    Validate { file: PathBuf },
    /// Summarize a topology (the --topology file or the fixture).
    Show,
}

pub fn run(env: &Env, action: TopoCommand) -> Result<()> {
    match action {
        TopoCommand::Fixture { stubs } => {
            let t = tangled_fixture_with(&FixtureConfig {
                seed: env.seed,
                stubs,
                ..FixtureConfig::default()
            });
            print_stdout(&serialize_topology(&t))
        }
        TopoCommand::Validate { file } => {
            let text = read_input(&file)?;
            match load_topology(&text) {
                Ok(t) => {
                    let mut out = format!(
                        "ok: {} ASes, {} links, {} sites\n",
                        t.nodes().len(),
                        t.links().len(),
                        t.sites().len()
                    );
                    for a in advisories(&t) {
                        let _ = writeln!(out, "advisory: {a}");
                    }
                    print_stdout(&out)
                }
                Err(TopologyError::Invalid(violations)) => {
                    let mut out = String::new();
                    for v in &violations {
                        let _ = writeln!(out, "{v}");
                    }
                    print_stdout(&out)?;
                    bail!("{}: {} violation(s)", file.display(), violations.len())
                }
                Err(e) => bail!("{}: {e}", file.display()),
            }
        }
        TopoCommand::Show => print_stdout(&summary(&*env.topology()?)),
    }
}

fn summary(t: &AsTopology) -> String {
    let mut out = format!(
        "{} ASes, {} links, {} sites\n",
        t.nodes().len(),
        t.links().len(),
        t.sites().len()
    );
    for p in t.anycast_prefixes() {
        let _ = write!(out, "prefix {}", p.net);
        for a in &p.aliases {
            let _ = write!(out, " alias {a}");
        }
        out.push('\n');
    }
    for site in t.sites() {
        let providers: Vec<String> = t
            .neighbors(site.host_asn)
            .iter()
            .filter(|n| n.relation == Relation::Provider)
            .map(|n| n.asn.to_string())
            .collect();
        let caps: Vec<&str> = site.te_capabilities.iter().map(|p| p.name()).collect();
        let _ = writeln!(
            out,
            "site {} AS {} providers {} capabilities {}",
            site.site_id,
            site.host_asn,
            providers.join(","),
            caps.join(",")
        );
    }
    for a in advisories(t) {
        let _ = writeln!(out, "advisory: {a}");
    }
    out
}

//! Per-site announcement control: announce, withdraw, prepend and scenario
//! replay, with every request checked against the site's capabilities.

mod scenario;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::sync::Arc;

use ipnet::IpNet;
use thiserror::Error;

use crate::routing::{
    format_communities, propagate, Announcement, Community, RibSet, RoutingError,
};
use crate::topology::{AsTopology, Asn, SiteId, TePolicy};

pub use scenario::{parse_script, replay_log, run_scenario, ScenarioRun, ScriptLine, Snapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    V4,
    V6,
}

impl Family {
    pub fn of(prefix: &IpNet) -> Family {
        match prefix {
            IpNet::V4(_) => Family::V4,
            IpNet::V6(_) => Family::V6,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::V4 => "IPv4",
            Family::V6 => "IPv6",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ControlError {
    #[error("unknown site {0}")]
    UnknownSite(String),
    #[error("site {site} does not support {policy}")]
    Capability { site: SiteId, policy: TePolicy },
    #[error("malformed prefix {0:?}")]
    MalformedPrefix(String),
    #[error("prefix {prefix} is not an {family} prefix")]
    FamilyMismatch { prefix: IpNet, family: Family },
    #[error("prefix {0} is not inside a declared anycast prefix")]
    PrefixOutsideAnycast(IpNet),
    #[error("site {site} is not announcing {prefix}")]
    NotAnnouncing { site: SiteId, prefix: IpNet },
    #[error("reverse prepending {prefix} needs at least two announcing sites, found {count}")]
    TooFewAnnouncers { prefix: IpNet, count: usize },
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A state-changing request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Announce {
        site: SiteId,
        prefix: IpNet,
        family: Family,
        prepend: u32,
        communities: BTreeSet<Community>,
        poisoned: BTreeSet<Asn>,
    },
    Withdraw {
        site: SiteId,
        prefix: IpNet,
    },
    ReversePrepend {
        prefix: IpNet,
        keep: SiteId,
        n: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Applied,
    NoOp,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub timestamp: u64,
    pub command: Command,
    pub outcome: Outcome,
}

/// Active announcements plus the append-only command log.
#[derive(Debug, Clone)]
pub struct ControlState {
    topology: Arc<AsTopology>,
    active: BTreeMap<(SiteId, IpNet), Announcement>,
    log: Vec<LogEntry>,
    clock: u64,
}

impl PartialEq for ControlState {
    fn eq(&self, other: &Self) -> bool {
        self.active == other.active && self.log == other.log && *self.topology == *other.topology
    }
}

impl ControlState {
    pub fn new(topology: Arc<AsTopology>) -> Self {
        ControlState {
            topology,
            active: BTreeMap::new(),
            log: Vec::new(),
            clock: 0,
        }
    }

    pub fn topology(&self) -> &Arc<AsTopology> {
        &self.topology
    }

    pub fn announcements(&self) -> impl Iterator<Item = &Announcement> {
        self.active.values()
    }

    pub fn announcement(&self, site: &SiteId, prefix: &IpNet) -> Option<&Announcement> {
        self.active.get(&(site.clone(), *prefix))
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn announce(
        &mut self,
        site: &SiteId,
        prefix: IpNet,
        family: Family,
        prepend: u32,
        communities: BTreeSet<Community>,
    ) -> Result<Outcome, ControlError> {
        let t = self.clock + 1;
        let poisoned = BTreeSet::new();
        self.apply_at(
            t,
            Command::Announce {
                site: site.clone(),
                prefix,
                family,
                prepend,
                communities,
                poisoned,
            },
        )
    }

    pub fn withdraw(&mut self, site: &SiteId, prefix: IpNet) -> Result<Outcome, ControlError> {
        let t = self.clock + 1;
        self.apply_at(
            t,
            Command::Withdraw {
                site: site.clone(),
                prefix,
            },
        )
    }

    /// Adds `n` prepends at every site announcing `prefix` except `keep`.
    pub fn reverse_prepend(
        &mut self,
        prefix: IpNet,
        keep: &SiteId,
        n: u32,
    ) -> Result<Outcome, ControlError> {
        let t = self.clock + 1;
        self.apply_at(
            t,
            Command::ReversePrepend {
                prefix,
                keep: keep.clone(),
                n,
            },
        )
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Applies a command at logical time `t` and records it in the log,
    /// whether it succeeds or not.
    pub fn apply_at(&mut self, t: u64, command: Command) -> Result<Outcome, ControlError> {
        self.clock = self.clock.max(t);
        let result = self.execute(&command);
        let outcome = match &result {
            Ok(o) => o.clone(),
            Err(e) => Outcome::Failed(e.to_string()),
        };
        self.log.push(LogEntry {
            timestamp: t,
            command,
            outcome,
        });
        result
    }

    fn site_known(&self, site: &SiteId) -> Result<(), ControlError> {
        self.topology
            .site(site)
            .map(|_| ())
            .ok_or_else(|| ControlError::UnknownSite(site.to_string()))
    }

    fn execute(&mut self, command: &Command) -> Result<Outcome, ControlError> {
        match command {
            Command::Announce {
                site,
                prefix,
                family,
                prepend,
                communities,
                poisoned,
            } => {
                self.site_known(site)?;
                if Family::of(prefix) != *family {
                    return Err(ControlError::FamilyMismatch {
                        prefix: *prefix,
                        family: *family,
                    });
                }
                if prefix.trunc() != *prefix {
                    return Err(ControlError::MalformedPrefix(prefix.to_string()));
                }
                let mut a = Announcement::new(site.clone(), *prefix).with_prepend(*prepend);
                a.communities = communities.clone();
                a.poisoned_asns = poisoned.clone();
                a.check(&self.topology).map_err(lift)?;
                self.active.insert((site.clone(), *prefix), a);
                Ok(Outcome::Applied)
            }
            Command::Withdraw { site, prefix } => {
                self.site_known(site)?;
                Ok(match self.active.remove(&(site.clone(), *prefix)) {
                    Some(_) => Outcome::Applied,
                    None => Outcome::NoOp,
                })
            }
            Command::ReversePrepend { prefix, keep, n } => {
                self.site_known(keep)?;
                let announcers: Vec<SiteId> = self
                    .active
                    .keys()
                    .filter(|(_, p)| p == prefix)
                    .map(|(s, _)| s.clone())
                    .collect();
                if !announcers.contains(keep) {
                    return Err(ControlError::NotAnnouncing {
                        site: keep.clone(),
                        prefix: *prefix,
                    });
                }
                if announcers.len() < 2 {
                    return Err(ControlError::TooFewAnnouncers {
                        prefix: *prefix,
                        count: announcers.len(),
                    });
                }
                let mut updated = Vec::new();
                for site in announcers.iter().filter(|s| *s != keep) {
                    let mut a = self.active[&(site.clone(), *prefix)].clone();
                    a.origin_prepend += n;
                    a.check(&self.topology).map_err(lift)?;
                    updated.push(a);
                }
                for a in updated {
                    self.active.insert((a.site_id.clone(), a.prefix), a);
                }
                Ok(Outcome::Applied)
            }
        }
    }

    /// Runs propagation over the active announcements.
    pub fn rib(&self) -> Result<RibSet, RoutingError> {
        let anns: Vec<Announcement> = self.active.values().cloned().collect();
        propagate(&self.topology, &anns)
    }
}

fn lift(e: RoutingError) -> ControlError {
    match e {
        RoutingError::UnknownSite(s) => ControlError::UnknownSite(s),
        RoutingError::Capability { site, policy } => ControlError::Capability { site, policy },
        RoutingError::PrefixOutsideAnycast(p) => ControlError::PrefixOutsideAnycast(p),
        other => ControlError::Routing(other),
    }
}

/// Human-readable configuration and per-neighbor export verdicts. Verdicts
/// come from a propagation run, not from live sessions.
pub fn status(state: &ControlState) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "anylab status: {} active announcement(s), {} site(s); neighbor verdicts are simulated",
        state.active.len(),
        state.topology.sites().len()
    );
    if state.active.is_empty() {
        out.push_str("no active announcements\n");
        return out;
    }
    let rib = match state.rib() {
        Ok(rib) => Some(rib),
        Err(e) => {
            let _ = writeln!(out, "routing error: {e}");
            None
        }
    };
    for site in state.topology.sites() {
        let _ = writeln!(out, "site {} AS {}", site.site_id, site.host_asn);
        let mine: Vec<&Announcement> = state
            .active
            .values()
            .filter(|a| a.site_id == site.site_id)
            .collect();
        if mine.is_empty() {
            out.push_str("  idle\n");
            continue;
        }
        for a in mine {
            let _ = writeln!(
                out,
                "  {} prepend={} communities={}",
                a.prefix,
                a.origin_prepend,
                format_communities(&a.communities)
            );
            let Some(rib) = &rib else { continue };
            for nb in state.topology.neighbors(site.host_asn) {
                let verdict = match rib.get(nb.asn, &a.prefix) {
                    _ if a.poisoned_asns.contains(&nb.asn) => "rejected (poisoned)".to_string(),
                    Some(e) if e.next_hop_asn == site.host_asn => "selected".to_string(),
                    Some(e) if e.is_origin() => "not selected (originates locally)".to_string(),
                    Some(e) => format!(
                        "not selected (prefers {} via AS {})",
                        e.origin_site_id, e.next_hop_asn
                    ),
                    None => "no route".to_string(),
                };
                let _ = writeln!(
                    out,
                    "    AS {} {}: {}",
                    nb.asn,
                    nb.relation.label(),
                    verdict
                );
            }
        }
    }
    out
}

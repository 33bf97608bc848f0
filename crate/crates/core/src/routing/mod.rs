//! Policy-aware propagation of anycast announcements.
//!
//! Every AS keeps one best route per prefix. Routes are ranked by the
//! relationship of the link they were learned over (customer 200, peer or
//! IXP peer 100, provider 50), then by AS-path length counting prepends,
//! then by the lower next-hop ASN. Exports follow the Gao-Rexford rules:
//! customer-learned and originated routes go to every neighbor, everything
//! else only to customers.
//!
//! Communities attached to an announcement are acted on by the ASes that
//! receive the route directly from the announcing site. Those first-hop ASes
//! apply the requested filtering or prepending to their own exports.

mod engine;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use ipnet::IpNet;
use thiserror::Error;

use crate::topology::{AsTopology, Asn, SiteId, TePolicy};

pub use engine::{propagate, propagate_with_workers, unicast_routes, UnicastRoutes};

pub const LOCAL_PREF_ORIGIN: u32 = 300;
pub const LOCAL_PREF_CUSTOMER: u32 = 200;
pub const LOCAL_PREF_PEER: u32 = 100;
pub const LOCAL_PREF_PROVIDER: u32 = 50;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RoutingError {
    #[error("unknown site {0}")]
    UnknownSite(String),
    #[error("prefix {0} is not inside a declared anycast prefix")]
    PrefixOutsideAnycast(IpNet),
    #[error("site {site} does not support {policy}")]
    Capability { site: SiteId, policy: TePolicy },
    #[error("invalid community {0}")]
    InvalidCommunity(String),
    #[error("site {site} cannot poison its own AS {asn}")]
    PoisonedOrigin { site: SiteId, asn: Asn },
    #[error("site {site} announces {prefix} more than once")]
    DuplicateAnnouncement { site: SiteId, prefix: IpNet },
    #[error("routing for {prefix} did not converge")]
    Oscillation { prefix: IpNet },
    #[error("AS {asn} has no route to {prefix}")]
    NoRoute { asn: Asn, prefix: IpNet },
    #[error("unknown AS {0}")]
    UnknownAs(Asn),
}

/// Routing policy requested from the ASes adjacent to the announcing site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Community {
    /// Prepend the upstream's ASN `n` extra times towards every neighbor.
    Prepend(u32),
    /// Do not export to peers or IXP peers.
    NoPeer,
    /// Do not export at all.
    NoExport,
    /// Do not export to customers.
    NoClient,
    /// Prepend the upstream's ASN `n` extra times towards `target` only.
    SelectivePrepend { target: Asn, n: u32 },
    /// Export only towards `target`.
    SelectiveAdvertiseOnly(Asn),
    /// Export towards everyone except `target`.
    SelectiveAdvertiseExcept(Asn),
}

impl Community {
    pub fn policy(&self) -> TePolicy {
        match self {
            Community::Prepend(_) => TePolicy::Prepend,
            Community::NoPeer => TePolicy::NoPeer,
            Community::NoExport => TePolicy::NoExport,
            Community::NoClient => TePolicy::NoClient,
            Community::SelectivePrepend { .. } => TePolicy::SelectivePrepend,
            Community::SelectiveAdvertiseOnly(_) | Community::SelectiveAdvertiseExcept(_) => {
                TePolicy::SelectiveAdvertise
            }
        }
    }

    pub fn target(&self) -> Option<Asn> {
        match *self {
            Community::SelectivePrepend { target, .. }
            | Community::SelectiveAdvertiseOnly(target)
            | Community::SelectiveAdvertiseExcept(target) => Some(target),
            _ => None,
        }
    }
}

impl fmt::Display for Community {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Community::Prepend(n) => write!(f, "prepend:{n}"),
            Community::NoPeer => f.write_str("no-peer"),
            Community::NoExport => f.write_str("no-export"),
            Community::NoClient => f.write_str("no-client"),
            Community::SelectivePrepend { target, n } => {
                write!(f, "selective-prepend:{target}:{n}")
            }
            Community::SelectiveAdvertiseOnly(t) => write!(f, "advertise-only:{t}"),
            Community::SelectiveAdvertiseExcept(t) => write!(f, "advertise-except:{t}"),
        }
    }
}

impl FromStr for Community {
    type Err = RoutingError;

    /// Accepts the canonical `Display` form and the camel-case policy names
    /// (`noPeer`, `SelectivePrepend:20473:2`, ...).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || RoutingError::InvalidCommunity(s.to_string());
        let mut parts = s.split(':');
        let name: String = parts
            .next()
            .unwrap_or_default()
            .chars()
            .filter(|c| *c != '-' && *c != '_')
            .collect::<String>()
            .to_ascii_lowercase();
        let args: Vec<u32> = parts
            .map(|p| p.parse::<u32>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        let c = match (name.as_str(), args.as_slice()) {
            ("prepend", [n]) => Community::Prepend(*n),
            ("prepend", []) => Community::Prepend(1),
            ("nopeer", []) => Community::NoPeer,
            ("noexport", []) => Community::NoExport,
            ("noclient", []) => Community::NoClient,
            ("selectiveprepend", [t]) => Community::SelectivePrepend { target: *t, n: 1 },
            ("selectiveprepend", [t, n]) => Community::SelectivePrepend { target: *t, n: *n },
            ("advertiseonly" | "selectiveadvertise" | "selectiveadvertiseonly", [t]) => {
                Community::SelectiveAdvertiseOnly(*t)
            }
            ("advertiseexcept" | "selectiveadvertiseexcept", [t]) => {
                Community::SelectiveAdvertiseExcept(*t)
            }
            _ => return Err(bad()),
        };
        match c {
            Community::Prepend(0) | Community::SelectivePrepend { n: 0, .. } => Err(bad()),
            c => Ok(c),
        }
    }
}

/// Parses a comma-separated community list; the empty string and `-` give
/// an empty set.
pub fn parse_communities(spec: &str) -> Result<BTreeSet<Community>, RoutingError> {
    if spec.is_empty() || spec == "-" {
        return Ok(BTreeSet::new());
    }
    spec.split(',').map(str::parse).collect()
}

pub fn format_communities(set: &BTreeSet<Community>) -> String {
    if set.is_empty() {
        return "-".to_string();
    }
    set.iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// A site's origination of one prefix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Announcement {
    pub site_id: SiteId,
    pub prefix: IpNet,
    pub origin_prepend: u32,
    pub poisoned_asns: BTreeSet<Asn>,
    pub communities: BTreeSet<Community>,
}

impl Announcement {
    pub fn new(site_id: SiteId, prefix: IpNet) -> Self {
        Announcement {
            site_id,
            prefix,
            origin_prepend: 0,
            poisoned_asns: BTreeSet::new(),
            communities: BTreeSet::new(),
        }
    }

    pub fn with_prepend(mut self, n: u32) -> Self {
        self.origin_prepend = n;
        self
    }

    pub fn with_poison(mut self, asn: Asn) -> Self {
        self.poisoned_asns.insert(asn);
        self
    }

    pub fn with_community(mut self, c: Community) -> Self {
        self.communities.insert(c);
        self
    }

    /// Policies this announcement needs from its site.
    pub fn required_policies(&self) -> BTreeSet<TePolicy> {
        let mut out: BTreeSet<TePolicy> = self.communities.iter().map(Community::policy).collect();
        if self.origin_prepend > 0 {
            out.insert(TePolicy::Prepend);
        }
        out
    }

    /// Checks the announcement against the topology: known site, covered
    /// prefix, supported policies, existing community targets.
    pub fn check(&self, topology: &AsTopology) -> Result<(), RoutingError> {
        let site = topology
            .site(&self.site_id)
            .ok_or_else(|| RoutingError::UnknownSite(self.site_id.to_string()))?;
        if self.prefix.trunc() != self.prefix || topology.covering_prefix(&self.prefix).is_none() {
            return Err(RoutingError::PrefixOutsideAnycast(self.prefix));
        }
        for policy in self.required_policies() {
            if !site.supports(policy) {
                return Err(RoutingError::Capability {
                    site: self.site_id.clone(),
                    policy,
                });
            }
        }
        for c in &self.communities {
            match c {
                Community::Prepend(0) | Community::SelectivePrepend { n: 0, .. } => {
                    return Err(RoutingError::InvalidCommunity(c.to_string()))
                }
                _ => {}
            }
            if let Some(t) = c.target() {
                if !topology.contains_asn(t) {
                    return Err(RoutingError::InvalidCommunity(format!(
                        "{c}: AS {t} is not in the topology"
                    )));
                }
            }
        }
        if self.poisoned_asns.contains(&site.host_asn) {
            return Err(RoutingError::PoisonedOrigin {
                site: self.site_id.clone(),
                asn: site.host_asn,
            });
        }
        Ok(())
    }
}

/// Best route held by one AS for one prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RibEntry {
    pub asn: Asn,
    pub prefix: IpNet,
    /// Received AS path, next hop first and origin last. Empty at the origin.
    pub as_path: Vec<Asn>,
    /// Equal to `asn` at the origin.
    pub next_hop_asn: Asn,
    pub origin_site_id: SiteId,
    pub local_pref: u32,
}

impl RibEntry {
    pub fn is_origin(&self) -> bool {
        self.next_hop_asn == self.asn
    }
}

/// Outcome of a propagation run: one best route per (AS, prefix).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RibSet {
    entries: BTreeMap<IpNet, BTreeMap<Asn, RibEntry>>,
    announcements: Vec<Announcement>,
}

impl RibSet {
    pub fn announcements(&self) -> &[Announcement] {
        &self.announcements
    }

    pub fn prefixes(&self) -> impl Iterator<Item = &IpNet> {
        self.entries.keys()
    }

    pub fn get(&self, asn: Asn, prefix: &IpNet) -> Option<&RibEntry> {
        self.entries.get(prefix)?.get(&asn)
    }

    /// Entries for one prefix keyed by holder.
    pub fn routes(&self, prefix: &IpNet) -> Option<&BTreeMap<Asn, RibEntry>> {
        self.entries.get(prefix)
    }

    pub fn entries(&self) -> impl Iterator<Item = &RibEntry> {
        self.entries.values().flat_map(|m| m.values())
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Longest-prefix match: the most specific route `asn` holds for `addr`.
    pub fn lookup(&self, asn: Asn, addr: IpAddr) -> Option<&RibEntry> {
        self.entries
            .iter()
            .filter(|(p, _)| p.contains(&addr))
            .filter_map(|(p, m)| m.get(&asn).map(|e| (p.prefix_len(), e)))
            .max_by_key(|(len, _)| *len)
            .map(|(_, e)| e)
    }

    /// `asn,prefix,as_path,next_hop,origin_site`, AS path space separated.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("asn,prefix,as_path,next_hop,origin_site\n");
        for e in self.entries() {
            let path: Vec<String> = e.as_path.iter().map(|a| a.to_string()).collect();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.asn,
                e.prefix,
                path.join(" "),
                e.next_hop_asn,
                e.origin_site_id
            ));
        }
        out
    }
}

/// Which site each AS's traffic for `prefix` reaches.
pub fn catchment(rib: &RibSet, prefix: &IpNet) -> BTreeMap<Asn, SiteId> {
    rib.routes(prefix)
        .map(|m| {
            m.iter()
                .map(|(&asn, e)| (asn, e.origin_site_id.clone()))
                .collect()
        })
        .unwrap_or_default()
}

/// Catchment of a single address, resolving each AS's route by longest
/// prefix match.
pub fn catchment_of_address(rib: &RibSet, addr: IpAddr) -> BTreeMap<Asn, SiteId> {
    let mut out = BTreeMap::new();
    for e in rib.entries() {
        if let Some(best) = rib.lookup(e.asn, addr) {
            out.entry(e.asn)
                .or_insert_with(|| best.origin_site_id.clone());
        }
    }
    out
}

/// ASes traversed from `from` to the origin of its route for `prefix`,
/// following each hop's selected next hop. Empty at the origin itself.
pub fn forward_path(rib: &RibSet, from: Asn, prefix: &IpNet) -> Result<Vec<Asn>, RoutingError> {
    let routes = rib.routes(prefix).ok_or(RoutingError::NoRoute {
        asn: from,
        prefix: *prefix,
    })?;
    let mut current = routes.get(&from).ok_or(RoutingError::NoRoute {
        asn: from,
        prefix: *prefix,
    })?;
    let mut hops = Vec::new();
    while !current.is_origin() {
        let next = current.next_hop_asn;
        if next == from || hops.contains(&next) || hops.len() > routes.len() {
            return Err(RoutingError::Oscillation { prefix: *prefix });
        }
        hops.push(next);
        current = routes.get(&next).ok_or(RoutingError::NoRoute {
            asn: next,
            prefix: *prefix,
        })?;
    }
    Ok(hops)
}

/// Propagates a single announcement that poisons one or more ASes. The
/// poisoned ASes see their own number in the path and drop the route.
pub fn poisoned_reachability(
    topology: &AsTopology,
    announcement: &Announcement,
) -> Result<RibSet, RoutingError> {
    propagate(topology, std::slice::from_ref(announcement))
}

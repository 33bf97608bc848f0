//! AS-level world model: nodes, typed inter-AS links, anycast sites and the
//! prefixes they may announce.

mod file;
mod fixture;
mod validate;

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use ipnet::IpNet;
use thiserror::Error;

pub use file::{load_topology, serialize_topology};
pub use fixture::{
    tangled_fixture, tangled_fixture_with, FixtureConfig, FixtureSite, FIXTURE_SITES, STUB_ASN_BASE,
};
pub use validate::{advisories, validate, Violation};

/// Autonomous system number.
pub type Asn = u32;

/// One-way latency used for links between ASes in the same region when a
/// topology file does not give one.
pub const INTRA_REGION_LATENCY_MS: f64 = 10.0;
/// One-way latency for every other link without an explicit latency.
pub const INTER_REGION_LATENCY_MS: f64 = 80.0;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid topology: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("invalid site id {0:?}: expected lowercase `cc-xyz`")]
    SiteId(String),
    #[error("unknown traffic-engineering policy {0:?}")]
    Policy(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Anycast site identifier of the form `cc-xyz`, e.g. `au-syd`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SiteId(String);

impl SiteId {
    pub fn new(id: &str) -> Result<Self, TopologyError> {
        let b = id.as_bytes();
        let ok = b.len() == 6
            && b[2] == b'-'
            && b[..2].iter().chain(&b[3..]).all(u8::is_ascii_lowercase);
        if ok {
            Ok(SiteId(id.to_string()))
        } else {
            Err(TopologyError::SiteId(id.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// ISO country code derived from the site prefix (`uk` maps to `GB`).
    pub fn country_code(&self) -> String {
        match &self.0[..2] {
            "uk" => "GB".to_string(),
            cc => cc.to_ascii_uppercase(),
        }
    }
}

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for SiteId {
    type Err = TopologyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SiteId::new(s)
    }
}

/// Traffic-engineering policies a site may request from its upstreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TePolicy {
    Prepend,
    NoPeer,
    NoExport,
    NoClient,
    SelectivePrepend,
    SelectiveAdvertise,
}

impl TePolicy {
    pub const ALL: [TePolicy; 6] = [
        TePolicy::Prepend,
        TePolicy::NoPeer,
        TePolicy::NoExport,
        TePolicy::NoClient,
        TePolicy::SelectivePrepend,
        TePolicy::SelectiveAdvertise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TePolicy::Prepend => "Prepend",
            TePolicy::NoPeer => "noPeer",
            TePolicy::NoExport => "noExport",
            TePolicy::NoClient => "noClient",
            TePolicy::SelectivePrepend => "SelectivePrepend",
            TePolicy::SelectiveAdvertise => "SelectiveAdvertise",
        }
    }
}

impl fmt::Display for TePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TePolicy {
    type Err = TopologyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| *c != '-' && *c != '_')
            .collect::<String>()
            .to_ascii_lowercase();
        TePolicy::ALL
            .into_iter()
            .find(|p| p.name().to_ascii_lowercase() == key)
            .ok_or_else(|| TopologyError::Policy(s.to_string()))
    }
}

/// Business relationship carried by a link, read from `from_asn` towards
/// `to_asn`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relationship {
    CustomerOf,
    ProviderOf,
    Peer,
    IxpPeer,
}

/// What a neighbor is, seen from the local AS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relation {
    Customer,
    Provider,
    Peer,
    Ixp,
}

impl Relation {
    /// The same link seen from the other end.
    pub fn inverse(self) -> Relation {
        match self {
            Relation::Customer => Relation::Provider,
            Relation::Provider => Relation::Customer,
            other => other,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Relation::Customer => "customer",
            Relation::Provider => "provider",
            Relation::Peer => "peer",
            Relation::Ixp => "ixp-peer",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub from_asn: Asn,
    pub to_asn: Asn,
    pub relationship: Relationship,
    pub latency_ms: f64,
}

impl Link {
    pub fn new(from_asn: Asn, to_asn: Asn, relationship: Relationship, latency_ms: f64) -> Self {
        Link {
            from_asn,
            to_asn,
            relationship,
            latency_ms,
        }
    }

    /// Provider-of is stored as the reversed customer-of; peer links are
    /// stored with the lower ASN first.
    fn normalized(self) -> Link {
        match self.relationship {
            Relationship::ProviderOf => Link {
                from_asn: self.to_asn,
                to_asn: self.from_asn,
                relationship: Relationship::CustomerOf,
                latency_ms: self.latency_ms,
            },
            Relationship::Peer | Relationship::IxpPeer if self.from_asn > self.to_asn => Link {
                from_asn: self.to_asn,
                to_asn: self.from_asn,
                ..self
            },
            _ => self,
        }
    }

    fn pair(&self) -> (Asn, Asn) {
        (
            self.from_asn.min(self.to_asn),
            self.from_asn.max(self.to_asn),
        )
    }

    /// Relation of `to` as seen from `from`, when this link joins them.
    fn relation_from(&self, asn: Asn) -> Relation {
        match (self.relationship, asn == self.from_asn) {
            (Relationship::CustomerOf, true) => Relation::Provider,
            (Relationship::CustomerOf, false) => Relation::Customer,
            (Relationship::ProviderOf, true) => Relation::Customer,
            (Relationship::ProviderOf, false) => Relation::Provider,
            (Relationship::Peer, _) => Relation::Peer,
            (Relationship::IxpPeer, _) => Relation::Ixp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsNode {
    pub asn: Asn,
    pub name: String,
    pub hosts_site: Option<SiteId>,
    /// Number of vantage-point /24 networks homed in this AS.
    pub vps: u32,
    /// Coarse region label used for default link latencies.
    pub region: Option<String>,
}

impl AsNode {
    pub fn new(asn: Asn, name: impl Into<String>) -> Self {
        AsNode {
            asn,
            name: name.into(),
            hosts_site: None,
            vps: 0,
            region: None,
        }
    }

    pub fn with_site(mut self, site: SiteId) -> Self {
        self.hosts_site = Some(site);
        self
    }

    pub fn with_vps(mut self, vps: u32) -> Self {
        self.vps = vps;
        self
    }

    pub fn with_region(mut self, region: impl Into<String>) -> Self {
        self.region = Some(region.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnycastSite {
    pub site_id: SiteId,
    pub host_asn: Asn,
    pub te_capabilities: BTreeSet<TePolicy>,
}

impl AnycastSite {
    /// A site with only the `Prepend` capability.
    pub fn new(site_id: SiteId, host_asn: Asn) -> Self {
        AnycastSite {
            site_id,
            host_asn,
            te_capabilities: BTreeSet::from([TePolicy::Prepend]),
        }
    }

    pub fn supports(&self, policy: TePolicy) -> bool {
        self.te_capabilities.contains(&policy)
    }
}

/// A prefix the anycast service may announce, with alternative spellings that
/// are accepted as equivalent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnycastPrefix {
    pub net: IpNet,
    pub aliases: Vec<IpNet>,
}

impl AnycastPrefix {
    pub fn new(net: IpNet) -> Self {
        AnycastPrefix {
            net,
            aliases: Vec::new(),
        }
    }

    /// True if `prefix` equals or is inside this prefix or one of its aliases.
    pub fn covers(&self, prefix: &IpNet) -> bool {
        std::iter::once(&self.net)
            .chain(&self.aliases)
            .any(|net| net.contains(prefix))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub asn: Asn,
    /// What `asn` is to the AS owning this adjacency entry.
    pub relation: Relation,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Default)]
struct Index {
    pos: HashMap<Asn, usize>,
    adjacency: Vec<Vec<Neighbor>>,
}

/// Immutable AS-level topology. Construction canonicalizes ordering so that
/// equal content compares equal regardless of declaration order.
#[derive(Debug, Clone)]
pub struct AsTopology {
    nodes: Vec<AsNode>,
    links: Vec<Link>,
    sites: Vec<AnycastSite>,
    anycast_prefixes: Vec<AnycastPrefix>,
    index: Index,
}

impl PartialEq for AsTopology {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.links == other.links
            && self.sites == other.sites
            && self.anycast_prefixes == other.anycast_prefixes
    }
}

impl AsTopology {
    /// Assembles a topology without validating it; see [`validate`].
    pub fn from_parts(
        mut nodes: Vec<AsNode>,
        links: Vec<Link>,
        mut sites: Vec<AnycastSite>,
        anycast_prefixes: Vec<AnycastPrefix>,
    ) -> Self {
        nodes.sort_by_key(|n| n.asn);
        let mut links: Vec<Link> = links.into_iter().map(Link::normalized).collect();
        links.sort_by_key(|l| l.pair());
        sites.sort_by(|a, b| a.site_id.cmp(&b.site_id));

        let mut index = Index::default();
        for (i, node) in nodes.iter().enumerate() {
            index.pos.entry(node.asn).or_insert(i);
        }
        index.adjacency = vec![Vec::new(); nodes.len()];
        for link in &links {
            if link.from_asn == link.to_asn {
                continue;
            }
            let (Some(&a), Some(&b)) = (index.pos.get(&link.from_asn), index.pos.get(&link.to_asn))
            else {
                continue;
            };
            index.adjacency[a].push(Neighbor {
                asn: link.to_asn,
                relation: link.relation_from(link.from_asn),
                latency_ms: link.latency_ms,
            });
            index.adjacency[b].push(Neighbor {
                asn: link.from_asn,
                relation: link.relation_from(link.to_asn),
                latency_ms: link.latency_ms,
            });
        }
        for adj in &mut index.adjacency {
            adj.sort_by_key(|n| n.asn);
        }

        AsTopology {
            nodes,
            links,
            sites,
            anycast_prefixes,
            index,
        }
    }

    /// Assembles and validates.
    pub fn build(
        nodes: Vec<AsNode>,
        links: Vec<Link>,
        sites: Vec<AnycastSite>,
        anycast_prefixes: Vec<AnycastPrefix>,
    ) -> Result<Self, TopologyError> {
        let topology = AsTopology::from_parts(nodes, links, sites, anycast_prefixes);
        let violations = validate(&topology);
        if violations.is_empty() {
            Ok(topology)
        } else {
            Err(TopologyError::Invalid(violations))
        }
    }

    pub fn nodes(&self) -> &[AsNode] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn sites(&self) -> &[AnycastSite] {
        &self.sites
    }

    pub fn anycast_prefixes(&self) -> &[AnycastPrefix] {
        &self.anycast_prefixes
    }

    pub fn node(&self, asn: Asn) -> Option<&AsNode> {
        self.index.pos.get(&asn).map(|&i| &self.nodes[i])
    }

    pub fn contains_asn(&self, asn: Asn) -> bool {
        self.index.pos.contains_key(&asn)
    }

    /// Dense position of `asn` in [`nodes`](Self::nodes).
    pub fn position(&self, asn: Asn) -> Option<usize> {
        self.index.pos.get(&asn).copied()
    }

    /// Neighbors sorted by ASN; empty for unknown ASes.
    pub fn neighbors(&self, asn: Asn) -> &[Neighbor] {
        self.position(asn).map_or(&[], |i| &self.index.adjacency[i])
    }

    pub(crate) fn neighbors_at(&self, pos: usize) -> &[Neighbor] {
        &self.index.adjacency[pos]
    }

    /// What `other` is to `asn`, if they are adjacent.
    pub fn relation(&self, asn: Asn, other: Asn) -> Option<Relation> {
        self.neighbor(asn, other).map(|n| n.relation)
    }

    pub fn neighbor(&self, asn: Asn, other: Asn) -> Option<&Neighbor> {
        let adj = self.neighbors(asn);
        adj.binary_search_by_key(&other, |n| n.asn)
            .ok()
            .map(|i| &adj[i])
    }

    pub fn site(&self, id: &SiteId) -> Option<&AnycastSite> {
        self.sites.iter().find(|s| &s.site_id == id)
    }

    pub fn site_by_name(&self, id: &str) -> Option<&AnycastSite> {
        self.sites.iter().find(|s| s.site_id.as_str() == id)
    }

    pub fn site_hosted_by(&self, asn: Asn) -> Option<&AnycastSite> {
        self.sites.iter().find(|s| s.host_asn == asn)
    }

    /// Declared anycast prefix (or alias) covering `prefix`, same family only.
    pub fn covering_prefix(&self, prefix: &IpNet) -> Option<&AnycastPrefix> {
        self.anycast_prefixes.iter().find(|p| p.covers(prefix))
    }

    /// Country of an AS: the country of the nearest site-hosting AS by hop
    /// count, ties broken by lower ASN. `ZZ` when no site is reachable.
    pub fn country_of(&self, asn: Asn) -> String {
        self.countries()
            .remove(&asn)
            .unwrap_or_else(|| "ZZ".to_string())
    }

    /// [`country_of`](Self::country_of) for every AS at once.
    pub fn countries(&self) -> HashMap<Asn, String> {
        // multi-source BFS from site hosts, visited in ASN order so that
        // equal-distance ties resolve to the lower host ASN
        let mut owner: Vec<Option<usize>> = vec![None; self.nodes.len()];
        let mut queue = VecDeque::new();
        let mut hosts: Vec<(Asn, usize)> = self
            .sites
            .iter()
            .enumerate()
            .filter_map(|(i, s)| self.position(s.host_asn).map(|_| (s.host_asn, i)))
            .collect();
        hosts.sort();
        for (asn, site) in hosts {
            let p = self.index.pos[&asn];
            if owner[p].is_none() {
                owner[p] = Some(site);
                queue.push_back(p);
            }
        }
        let mut frontier: Vec<usize> = queue.drain(..).collect();
        while !frontier.is_empty() {
            let mut claims: Vec<(usize, Asn, usize)> = Vec::new();
            for &p in &frontier {
                let site = owner[p].expect("frontier nodes are owned");
                let host = self.sites[site].host_asn;
                for n in &self.index.adjacency[p] {
                    let q = self.index.pos[&n.asn];
                    if owner[q].is_none() {
                        claims.push((q, host, site));
                    }
                }
            }
            claims.sort();
            let mut next = Vec::new();
            for (q, _, site) in claims {
                if owner[q].is_none() {
                    owner[q] = Some(site);
                    next.push(q);
                }
            }
            frontier = next;
        }
        self.nodes
            .iter()
            .zip(owner)
            .map(|(n, o)| {
                let cc = o.map_or_else(
                    || "ZZ".to_string(),
                    |s| self.sites[s].site_id.country_code(),
                );
                (n.asn, cc)
            })
            .collect()
    }
}

/// Default latency for a link between two ASes without an explicit value.
pub fn default_latency(a: Option<&AsNode>, b: Option<&AsNode>) -> f64 {
    match (
        a.and_then(|n| n.region.as_ref()),
        b.and_then(|n| n.region.as_ref()),
    ) {
        (Some(x), Some(y)) if x == y => INTRA_REGION_LATENCY_MS,
        _ => INTER_REGION_LATENCY_MS,
    }
}

/// First host address of a prefix, used as the anycast service address
/// (`145.100.118.0/23` gives `145.100.118.1`).
pub fn service_address(prefix: &IpNet) -> IpAddr {
    match prefix {
        IpNet::V4(n) => IpAddr::V4((u32::from(n.network()).wrapping_add(1)).into()),
        IpNet::V6(n) => IpAddr::V6((u128::from(n.network()).wrapping_add(1)).into()),
    }
}

/// The /24 (IPv4) or /48 (IPv6) network an address belongs to.
pub fn vantage_network(addr: IpAddr) -> IpNet {
    let len = if addr.is_ipv4() { 24 } else { 48 };
    IpNet::new(addr, len).expect("valid prefix length").trunc()
}

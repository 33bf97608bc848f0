use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use super::{AsTopology, Asn, Relationship, SiteId, TePolicy};

/// A broken invariant, naming the offending entity and the rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub entity: String,
    pub rule: String,
}

impl Violation {
    fn new(entity: impl Into<String>, rule: impl Into<String>) -> Self {
        Violation {
            entity: entity.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.rule)
    }
}

/// Checks every topology invariant. An empty result means the topology is
/// valid.
pub fn validate(topology: &AsTopology) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut seen: HashMap<Asn, usize> = HashMap::new();
    for node in topology.nodes() {
        *seen.entry(node.asn).or_default() += 1;
        if node.asn == 0 {
            out.push(Violation::new("AS 0", "asn must be positive"));
        }
    }
    let mut dups: Vec<Asn> = seen
        .iter()
        .filter(|(_, &c)| c > 1)
        .map(|(&a, _)| a)
        .collect();
    dups.sort();
    for asn in dups {
        out.push(Violation::new(format!("AS {asn}"), "duplicate asn"));
    }

    let mut hosted: BTreeMap<&SiteId, Vec<Asn>> = BTreeMap::new();
    for node in topology.nodes() {
        if let Some(site) = &node.hosts_site {
            hosted.entry(site).or_default().push(node.asn);
        }
    }
    for (site, hosts) in &hosted {
        if hosts.len() > 1 {
            out.push(Violation::new(
                format!("site {site}"),
                "site appears on more than one AS",
            ));
        }
        if topology.site(site).is_none() {
            out.push(Violation::new(
                format!("site {site}"),
                "AS names a site that is not declared",
            ));
        }
    }

    let mut site_ids = BTreeSet::new();
    for site in topology.sites() {
        let name = format!("site {}", site.site_id);
        if !site_ids.insert(&site.site_id) {
            out.push(Violation::new(&name, "duplicate site id"));
        }
        match topology.node(site.host_asn) {
            None => out.push(Violation::new(
                &name,
                format!("host AS {} does not exist", site.host_asn),
            )),
            Some(node) if node.hosts_site.as_ref() != Some(&site.site_id) => {
                out.push(Violation::new(
                    &name,
                    format!("host AS {} does not carry the site", site.host_asn),
                ))
            }
            Some(_) => {}
        }
        if !site.supports(TePolicy::Prepend) {
            out.push(Violation::new(&name, "capabilities must include Prepend"));
        }
    }

    let mut pairs = BTreeSet::new();
    for link in topology.links() {
        let name = format!("link {}-{}", link.from_asn, link.to_asn);
        if link.from_asn == link.to_asn {
            out.push(Violation::new(&name, "self-link"));
            continue;
        }
        for end in [link.from_asn, link.to_asn] {
            if !topology.contains_asn(end) {
                out.push(Violation::new(
                    &name,
                    format!("endpoint AS {end} does not exist"),
                ));
            }
        }
        if !pairs.insert((
            link.from_asn.min(link.to_asn),
            link.from_asn.max(link.to_asn),
        )) {
            out.push(Violation::new(&name, "more than one link for this AS pair"));
        }
        if !(link.latency_ms >= 0.0 && link.latency_ms.is_finite()) {
            out.push(Violation::new(
                &name,
                "latency must be a non-negative number",
            ));
        }
        debug_assert!(link.relationship != Relationship::ProviderOf);
    }

    let mut prefixes = BTreeSet::new();
    for p in topology.anycast_prefixes() {
        if p.net.trunc() != p.net {
            out.push(Violation::new(format!("prefix {}", p.net), "host bits set"));
        }
        if !prefixes.insert(p.net) {
            out.push(Violation::new(
                format!("prefix {}", p.net),
                "duplicate anycast prefix",
            ));
        }
    }

    out.extend(connectivity(topology));
    out
}

/// ASes outside the largest connected component (ties go to the component
/// holding the lowest ASN).
fn connectivity(topology: &AsTopology) -> Vec<Violation> {
    let n = topology.nodes().len();
    let mut component = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX
            || topology.position(topology.nodes()[start].asn) != Some(start)
        {
            continue;
        }
        let id = sizes.len();
        let mut stack = vec![start];
        component[start] = id;
        let mut size = 0;
        while let Some(p) = stack.pop() {
            size += 1;
            for nb in topology.neighbors_at(p) {
                let q = topology
                    .position(nb.asn)
                    .expect("adjacency only holds known ASes");
                if component[q] == usize::MAX {
                    component[q] = id;
                    stack.push(q);
                }
            }
        }
        sizes.push(size);
    }
    // duplicate declarations share the component of the first one
    for i in 0..n {
        if component[i] == usize::MAX {
            component[i] = component[topology
                .position(topology.nodes()[i].asn)
                .expect("declared")];
        }
    }
    // components are numbered in ASN order, so max_by_key's last-wins tie rule is reversed
    let Some(main) = (0..sizes.len()).rev().max_by_key(|&c| sizes[c]) else {
        return Vec::new();
    };
    topology
        .nodes()
        .iter()
        .zip(&component)
        .filter(|(_, &c)| c != main)
        .map(|(node, _)| {
            Violation::new(
                format!("AS {}", node.asn),
                "not connected to the rest of the topology",
            )
        })
        .collect()
}

/// Non-fatal observations worth surfacing next to validation output.
pub fn advisories(topology: &AsTopology) -> Vec<String> {
    topology
        .anycast_prefixes()
        .iter()
        .flat_map(|p| {
            p.aliases.iter().map(move |alias| {
                format!(
                    "prefix {} is also published as {}; both spellings are accepted, canonical form is unconfirmed",
                    p.net, alias
                )
            })
        })
        .collect()
}

//! Line-oriented topology file format.
//!
//! ```text
//! # comment
//! prefix 145.100.118.0/23
//! prefix 2001:610:9000::/40 alias=2001:610:900::/40
//! as 20473 vultr region=europe
//! as 65001 as1149-au-syd site=au-syd region=oceania
//! as 4200000001 stub-1 vps=12
//! link 65001 20473 c2p lat=1
//! link 20473 1133 p2p
//! link 65002 4200000001 ixp
//! cap au-syd Prepend,noPeer,noExport
//! ```
//!
//! `c2p` reads "first AS is a customer of the second". Records may appear in
//! any order; every ASN a link mentions must be declared by an `as` record.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use ipnet::IpNet;

use super::{
    default_latency, AnycastPrefix, AnycastSite, AsNode, AsTopology, Asn, Link, Relationship,
    SiteId, TePolicy, TopologyError,
};

fn parse_err(line: usize, message: impl Into<String>) -> TopologyError {
    TopologyError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_asn(tok: &str, line: usize) -> Result<Asn, TopologyError> {
    tok.parse::<Asn>()
        .map_err(|_| parse_err(line, format!("invalid AS number {tok:?}")))
}

fn parse_cidr(tok: &str, line: usize) -> Result<IpNet, TopologyError> {
    let net: IpNet = tok
        .parse()
        .map_err(|_| parse_err(line, format!("invalid prefix {tok:?}")))?;
    if net.trunc() != net {
        return Err(parse_err(line, format!("prefix {tok} has host bits set")));
    }
    Ok(net)
}

/// Splits `key=value`; returns `None` for plain tokens.
fn attr(tok: &str) -> Option<(&str, &str)> {
    tok.split_once('=')
}

struct PendingLink {
    line: usize,
    a: Asn,
    b: Asn,
    rel: Relationship,
    lat: Option<f64>,
}

/// Parses and validates a topology document.
pub fn load_topology(source: &str) -> Result<AsTopology, TopologyError> {
    let mut nodes: Vec<AsNode> = Vec::new();
    let mut declared: BTreeMap<Asn, usize> = BTreeMap::new();
    let mut pending: Vec<PendingLink> = Vec::new();
    let mut prefixes: Vec<AnycastPrefix> = Vec::new();
    let mut caps: Vec<(usize, SiteId, Vec<TePolicy>)> = Vec::new();

    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let text = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = text.split_whitespace().collect();
        let Some((&kind, rest)) = toks.split_first() else {
            continue;
        };
        match kind {
            "as" => {
                let [asn, name, attrs @ ..] = rest else {
                    return Err(parse_err(
                        line,
                        "expected `as <asn> <name> [site=..] [vps=..] [region=..]`",
                    ));
                };
                let mut node = AsNode::new(parse_asn(asn, line)?, *name);
                for tok in attrs {
                    match attr(tok) {
                        Some(("site", v)) => {
                            node.hosts_site =
                                Some(SiteId::new(v).map_err(|e| parse_err(line, e.to_string()))?)
                        }
                        Some(("vps", v)) => {
                            node.vps = v
                                .parse()
                                .map_err(|_| parse_err(line, format!("invalid vps count {v:?}")))?
                        }
                        Some(("region", v)) => node.region = Some(v.to_string()),
                        _ => return Err(parse_err(line, format!("unknown attribute {tok:?}"))),
                    }
                }
                declared.entry(node.asn).or_insert(line);
                nodes.push(node);
            }
            "link" => {
                let [a, b, rel, attrs @ ..] = rest else {
                    return Err(parse_err(
                        line,
                        "expected `link <asn1> <asn2> <c2p|p2p|ixp> [lat=<ms>]`",
                    ));
                };
                let rel = match *rel {
                    "c2p" => Relationship::CustomerOf,
                    "p2c" => Relationship::ProviderOf,
                    "p2p" => Relationship::Peer,
                    "ixp" => Relationship::IxpPeer,
                    other => {
                        return Err(parse_err(line, format!("unknown relationship {other:?}")))
                    }
                };
                let mut lat = None;
                for tok in attrs {
                    match attr(tok) {
                        Some(("lat", v)) => {
                            let ms: f64 = v
                                .parse()
                                .map_err(|_| parse_err(line, format!("invalid latency {v:?}")))?;
                            if !(ms >= 0.0 && ms.is_finite()) {
                                return Err(parse_err(
                                    line,
                                    format!("latency must be non-negative, got {v}"),
                                ));
                            }
                            lat = Some(ms);
                        }
                        _ => return Err(parse_err(line, format!("unknown attribute {tok:?}"))),
                    }
                }
                pending.push(PendingLink {
                    line,
                    a: parse_asn(a, line)?,
                    b: parse_asn(b, line)?,
                    rel,
                    lat,
                });
            }
            "prefix" => {
                let [cidr, attrs @ ..] = rest else {
                    return Err(parse_err(line, "expected `prefix <cidr> [alias=<cidr>]`"));
                };
                let mut prefix = AnycastPrefix::new(parse_cidr(cidr, line)?);
                for tok in attrs {
                    match attr(tok) {
                        Some(("alias", v)) => prefix.aliases.push(parse_cidr(v, line)?),
                        _ => return Err(parse_err(line, format!("unknown attribute {tok:?}"))),
                    }
                }
                prefixes.push(prefix);
            }
            "cap" => {
                let [site, list] = rest else {
                    return Err(parse_err(
                        line,
                        "expected `cap <site_id> <policy>[,<policy>...]`",
                    ));
                };
                let site = SiteId::new(site).map_err(|e| parse_err(line, e.to_string()))?;
                let policies = list
                    .split(',')
                    .filter(|p| !p.is_empty())
                    .map(|p| {
                        p.parse::<TePolicy>()
                            .map_err(|e| parse_err(line, e.to_string()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                caps.push((line, site, policies));
            }
            other => return Err(parse_err(line, format!("unknown record kind {other:?}"))),
        }
    }

    let by_asn: BTreeMap<Asn, &AsNode> = nodes.iter().map(|n| (n.asn, n)).collect();
    let mut links = Vec::with_capacity(pending.len());
    for l in pending {
        for end in [l.a, l.b] {
            if !declared.contains_key(&end) {
                return Err(parse_err(l.line, format!("AS {end} is not declared")));
            }
        }
        let lat = l.lat.unwrap_or_else(|| {
            default_latency(by_asn.get(&l.a).copied(), by_asn.get(&l.b).copied())
        });
        links.push(Link::new(l.a, l.b, l.rel, lat));
    }

    let mut sites: BTreeMap<SiteId, AnycastSite> = BTreeMap::new();
    for node in &nodes {
        if let Some(site) = &node.hosts_site {
            sites
                .entry(site.clone())
                .or_insert_with(|| AnycastSite::new(site.clone(), node.asn));
        }
    }
    for (line, site, policies) in caps {
        let Some(entry) = sites.get_mut(&site) else {
            return Err(parse_err(
                line,
                format!("site {site} has no host AS (no `as ... site={site}` record)"),
            ));
        };
        entry.te_capabilities.extend(policies);
    }

    AsTopology::build(nodes, links, sites.into_values().collect(), prefixes)
}

/// Writes the canonical text form; `load_topology` of the result reproduces
/// the topology exactly.
pub fn serialize_topology(topology: &AsTopology) -> String {
    let mut out = String::from("# anylab topology\n");
    for p in topology.anycast_prefixes() {
        let _ = write!(out, "prefix {}", p.net);
        for a in &p.aliases {
            let _ = write!(out, " alias={a}");
        }
        out.push('\n');
    }
    for n in topology.nodes() {
        let _ = write!(out, "as {} {}", n.asn, n.name);
        if let Some(site) = &n.hosts_site {
            let _ = write!(out, " site={site}");
        }
        if n.vps > 0 {
            let _ = write!(out, " vps={}", n.vps);
        }
        if let Some(region) = &n.region {
            let _ = write!(out, " region={region}");
        }
        out.push('\n');
    }
    for l in topology.links() {
        let rel = match l.relationship {
            Relationship::CustomerOf => "c2p",
            Relationship::ProviderOf => "p2c",
            Relationship::Peer => "p2p",
            Relationship::IxpPeer => "ixp",
        };
        let _ = writeln!(
            out,
            "link {} {} {} lat={}",
            l.from_asn, l.to_asn, rel, l.latency_ms
        );
    }
    for s in topology.sites() {
        let caps: BTreeSet<TePolicy> = s.te_capabilities.clone();
        let list: Vec<&str> = caps.iter().map(|p| p.name()).collect();
        let _ = writeln!(out, "cap {} {}", s.site_id, list.join(","));
    }
    out
}

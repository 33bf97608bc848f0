//! Seeded random small topologies with announcements.

use std::collections::BTreeSet;

use anylab_core::routing::{Announcement, Community};
use anylab_core::topology::{
    AnycastPrefix, AnycastSite, AsNode, AsTopology, Asn, Link, Relationship, SiteId, TePolicy,
};
use ipnet::IpNet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct WorldConfig {
    pub max_nodes: usize,
    pub max_announcements: usize,
    pub communities: bool,
    pub poison: bool,
    /// Force every link to one relationship.
    pub uniform: Option<Relationship>,
    /// Fraction of nodes hosting a site.
    pub site_share: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            max_nodes: 8,
            max_announcements: 3,
            communities: true,
            poison: true,
            uniform: None,
            site_share: 0.6,
        }
    }
}

pub struct World {
    pub topology: AsTopology,
    pub announcements: Vec<Announcement>,
}

pub fn anycast_block() -> IpNet {
    "10.0.0.0/16".parse().unwrap()
}

pub fn site_name(i: usize) -> SiteId {
    let a = (b'a' + (i / 26) as u8) as char;
    let b = (b'a' + (i % 26) as u8) as char;
    SiteId::new(&format!("x{a}-s{b}x")).unwrap()
}

pub fn random_topology(rng: &mut ChaCha8Rng, cfg: &WorldConfig) -> AsTopology {
    let n = rng.gen_range(2..=cfg.max_nodes.max(2));
    let mut asns: Vec<Asn> = (1..=60).collect();
    asns.shuffle(rng);
    asns.truncate(n);

    let rel = |rng: &mut ChaCha8Rng| {
        cfg.uniform.unwrap_or_else(|| match rng.gen_range(0..10) {
            0..=5 => Relationship::CustomerOf,
            6..=8 => Relationship::Peer,
            _ => Relationship::IxpPeer,
        })
    };
    let mut links = Vec::new();
    let mut pairs = BTreeSet::new();
    // index order is the hierarchy: customers always have a higher index
    for i in 1..n {
        let j = rng.gen_range(0..i);
        links.push(Link::new(
            asns[i],
            asns[j],
            rel(rng),
            rng.gen_range(1..20) as f64,
        ));
        pairs.insert((j, i));
    }
    for i in 0..n {
        for j in 0..i {
            if !pairs.contains(&(j, i)) && rng.gen_bool(0.3) {
                links.push(Link::new(
                    asns[i],
                    asns[j],
                    rel(rng),
                    rng.gen_range(1..20) as f64,
                ));
                pairs.insert((j, i));
            }
        }
    }

    let mut nodes: Vec<AsNode> = asns
        .iter()
        .map(|&a| AsNode::new(a, format!("n{a}")).with_vps(1))
        .collect();
    let mut sites = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let hosts = ((n as f64 * cfg.site_share).ceil() as usize).clamp(1, n);
    for (k, &i) in order.iter().take(hosts).enumerate() {
        let id = site_name(k);
        nodes[i].hosts_site = Some(id.clone());
        let mut site = AnycastSite::new(id, asns[i]);
        site.te_capabilities.extend(TePolicy::ALL);
        sites.push(site);
    }
    AsTopology::build(
        nodes,
        links,
        sites,
        vec![AnycastPrefix::new(anycast_block())],
    )
    .unwrap()
}

pub fn random_announcements(
    rng: &mut ChaCha8Rng,
    topology: &AsTopology,
    cfg: &WorldConfig,
) -> Vec<Announcement> {
    let block = anycast_block();
    let halves: Vec<IpNet> = block.subnets(17).unwrap().collect();
    let prefixes = [block, halves[0], halves[1]];
    let asns: Vec<Asn> = topology.nodes().iter().map(|n| n.asn).collect();
    let mut out: Vec<Announcement> = Vec::new();
    let count = rng.gen_range(1..=cfg.max_announcements.max(1));
    for _ in 0..count * 3 {
        if out.len() == count {
            break;
        }
        let site = topology.sites().choose(rng).unwrap();
        let prefix = if rng.gen_bool(0.6) {
            block
        } else {
            *prefixes.choose(rng).unwrap()
        };
        if out
            .iter()
            .any(|a| a.site_id == site.site_id && a.prefix == prefix)
        {
            continue;
        }
        let mut a =
            Announcement::new(site.site_id.clone(), prefix).with_prepend(rng.gen_range(0..3));
        if cfg.poison && rng.gen_bool(0.2) {
            let victim = *asns.choose(rng).unwrap();
            if victim != site.host_asn {
                a = a.with_poison(victim);
            }
        }
        if cfg.communities {
            while rng.gen_bool(0.35) {
                let target = *asns.choose(rng).unwrap();
                let c = match rng.gen_range(0..7) {
                    0 => Community::Prepend(rng.gen_range(1..3)),
                    1 => Community::NoPeer,
                    2 => Community::NoExport,
                    3 => Community::NoClient,
                    4 => Community::SelectivePrepend {
                        target,
                        n: rng.gen_range(1..3),
                    },
                    5 => Community::SelectiveAdvertiseOnly(target),
                    _ => Community::SelectiveAdvertiseExcept(target),
                };
                a = a.with_community(c);
            }
        }
        out.push(a);
    }
    out
}

pub fn random_world(seed: u64, cfg: &WorldConfig) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topology = random_topology(&mut rng, cfg);
    let announcements = random_announcements(&mut rng, &topology, cfg);
    World {
        topology,
        announcements,
    }
}

//! Built-in twelve-site anycast topology: one AS per measurement site, one AS
//! per transit provider, a peering mesh between the transit providers, and a
//! seeded cloud of stub client ASes.

use std::collections::BTreeSet;

use ipnet::IpNet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    default_latency, AnycastPrefix, AnycastSite, AsNode, AsTopology, Asn, Link, Relationship,
    SiteId, TePolicy,
};

/// Static description of one site row.
#[derive(Debug, Clone, Copy)]
pub struct FixtureSite {
    pub id: &'static str,
    pub location: &'static str,
    pub asn: Asn,
    pub region: &'static str,
    pub transits: &'static [Asn],
    pub ixp: Option<&'static str>,
    pub peers: u32,
    /// Whether the upstreams honor the community-based policies (every site
    /// supports plain prepending).
    pub communities: bool,
    pub no_client: bool,
}

#[allow(clippy::too_many_arguments)]
const fn site(
    id: &'static str,
    location: &'static str,
    asn: Asn,
    region: &'static str,
    transits: &'static [Asn],
    ixp: Option<&'static str>,
    peers: u32,
    communities: bool,
    no_client: bool,
) -> FixtureSite {
    FixtureSite {
        id,
        location,
        asn,
        region,
        transits,
        ixp,
        peers,
        communities,
        no_client,
    }
}

/// The twelve measurement sites with their transit providers, IXPs and
/// peer counts.
pub const FIXTURE_SITES: [FixtureSite; 12] = [
    site(
        "au-syd",
        "Sidney, Australia",
        65001,
        "oceania",
        &[20473],
        None,
        1,
        true,
        false,
    ),
    site(
        "br-gru",
        "Sao Paulo, Brazil",
        65002,
        "south-america",
        &[20080, 1251],
        Some("spo.IX.br"),
        1892,
        true,
        true,
    ),
    site(
        "br-poa",
        "Porto Alegre, Brazil",
        65003,
        "south-america",
        &[262605, 264575],
        Some("poa.IX.br"),
        218,
        true,
        false,
    ),
    site(
        "dk-cop",
        "Copenhagen, Denmark",
        65004,
        "europe",
        &[39839],
        None,
        1,
        false,
        false,
    ),
    site(
        "uk-lnd",
        "London, England",
        65005,
        "europe",
        &[20473],
        Some("LINX"),
        1,
        true,
        false,
    ),
    site(
        "fr-par",
        "Paris, France",
        65006,
        "europe",
        &[20473],
        Some("France-IX"),
        1,
        true,
        false,
    ),
    site(
        "jp-hnd",
        "Tokyo, Japan",
        65007,
        "asia",
        &[2500],
        None,
        1,
        false,
        false,
    ),
    site(
        "nl-ens",
        "Enschede, Netherlands",
        65008,
        "europe",
        &[1133],
        None,
        1,
        false,
        false,
    ),
    site(
        "us-los",
        "Los Angeles, United States",
        65009,
        "north-america",
        &[4],
        None,
        1,
        false,
        false,
    ),
    site(
        "us-mia",
        "Miami, United States",
        65010,
        "north-america",
        &[20080],
        None,
        1,
        true,
        true,
    ),
    site(
        "us-was",
        "Washington, United States",
        65011,
        "north-america",
        &[226],
        None,
        1,
        false,
        false,
    ),
    site(
        "nl-arn",
        "Arnhem, Netherlands",
        65012,
        "europe",
        &[1140],
        None,
        1,
        false,
        false,
    ),
];

const TRANSITS: [(Asn, &str, &str); 11] = [
    (4, "usc", "north-america"),
    (226, "los-nettos", "north-america"),
    (1133, "utwente", "europe"),
    (1140, "sidn", "europe"),
    (1251, "ansp", "south-america"),
    (2500, "wide", "asia"),
    (20080, "ampath", "north-america"),
    (20473, "vultr", "europe"),
    (39839, "dk-hostmaster", "europe"),
    (262605, "leovin", "south-america"),
    (264575, "nexfibra", "south-america"),
];

/// First ASN handed to generated stub ASes (private 32-bit range).
pub const STUB_ASN_BASE: Asn = 4_200_000_000;

/// One-way latency between a site and each of its transit providers.
const SITE_UPLINK_MS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureConfig {
    pub stubs: usize,
    pub seed: u64,
    /// One IXP peering link per this many peers in a site's peer count
    /// (rounded up, at least one).
    pub ixp_peer_scale: u32,
    pub max_stub_vps: u32,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            stubs: 200,
            seed: 1,
            ixp_peer_scale: 100,
            max_stub_vps: 40,
        }
    }
}

pub fn tangled_fixture() -> AsTopology {
    tangled_fixture_with(&FixtureConfig::default())
}

pub fn tangled_fixture_with(config: &FixtureConfig) -> AsTopology {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    let mut sites = Vec::new();

    for (asn, name, region) in TRANSITS {
        nodes.push(AsNode::new(asn, name).with_region(region));
    }
    for row in &FIXTURE_SITES {
        let id = SiteId::new(row.id).expect("fixture site ids are well formed");
        nodes.push(
            AsNode::new(row.asn, format!("as1149-{}", row.id))
                .with_site(id.clone())
                .with_region(row.region),
        );
        for &t in row.transits {
            links.push(Link::new(
                row.asn,
                t,
                Relationship::CustomerOf,
                SITE_UPLINK_MS,
            ));
        }
        let mut site = AnycastSite::new(id, row.asn);
        if row.communities {
            site.te_capabilities.extend([
                TePolicy::NoPeer,
                TePolicy::NoExport,
                TePolicy::SelectivePrepend,
                TePolicy::SelectiveAdvertise,
            ]);
        }
        if row.no_client {
            site.te_capabilities.insert(TePolicy::NoClient);
        }
        sites.push(site);
    }

    let region_of = |asn: Asn| TRANSITS.iter().find(|t| t.0 == asn).map(|t| t.2);
    for (i, a) in TRANSITS.iter().enumerate() {
        for b in &TRANSITS[i + 1..] {
            let lat = latency(Some(a.2), Some(b.2));
            links.push(Link::new(a.0, b.0, Relationship::Peer, lat));
        }
    }

    let transit_asns: Vec<Asn> = TRANSITS.iter().map(|t| t.0).collect();
    let mut stubs = Vec::with_capacity(config.stubs);
    for i in 0..config.stubs {
        let asn = STUB_ASN_BASE + 1 + i as Asn;
        let providers = if rng.gen_bool(0.3) { 2 } else { 1 };
        let chosen: Vec<Asn> = transit_asns
            .choose_multiple(&mut rng, providers)
            .copied()
            .collect();
        let region = region_of(chosen[0]).expect("transit region");
        let vps = rng.gen_range(1..=config.max_stub_vps.max(1));
        for &p in &chosen {
            links.push(Link::new(
                asn,
                p,
                Relationship::CustomerOf,
                latency(Some(region), region_of(p)),
            ));
        }
        nodes.push(
            AsNode::new(asn, format!("stub-{}", i + 1))
                .with_vps(vps)
                .with_region(region),
        );
        stubs.push((asn, region));
    }

    for row in FIXTURE_SITES.iter().filter(|r| r.ixp.is_some()) {
        let fanout = row.peers.div_ceil(config.ixp_peer_scale.max(1)).max(1) as usize;
        let members: BTreeSet<usize> =
            rand::seq::index::sample(&mut rng, stubs.len(), fanout.min(stubs.len()))
                .into_iter()
                .collect();
        for m in members {
            let (asn, region) = stubs[m];
            links.push(Link::new(
                row.asn,
                asn,
                Relationship::IxpPeer,
                latency(Some(row.region), Some(region)),
            ));
        }
    }

    let v4: IpNet = "145.100.118.0/23".parse().expect("literal prefix");
    let v6: IpNet = "2001:610:9000::/40".parse().expect("literal prefix");
    let v6_alias: IpNet = "2001:610:900::/40".parse().expect("literal prefix");
    let prefixes = vec![
        AnycastPrefix::new(v4),
        AnycastPrefix {
            net: v6,
            aliases: vec![v6_alias],
        },
    ];

    AsTopology::from_parts(nodes, links, sites, prefixes)
}

fn latency(a: Option<&str>, b: Option<&str>) -> f64 {
    let node = |r: Option<&str>| r.map(|r| AsNode::new(0, "").with_region(r));
    default_latency(node(a).as_ref(), node(b).as_ref())
}

//! Property checks shared by the proptest suites and the acceptance runner.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use anylab_core::analysis::{catchment_summary, ttl_distribution, CatchmentReport};
use anylab_core::controller::{Command, ControlState, Family};
use anylab_core::probe::{run_measurement, synthetic_hitlist, MeasurementPlan, ReplyRecord};
use anylab_core::routing::{
    catchment, forward_path, poisoned_reachability, propagate, propagate_with_workers,
    Announcement, Community, RibSet,
};
use anylab_core::topology::{AsTopology, Asn, Relation, Relationship, SiteId, TePolicy};
use ipnet::IpNet;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use super::world::{anycast_block, random_world, WorldConfig};

pub type Check = Result<(), TestCaseError>;

/// Per site, support for noPeer, noExport, noClient,
/// SelectivePrepend, SelectiveAdvertise (Prepend is universal).
pub const CAPABILITY_MATRIX: [(&str, [bool; 5]); 12] = [
    ("nl-arn", [false, false, false, false, false]),
    ("dk-cop", [false, false, false, false, false]),
    ("nl-ens", [false, false, false, false, false]),
    ("br-gru", [true, true, true, true, true]),
    ("jp-hnd", [false, false, false, false, false]),
    ("uk-lnd", [true, true, false, true, true]),
    ("us-los", [false, false, false, false, false]),
    ("us-mia", [true, true, true, true, true]),
    ("fr-par", [true, true, false, true, true]),
    ("br-poa", [true, true, false, true, true]),
    ("au-syd", [true, true, false, true, true]),
    ("us-was", [false, false, false, false, false]),
];

pub const MATRIX_POLICIES: [TePolicy; 5] = [
    TePolicy::NoPeer,
    TePolicy::NoExport,
    TePolicy::NoClient,
    TePolicy::SelectivePrepend,
    TePolicy::SelectiveAdvertise,
];

pub fn matrix_allows(site: &str, policy: TePolicy) -> bool {
    if policy == TePolicy::Prepend {
        return true;
    }
    let row = CAPABILITY_MATRIX
        .iter()
        .find(|(s, _)| *s == site)
        .expect("fixture site")
        .1;
    row[MATRIX_POLICIES.iter().position(|p| *p == policy).unwrap()]
}

pub fn is_valley_free(t: &AsTopology, rib: &RibSet, asn: Asn, prefix: &IpNet) -> bool {
    let hops = forward_path(rib, asn, prefix).unwrap();
    // propagation order: origin first
    let mut chain: Vec<Asn> = hops.into_iter().rev().collect();
    chain.push(asn);
    let mut descending = false;
    for w in chain.windows(2) {
        // what the receiver is to the sender
        match t.relation(w[0], w[1]).unwrap() {
            Relation::Provider => {
                if descending {
                    return false;
                }
            }
            Relation::Peer | Relation::Ixp => {
                if descending {
                    return false;
                }
                descending = true;
            }
            Relation::Customer => descending = true,
        }
    }
    true
}

pub fn valley_free_and_loop_free(seed: u64) -> Check {
    let w = random_world(seed, &WorldConfig::default());
    let rib = propagate(&w.topology, &w.announcements).unwrap();
    for e in rib.entries() {
        prop_assert!(!e.as_path.contains(&e.asn));
        let hops = forward_path(&rib, e.asn, &e.prefix).unwrap();
        let unique: BTreeSet<_> = hops.iter().collect();
        prop_assert_eq!(unique.len(), hops.len());
        prop_assert!(!hops.contains(&e.asn));
        prop_assert!(is_valley_free(&w.topology, &rib, e.asn, &e.prefix));
    }
    Ok(())
}

pub fn order_and_worker_independent(seed: u64, workers: usize) -> Check {
    let w = random_world(seed, &WorldConfig::default());
    let base = propagate(&w.topology, &w.announcements).unwrap();
    let rotate = |n: usize| (seed as usize) % n.max(1);
    let mut anns = w.announcements.clone();
    let k = rotate(anns.len());
    anns.rotate_left(k);
    anns.reverse();
    let mut nodes = w.topology.nodes().to_vec();
    let k = rotate(nodes.len());
    nodes.rotate_left(k);
    nodes.reverse();
    let mut links = w.topology.links().to_vec();
    let k = rotate(links.len());
    links.rotate_right(k);
    let shuffled = AsTopology::build(
        nodes,
        links,
        w.topology.sites().to_vec(),
        w.topology.anycast_prefixes().to_vec(),
    )
    .unwrap();
    prop_assert_eq!(
        &propagate_with_workers(&shuffled, &anns, workers).unwrap(),
        &base
    );
    prop_assert_eq!(&propagate(&w.topology, &w.announcements).unwrap(), &base);
    Ok(())
}

pub fn unrelated_poison_is_inert(seed: u64) -> Check {
    let cfg = WorldConfig {
        poison: false,
        communities: false,
        max_announcements: 1,
        ..WorldConfig::default()
    };
    let w = random_world(seed, &cfg);
    let a = &w.announcements[0];
    let rib = propagate(&w.topology, std::slice::from_ref(a)).unwrap();
    let on_paths: BTreeSet<Asn> = rib
        .entries()
        .flat_map(|e| e.as_path.iter().copied().chain([e.asn]))
        .collect();
    let off = w
        .topology
        .nodes()
        .iter()
        .map(|n| n.asn)
        .find(|x| !on_paths.contains(x));
    if let Some(x) = off {
        let poisoned = poisoned_reachability(&w.topology, &a.clone().with_poison(x)).unwrap();
        prop_assert_eq!(catchment(&poisoned, &a.prefix), catchment(&rib, &a.prefix));
    }
    Ok(())
}

pub fn prepend_is_monotone(seed: u64, peer: bool, extra: u32) -> Check {
    let rel = if peer {
        Relationship::Peer
    } else {
        Relationship::CustomerOf
    };
    let cfg = WorldConfig {
        communities: false,
        poison: false,
        uniform: Some(rel),
        ..WorldConfig::default()
    };
    let w = random_world(seed, &cfg);
    let block = anycast_block();
    let anns: Vec<Announcement> = w
        .topology
        .sites()
        .iter()
        .map(|s| Announcement::new(s.site_id.clone(), block))
        .collect();
    let site = anns[seed as usize % anns.len()].site_id.clone();
    let before = catchment(&propagate(&w.topology, &anns).unwrap(), &block);
    let bumped: Vec<Announcement> = anns
        .iter()
        .cloned()
        .map(|a| {
            if a.site_id == site {
                a.with_prepend(extra)
            } else {
                a
            }
        })
        .collect();
    let after = catchment(&propagate(&w.topology, &bumped).unwrap(), &block);
    let of = |c: &BTreeMap<Asn, SiteId>| {
        c.iter()
            .filter(|(_, s)| **s == site)
            .map(|(a, _)| *a)
            .collect::<BTreeSet<_>>()
    };
    prop_assert!(of(&after).is_subset(&of(&before)));
    Ok(())
}

pub fn idempotent(seed: u64) -> Check {
    let w = random_world(seed, &WorldConfig::default());
    prop_assert_eq!(
        propagate(&w.topology, &w.announcements).unwrap(),
        propagate(&w.topology, &w.announcements).unwrap()
    );
    Ok(())
}

/// Routes of a `NoExport` announcement never travel past the origin's
/// direct neighbors.
pub fn no_export_confined(seed: u64) -> Check {
    let w = random_world(seed, &WorldConfig::default());
    let mut anns = w.announcements.clone();
    let k = seed as usize % anns.len();
    anns[k].communities.insert(Community::NoExport);
    let rib = propagate(&w.topology, &anns).unwrap();
    for e in rib.entries() {
        let a = anns
            .iter()
            .find(|a| a.site_id == e.origin_site_id && a.prefix == e.prefix)
            .unwrap();
        if a.communities.contains(&Community::NoExport) {
            let host = w.topology.site(&a.site_id).unwrap().host_asn;
            prop_assert!(e.asn == host || w.topology.neighbor(host, e.asn).is_some());
            prop_assert!(forward_path(&rib, e.asn, &e.prefix).unwrap().len() <= 1);
        }
    }
    Ok(())
}

/// Withdrawing a site leaves no route to it; withdrawing everything leaves
/// an empty RIB.
pub fn withdraw_complete(seed: u64) -> Check {
    let w = random_world(seed, &WorldConfig::default());
    let victim = w.announcements[seed as usize % w.announcements.len()].clone();
    let rest: Vec<Announcement> = w
        .announcements
        .iter()
        .filter(|a| **a != victim)
        .cloned()
        .collect();
    let rib = propagate(&w.topology, &rest).unwrap();
    prop_assert!(!rib
        .entries()
        .any(|e| e.origin_site_id == victim.site_id && e.prefix == victim.prefix));

    let mut state = ControlState::new(Arc::new(w.topology.clone()));
    for a in &w.announcements {
        let _ = state.apply_at(
            1,
            Command::Announce {
                site: a.site_id.clone(),
                prefix: a.prefix,
                family: Family::of(&a.prefix),
                prepend: a.origin_prepend,
                communities: a.communities.clone(),
                poisoned: a.poisoned_asns.clone(),
            },
        );
    }
    for a in &w.announcements {
        state.withdraw(&a.site_id, a.prefix).unwrap();
    }
    prop_assert_eq!(state.active_count(), 0);
    prop_assert!(state.rib().unwrap().is_empty());
    Ok(())
}

/// A random command sequence on the fixture never yields an announcement
/// using a policy the capability matrix denies its site, and every denial is a
/// capability error.
pub fn capability_enforced(topology: &Arc<AsTopology>, cmds: &[(usize, usize, u32)]) -> Check {
    let mut state = ControlState::new(topology.clone());
    let block: IpNet = "145.100.118.0/23".parse().unwrap();
    for (t, &(site, policy, n)) in cmds.iter().enumerate() {
        let id = topology.sites()[site % 12].site_id.clone();
        let community = match policy % 6 {
            0 => Community::Prepend(n.max(1)),
            1 => Community::NoPeer,
            2 => Community::NoExport,
            3 => Community::NoClient,
            4 => Community::SelectivePrepend {
                target: 20473,
                n: n.max(1),
            },
            _ => Community::SelectiveAdvertiseExcept(20080),
        };
        let allowed = matrix_allows(id.as_str(), community.policy());
        let result = state.apply_at(
            t as u64,
            Command::Announce {
                site: id.clone(),
                prefix: block,
                family: Family::V4,
                prepend: n,
                communities: BTreeSet::from([community]),
                poisoned: BTreeSet::new(),
            },
        );
        prop_assert_eq!(result.is_ok(), allowed, "{} {}", id, community);
        for a in state.announcements() {
            for p in a.required_policies() {
                prop_assert!(matrix_allows(a.site_id.as_str(), p));
            }
        }
    }
    Ok(())
}

/// Sweeps the full 12x6 grid once.
pub fn capability_grid(topology: &Arc<AsTopology>) -> Result<usize, String> {
    let mut checked = 0;
    for (site, _) in CAPABILITY_MATRIX {
        let id = SiteId::new(site).unwrap();
        let host = topology.site(&id).ok_or(format!("missing {site}"))?;
        for policy in TePolicy::ALL {
            if host.supports(policy) != matrix_allows(site, policy) {
                return Err(format!("{site} {policy}"));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

fn triples(records: Vec<ReplyRecord>) -> Vec<(SiteId, std::net::IpAddr, u8)> {
    records
        .into_iter()
        .map(|r| (r.site, r.target_ip, r.ttl))
        .collect()
}

/// Which site probes a vantage point does not change where its reply
/// lands or how many hops it takes. On pure provider hierarchies every
/// pinger reaches every vantage point, so the record sets match exactly;
/// on mixed worlds only the commonly reached vantage points are compared.
pub fn pinger_independent(seed: u64, a: usize, b: usize) -> Check {
    for uniform in [Some(Relationship::CustomerOf), None] {
        let cfg = WorldConfig {
            max_announcements: 1,
            poison: false,
            communities: false,
            uniform,
            ..WorldConfig::default()
        };
        let w = random_world(seed, &cfg);
        let anns: Vec<Announcement> = w
            .topology
            .sites()
            .iter()
            .map(|s| Announcement::new(s.site_id.clone(), anycast_block()))
            .collect();
        let rib = propagate(&w.topology, &anns).unwrap();
        let hitlist = synthetic_hitlist(&w.topology, 24, seed);
        let sites = w.topology.sites();
        let run = |pingers: Vec<SiteId>| {
            let plan = MeasurementPlan::new(&hitlist, pingers, anycast_block());
            run_measurement(&w.topology, &rib, &plan, 1).unwrap()
        };
        let one = triples(run(vec![sites[a % sites.len()].site_id.clone()]));
        let two = triples(run(vec![
            sites[b % sites.len()].site_id.clone(),
            sites[(a + b) % sites.len()].site_id.clone(),
        ]));
        if uniform.is_some() {
            prop_assert_eq!(one, two);
        } else {
            let by_ip: BTreeMap<_, _> = one.iter().map(|t| (t.1, t)).collect();
            for t in &two {
                if let Some(o) = by_ip.get(&t.1) {
                    prop_assert_eq!(*o, t);
                }
            }
        }
    }
    Ok(())
}

pub fn conservation(records: &[ReplyRecord]) -> Check {
    let hist: u64 = ttl_distribution(records).values().sum();
    let summary = catchment_summary(records);
    prop_assert_eq!(hist, records.len() as u64);
    prop_assert_eq!(summary.total, records.len() as u64);
    prop_assert_eq!(
        summary.rows.iter().map(|r| r.count).sum::<u64>(),
        summary.total
    );
    percent_bounds(&summary)
}

pub fn percent_bounds(report: &CatchmentReport) -> Check {
    if report.total == 0 {
        prop_assert!(report.rows.is_empty());
        return Ok(());
    }
    let sum: u64 = report.rows.iter().map(|r| r.percent).sum();
    prop_assert!(sum <= 100 && sum + report.rows.len() as u64 > 100);
    prop_assert!(report.rows.windows(2).all(|w| w[0].count >= w[1].count));
    Ok(())
}

const SITES: [&str; 4] = ["au-syd", "us-los", "nl-ens", "br-gru"];

pub fn arb_record() -> impl Strategy<Value = ReplyRecord> {
    (
        0usize..4,
        0u32..2_000_000_000,
        any::<u32>(),
        1u8..=64,
        0usize..3,
        1u32..70000,
    )
        .prop_map(|(s, micros, ip, ttl, cc, asn)| ReplyRecord {
            site: SiteId::new(SITES[s]).unwrap(),
            time_diff_ms: micros as f64 / 1e6,
            target_ip: std::net::IpAddr::V4(ip.into()),
            anycast_ip: "145.100.118.1".parse().unwrap(),
            ttl,
            cc: ["AU", "NL", "BR"][cc].into(),
            asn,
        })
}

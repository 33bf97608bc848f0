//! Reference routing computation used only by tests.
//!
//! Every permitted path is enumerated by depth-first search straight off the
//! link list, with its own implementation of the export rules. The stable
//! selection is then built greedily: repeatedly fix the globally best path
//! (by relationship class, then length, then next-hop ASN) whose tail is
//! already fixed at the next hop. Extending a path never improves its
//! (class, length) rank, so a fixed choice is never displaced.

use std::collections::{BTreeMap, HashMap};

use anylab_core::routing::{Announcement, Community};
use anylab_core::topology::{AsTopology, Asn, Relationship, SiteId};
use ipnet::IpNet;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleEntry {
    pub as_path: Vec<Asn>,
    pub next_hop: Asn,
    pub site: SiteId,
    pub local_pref: u32,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Side {
    Up,   // neighbor is my provider
    Down, // neighbor is my customer
    Flat, // peer or IXP peer
}

struct Cand {
    holder: Asn,
    path: Vec<Asn>,
    hops: Vec<Asn>, // origin .. holder
    class: u8,      // 0 origin, 1 customer, 2 peer, 3 provider
    ann: usize,
    parent: Option<usize>,
}

fn sides(topology: &AsTopology) -> HashMap<Asn, Vec<(Asn, Side)>> {
    let mut out: HashMap<Asn, Vec<(Asn, Side)>> = HashMap::new();
    for l in topology.links() {
        let (a_sees_b, b_sees_a) = match l.relationship {
            Relationship::CustomerOf => (Side::Up, Side::Down),
            Relationship::ProviderOf => (Side::Down, Side::Up),
            Relationship::Peer | Relationship::IxpPeer => (Side::Flat, Side::Flat),
        };
        out.entry(l.from_asn)
            .or_default()
            .push((l.to_asn, a_sees_b));
        out.entry(l.to_asn)
            .or_default()
            .push((l.from_asn, b_sees_a));
    }
    out
}

/// Path `x` announces to `y` (where `y` sits on side `toward` of `x`) when
/// holding `c`, or `None` if it stays silent.
fn announce(
    ann: &Announcement,
    origin: Asn,
    x: Asn,
    c: &Cand,
    y: Asn,
    toward: Side,
) -> Option<Vec<Asn>> {
    if c.class == 0 {
        let mut p = vec![x; 1 + ann.origin_prepend as usize];
        if !ann.poisoned_asns.is_empty() {
            p.extend(ann.poisoned_asns.iter().copied());
            p.push(origin);
        }
        return Some(p);
    }
    // learned from peer or provider: only down to customers
    if c.class != 1 && toward != Side::Down {
        return None;
    }
    let mut extra = 0usize;
    if c.hops.len() == 2 {
        let only: Vec<Asn> = ann
            .communities
            .iter()
            .filter_map(|k| {
                if let Community::SelectiveAdvertiseOnly(t) = k {
                    Some(*t)
                } else {
                    None
                }
            })
            .collect();
        if !only.is_empty() && only.iter().any(|&t| t != y) {
            return None;
        }
        for k in &ann.communities {
            match k {
                Community::NoExport => return None,
                Community::NoPeer => {
                    if toward == Side::Flat {
                        return None;
                    }
                }
                Community::NoClient => {
                    if toward == Side::Down {
                        return None;
                    }
                }
                Community::SelectiveAdvertiseExcept(t) => {
                    if *t == y {
                        return None;
                    }
                }
                Community::Prepend(n) => extra += *n as usize,
                Community::SelectivePrepend { target, n } => {
                    if *target == y {
                        extra += *n as usize
                    }
                }
                Community::SelectiveAdvertiseOnly(_) => {}
            }
        }
    }
    let mut p = vec![x; 1 + extra];
    p.extend_from_slice(&c.path);
    Some(p)
}

fn class_at_receiver(receiver_sees_sender: Side) -> u8 {
    match receiver_sees_sender {
        Side::Down => 1,
        Side::Flat => 2,
        Side::Up => 3,
    }
}

fn local_pref(class: u8) -> u32 {
    [300, 200, 100, 50][class as usize]
}

/// Brute-force best routes keyed by (prefix, holder).
pub fn oracle(topology: &AsTopology, anns: &[Announcement]) -> BTreeMap<(IpNet, Asn), OracleEntry> {
    let adj = sides(topology);
    let mut by_prefix: BTreeMap<IpNet, Vec<&Announcement>> = BTreeMap::new();
    for a in anns {
        by_prefix.entry(a.prefix).or_default().push(a);
    }
    let mut out = BTreeMap::new();
    for (prefix, group) in by_prefix {
        let mut cands: Vec<Cand> = Vec::new();
        let mut origins = Vec::new();
        for (k, a) in group.iter().enumerate() {
            let host = topology
                .sites()
                .iter()
                .find(|s| s.site_id == a.site_id)
                .unwrap()
                .host_asn;
            origins.push(host);
            cands.push(Cand {
                holder: host,
                path: vec![],
                hops: vec![host],
                class: 0,
                ann: k,
                parent: None,
            });
        }
        let mut stack: Vec<usize> = (0..cands.len()).collect();
        while let Some(ci) = stack.pop() {
            let x = cands[ci].holder;
            let ann = group[cands[ci].ann];
            let origin = origins[cands[ci].ann];
            for &(y, side_of_y) in adj.get(&x).map(Vec::as_slice).unwrap_or(&[]) {
                let Some(path) = announce(ann, origin, x, &cands[ci], y, side_of_y) else {
                    continue;
                };
                if path.contains(&y) {
                    continue;
                }
                let y_sees_x = match side_of_y {
                    Side::Up => Side::Down,
                    Side::Down => Side::Up,
                    Side::Flat => Side::Flat,
                };
                let mut hops = cands[ci].hops.clone();
                hops.push(y);
                let ann_idx = cands[ci].ann;
                cands.push(Cand {
                    holder: y,
                    path,
                    hops,
                    class: class_at_receiver(y_sees_x),
                    ann: ann_idx,
                    parent: Some(ci),
                });
                stack.push(cands.len() - 1);
            }
        }

        let mut fixed: HashMap<Asn, usize> = HashMap::new();
        for (i, c) in cands.iter().enumerate() {
            if c.class == 0 {
                fixed.insert(c.holder, i);
            }
        }
        loop {
            let mut pick: Option<(u8, usize, Asn, Asn, usize)> = None;
            for (i, c) in cands.iter().enumerate() {
                if fixed.contains_key(&c.holder) {
                    continue;
                }
                let Some(p) = c.parent else { continue };
                let parent_holder = cands[p].holder;
                if fixed.get(&parent_holder) != Some(&p) {
                    continue;
                }
                let key = (c.class, c.path.len(), parent_holder, c.holder, i);
                if pick.is_none_or(|best| key < best) {
                    pick = Some(key);
                }
            }
            let Some((_, _, _, holder, i)) = pick else {
                break;
            };
            fixed.insert(holder, i);
        }

        for (holder, i) in fixed {
            let c = &cands[i];
            let next_hop = c.parent.map_or(holder, |p| cands[p].holder);
            out.insert(
                (prefix, holder),
                OracleEntry {
                    as_path: c.path.clone(),
                    next_hop,
                    site: group[c.ann].site_id.clone(),
                    local_pref: local_pref(c.class),
                },
            );
        }
    }
    out
}

/// Differences between a computed RIB and the oracle, one line each.
pub fn mismatches(
    topology: &AsTopology,
    anns: &[Announcement],
    rib: &anylab_core::routing::RibSet,
) -> Vec<String> {
    let expected = oracle(topology, anns);
    let mut out = Vec::new();
    if rib.len() != expected.len() {
        out.push(format!(
            "{} entries, oracle has {}",
            rib.len(),
            expected.len()
        ));
    }
    for e in rib.entries() {
        let Some(o) = expected.get(&(e.prefix, e.asn)) else {
            out.push(format!(
                "AS {} {}: route the oracle does not have",
                e.asn, e.prefix
            ));
            continue;
        };
        let got = (&e.as_path, e.next_hop_asn, &e.origin_site_id, e.local_pref);
        let want = (&o.as_path, o.next_hop, &o.site, o.local_pref);
        if got != want {
            out.push(format!("AS {} {}: {got:?} != {want:?}", e.asn, e.prefix));
        }
    }
    out
}

use std::collections::{BTreeMap, BTreeSet};

use ipnet::IpNet;
use rayon::prelude::*;

use super::{
    Announcement, Community, RibEntry, RibSet, RoutingError, LOCAL_PREF_CUSTOMER,
    LOCAL_PREF_ORIGIN, LOCAL_PREF_PEER, LOCAL_PREF_PROVIDER,
};
use crate::topology::{AsTopology, Asn, Relation};

/// An originating AS for one prefix.
pub(crate) struct Origin<'a> {
    pub asn: Asn,
    pub prepend: u32,
    pub poisoned: Vec<Asn>,
    pub communities: Option<&'a BTreeSet<Community>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Route {
    pub path: Vec<Asn>,
    pub next_hop: Asn,
    pub local_pref: u32,
    pub origin: usize,
}

fn import_pref(sender: Relation) -> u32 {
    match sender {
        Relation::Customer => LOCAL_PREF_CUSTOMER,
        Relation::Peer | Relation::Ixp => LOCAL_PREF_PEER,
        Relation::Provider => LOCAL_PREF_PROVIDER,
    }
}

/// How many copies of the exporting AS go in front of `route`'s path when
/// it is sent to `receiver`, which is a `receiver_is` of the exporter.
/// `None` when export policy suppresses the advertisement.
pub(crate) fn export_copies(
    origin: &Origin<'_>,
    route: &Route,
    receiver: Asn,
    receiver_is: Relation,
) -> Option<u32> {
    if route.local_pref == LOCAL_PREF_ORIGIN {
        return Some(1 + origin.prepend);
    }
    if route.local_pref != LOCAL_PREF_CUSTOMER && receiver_is != Relation::Customer {
        return None;
    }
    let mut copies = 1;
    if route.next_hop == origin.asn {
        for c in origin.communities.into_iter().flatten() {
            match *c {
                Community::Prepend(n) => copies += n,
                Community::NoPeer if matches!(receiver_is, Relation::Peer | Relation::Ixp) => {
                    return None
                }
                Community::NoExport => return None,
                Community::NoClient if receiver_is == Relation::Customer => return None,
                Community::SelectivePrepend { target, n } if target == receiver => copies += n,
                Community::SelectiveAdvertiseOnly(t) if t != receiver => return None,
                Community::SelectiveAdvertiseExcept(t) if t == receiver => return None,
                _ => {}
            }
        }
    }
    Some(copies)
}

/// Path content after the exporter's own copies.
fn tail<'r>(origin: &'r Origin<'_>, route: &'r Route) -> (&'r [Asn], Option<Asn>) {
    if route.local_pref == LOCAL_PREF_ORIGIN && !origin.poisoned.is_empty() {
        (&origin.poisoned, Some(origin.asn))
    } else {
        (&route.path, None)
    }
}

/// Synchronous rounds of best-route selection until nothing changes. Every
/// round reads only the previous round's state, so the result does not
/// depend on the order in which ASes are visited.
pub(crate) fn solve(topology: &AsTopology, origins: &[Origin<'_>]) -> Option<Vec<Option<Route>>> {
    let n = topology.nodes().len();
    let mut state: Vec<Option<Route>> = vec![None; n];
    let mut pinned = vec![false; n];
    for (k, o) in origins.iter().enumerate() {
        let pos = topology.position(o.asn)?;
        state[pos] = Some(Route {
            path: Vec::new(),
            next_hop: o.asn,
            local_pref: LOCAL_PREF_ORIGIN,
            origin: k,
        });
        pinned[pos] = true;
    }
    let bound = (n * n).max(4);
    for _ in 0..bound {
        let next: Vec<Option<Route>> = (0..n)
            .map(|i| {
                if pinned[i] {
                    state[i].clone()
                } else {
                    best_offer(topology, origins, &state, i)
                }
            })
            .collect();
        if next == state {
            return Some(state);
        }
        state = next;
    }
    None
}

fn best_offer(
    topology: &AsTopology,
    origins: &[Origin<'_>],
    state: &[Option<Route>],
    at: usize,
) -> Option<Route> {
    let me = topology.nodes()[at].asn;
    // (local_pref, length, next hop, copies, route)
    let mut best: Option<(u32, usize, Asn, u32, &Route)> = None;
    for nb in topology.neighbors_at(at) {
        let pos = topology
            .position(nb.asn)
            .expect("adjacency only holds known ASes");
        let Some(route) = &state[pos] else { continue };
        let origin = &origins[route.origin];
        let Some(copies) = export_copies(origin, route, me, nb.relation.inverse()) else {
            continue;
        };
        let (rest, trailer) = tail(origin, route);
        if rest.contains(&me) || trailer == Some(me) {
            continue;
        }
        let len = copies as usize + rest.len() + usize::from(trailer.is_some());
        let pref = import_pref(nb.relation);
        let better = match best {
            None => true,
            Some((bp, bl, bn, _, _)) => {
                (std::cmp::Reverse(pref), len, nb.asn) < (std::cmp::Reverse(bp), bl, bn)
            }
        };
        if better {
            best = Some((pref, len, nb.asn, copies, route));
        }
    }
    best.map(|(pref, len, hop, copies, route)| {
        let origin = &origins[route.origin];
        let (rest, trailer) = tail(origin, route);
        let mut path = Vec::with_capacity(len);
        path.extend(std::iter::repeat_n(hop, copies as usize));
        path.extend_from_slice(rest);
        path.extend(trailer);
        Route {
            path,
            next_hop: hop,
            local_pref: pref,
            origin: route.origin,
        }
    })
}

fn check_set(topology: &AsTopology, announcements: &[Announcement]) -> Result<(), RoutingError> {
    let mut seen = BTreeSet::new();
    for a in announcements {
        a.check(topology)?;
        if !seen.insert((&a.site_id, a.prefix)) {
            return Err(RoutingError::DuplicateAnnouncement {
                site: a.site_id.clone(),
                prefix: a.prefix,
            });
        }
    }
    Ok(())
}

fn propagate_prefix(
    topology: &AsTopology,
    prefix: IpNet,
    anns: &[&Announcement],
) -> Result<BTreeMap<crate::topology::Asn, RibEntry>, RoutingError> {
    let origins: Vec<Origin<'_>> = anns
        .iter()
        .map(|a| {
            let host = topology.site(&a.site_id).expect("checked").host_asn;
            Origin {
                asn: host,
                prepend: a.origin_prepend,
                poisoned: a.poisoned_asns.iter().copied().collect(),
                communities: Some(&a.communities),
            }
        })
        .collect();
    let state = solve(topology, &origins).ok_or(RoutingError::Oscillation { prefix })?;
    Ok(topology
        .nodes()
        .iter()
        .zip(state)
        .filter_map(|(node, route)| {
            let r = route?;
            Some((
                node.asn,
                RibEntry {
                    asn: node.asn,
                    prefix,
                    as_path: r.path,
                    next_hop_asn: r.next_hop,
                    origin_site_id: anns[r.origin].site_id.clone(),
                    local_pref: r.local_pref,
                },
            ))
        })
        .collect())
}

/// Computes the stable routing state for a set of announcements.
pub fn propagate(
    topology: &AsTopology,
    announcements: &[Announcement],
) -> Result<RibSet, RoutingError> {
    propagate_with_workers(topology, announcements, 1)
}

/// [`propagate`] with prefixes spread over `workers` threads. The result is
/// identical for every worker count.
pub fn propagate_with_workers(
    topology: &AsTopology,
    announcements: &[Announcement],
    workers: usize,
) -> Result<RibSet, RoutingError> {
    check_set(topology, announcements)?;
    let mut sorted: Vec<Announcement> = announcements.to_vec();
    sorted.sort();
    let mut by_prefix: BTreeMap<IpNet, Vec<&Announcement>> = BTreeMap::new();
    for a in &sorted {
        by_prefix.entry(a.prefix).or_default().push(a);
    }
    let groups: Vec<(IpNet, Vec<&Announcement>)> = by_prefix.into_iter().collect();
    let run = |(prefix, anns): &(IpNet, Vec<&Announcement>)| {
        propagate_prefix(topology, *prefix, anns).map(|m| (*prefix, m))
    };
    let results: Vec<Result<_, RoutingError>> = if workers <= 1 || groups.len() <= 1 {
        groups.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        pool.install(|| groups.par_iter().map(run).collect())
    };
    let entries = results.into_iter().collect::<Result<BTreeMap<_, _>, _>>()?;
    Ok(RibSet {
        entries,
        announcements: sorted,
    })
}

/// Plain (no policy knobs) routes from every AS towards one destination AS.
#[derive(Debug, Clone)]
pub struct UnicastRoutes {
    dest: Asn,
    paths: BTreeMap<Asn, Vec<Asn>>,
}

impl UnicastRoutes {
    pub fn destination(&self) -> Asn {
        self.dest
    }

    /// ASes traversed from `src` to the destination, destination last.
    /// Empty when `src` is the destination, `None` when unreachable.
    pub fn path_from(&self, src: Asn) -> Option<&[Asn]> {
        self.paths.get(&src).map(Vec::as_slice)
    }
}

pub fn unicast_routes(topology: &AsTopology, dest: Asn) -> Result<UnicastRoutes, RoutingError> {
    if !topology.contains_asn(dest) {
        return Err(RoutingError::UnknownAs(dest));
    }
    let origin = Origin {
        asn: dest,
        prepend: 0,
        poisoned: Vec::new(),
        communities: None,
    };
    let state =
        solve(topology, std::slice::from_ref(&origin)).ok_or(RoutingError::Oscillation {
            prefix: IpNet::default(),
        })?;
    let paths = topology
        .nodes()
        .iter()
        .zip(state)
        .filter_map(|(node, r)| r.map(|r| (node.asn, r.path)))
        .collect();
    Ok(UnicastRoutes { dest, paths })
}

//! Simulated catchment measurement: pingers send echo requests with the
//! anycast address as source, and each reply lands at whichever site the
//! vantage point's AS routes that address to.

mod hitlist;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::IpAddr;

use ipnet::IpNet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::routing::{forward_path, unicast_routes, RibSet, RoutingError};
use crate::topology::{service_address, AsTopology, Asn, SiteId};

pub use hitlist::{hitlist_to_csv, load_hitlist, synthetic_hitlist, HitListEntry};

pub const INITIAL_TTL: u8 = 64;
/// Probes per second per pinger: 6.5M addresses in 30 minutes, rounded up.
pub const DEFAULT_RATE_PPS: u32 = 3612;
pub const DEFAULT_PACE_THRESHOLD_PPS: u64 = 10_000;
/// One-way delay between a vantage point or pinger and its AS edge.
pub const DEFAULT_ACCESS_LATENCY_MS: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbeError {
    #[error("hit list line {line}: {message}")]
    Hitlist { line: usize, message: String },
    #[error("measurement plan needs at least one pinger site")]
    NoPingers,
    #[error("unknown pinger site {0}")]
    UnknownPinger(String),
    #[error("probe rate must be positive")]
    InvalidRate,
    #[error("loss probability {0} is outside [0, 1]")]
    InvalidLoss(f64),
    #[error("no site announces a route covering {0}")]
    EmptyCatchment(IpNet),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

#[derive(Debug, Clone)]
pub struct MeasurementPlan<'a> {
    pub hitlist: &'a [HitListEntry],
    pub pinger_sites: Vec<SiteId>,
    pub rate_pps: u32,
    pub anycast_prefix: IpNet,
    pub start_time_ms: u64,
    pub access_latency_ms: f64,
    /// Probability that a reply is lost.
    pub loss: f64,
    pub seed: u64,
}

impl<'a> MeasurementPlan<'a> {
    pub fn new(
        hitlist: &'a [HitListEntry],
        pinger_sites: Vec<SiteId>,
        anycast_prefix: IpNet,
    ) -> Self {
        MeasurementPlan {
            hitlist,
            pinger_sites,
            rate_pps: DEFAULT_RATE_PPS,
            anycast_prefix,
            start_time_ms: 0,
            access_latency_ms: DEFAULT_ACCESS_LATENCY_MS,
            loss: 0.0,
            seed: 1,
        }
    }

    pub fn check(&self, topology: &AsTopology) -> Result<(), ProbeError> {
        if self.pinger_sites.is_empty() {
            return Err(ProbeError::NoPingers);
        }
        if self.rate_pps == 0 {
            return Err(ProbeError::InvalidRate);
        }
        if !(0.0..=1.0).contains(&self.loss) {
            return Err(ProbeError::InvalidLoss(self.loss));
        }
        for s in &self.pinger_sites {
            if topology.site(s).is_none() {
                return Err(ProbeError::UnknownPinger(s.to_string()));
            }
        }
        Ok(())
    }
}

/// One reply as recorded at the catchment site.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplyRecord {
    pub site: SiteId,
    pub time_diff_ms: f64,
    pub target_ip: IpAddr,
    pub anycast_ip: IpAddr,
    pub ttl: u8,
    pub cc: String,
    pub asn: Asn,
}

impl ReplyRecord {
    /// Canonical output order.
    pub fn sort_key(&self) -> (&SiteId, IpAddr) {
        (&self.site, self.target_ip)
    }
}

/// Seconds to probe `vps` addresses at `rate_pps` from `pingers` pingers.
pub fn duration_secs(vps: u64, rate_pps: u32, pingers: usize) -> u64 {
    let per_sec = rate_pps as u64 * pingers as u64;
    if vps == 0 || per_sec == 0 {
        return 0;
    }
    vps.div_ceil(per_sec)
}

pub fn estimate_duration(plan: &MeasurementPlan) -> u64 {
    duration_secs(
        plan.hitlist.len() as u64,
        plan.rate_pps,
        plan.pinger_sites.len(),
    )
}

/// Warning text when the aggregate probe rate exceeds `threshold_pps`.
pub fn pace_check(plan: &MeasurementPlan, threshold_pps: u64) -> Option<String> {
    let aggregate = plan.rate_pps as u64 * plan.pinger_sites.len() as u64;
    (aggregate > threshold_pps).then(|| {
        format!(
            "aggregate probe rate {aggregate} pps ({} pinger(s) x {} pps) exceeds the {threshold_pps} pps pacing threshold",
            plan.pinger_sites.len(),
            plan.rate_pps
        )
    })
}

/// Sum of link latencies along `from, hops...`.
pub fn path_latency(topology: &AsTopology, from: Asn, hops: &[Asn]) -> f64 {
    let mut total = 0.0;
    let mut at = from;
    for &h in hops {
        total += topology.neighbor(at, h).map_or(0.0, |n| n.latency_ms);
        at = h;
    }
    total
}

fn pool(workers: usize) -> Option<rayon::ThreadPool> {
    (workers > 1).then(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool")
    })
}

/// Probes every hit-list entry and returns the replies in canonical order.
/// Entries whose AS is unknown or unreachable produce no record.
pub fn run_measurement(
    topology: &AsTopology,
    rib: &RibSet,
    plan: &MeasurementPlan,
    workers: usize,
) -> Result<Vec<ReplyRecord>, ProbeError> {
    plan.check(topology)?;
    let anycast_ip = service_address(&plan.anycast_prefix);
    if !rib
        .entries()
        .any(|e| e.is_origin() && e.prefix.contains(&anycast_ip))
    {
        return Err(ProbeError::EmptyCatchment(plan.anycast_prefix));
    }
    let pingers: Vec<Asn> = plan
        .pinger_sites
        .iter()
        .map(|s| topology.site(s).expect("checked").host_asn)
        .collect();

    // forward legs: one unicast computation per distinct vantage AS
    let targets: Vec<Asn> = plan
        .hitlist
        .iter()
        .filter(|e| e.routable && topology.contains_asn(e.asn))
        .map(|e| e.asn)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let forward_for = |dest: &Asn| -> Result<(Asn, Vec<Option<f64>>), ProbeError> {
        let routes = unicast_routes(topology, *dest)?;
        let legs = pingers
            .iter()
            .map(|&p| {
                routes
                    .path_from(p)
                    .map(|hops| path_latency(topology, p, hops))
            })
            .collect();
        Ok((*dest, legs))
    };
    let pool = pool(workers);
    let forward: HashMap<Asn, Vec<Option<f64>>> = match &pool {
        Some(pool) => pool.install(|| {
            targets
                .par_iter()
                .map(forward_for)
                .collect::<Result<_, _>>()
        })?,
        None => targets.iter().map(forward_for).collect::<Result<_, _>>()?,
    };

    // reply legs: per vantage AS, resolved by longest prefix match
    let mut reply: HashMap<Asn, Option<(SiteId, f64, usize)>> = HashMap::new();
    for &asn in &targets {
        let leg = match rib.lookup(asn, anycast_ip) {
            Some(entry) => {
                let hops = forward_path(rib, asn, &entry.prefix)?;
                Some((
                    entry.origin_site_id.clone(),
                    path_latency(topology, asn, &hops),
                    hops.len(),
                ))
            }
            None => None,
        };
        reply.insert(asn, leg);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut records = Vec::new();
    for (i, vp) in plan.hitlist.iter().enumerate() {
        let lost = plan.loss > 0.0 && rng.gen_bool(plan.loss);
        if lost || !vp.routable {
            continue;
        }
        let (Some(legs), Some(Some((site, back_ms, hops)))) =
            (forward.get(&vp.asn), reply.get(&vp.asn))
        else {
            continue;
        };
        let Some(out_ms) = legs[i % pingers.len()] else {
            continue;
        };
        records.push(ReplyRecord {
            site: site.clone(),
            time_diff_ms: out_ms + back_ms + 2.0 * plan.access_latency_ms,
            target_ip: vp.address,
            anycast_ip,
            ttl: INITIAL_TTL.saturating_sub(u8::try_from(*hops).unwrap_or(u8::MAX)),
            cc: vp.cc.clone(),
            asn: vp.asn,
        });
    }
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(records)
}

/// Per-site record counts.
pub fn site_counts(records: &[ReplyRecord]) -> BTreeMap<SiteId, u64> {
    let mut out = BTreeMap::new();
    for r in records {
        *out.entry(r.site.clone()).or_default() += 1;
    }
    out
}

use std::collections::HashSet;
use std::net::{IpAddr, Ipv4Addr};

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::ProbeError;
use crate::topology::{vantage_network, AsTopology, Asn};

/// One vantage point: a representative address for its /24 (or /48).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HitListEntry {
    pub address: IpAddr,
    pub cc: String,
    pub asn: Asn,
    /// False when the home AS is not part of the topology.
    pub routable: bool,
}

/// Reads `address,cc,asn` rows, with or without a header. Keeps the first
/// address seen in each /24 (/48 for IPv6).
pub fn load_hitlist(text: &str, topology: &AsTopology) -> Result<Vec<HitListEntry>, ProbeError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| ProbeError::Hitlist {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(i + 1, |p| p.line() as usize);
        let bad = |message: String| ProbeError::Hitlist { line, message };
        if i == 0 && row.get(0) == Some("address") {
            continue;
        }
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() != 3 {
            return Err(bad(format!(
                "expected 3 columns (address,cc,asn), found {}",
                row.len()
            )));
        }
        let address: IpAddr = row[0]
            .parse()
            .map_err(|_| bad(format!("bad address {:?}", &row[0])))?;
        let cc = &row[1];
        if cc.len() != 2 || !cc.bytes().all(|b| b.is_ascii_alphabetic()) {
            return Err(bad(format!("bad country code {cc:?}")));
        }
        let asn: Asn = row[2]
            .parse()
            .map_err(|_| bad(format!("bad asn {:?}", &row[2])))?;
        if seen.insert(vantage_network(address)) {
            out.push(HitListEntry {
                address,
                cc: cc.to_ascii_uppercase(),
                asn,
                routable: topology.contains_asn(asn),
            });
        }
    }
    Ok(out)
}

/// Renders a hit list as `address,cc,asn` with a header.
pub fn hitlist_to_csv(entries: &[HitListEntry]) -> String {
    let mut out = String::from("address,cc,asn\n");
    for e in entries {
        out.push_str(&format!("{},{},{}\n", e.address, e.cc, e.asn));
    }
    out
}

/// `n` vantage points spread over the topology's ASes in proportion to
/// their `vps` weight. Entry `i` lives in the `i`-th /24 counting from
/// 1.0.0.0; the country is the AS's nearest site's.
pub fn synthetic_hitlist(topology: &AsTopology, n: usize, seed: u64) -> Vec<HitListEntry> {
    let weighted: Vec<(Asn, u32)> = topology
        .nodes()
        .iter()
        .filter(|a| a.vps > 0)
        .map(|a| (a.asn, a.vps))
        .collect();
    if weighted.is_empty() || n == 0 {
        return Vec::new();
    }
    let dist = WeightedIndex::new(weighted.iter().map(|(_, w)| *w)).expect("positive weights");
    let countries = topology.countries();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = u32::from(Ipv4Addr::new(1, 0, 0, 0));
    (0..n)
        .map(|i| {
            let asn = weighted[dist.sample(&mut rng)].0;
            let host = rng.gen_range(1..255u32);
            HitListEntry {
                address: IpAddr::V4(Ipv4Addr::from(base + ((i as u32) << 8) + host)),
                cc: countries[&asn].clone(),
                asn,
                routable: true,
            }
        })
        .collect()
}

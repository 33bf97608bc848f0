//! Reports over reply records: catchment split, TTL histogram, RTT
//! statistics and per-site load estimates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use crate::probe::{HitListEntry, ReplyRecord};
use crate::topology::{vantage_network, Asn, SiteId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatchmentRow {
    pub site: String,
    pub count: u64,
    /// Truncated integer percentage of the total.
    pub percent: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CatchmentReport {
    pub rows: Vec<CatchmentRow>,
    pub total: u64,
}

impl CatchmentReport {
    /// Builds a report from per-site counts. Sites with the same name are
    /// merged.
    pub fn from_counts<S: Into<String>>(counts: impl IntoIterator<Item = (S, u64)>) -> Self {
        let mut merged: BTreeMap<String, u64> = BTreeMap::new();
        for (site, n) in counts {
            *merged.entry(site.into()).or_default() += n;
        }
        let total: u64 = merged.values().sum();
        let mut rows: Vec<CatchmentRow> = merged
            .into_iter()
            .map(|(site, count)| CatchmentRow {
                site,
                count,
                percent: if total == 0 {
                    0
                } else {
                    (100 * count as u128 / total as u128) as u64
                },
            })
            .collect();
        rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.site.cmp(&b.site)));
        CatchmentReport { rows, total }
    }

    /// The `site | count - pct` overview, counts right-aligned to the widest.
    pub fn render_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.count.to_string().len())
            .max()
            .unwrap_or(1);
        let mut out = String::from("# sites| replies -  percentual\n\n");
        for r in &self.rows {
            let _ = writeln!(out, "{} | {:>width$} - {:>3}", r.site, r.count, r.percent);
        }
        out.push('\n');
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("site,count,percent\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.site, r.count, r.percent);
        }
        out
    }
}

pub fn catchment_summary(records: &[ReplyRecord]) -> CatchmentReport {
    CatchmentReport::from_counts(records.iter().map(|r| (r.site.as_str(), 1)))
}

pub fn ttl_distribution(records: &[ReplyRecord]) -> BTreeMap<u8, u64> {
    let mut out = BTreeMap::new();
    for r in records {
        *out.entry(r.ttl).or_default() += 1;
    }
    out
}

pub fn ttl_csv(hist: &BTreeMap<u8, u64>) -> String {
    let mut out = String::from("ttl,count\n");
    for (ttl, n) in hist {
        let _ = writeln!(out, "{ttl},{n}");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Site,
    Country,
    SiteCountry,
}

impl FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "site" => Ok(GroupBy::Site),
            "country" | "cc" => Ok(GroupBy::Country),
            "site-country" | "site×country" | "site,country" => Ok(GroupBy::SiteCountry),
            other => Err(format!(
                "unknown grouping {other:?} (site, country, site-country)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RttRow {
    pub group: String,
    pub count: u64,
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub p95: f64,
    pub max: f64,
}

/// Nearest-rank percentile of ascending `sorted` values.
fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// RTT statistics per group, rows in group order.
pub fn rtt_aggregate(records: &[ReplyRecord], group_by: GroupBy) -> Vec<RttRow> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        let key = match group_by {
            GroupBy::Site => r.site.to_string(),
            GroupBy::Country => r.cc.clone(),
            GroupBy::SiteCountry => format!("{}/{}", r.site, r.cc),
        };
        groups.entry(key).or_default().push(r.time_diff_ms);
    }
    groups
        .into_iter()
        .map(|(group, mut v)| {
            v.sort_by(f64::total_cmp);
            let sum: f64 = v.iter().sum();
            RttRow {
                group,
                count: v.len() as u64,
                min: v[0],
                median: nearest_rank(&v, 50.0),
                mean: sum / v.len() as f64,
                p95: nearest_rank(&v, 95.0),
                max: v[v.len() - 1],
            }
        })
        .collect()
}

pub fn rtt_csv(rows: &[RttRow]) -> String {
    let mut out = String::from("group,count,min,median,mean,p95,max\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.group, r.count, r.min, r.median, r.mean, r.p95, r.max
        );
    }
    out
}

/// /24 networks per site, assuming every network sends the same traffic.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoadEstimate {
    pub per_site: BTreeMap<String, u64>,
    /// Networks whose AS has no catchment entry.
    pub unmapped: u64,
    pub uniform_traffic: bool,
}

impl LoadEstimate {
    pub fn mapped(&self) -> u64 {
        self.per_site.values().sum()
    }

    pub fn to_csv(&self) -> String {
        let total = self.mapped();
        let mut out = String::from("site,networks,percent\n");
        for (site, n) in &self.per_site {
            let pct = (100 * n).checked_div(total).unwrap_or(0);
            let _ = writeln!(out, "{site},{n},{pct}");
        }
        out
    }
}

/// Counts distinct hit-list networks per catchment site. Every site that
/// appears in the catchment is listed, even with zero networks.
pub fn load_estimate(catchment: &BTreeMap<Asn, SiteId>, hitlist: &[HitListEntry]) -> LoadEstimate {
    let mut per_site: BTreeMap<String, u64> =
        catchment.values().map(|s| (s.to_string(), 0)).collect();
    let mut seen = BTreeSet::new();
    let mut unmapped = 0;
    for e in hitlist {
        if !seen.insert(vantage_network(e.address)) {
            continue;
        }
        match catchment.get(&e.asn) {
            Some(site) => *per_site.entry(site.to_string()).or_default() += 1,
            None => unmapped += 1,
        }
    }
    LoadEstimate {
        per_site,
        unmapped,
        uniform_traffic: true,
    }
}

/// The same estimate taken from measured replies.
pub fn load_from_records(records: &[ReplyRecord]) -> LoadEstimate {
    let mut per_site: BTreeMap<String, BTreeSet<_>> = BTreeMap::new();
    for r in records {
        per_site
            .entry(r.site.to_string())
            .or_default()
            .insert(vantage_network(r.target_ip));
    }
    LoadEstimate {
        per_site: per_site
            .into_iter()
            .map(|(s, nets)| (s, nets.len() as u64))
            .collect(),
        unmapped: 0,
        uniform_traffic: true,
    }
}

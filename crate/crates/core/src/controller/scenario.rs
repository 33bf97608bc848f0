use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use ipnet::IpNet;

use super::{Command, ControlError, ControlState, Family, LogEntry};
use crate::routing::{format_communities, parse_communities, RibSet};
use crate::topology::{AsTopology, Asn, SiteId};

/// One parsed scenario command with its logical timestamp and source line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptLine {
    pub t: u64,
    pub line: usize,
    pub command: Command,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: u64,
    /// 1-based position of the command in timestamp order.
    pub index: usize,
    pub rib: RibSet,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub state: ControlState,
    pub snapshots: Vec<Snapshot>,
    /// First failing command (1-based index) and its error.
    pub failure: Option<(usize, ControlError)>,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Announce {
                site,
                prefix,
                prepend,
                communities,
                poisoned,
                ..
            } => {
                write!(f, "announce {site} {prefix}")?;
                if *prepend > 0 {
                    write!(f, " prepend={prepend}")?;
                }
                if !communities.is_empty() {
                    write!(f, " community={}", format_communities(communities))?;
                }
                if !poisoned.is_empty() {
                    let list: Vec<String> = poisoned.iter().map(Asn::to_string).collect();
                    write!(f, " poison={}", list.join(","))?;
                }
                Ok(())
            }
            Command::Withdraw { site, prefix } => write!(f, "withdraw {site} {prefix}"),
            Command::ReversePrepend { prefix, keep, n } => {
                write!(f, "reverse-prepend {prefix} keep={keep} n={n}")
            }
        }
    }
}

fn parse_line(text: &str, line: usize) -> Result<ScriptLine, ControlError> {
    let err = |message: String| ControlError::Parse { line, message };
    let mut words = text.split_whitespace();
    let t = words
        .next()
        .and_then(|w| w.parse::<u64>().ok())
        .ok_or_else(|| err("expected a non-negative integer timestamp".into()))?;
    let verb = words.next().ok_or_else(|| err("missing command".into()))?;
    let site = |w: Option<&str>| -> Result<SiteId, ControlError> {
        let w = w.ok_or_else(|| err("missing site".into()))?;
        SiteId::new(w).map_err(|e| err(e.to_string()))
    };
    let prefix = |w: Option<&str>| -> Result<IpNet, ControlError> {
        let w = w.ok_or_else(|| err("missing prefix".into()))?;
        w.parse::<IpNet>()
            .map_err(|_| err(format!("malformed prefix {w:?}")))
    };
    let number = |key: &str, v: &str| {
        v.parse::<u32>()
            .map_err(|_| err(format!("{key} expects an integer, got {v:?}")))
    };

    let command = match verb {
        "announce" => {
            let site = site(words.next())?;
            let prefix = prefix(words.next())?;
            let mut prepend = 0;
            let mut communities = BTreeSet::new();
            let mut poisoned = BTreeSet::new();
            for opt in words.by_ref() {
                match opt.split_once('=') {
                    Some(("prepend", v)) => prepend = number("prepend", v)?,
                    Some(("community", v)) => {
                        communities.extend(parse_communities(v).map_err(|e| err(e.to_string()))?)
                    }
                    Some(("poison", v)) => {
                        for a in v.split(',') {
                            poisoned.insert(number("poison", a)?);
                        }
                    }
                    _ => return Err(err(format!("unknown option {opt:?}"))),
                }
            }
            Command::Announce {
                site,
                family: Family::of(&prefix),
                prefix,
                prepend,
                communities,
                poisoned,
            }
        }
        "withdraw" => Command::Withdraw {
            site: site(words.next())?,
            prefix: prefix(words.next())?,
        },
        "reverse-prepend" => {
            let prefix = prefix(words.next())?;
            let (mut keep, mut n) = (None, None);
            for opt in words.by_ref() {
                match opt.split_once('=') {
                    Some(("keep", v)) => keep = Some(site(Some(v))?),
                    Some(("n", v)) => n = Some(number("n", v)?),
                    _ => return Err(err(format!("unknown option {opt:?}"))),
                }
            }
            Command::ReversePrepend {
                prefix,
                keep: keep.ok_or_else(|| err("reverse-prepend needs keep=<site>".into()))?,
                n: n.ok_or_else(|| err("reverse-prepend needs n=<k>".into()))?,
            }
        }
        other => return Err(err(format!("unknown command {other:?}"))),
    };
    if let Some(extra) = words.next() {
        return Err(err(format!("unexpected argument {extra:?}")));
    }
    Ok(ScriptLine { t, line, command })
}

/// Parses a scenario script. Blank lines and `#` comments are skipped; the
/// result is stably sorted by timestamp.
pub fn parse_script(text: &str) -> Result<Vec<ScriptLine>, ControlError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        out.push(parse_line(body, i + 1)?);
    }
    out.sort_by_key(|l| l.t);
    Ok(out)
}

/// Applies the script in timestamp order, recording a RIB snapshot after
/// each successful command. Stops at the first failure.
pub fn run_scenario(mut state: ControlState, script: &[ScriptLine]) -> ScenarioRun {
    let mut ordered: Vec<&ScriptLine> = script.iter().collect();
    ordered.sort_by_key(|l| l.t);
    let mut snapshots = Vec::new();
    for (i, line) in ordered.into_iter().enumerate() {
        let index = i + 1;
        let step = state
            .apply_at(line.t, line.command.clone())
            .and_then(|_| state.rib().map_err(ControlError::from));
        match step {
            Ok(rib) => snapshots.push(Snapshot {
                t: line.t,
                index,
                rib,
            }),
            Err(e) => {
                return ScenarioRun {
                    state,
                    snapshots,
                    failure: Some((index, e)),
                }
            }
        }
    }
    ScenarioRun {
        state,
        snapshots,
        failure: None,
    }
}

/// Rebuilds a state by re-applying every logged command, failures included.
pub fn replay_log(topology: Arc<AsTopology>, log: &[LogEntry]) -> ControlState {
    let mut state = ControlState::new(topology);
    for entry in log {
        let _ = state.apply_at(entry.timestamp, entry.command.clone());
    }
    state
}

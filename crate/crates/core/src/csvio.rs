//! Reply-record CSV: `site,time_diff,target_ip,anycast_ip,ttl,cc,asn`, one
//! row per reply, time_diff with six decimals, rows in (site, target_ip)
//! order.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::probe::ReplyRecord;
use crate::topology::SiteId;

pub const REPLY_HEADER: [&str; 7] = [
    "site",
    "time_diff",
    "target_ip",
    "anycast_ip",
    "ttl",
    "cc",
    "asn",
];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("schema mismatch at column {index} ({expected}): found {found:?}")]
    Schema {
        index: usize,
        expected: &'static str,
        found: String,
    },
    #[error("line {line}, column {column}: {message}")]
    Row {
        line: u64,
        column: &'static str,
        message: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Counts bytes passing through a writer.
struct Counting<W> {
    inner: W,
    bytes: u64,
}

impl<W: Write> Write for Counting<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.bytes += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Writes records in canonical order and returns the number of bytes
/// written, header included.
pub fn write_replies_csv<W: Write>(records: &[ReplyRecord], sink: W) -> Result<u64, CsvError> {
    let mut sorted: Vec<&ReplyRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Counting {
            inner: sink,
            bytes: 0,
        });
    w.write_record(REPLY_HEADER)?;
    for r in sorted {
        w.write_record([
            r.site.as_str(),
            &format!("{:.6}", r.time_diff_ms),
            &r.target_ip.to_string(),
            &r.anycast_ip.to_string(),
            &r.ttl.to_string(),
            &r.cc,
            &r.asn.to_string(),
        ])?;
    }
    w.flush()?;
    let counting = w.into_inner().map_err(|e| e.into_error())?;
    Ok(counting.bytes)
}

pub fn replies_to_string(records: &[ReplyRecord]) -> String {
    let mut buf = Vec::new();
    write_replies_csv(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

fn field<T: std::str::FromStr>(
    row: &csv::StringRecord,
    i: usize,
    line: u64,
) -> Result<T, CsvError> {
    let raw = row.get(i).unwrap_or("");
    raw.parse().map_err(|_| CsvError::Row {
        line,
        column: REPLY_HEADER[i],
        message: format!("cannot parse {raw:?}"),
    })
}

/// Reads a reply CSV, checking the header column by column.
pub fn read_replies_csv<R: Read>(source: R) -> Result<Vec<ReplyRecord>, CsvError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let header = reader.headers()?.clone();
    for (index, expected) in REPLY_HEADER.iter().enumerate() {
        let found = header.get(index).unwrap_or("");
        if found != *expected {
            return Err(CsvError::Schema {
                index: index + 1,
                expected,
                found: found.to_string(),
            });
        }
    }
    if header.len() > REPLY_HEADER.len() {
        return Err(CsvError::Schema {
            index: REPLY_HEADER.len() + 1,
            expected: "end of header",
            found: header[REPLY_HEADER.len()].to_string(),
        });
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != REPLY_HEADER.len() {
            let column = REPLY_HEADER.get(row.len()).copied().unwrap_or("asn");
            return Err(CsvError::Row {
                line,
                column,
                message: format!("expected 7 fields, found {}", row.len()),
            });
        }
        let site = SiteId::new(&row[0]).map_err(|e| CsvError::Row {
            line,
            column: "site",
            message: e.to_string(),
        })?;
        let time_diff_ms: f64 = field(&row, 1, line)?;
        if !time_diff_ms.is_finite() {
            return Err(CsvError::Row {
                line,
                column: "time_diff",
                message: "not a finite number".into(),
            });
        }
        out.push(ReplyRecord {
            site,
            time_diff_ms,
            target_ip: field(&row, 2, line)?,
            anycast_ip: field(&row, 3, line)?,
            ttl: field(&row, 4, line)?,
            cc: row[5].to_string(),
            asn: field(&row, 6, line)?,
        });
    }
    Ok(out)
}

/// Reads a pre-aggregated `site,count` CSV.
pub fn read_site_counts<R: Read>(source: R) -> Result<Vec<(String, u64)>, CsvError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(source);
    let header = reader.headers()?.clone();
    for (index, expected) in ["site", "count"].into_iter().enumerate() {
        let found = header.get(index).unwrap_or("");
        if found != expected {
            return Err(CsvError::Schema {
                index: index + 1,
                expected,
                found: found.to_string(),
            });
        }
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let count = row.get(1).unwrap_or("");
        let count = count.parse().map_err(|_| CsvError::Row {
            line,
            column: "count",
            message: format!("cannot parse {count:?}"),
        })?;
        out.push((row[0].to_string(), count));
    }
    Ok(out)
}

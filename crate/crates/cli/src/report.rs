use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use anylab_core::analysis::{
    catchment_summary, load_from_records, rtt_aggregate, rtt_csv, ttl_csv, ttl_distribution,
    CatchmentReport, GroupBy,
};
use anylab_core::csvio::{read_replies_csv, read_site_counts};
use anylab_core::probe::ReplyRecord;
use clap::Subcommand;

use crate::{print_stdout, read_input};

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Replies per site with truncated percentages, busiest site first.
    Catchment {
        /// Reply CSV, or a `site,count` table; `-` reads stdin.
        file: PathBuf,
        /// Emit CSV instead of the text overview.
        #[arg(long)]
        csv: bool,
    },
    /// Histogram of reply TTLs.
    Ttl { file: PathBuf },
    /// RTT statistics per group.
    Rtt {
        file: PathBuf,
        /// site, country or site-country.
        #[arg(long, default_value = "site")]
        group_by: GroupBy,
    },
    /// /24 networks per catchment site, assuming uniform traffic.
    Load { file: PathBuf },
}

fn replies(path: &Path) -> Result<Vec<ReplyRecord>> {
    let text = read_input(path)?;
    read_replies_csv(text.as_bytes()).with_context(|| format!("reading {}", path.display()))
}

pub fn run(action: ReportCommand) -> Result<()> {
    match action {
        ReportCommand::Catchment { file, csv } => {
            let text = read_input(&file)?;
            let report = if text.lines().next().map(str::trim) == Some("site,count") {
                let counts = read_site_counts(text.as_bytes())
                    .with_context(|| format!("reading {}", file.display()))?;
                CatchmentReport::from_counts(counts)
            } else {
                let records = read_replies_csv(text.as_bytes())
                    .with_context(|| format!("reading {}", file.display()))?;
                catchment_summary(&records)
            };
            if csv {
                print_stdout(&report.to_csv())
            } else {
                print_stdout(&report.render_text())
            }
        }
        ReportCommand::Ttl { file } => print_stdout(&ttl_csv(&ttl_distribution(&replies(&file)?))),
        ReportCommand::Rtt { file, group_by } => {
            print_stdout(&rtt_csv(&rtt_aggregate(&replies(&file)?, group_by)))
        }
        ReportCommand::Load { file } => print_stdout(&load_from_records(&replies(&file)?).to_csv()),
    }
}

//! Desk-scale anycast laboratory.
//!
//! * [`topology`]: AS-level world model, file format and the built-in
//!   twelve-site fixture.
//! * [`routing`]: policy-aware route propagation and catchments.
//! * [`controller`]: per-site announce/withdraw/prepend control and scenario
//!   replay.
//! * [`probe`]: hit lists and simulated ICMP catchment measurement.
//! * [`analysis`]: catchment, TTL, RTT and load reports.
//! * [`csvio`]: reply-record CSV reading and writing.

pub mod analysis;
pub mod controller;
pub mod csvio;
pub mod probe;
pub mod routing;
pub mod topology;

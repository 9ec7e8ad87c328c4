//! Request-cost simulation for analytics I/O on cloud object storage.
//!
//! Object stores bill per API call. This crate turns access patterns (traces,
//! columnar scans, join plans, cache replays) into request tallies and prices
//! them against vendor price books with exact integer arithmetic.

pub mod cachesim;
pub mod columnar;
pub mod joinplan;
pub mod pricing;
pub mod report;
pub mod scenario;
pub mod tracemodel;
pub mod units;

//! Storage I/O of broadcast and shuffle joins.
//!
//! A broadcast join has every worker load the whole build table from
//! storage; a shuffle join reads each table once and repartitions over the
//! network. The probe table is streamed once in both cases.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{Ppm, MB};

pub const DEFAULT_BROADCAST_THRESHOLD: u64 = 100 * MB;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JoinError {
    #[error("worker count must be >= 1")]
    NoWorkers,
    #[error("request bytes must be > 0")]
    ZeroRequestBytes,
    #[error("broadcast fraction {0} is outside [0, 1]")]
    Fraction(f64),
    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JoinStrategy {
    Broadcast,
    Shuffle,
    Auto,
}

impl fmt::Display for JoinStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JoinStrategy::Broadcast => "broadcast",
            JoinStrategy::Shuffle => "shuffle",
            JoinStrategy::Auto => "auto",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinSpec {
    pub build_bytes: u64,
    pub probe_bytes: u64,
    pub workers: u64,
    pub strategy: JoinStrategy,
    pub broadcast_threshold: u64,
}

impl JoinSpec {
    pub fn new(build_bytes: u64, probe_bytes: u64, workers: u64, strategy: JoinStrategy) -> Self {
        JoinSpec {
            build_bytes,
            probe_bytes,
            workers,
            strategy,
            broadcast_threshold: DEFAULT_BROADCAST_THRESHOLD,
        }
    }

    /// Auto picks broadcast when the build side is at most the threshold.
    pub fn resolved_strategy(&self) -> JoinStrategy {
        match self.strategy {
            JoinStrategy::Auto if self.build_bytes <= self.broadcast_threshold => {
                JoinStrategy::Broadcast
            }
            JoinStrategy::Auto => JoinStrategy::Shuffle,
            s => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinIoPlan {
    pub strategy: JoinStrategy,
    pub storage_bytes: u64,
    pub storage_requests: u64,
    /// Bytes read beyond one copy of each table.
    pub duplicated_bytes: u64,
    /// Repartition traffic of a shuffle join; not storage I/O, so never priced.
    pub shuffle_network_bytes: u64,
}

pub fn plan_join(spec: &JoinSpec, request_bytes: u64) -> Result<JoinIoPlan, JoinError> {
    if spec.workers == 0 {
        return Err(JoinError::NoWorkers);
    }
    if request_bytes == 0 {
        return Err(JoinError::ZeroRequestBytes);
    }
    let single_copy = spec
        .build_bytes
        .checked_add(spec.probe_bytes)
        .ok_or(JoinError::Overflow("join bytes"))?;
    let strategy = spec.resolved_strategy();
    let (storage_bytes, shuffle_network_bytes) = match strategy {
        JoinStrategy::Broadcast => {
            let build_reads = spec
                .workers
                .checked_mul(spec.build_bytes)
                .ok_or(JoinError::Overflow("broadcast build reads"))?;
            let total = build_reads
                .checked_add(spec.probe_bytes)
                .ok_or(JoinError::Overflow("join bytes"))?;
            (total, 0)
        }
        _ => (single_copy, single_copy),
    };
    Ok(JoinIoPlan {
        strategy,
        storage_bytes,
        storage_requests: storage_bytes.div_ceil(request_bytes),
        duplicated_bytes: storage_bytes - single_copy,
        shuffle_network_bytes,
    })
}

/// An exact non-negative fraction in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fraction {
    pub numer: u64,
    pub denom: u64,
}

impl Fraction {
    pub fn new(numer: u64, denom: u64) -> Self {
        assert!(denom > 0, "zero denominator");
        let g = gcd(numer, denom);
        Fraction {
            numer: numer / g,
            denom: denom / g,
        }
    }

    pub fn to_f64(self) -> f64 {
        self.numer as f64 / self.denom as f64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

impl fmt::Display for Fraction {
    /// Four decimal places unless a precision is given.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let places = f.precision().unwrap_or(4);
        write!(f, "{:.*}", places, self.to_f64())
    }
}

impl Serialize for Fraction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.to_f64())
    }
}

/// Share of broadcast build-table reads that are duplicates: `1 - 1/n`.
pub fn waste_fraction(workers: u64) -> Result<Fraction, JoinError> {
    if workers == 0 {
        return Err(JoinError::NoWorkers);
    }
    Ok(Fraction::new(workers - 1, workers))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FleetParams {
    pub queries_per_day: u64,
    pub broadcast_fraction: Ppm,
    pub workers: u64,
    pub build_bytes: u64,
}

impl FleetParams {
    pub fn validate(&self) -> Result<(), JoinError> {
        if self.broadcast_fraction > Ppm::ONE {
            return Err(JoinError::Fraction(self.broadcast_fraction.as_f64()));
        }
        if self.workers == 0 {
            return Err(JoinError::NoWorkers);
        }
        Ok(())
    }
}

/// Daily build-side bytes read across a cluster:
/// `workers * build_bytes * queries * fraction`, floored to whole bytes.
pub fn fleet_aggregate(p: &FleetParams) -> Result<u64, JoinError> {
    p.validate()?;
    let overflow = JoinError::Overflow("fleet aggregate");
    let wide = (p.workers as u128)
        .checked_mul(p.build_bytes as u128)
        .and_then(|v| v.checked_mul(p.queries_per_day as u128))
        .and_then(|v| v.checked_mul(p.broadcast_fraction.0 as u128))
        .ok_or_else(|| overflow.clone())?
        / 1_000_000;
    u64::try_from(wide).map_err(|_| overflow)
}

pub fn fleet_api_calls(bytes_per_day: u64, request_bytes: u64) -> Result<u64, JoinError> {
    if request_bytes == 0 {
        return Err(JoinError::ZeroRequestBytes);
    }
    Ok(bytes_per_day.div_ceil(request_bytes))
}

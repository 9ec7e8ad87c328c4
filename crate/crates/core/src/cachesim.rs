//! Block-granular LRU cache in front of object storage.
//!
//! Every get touches the blocks `off / B ..= (off + len - 1) / B`. Hits and
//! misses are counted per block touch; misses are fetched from the origin as
//! whole blocks, which is where read amplification comes from.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pricing::{cost_of, PriceBook, PricingError, RequestKind, RequestTally};
use crate::tracemodel::Trace;
use crate::units::{NanoUsd, MB};

pub const DEFAULT_BLOCK_BYTES: u64 = MB;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CacheError {
    #[error("block size must be > 0")]
    ZeroBlock,
    #[error("capacities must be sorted ascending")]
    UnsortedCapacities,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvictionPolicy {
    #[default]
    Lru,
}

/// How missing blocks of one request are fetched.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FetchMode {
    /// One ranged GET from the first to the last missing block of the
    /// request. Resident blocks inside that span are transferred again but
    /// still count as hits.
    #[default]
    Span,
    /// One ranged GET per contiguous run of missing blocks.
    PerRun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    /// Always a multiple of `block_bytes`.
    pub capacity_bytes: u64,
    pub block_bytes: u64,
    #[serde(default)]
    pub policy: EvictionPolicy,
    #[serde(default)]
    pub fetch: FetchMode,
}

impl CacheConfig {
    /// Rounds `capacity_bytes` down to whole blocks.
    pub fn new(capacity_bytes: u64, block_bytes: u64) -> Result<Self, CacheError> {
        if block_bytes == 0 {
            return Err(CacheError::ZeroBlock);
        }
        Ok(CacheConfig {
            capacity_bytes: capacity_bytes - capacity_bytes % block_bytes,
            block_bytes,
            policy: EvictionPolicy::Lru,
            fetch: FetchMode::default(),
        })
    }

    pub fn with_fetch(mut self, fetch: FetchMode) -> Self {
        self.fetch = fetch;
        self
    }

    pub fn with_capacity(self, capacity_bytes: u64) -> Self {
        CacheConfig {
            capacity_bytes: capacity_bytes - capacity_bytes % self.block_bytes,
            ..self
        }
    }

    pub fn capacity_blocks(&self) -> u64 {
        self.capacity_bytes / self.block_bytes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheReport {
    pub capacity_bytes: u64,
    pub block_bytes: u64,
    pub request_count: u64,
    pub hits: u64,
    pub misses: u64,
    pub origin_requests: u64,
    pub origin_bytes: u64,
    pub requested_bytes: u64,
    pub read_amplification: f64,
    pub hit_ratio: f64,
}

impl CacheReport {
    pub fn origin_tally(&self) -> RequestTally {
        RequestTally::single(RequestKind::Get, self.origin_requests, self.origin_bytes)
    }
}

type BlockKey = (u32, u64);

struct Lru {
    capacity: u64,
    clock: u64,
    stamp: HashMap<BlockKey, u64>,
    order: BTreeMap<u64, BlockKey>,
}

impl Lru {
    fn new(capacity: u64) -> Self {
        Lru {
            capacity,
            clock: 0,
            stamp: HashMap::new(),
            order: BTreeMap::new(),
        }
    }

    /// Touches `key`, returning whether it was resident. Misses are
    /// inserted and the least recently used blocks evicted past capacity.
    fn access(&mut self, key: BlockKey) -> bool {
        self.clock += 1;
        let hit = match self.stamp.insert(key, self.clock) {
            Some(old) => {
                self.order.remove(&old);
                true
            }
            None => false,
        };
        self.order.insert(self.clock, key);
        while self.order.len() as u64 > self.capacity {
            let (_, victim) = self.order.pop_first().expect("non-empty");
            self.stamp.remove(&victim);
        }
        hit
    }
}

/// Replays the get records of `trace` through the cache.
pub fn simulate(trace: &Trace, config: &CacheConfig) -> Result<CacheReport, CacheError> {
    if config.block_bytes == 0 {
        return Err(CacheError::ZeroBlock);
    }
    let b = config.block_bytes;
    let mut lru = Lru::new(config.capacity_blocks());
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let mut report = CacheReport {
        capacity_bytes: config.capacity_blocks() * b,
        block_bytes: b,
        request_count: 0,
        hits: 0,
        misses: 0,
        origin_requests: 0,
        origin_bytes: 0,
        requested_bytes: 0,
        read_amplification: 0.0,
        hit_ratio: 0.0,
    };

    for r in trace.gets() {
        let next_id = ids.len() as u32;
        let obj = *ids.entry(r.obj.as_str()).or_insert(next_id);
        report.request_count += 1;
        report.requested_bytes += r.len;
        let first = r.off / b;
        let last = (r.off + r.len - 1) / b;

        let mut in_run = false;
        let mut span: Option<(u64, u64)> = None;
        for block in first..=last {
            if lru.access((obj, block)) {
                report.hits += 1;
                in_run = false;
                continue;
            }
            report.misses += 1;
            match config.fetch {
                FetchMode::PerRun => {
                    if !in_run {
                        report.origin_requests += 1;
                    }
                    report.origin_bytes += b;
                    in_run = true;
                }
                FetchMode::Span => {
                    span = Some(span.map_or((block, block), |(lo, _)| (lo, block)));
                }
            }
        }
        if let Some((lo, hi)) = span {
            report.origin_requests += 1;
            report.origin_bytes += (hi - lo + 1) * b;
        }
    }

    let touches = report.hits + report.misses;
    if touches > 0 {
        report.hit_ratio = report.hits as f64 / touches as f64;
    }
    if report.requested_bytes > 0 {
        report.read_amplification = report.origin_bytes as f64 / report.requested_bytes as f64;
    }
    Ok(report)
}

/// Hit ratio at each capacity. Points are simulated on separate threads.
pub fn miss_ratio_curve(
    trace: &Trace,
    template: &CacheConfig,
    capacities: &[u64],
) -> Result<Vec<(u64, f64)>, CacheError> {
    if capacities.windows(2).any(|w| w[0] > w[1]) {
        return Err(CacheError::UnsortedCapacities);
    }
    let reports: Vec<Result<CacheReport, CacheError>> = std::thread::scope(|s| {
        let handles: Vec<_> = capacities
            .iter()
            .map(|&c| s.spawn(move || simulate(trace, &template.with_capacity(c))))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    capacities
        .iter()
        .zip(reports)
        .map(|(&c, r)| r.map(|r| (c, r.hit_ratio)))
        .collect()
}

/// Cost of the origin traffic, billed as gets.
pub fn price_origin(report: &CacheReport, book: &PriceBook) -> Result<NanoUsd, PricingError> {
    cost_of(book, &report.origin_tally())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::builtin_pricebook;
    use crate::tracemodel::{AccessRecord, Provenance};
    use crate::units::KB;

    fn trace(records: Vec<AccessRecord>) -> Trace {
        Trace::new(records, Provenance::Ingested).unwrap()
    }

    #[test]
    fn repeated_read_hits() {
        let t = trace(vec![AccessRecord::get(0, "a", 0, KB), AccessRecord::get(1, "a", 0, KB)]);
        let r = simulate(&t, &CacheConfig::new(MB, MB).unwrap()).unwrap();
        assert_eq!((r.misses, r.hits, r.origin_requests), (1, 1, 1));
        assert_eq!(r.origin_bytes, MB);
        assert_eq!(r.requested_bytes, 2 * KB);
        assert_eq!(r.hit_ratio, 0.5);
    }

    #[test]
    fn cold_read_amplification() {
        let t = trace(vec![AccessRecord::get(0, "a", 0, KB)]);
        let r = simulate(&t, &CacheConfig::new(0, MB).unwrap()).unwrap();
        assert_eq!(r.read_amplification, 1000.0);
        assert_eq!(r.hit_ratio, 0.0);
    }

    #[test]
    fn zero_capacity_retains_nothing() {
        let t = trace((0..5).map(|i| AccessRecord::get(i, "a", 0, 10)).collect());
        let r = simulate(&t, &CacheConfig::new(0, 100).unwrap()).unwrap();
        assert_eq!((r.hits, r.misses, r.origin_requests), (0, 5, 5));
    }

    #[test]
    fn capacity_rounds_down() {
        let c = CacheConfig::new(2_500, 1_000).unwrap();
        assert_eq!(c.capacity_bytes, 2_000);
        assert_eq!(c.capacity_blocks(), 2);
        assert_eq!(CacheConfig::new(1, 0), Err(CacheError::ZeroBlock));
    }

    #[test]
    fn hand_executed_lru_table() {
        // Blocks of 100 bytes; x, y, z are blocks 0, 1, 2 of object "o".
        // Capacity 2 blocks. Reference string and expected state (MRU last):
        //   x  miss [x]
        //   y  miss [x y]
        //   x  hit  [y x]
        //   z  miss [x z]    evict y
        //   y  miss [z y]    evict x
        //   z  hit  [y z]
        //   x  miss [z x]    evict y
        //   z  hit  [x z]
        let seq = [0u64, 1, 0, 2, 1, 2, 0, 2];
        let expected_hit = [false, false, true, false, false, true, false, true];
        let mut hits = Vec::new();
        for n in 1..=seq.len() {
            let t = trace(
                seq[..n]
                    .iter()
                    .enumerate()
                    .map(|(i, &blk)| AccessRecord::get(i as u64, "o", blk * 100, 10))
                    .collect(),
            );
            let r = simulate(&t, &CacheConfig::new(200, 100).unwrap()).unwrap();
            hits.push(r.hits);
        }
        let got: Vec<bool> = std::iter::once(hits[0] == 1)
            .chain(hits.windows(2).map(|w| w[1] > w[0]))
            .collect();
        assert_eq!(got, expected_hit);
        assert_eq!(hits[7], 3);
    }

    #[test]
    fn multi_block_requests() {
        // One request over blocks 0..=2; then block 1 alone; then 0..=2 again
        // with capacity 1 so only block 2 (most recent) would be resident.
        let t = trace(vec![
            AccessRecord::get(0, "o", 0, 300),
            AccessRecord::get(1, "o", 150, 10),
        ]);
        let r = simulate(&t, &CacheConfig::new(300, 100).unwrap()).unwrap();
        assert_eq!((r.misses, r.hits, r.origin_requests, r.origin_bytes), (3, 1, 1, 300));
    }

    #[test]
    fn fetch_modes_differ_on_gaps() {
        // Block 1 cached, then a read over 0..=2 misses 0 and 2 around it.
        let t = trace(vec![
            AccessRecord::get(0, "o", 100, 10),
            AccessRecord::get(1, "o", 0, 300),
        ]);
        let base = CacheConfig::new(1_000, 100).unwrap();
        let span = simulate(&t, &base).unwrap();
        assert_eq!((span.misses, span.hits), (3, 1));
        assert_eq!((span.origin_requests, span.origin_bytes), (2, 400));
        let runs = simulate(&t, &base.with_fetch(FetchMode::PerRun)).unwrap();
        assert_eq!((runs.misses, runs.hits), (3, 1));
        assert_eq!((runs.origin_requests, runs.origin_bytes), (3, 300));
    }

    #[test]
    fn puts_are_ignored() {
        let mut put = AccessRecord::get(0, "a", 0, 10);
        put.kind = RequestKind::Put;
        let t = trace(vec![put, AccessRecord::get(1, "a", 0, 10)]);
        let r = simulate(&t, &CacheConfig::new(MB, MB).unwrap()).unwrap();
        assert_eq!((r.request_count, r.misses), (1, 1));
    }

    #[test]
    fn curve_endpoints() {
        let t = trace(
            (0..20)
                .map(|i| AccessRecord::get(i, format!("o{}", i % 4), 0, 10))
                .collect(),
        );
        let cfg = CacheConfig::new(0, 100).unwrap();
        let curve = miss_ratio_curve(&t, &cfg, &[0, 400]).unwrap();
        assert_eq!(curve[0], (0, 0.0));
        // Only the four compulsory misses remain.
        assert_eq!(curve[1], (400, 16.0 / 20.0));
        assert_eq!(
            miss_ratio_curve(&t, &cfg, &[400, 0]),
            Err(CacheError::UnsortedCapacities)
        );
    }

    #[test]
    fn pricing_origin() {
        let s3 = builtin_pricebook("s3-standard").unwrap();
        let mut r = simulate(
            &trace(vec![AccessRecord::get(0, "a", 0, KB), AccessRecord::get(1, "a", 0, KB)]),
            &CacheConfig::new(MB, MB).unwrap(),
        )
        .unwrap();
        let hot = builtin_pricebook("azure-gpv2-hot").unwrap();
        assert_eq!(price_origin(&r, &hot).unwrap(), NanoUsd(500));
        r.origin_requests = 1_000;
        assert_eq!(price_origin(&r, &s3).unwrap().usd_string(), "0.0004");
        r.origin_requests = 0;
        r.origin_bytes = 0;
        assert_eq!(price_origin(&r, &s3).unwrap(), NanoUsd(0));
    }

    #[test]
    fn report_json_field_names() {
        let r = simulate(
            &trace(vec![AccessRecord::get(0, "a", 0, KB)]),
            &CacheConfig::new(MB, MB).unwrap(),
        )
        .unwrap();
        let v = serde_json::to_value(r).unwrap();
        for key in [
            "request_count",
            "hits",
            "misses",
            "origin_requests",
            "origin_bytes",
            "requested_bytes",
            "read_amplification",
            "hit_ratio",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }
}

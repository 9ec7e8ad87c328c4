use std::collections::HashSet;

use proptest::prelude::*;

use cloudcost::cachesim::{miss_ratio_curve, simulate, CacheConfig, FetchMode};
use cloudcost::tracemodel::{AccessRecord, Provenance, Trace};

const BLOCK: u64 = 100;

fn trace() -> impl Strategy<Value = Trace> {
    proptest::collection::vec((0u8..4, 0u64..2000, 1u64..450), 1..150).prop_map(|rows| {
        let records = rows
            .into_iter()
            .enumerate()
            .map(|(i, (obj, off, len))| AccessRecord::get(i as u64, format!("o{obj}"), off, len))
            .collect();
        Trace::new(records, Provenance::Ingested).unwrap()
    })
}

fn fetch() -> impl Strategy<Value = FetchMode> {
    prop_oneof![Just(FetchMode::Span), Just(FetchMode::PerRun)]
}

/// Hit/miss sequence of an LRU cache computed by brute force over a
/// recency list.
fn reference_lru(t: &Trace, capacity: usize) -> Vec<bool> {
    let mut stack: Vec<(String, u64)> = Vec::new();
    let mut out = Vec::new();
    for r in t.gets() {
        for b in r.off / BLOCK..=(r.off + r.len - 1) / BLOCK {
            let key = (r.obj.clone(), b);
            let hit = match stack.iter().position(|k| *k == key) {
                Some(i) => {
                    stack.remove(i);
                    true
                }
                None => false,
            };
            stack.push(key);
            if stack.len() > capacity {
                stack.remove(0);
            }
            out.push(hit);
        }
    }
    out
}

proptest! {
    #[test]
    fn hits_match_reference(t in trace(), cap in 0usize..40, fetch in fetch()) {
        let r = simulate(&t, &CacheConfig::new(cap as u64 * BLOCK, BLOCK).unwrap().with_fetch(fetch)).unwrap();
        let reference = reference_lru(&t, cap);
        prop_assert_eq!(r.hits, reference.iter().filter(|h| **h).count() as u64);
        prop_assert_eq!(r.misses, reference.iter().filter(|h| !**h).count() as u64);
    }

    #[test]
    fn hit_sets_nest(t in trace(), small in 0usize..30, extra in 0usize..30) {
        let a = reference_lru(&t, small);
        let b = reference_lru(&t, small + extra);
        prop_assert!(a.iter().zip(&b).all(|(x, y)| !x || *y));
    }

    #[test]
    fn cache_never_adds_requests(t in trace(), cap in 0u64..40) {
        let none = simulate(&t, &CacheConfig::new(0, BLOCK).unwrap()).unwrap();
        let some = simulate(&t, &CacheConfig::new(cap * BLOCK, BLOCK).unwrap()).unwrap();
        prop_assert_eq!(none.origin_requests, t.gets().count() as u64);
        prop_assert!(some.origin_requests <= none.origin_requests);
        prop_assert!(some.origin_bytes <= none.origin_bytes);
    }

    #[test]
    fn unbounded_cache_fetches_once(t in trace()) {
        let distinct: HashSet<(String, u64)> = t
            .gets()
            .flat_map(|r| (r.off / BLOCK..=(r.off + r.len - 1) / BLOCK).map(move |b| (r.obj.clone(), b)))
            .collect();
        let cfg = CacheConfig::new(u64::MAX, BLOCK).unwrap().with_fetch(FetchMode::PerRun);
        let r = simulate(&t, &cfg).unwrap();
        prop_assert_eq!(r.misses, distinct.len() as u64);
        prop_assert_eq!(r.origin_bytes, distinct.len() as u64 * BLOCK);
    }

    #[test]
    fn curve_matches_single_runs(t in trace()) {
        let template = CacheConfig::new(0, BLOCK).unwrap();
        let caps = [0, 5 * BLOCK, 20 * BLOCK, 80 * BLOCK];
        let curve = miss_ratio_curve(&t, &template, &caps).unwrap();
        let mut last = -1.0;
        for (cap, ratio) in curve {
            let single = simulate(&t, &template.with_capacity(cap)).unwrap();
            prop_assert_eq!(ratio, single.hit_ratio);
            prop_assert!(ratio >= last);
            last = ratio;
        }
    }
}

proptest! {
    /// Each request reads its own object once, so every touched block is cold
    /// and origin bytes equal block coverage exactly.
    #[test]
    fn cold_unique_reads_cover_blocks(reads in proptest::collection::vec((0u64..1000, 1u64..700), 1..60), cap in 0u64..20) {
        let records = reads.iter().enumerate()
            .map(|(i, &(off, len))| AccessRecord::get(i as u64, format!("u{i}"), off, len))
            .collect();
        let t = Trace::new(records, Provenance::Ingested).unwrap();
        let r = simulate(&t, &CacheConfig::new(cap * BLOCK, BLOCK).unwrap()).unwrap();
        let coverage: u64 = reads.iter()
            .map(|&(off, len)| ((off + len - 1) / BLOCK - off / BLOCK + 1) * BLOCK)
            .sum();
        prop_assert_eq!(r.origin_bytes, coverage);
        prop_assert_eq!(r.origin_requests, reads.len() as u64);
        prop_assert_eq!(r.hits, 0);
    }
}

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Trace, TraceError};

/// Empirical CDF of get-request lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeCdf {
    points: Vec<(u64, f64)>,
}

impl SizeCdf {
    /// Builds a CDF from explicit sample points, checking that sizes strictly
    /// increase, fractions do not decrease and the last fraction is 1.0.
    pub fn from_points(points: Vec<(u64, f64)>) -> Result<Self, TraceError> {
        let bad = |m: &str| TraceError::Synthesis(format!("invalid cdf: {m}"));
        let Some(&(_, last)) = points.last() else {
            return Err(bad("no points"));
        };
        if last != 1.0 {
            return Err(bad("final fraction must be 1.0"));
        }
        for w in points.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(bad("sizes must strictly increase"));
            }
            if w[0].1 > w[1].1 {
                return Err(bad("fractions must not decrease"));
            }
        }
        if points.iter().any(|&(_, f)| !(f > 0.0 && f <= 1.0)) {
            return Err(bad("fractions must lie in (0, 1]"));
        }
        Ok(SizeCdf { points })
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }

    /// Fraction of samples with size <= `size`.
    pub fn at(&self, size: u64) -> f64 {
        match self.points.partition_point(|&(s, _)| s <= size) {
            0 => 0.0,
            i => self.points[i - 1].1,
        }
    }
}

pub fn size_cdf(trace: &Trace) -> Result<SizeCdf, TraceError> {
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for r in trace.gets() {
        *counts.entry(r.len).or_default() += 1;
    }
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Err(TraceError::NoReads);
    }
    let mut running = 0u64;
    let points = counts
        .into_iter()
        .map(|(size, n)| {
            running += n;
            // running == total on the last point, so the final fraction is exactly 1.0
            (size, running as f64 / total as f64)
        })
        .collect();
    Ok(SizeCdf { points })
}

/// Smallest sampled size whose cumulative fraction reaches `p`.
pub fn quantile(cdf: &SizeCdf, p: f64) -> Result<u64, TraceError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(TraceError::QuantileRange(p));
    }
    let idx = cdf.points.partition_point(|&(_, f)| f < p);
    // The last fraction is 1.0 >= p, so idx is always in range.
    Ok(cdf.points[idx.min(cdf.points.len() - 1)].0)
}

pub const TWO_HOURS_MS: u64 = 2 * 60 * 60 * 1000;

/// Re-access intervals of get requests at block granularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuseStats {
    /// Sorted ascending.
    pub intervals_ms: Vec<u64>,
    /// Absent when there are no re-accesses.
    pub median_ms: Option<f64>,
    pub threshold_ms: u64,
    /// Share of intervals strictly below `threshold_ms`; absent with no intervals.
    pub fraction_under_threshold: Option<f64>,
}

impl ReuseStats {
    fn from_intervals(mut intervals_ms: Vec<u64>, threshold_ms: u64) -> Self {
        intervals_ms.sort_unstable();
        let n = intervals_ms.len();
        let median_ms = match n {
            0 => None,
            _ if n % 2 == 1 => Some(intervals_ms[n / 2] as f64),
            _ => Some((intervals_ms[n / 2 - 1] as f64 + intervals_ms[n / 2] as f64) / 2.0),
        };
        let mut stats = ReuseStats {
            intervals_ms,
            median_ms,
            threshold_ms,
            fraction_under_threshold: None,
        };
        stats.fraction_under_threshold = stats.fraction_under(threshold_ms);
        stats
    }

    pub fn fraction_under(&self, threshold_ms: u64) -> Option<f64> {
        if self.intervals_ms.is_empty() {
            return None;
        }
        let below = self.intervals_ms.partition_point(|&i| i < threshold_ms);
        Some(below as f64 / self.intervals_ms.len() as f64)
    }
}

fn block_of(obj: &str, off: u64, granularity: u64) -> (&str, u64) {
    (obj, off / granularity)
}

/// Intervals between consecutive gets of the same `(object, offset / granularity)`
/// block. The fraction-under-threshold uses two hours.
pub fn reuse_intervals(trace: &Trace, granularity: u64) -> Result<ReuseStats, TraceError> {
    if granularity == 0 {
        return Err(TraceError::ZeroGranularity);
    }
    let mut last_seen: HashMap<(&str, u64), u64> = HashMap::new();
    let mut intervals = Vec::new();
    for r in trace.gets() {
        let block = block_of(&r.obj, r.off, granularity);
        if let Some(prev) = last_seen.insert(block, r.ts_ms) {
            intervals.push(r.ts_ms - prev);
        }
    }
    Ok(ReuseStats::from_intervals(intervals, TWO_HOURS_MS))
}

/// Share of get requests that land on the `k` most-requested blocks.
pub fn popularity_share(trace: &Trace, granularity: u64, k: usize) -> Result<f64, TraceError> {
    if granularity == 0 {
        return Err(TraceError::ZeroGranularity);
    }
    if k == 0 {
        return Err(TraceError::ZeroK);
    }
    let mut counts: HashMap<(&str, u64), u64> = HashMap::new();
    for r in trace.gets() {
        *counts.entry(block_of(&r.obj, r.off, granularity)).or_default() += 1;
    }
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Ok(0.0);
    }
    let mut sorted: Vec<u64> = counts.into_values().collect();
    let k = k.min(sorted.len());
    if k < sorted.len() {
        sorted.select_nth_unstable_by(k, |a, b| b.cmp(a));
    }
    let top: u64 = sorted[..k].iter().sum();
    Ok(top as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracemodel::{AccessRecord, Provenance};
    use crate::units::{KB, MB};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trace_of(records: Vec<AccessRecord>) -> Trace {
        Trace::new(records, Provenance::Ingested).unwrap()
    }

    fn gets_with_lengths(lengths: &[u64]) -> Trace {
        trace_of(
            lengths
                .iter()
                .enumerate()
                .map(|(i, &l)| AccessRecord::get(i as u64, format!("o{i}"), 0, l))
                .collect(),
        )
    }

    #[test]
    fn cdf_direct_counting() {
        let mut lengths = vec![KB; 5];
        lengths.extend(vec![100 * KB; 5]);
        let cdf = size_cdf(&gets_with_lengths(&lengths)).unwrap();
        assert_eq!(cdf.points(), &[(KB, 0.5), (100 * KB, 1.0)]);
        assert_eq!(cdf.at(KB), 0.5);
        assert_eq!(cdf.at(100 * KB), 1.0);
        assert_eq!(cdf.at(KB - 1), 0.0);
    }

    #[test]
    fn cdf_single_record() {
        let cdf = size_cdf(&gets_with_lengths(&[10 * KB])).unwrap();
        assert_eq!(cdf.at(10 * KB), 1.0);
    }

    #[test]
    fn cdf_needs_gets() {
        let t = trace_of(vec![AccessRecord {
            ts_ms: 0,
            obj: "a".into(),
            off: 0,
            len: 10,
            kind: crate::pricing::RequestKind::Put,
        }]);
        assert_eq!(size_cdf(&t), Err(TraceError::NoReads));
    }

    #[test]
    fn quantile_step_semantics() {
        let cdf = SizeCdf::from_points(vec![(10 * KB, 0.5), (MB, 1.0)]).unwrap();
        assert_eq!(quantile(&cdf, 0.5).unwrap(), 10 * KB);
        assert_eq!(quantile(&cdf, 0.51).unwrap(), MB);
        assert_eq!(quantile(&cdf, 1.0).unwrap(), MB);
        assert_eq!(quantile(&cdf, 0.0), Err(TraceError::QuantileRange(0.0)));
        assert!(quantile(&cdf, 1.5).is_err());
        assert!(quantile(&cdf, f64::NAN).is_err());
    }

    #[test]
    fn quantile_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let lengths: Vec<u64> = (0..1000).map(|_| rng.random_range(1..5_000)).collect();
        let cdf = size_cdf(&gets_with_lengths(&lengths)).unwrap();
        let mut sorted = lengths.clone();
        sorted.sort_unstable();
        for p in [0.1, 0.5, 0.9, 0.99, 1.0] {
            // Nearest-rank percentile: the ceil(p * n)-th smallest value.
            let rank = (p * sorted.len() as f64).ceil() as usize;
            assert_eq!(quantile(&cdf, p).unwrap(), sorted[rank - 1], "p={p}");
        }
    }

    #[test]
    fn from_points_validation() {
        assert!(SizeCdf::from_points(vec![]).is_err());
        assert!(SizeCdf::from_points(vec![(10, 0.5)]).is_err());
        assert!(SizeCdf::from_points(vec![(10, 0.5), (10, 1.0)]).is_err());
        assert!(SizeCdf::from_points(vec![(10, 0.7), (20, 0.5), (30, 1.0)]).is_err());
    }

    #[test]
    fn reuse_two_hours() {
        let t = trace_of(vec![
            AccessRecord::get(0, "a", 0, 10),
            AccessRecord::get(7_200_000, "a", 0, 10),
        ]);
        let s = reuse_intervals(&t, MB).unwrap();
        assert_eq!(s.intervals_ms, vec![7_200_000]);
        assert_eq!(s.median_ms, Some(7_200_000.0));
        assert_eq!(s.fraction_under_threshold, Some(0.0));
    }

    #[test]
    fn reuse_all_unique() {
        let t = trace_of(vec![
            AccessRecord::get(0, "a", 0, 10),
            AccessRecord::get(5, "b", 0, 10),
            AccessRecord::get(9, "a", MB, 10),
        ]);
        let s = reuse_intervals(&t, MB).unwrap();
        assert!(s.intervals_ms.is_empty());
        assert_eq!(s.median_ms, None);
        assert_eq!(s.fraction_under_threshold, None);
    }

    #[test]
    fn reuse_handmade_six() {
        // Blocks at 1 MB granularity:
        //   a/0: t=0, t=100, t=1000   -> intervals 100, 900
        //   a/1: t=50 (off 1.5 MB), t=8_000_000 -> interval 7_999_950
        //   b/0: t=300                -> none
        let t = trace_of(vec![
            AccessRecord::get(0, "a", 0, 10),
            AccessRecord::get(50, "a", 1_500_000, 10),
            AccessRecord::get(100, "a", 999_999, 10),
            AccessRecord::get(300, "b", 0, 10),
            AccessRecord::get(1000, "a", 10, 10),
            AccessRecord::get(8_000_000, "a", 1_000_000, 10),
        ]);
        let s = reuse_intervals(&t, MB).unwrap();
        assert_eq!(s.intervals_ms, vec![100, 900, 7_999_950]);
        assert_eq!(s.median_ms, Some(900.0));
        assert_eq!(s.fraction_under_threshold, Some(2.0 / 3.0));
        assert_eq!(reuse_intervals(&t, 0), Err(TraceError::ZeroGranularity));
    }

    #[test]
    fn even_median_is_midpoint() {
        let s = ReuseStats::from_intervals(vec![40, 10, 20, 30], TWO_HOURS_MS);
        assert_eq!(s.median_ms, Some(25.0));
    }

    #[test]
    fn popularity_examples() {
        let one = trace_of((0..10).map(|i| AccessRecord::get(i, "a", 0, 10)).collect());
        assert_eq!(popularity_share(&one, MB, 1).unwrap(), 1.0);
        let uniform = trace_of(
            (0..10)
                .map(|i| AccessRecord::get(i, format!("o{i}"), 0, 10))
                .collect(),
        );
        assert_eq!(popularity_share(&uniform, MB, 5).unwrap(), 0.5);
        assert_eq!(popularity_share(&uniform, MB, 0), Err(TraceError::ZeroK));
    }

    fn arb_trace() -> impl Strategy<Value = Trace> {
        proptest::collection::vec((0u64..1000, 0u64..6, 0u64..4_000_000, 1u64..3_000_000), 1..80)
            .prop_map(|rows| {
                trace_of(
                    rows.into_iter()
                        .map(|(ts, o, off, len)| AccessRecord::get(ts, format!("o{o}"), off, len))
                        .collect(),
                )
            })
    }

    proptest! {
        #[test]
        fn cdf_is_valid(t in arb_trace()) {
            let cdf = size_cdf(&t).unwrap();
            prop_assert!(SizeCdf::from_points(cdf.points().to_vec()).is_ok());
            prop_assert_eq!(cdf.points().last().unwrap().1, 1.0);
        }

        #[test]
        fn quantile_consistent(t in arb_trace(), p in 0.0001f64..=1.0) {
            let cdf = size_cdf(&t).unwrap();
            let q = quantile(&cdf, p).unwrap();
            prop_assert!(cdf.at(q) >= p);
        }

        #[test]
        fn popularity_monotone_in_k(t in arb_trace(), k in 1usize..50) {
            let a = popularity_share(&t, MB, k).unwrap();
            let b = popularity_share(&t, MB, k + 1).unwrap();
            prop_assert!(a <= b);
            prop_assert_eq!(popularity_share(&t, MB, 10_000).unwrap(), 1.0);
        }

        #[test]
        fn reuse_median_in_list(t in arb_trace()) {
            let s = reuse_intervals(&t, MB).unwrap();
            match s.median_ms {
                None => prop_assert!(s.intervals_ms.is_empty()),
                Some(m) => {
                    let below = s.intervals_ms.iter().filter(|&&i| (i as f64) <= m).count();
                    prop_assert!(below * 2 >= s.intervals_ms.len());
                }
            }
        }
    }
}

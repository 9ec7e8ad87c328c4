//! Browser bindings for the cloudcost simulator.
//!
//! Each exported function takes plain numbers, runs the simulation in the
//! page and returns a JSON string for the page script to plot. The `*_json`
//! functions hold the logic so they can be tested natively.

use serde_json::json;
use wasm_bindgen::prelude::*;

use cloudcost::cachesim::{simulate, CacheConfig};
use cloudcost::joinplan::{fleet_aggregate, fleet_api_calls, FleetParams};
use cloudcost::pricing::{builtin_pricebook, builtin_pricebooks, cost_of, RequestKind, RequestTally};
use cloudcost::tracemodel::{self, quantile, synthesize_trace, SynthSpec};
use cloudcost::units::{NanoUsd, Ppm, KB};

/// Most points a curve sends back to the page.
const MAX_POINTS: usize = 400;

fn thin<T: Copy>(points: &[T]) -> Vec<T> {
    let step = points.len().div_ceil(MAX_POINTS).max(1);
    let mut out: Vec<T> = points.iter().step_by(step).copied().collect();
    if let Some(&last) = points.last() {
        if !(points.len() - 1).is_multiple_of(step) {
            out.push(last);
        }
    }
    out
}

fn spec(records: usize, p50: f64, p90: f64) -> SynthSpec {
    SynthSpec {
        records,
        universe: 100_000,
        ..SynthSpec::default()
    }
    .with_quantiles((p50 * KB as f64) as u64, (p90 * KB as f64) as u64)
}

/// Size CDF of a synthesized trace with the given P50/P90 (in KB).
pub fn size_cdf_json(records: usize, p50_kb: f64, p90_kb: f64, seed: u64) -> Result<String, String> {
    let trace = synthesize_trace(&spec(records, p50_kb, p90_kb), seed).map_err(|e| e.to_string())?;
    let cdf = tracemodel::size_cdf(&trace).map_err(|e| e.to_string())?;
    let q = |p| quantile(&cdf, p).map_err(|e| e.to_string());
    Ok(json!({
        "points": thin(cdf.points()),
        "p50": q(0.5)?,
        "p90": q(0.9)?,
        "p99": q(0.99)?,
    })
    .to_string())
}

/// Hit ratio and origin GET cost of an LRU block cache at doubling capacities.
/// Runs sequentially; wasm32 has no threads for the parallel curve.
pub fn cache_curve_json(
    records: usize,
    seed: u64,
    block_kb: u64,
    max_capacity_mb: u64,
    book: &str,
) -> Result<String, String> {
    let book = builtin_pricebook(book).map_err(|e| e.to_string())?;
    let trace = synthesize_trace(&spec(records, 10.0, 1000.0), seed).map_err(|e| e.to_string())?;
    let block = block_kb.max(1) * KB;
    let template = CacheConfig::new(0, block).map_err(|e| e.to_string())?;
    let mut caps = vec![0];
    let mut mb = 1;
    while mb <= max_capacity_mb.max(1) {
        caps.push(mb * 1_000_000);
        mb *= 2;
    }
    let mut points = Vec::new();
    for cap in caps {
        let r = simulate(&trace, &template.with_capacity(cap)).map_err(|e| e.to_string())?;
        let cost = cost_of(&book, &r.origin_tally()).map_err(|e| e.to_string())?;
        points.push(json!({
            "capacity_bytes": cap,
            "hit_ratio": r.hit_ratio,
            "origin_requests": r.origin_requests,
            "cost_usd": cost.usd_string(),
        }));
    }
    Ok(json!({ "requests": trace.gets().count(), "points": points }).to_string())
}

/// Daily broadcast-join build-side GET cost under every built-in price book.
pub fn fleet_cost_json(
    queries_per_day: u64,
    broadcast_fraction: f64,
    workers: u64,
    build_mb: u64,
    request_kb: u64,
) -> Result<String, String> {
    let fraction = Ppm::from_f64(broadcast_fraction).ok_or("fraction must be in [0, 1]")?;
    let p = FleetParams {
        queries_per_day,
        broadcast_fraction: fraction,
        workers,
        build_bytes: build_mb.checked_mul(1_000_000).ok_or("build size too large")?,
    };
    p.validate().map_err(|e| e.to_string())?;
    let request_bytes = request_kb.max(1) * KB;
    let broadcast = fleet_aggregate(&p).map_err(|e| e.to_string())?;
    let shuffle = fleet_aggregate(&FleetParams { workers: 1, ..p }).map_err(|e| e.to_string())?;
    let calls = |bytes| fleet_api_calls(bytes, request_bytes).map_err(|e| e.to_string());
    let (b_calls, s_calls) = (calls(broadcast)?, calls(shuffle)?);
    let price = |book: &cloudcost::pricing::PriceBook, n| -> Result<NanoUsd, String> {
        cost_of(book, &RequestTally::single(RequestKind::Get, n, 0)).map_err(|e| e.to_string())
    };
    let mut books = Vec::new();
    for book in builtin_pricebooks() {
        books.push(json!({
            "book": book.id(),
            "broadcast_usd": price(&book, b_calls)?.display_usd(),
            "shuffle_usd": price(&book, s_calls)?.display_usd(),
        }));
    }
    Ok(json!({
        "broadcast_bytes": broadcast,
        "broadcast_requests": b_calls,
        "shuffle_bytes": shuffle,
        "shuffle_requests": s_calls,
        "books": books,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn size_cdf(records: u32, p50_kb: f64, p90_kb: f64, seed: u32) -> Result<String, JsError> {
    size_cdf_json(records as usize, p50_kb, p90_kb, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn cache_curve(records: u32, seed: u32, block_kb: u32, max_capacity_mb: u32, book: &str) -> Result<String, JsError> {
    cache_curve_json(records as usize, seed.into(), block_kb.into(), max_capacity_mb.into(), book)
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fleet_cost(
    queries_per_day: f64,
    broadcast_fraction: f64,
    workers: u32,
    build_mb: u32,
    request_kb: u32,
) -> Result<String, JsError> {
    fleet_cost_json(
        queries_per_day.max(0.0) as u64,
        broadcast_fraction,
        workers.into(),
        build_mb.into(),
        request_kb.into(),
    )
    .map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: String) -> Value {
        serde_json::from_str(&s).unwrap()
    }

    #[test]
    fn cdf_hits_quantiles() {
        let v = parse(size_cdf_json(20_000, 10.0, 1000.0, 1).unwrap());
        let p50 = v["p50"].as_u64().unwrap();
        assert!((9_000..=11_000).contains(&p50), "{p50}");
        assert!(v["points"].as_array().unwrap().len() <= MAX_POINTS + 1);
    }

    #[test]
    fn cache_curve_is_monotone() {
        let v = parse(cache_curve_json(3000, 2, 1000, 256, "s3-standard").unwrap());
        let ratios: Vec<f64> = v["points"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| p["hit_ratio"].as_f64().unwrap())
            .collect();
        assert_eq!(ratios.len(), 10);
        assert!(ratios.windows(2).all(|w| w[0] <= w[1]));
        assert!(cache_curve_json(10, 1, 1000, 4, "nope").is_err());
    }

    #[test]
    fn large_fleet_cost() {
        let v = parse(fleet_cost_json(500_000, 0.2, 200, 100, 10).unwrap());
        assert_eq!(v["broadcast_bytes"], 2_000_000_000_000_000u64);
        let s3 = v["books"].as_array().unwrap().iter().find(|b| b["book"] == "s3-standard").unwrap();
        assert_eq!(s3["broadcast_usd"], "$80,000");
        assert_eq!(s3["shuffle_usd"], "$400");
        assert!(fleet_cost_json(1, 2.0, 1, 1, 1).is_err());
    }

    #[test]
    fn thinning_keeps_ends() {
        let pts: Vec<u32> = (0..1000).collect();
        let t = thin(&pts);
        assert!(t.len() <= MAX_POINTS + 1);
        assert_eq!(t[0], 0);
        assert_eq!(*t.last().unwrap(), 999);
    }
}

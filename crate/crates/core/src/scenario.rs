//! Scenario files and end-to-end runs.
//!
//! A scenario names a price book, an optional workload (trace file or
//! synthesis parameters) and any of the `scan`, `fleet_scan`, `join` and
//! `cache` sections. Each section is executed by its module, priced with
//! the scenario's book, and collected into a [`CostReport`].

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::cachesim::{self, CacheConfig, FetchMode, DEFAULT_BLOCK_BYTES};
use crate::columnar::{
    self, coalesce_requests, fleet_scan_projection, ColumnData, FleetScanParams, LayoutSpec,
    Query, ScanPlan, TableLayout, DEFAULT_PAGE_BYTES,
};
use crate::joinplan::{
    self, fleet_aggregate, fleet_api_calls, plan_join, waste_fraction, FleetParams, JoinSpec,
    JoinStrategy, DEFAULT_BROADCAST_THRESHOLD,
};
use crate::pricing::{builtin_pricebook, PriceBook, PricingError, RequestKind, RequestTally};
use crate::report::{ComparisonBlock, CostReport, PricedLine, ReportError, SectionCost};
use crate::tracemodel::{self, parse_trace, synthesize_trace, SynthSpec, Trace};
use crate::units::{parse_bytes, Ppm};

pub const DAYS_PER_YEAR: u64 = 365;

/// Whether an error is the caller's fault (bad input) or arose while running.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Runtime,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("missing field `{0}`")]
    Missing(String),
    #[error("unknown price book '{0}'")]
    UnknownBook(String),
    #[error("`{key}`: file not found: {path}")]
    MissingFile { key: String, path: String },
    #[error("scenario has none of the sections `scan`, `fleet_scan`, `join`, `cache`")]
    NoSections,
    #[error("section `{section}`: {message}")]
    Section {
        section: &'static str,
        class: ErrorClass,
        message: String,
    },
}

impl ScenarioError {
    pub fn class(&self) -> ErrorClass {
        match self {
            ScenarioError::Section { class, .. } => *class,
            _ => ErrorClass::Validation,
        }
    }

    fn validation(section: &'static str, e: impl std::fmt::Display) -> Self {
        ScenarioError::Section {
            section,
            class: ErrorClass::Validation,
            message: e.to_string(),
        }
    }

    fn runtime(section: &'static str, e: impl std::fmt::Display) -> Self {
        ScenarioError::Section {
            section,
            class: ErrorClass::Runtime,
            message: e.to_string(),
        }
    }

    fn pricing(section: &'static str, e: PricingError) -> Self {
        match e {
            PricingError::Overflow => Self::runtime(section, e),
            other => Self::validation(section, other),
        }
    }
}

/// Byte quantity written either as an integer or a string with a decimal
/// unit suffix (`"10KB"`, `"2PB"`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ByteSize(pub u64);

impl<'de> Deserialize<'de> for ByteSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(ByteSize(v)),
            Raw::Text(t) => parse_bytes(&t).map(ByteSize).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    price_book: Option<String>,
    price_book_file: Option<PathBuf>,
    #[serde(default)]
    seed: u64,
    workload: Option<RawWorkload>,
    scan: Option<RawScan>,
    fleet_scan: Option<RawFleetScan>,
    join: Option<RawJoin>,
    cache: Option<RawCache>,
    #[serde(default)]
    report: ReportOptions,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkload {
    trace_file: Option<PathBuf>,
    synth: Option<SynthSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScan {
    layout: Option<LayoutSpec>,
    layout_file: Option<PathBuf>,
    query: Option<Query>,
    query_file: Option<PathBuf>,
    #[serde(default)]
    coalesce_gap: Option<ByteSize>,
    #[serde(default)]
    value_min: i64,
    #[serde(default = "default_value_max")]
    value_max: i64,
}

fn default_value_max() -> i64 {
    100
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFleetScan {
    daily_bytes: ByteSize,
    avg_request_bytes: ByteSize,
    byte_inflation: Ppm,
    #[serde(default = "default_page")]
    page_bytes: ByteSize,
    #[serde(default = "yes")]
    pushdown: bool,
}

fn default_page() -> ByteSize {
    ByteSize(DEFAULT_PAGE_BYTES)
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJoin {
    queries_per_day: u64,
    broadcast_fraction: Ppm,
    workers: u64,
    build_bytes: ByteSize,
    #[serde(default = "zero_bytes")]
    probe_bytes: ByteSize,
    #[serde(default = "default_strategy")]
    strategy: JoinStrategy,
    request_bytes: ByteSize,
    #[serde(default = "default_threshold")]
    broadcast_threshold: ByteSize,
}

fn zero_bytes() -> ByteSize {
    ByteSize(0)
}

fn default_strategy() -> JoinStrategy {
    JoinStrategy::Broadcast
}

fn default_threshold() -> ByteSize {
    ByteSize(DEFAULT_BROADCAST_THRESHOLD)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCache {
    capacity_bytes: ByteSize,
    #[serde(default = "default_block")]
    block_bytes: ByteSize,
    #[serde(default)]
    fetch: FetchMode,
}

fn default_block() -> ByteSize {
    ByteSize(DEFAULT_BLOCK_BYTES)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportOptions {
    /// Extrapolate the grand total over a year of identical days.
    #[serde(default)]
    pub annual: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Workload {
    TraceFile(PathBuf),
    Synth(SynthSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSection {
    pub layout: TableLayout,
    pub query: Query,
    pub coalesce_gap: Option<u64>,
    pub value_min: i64,
    pub value_max: i64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FleetScanSection {
    pub params: FleetScanParams,
    pub pushdown: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JoinSection {
    pub fleet: FleetParams,
    pub spec: JoinSpec,
    pub request_bytes: u64,
}

/// A validated scenario with every file reference resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub book: PriceBook,
    pub seed: u64,
    pub workload: Option<Workload>,
    pub scan: Option<ScanSection>,
    pub fleet_scan: Option<FleetScanSection>,
    pub join: Option<JoinSection>,
    pub cache: Option<CacheConfig>,
    pub report: ReportOptions,
    /// The scenario document as written, echoed into reports.
    pub echo: serde_json::Value,
}

fn read_file(path: &Path) -> Result<String, ScenarioError> {
    fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn resolve(base: &Path, key: &str, path: &Path) -> Result<PathBuf, ScenarioError> {
    let full = if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    };
    if !full.is_file() {
        return Err(ScenarioError::MissingFile {
            key: key.to_string(),
            path: full.display().to_string(),
        });
    }
    Ok(full)
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, ScenarioError> {
    serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = read_file(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_scenario(&text, base, &path.display().to_string())
}

/// Parses scenario text; relative file references resolve against `base`.
pub fn parse_scenario(text: &str, base: &Path, origin: &str) -> Result<Scenario, ScenarioError> {
    let origin_path = Path::new(origin);
    let echo: serde_json::Value = parse_json(origin_path, text)?;
    let raw: RawScenario = parse_json(origin_path, text)?;

    let book = match (&raw.price_book, &raw.price_book_file) {
        (Some(_), Some(_)) => {
            return Err(ScenarioError::Parse {
                path: origin.to_string(),
                message: "give only one of `price_book` and `price_book_file`".into(),
            })
        }
        (Some(id), None) => {
            builtin_pricebook(id).map_err(|_| ScenarioError::UnknownBook(id.clone()))?
        }
        (None, Some(file)) => {
            let full = resolve(base, "price_book_file", file)?;
            parse_json(&full, &read_file(&full)?)?
        }
        (None, None) => return Err(ScenarioError::Missing("price_book".into())),
    };

    let workload = match raw.workload {
        None => None,
        Some(RawWorkload {
            trace_file: Some(_),
            synth: Some(_),
        }) => {
            return Err(ScenarioError::validation(
                "workload",
                "give only one of `trace_file` and `synth`",
            ))
        }
        Some(RawWorkload {
            trace_file: Some(f),
            ..
        }) => Some(Workload::TraceFile(resolve(base, "workload.trace_file", &f)?)),
        Some(RawWorkload { synth: Some(s), .. }) => {
            s.validate().map_err(|e| ScenarioError::validation("workload", e))?;
            Some(Workload::Synth(s))
        }
        Some(_) => return Err(ScenarioError::Missing("workload.trace_file".into())),
    };

    let scan = raw.scan.map(|s| load_scan(s, base)).transpose()?;

    let fleet_scan = raw.fleet_scan.map(|f| FleetScanSection {
        params: FleetScanParams {
            daily_bytes_pushdown: f.daily_bytes.0,
            avg_request_bytes: f.avg_request_bytes.0,
            byte_inflation: f.byte_inflation,
            page_bytes: f.page_bytes.0,
        },
        pushdown: f.pushdown,
    });

    let join = raw
        .join
        .map(|j| {
            let fleet = FleetParams {
                queries_per_day: j.queries_per_day,
                broadcast_fraction: j.broadcast_fraction,
                workers: j.workers,
                build_bytes: j.build_bytes.0,
            };
            fleet.validate().map_err(|e| ScenarioError::validation("join", e))?;
            if j.request_bytes.0 == 0 {
                return Err(ScenarioError::validation("join", "request_bytes must be > 0"));
            }
            Ok(JoinSection {
                fleet,
                spec: JoinSpec {
                    build_bytes: j.build_bytes.0,
                    probe_bytes: j.probe_bytes.0,
                    workers: j.workers,
                    strategy: j.strategy,
                    broadcast_threshold: j.broadcast_threshold.0,
                },
                request_bytes: j.request_bytes.0,
            })
        })
        .transpose()?;

    let cache = raw
        .cache
        .map(|c| {
            CacheConfig::new(c.capacity_bytes.0, c.block_bytes.0)
                .map(|cfg| cfg.with_fetch(c.fetch))
                .map_err(|e| ScenarioError::validation("cache", e))
        })
        .transpose()?;
    if cache.is_some() && workload.is_none() {
        return Err(ScenarioError::Missing("workload".into()));
    }

    if scan.is_none() && fleet_scan.is_none() && join.is_none() && cache.is_none() {
        return Err(ScenarioError::NoSections);
    }

    Ok(Scenario {
        book,
        seed: raw.seed,
        workload,
        scan,
        fleet_scan,
        join,
        cache,
        report: raw.report,
        echo,
    })
}

fn load_scan(s: RawScan, base: &Path) -> Result<ScanSection, ScenarioError> {
    let layout_spec = match (s.layout, s.layout_file) {
        (Some(l), None) => l,
        (None, Some(f)) => {
            let full = resolve(base, "scan.layout_file", &f)?;
            parse_json(&full, &read_file(&full)?)?
        }
        (Some(_), Some(_)) => {
            return Err(ScenarioError::validation(
                "scan",
                "give only one of `layout` and `layout_file`",
            ))
        }
        (None, None) => return Err(ScenarioError::Missing("scan.layout".into())),
    };
    let query = match (s.query, s.query_file) {
        (Some(q), None) => q,
        (None, Some(f)) => {
            let full = resolve(base, "scan.query_file", &f)?;
            parse_json(&full, &read_file(&full)?)?
        }
        (Some(_), Some(_)) => {
            return Err(ScenarioError::validation(
                "scan",
                "give only one of `query` and `query_file`",
            ))
        }
        (None, None) => return Err(ScenarioError::Missing("scan.query".into())),
    };
    if s.value_min > s.value_max {
        return Err(ScenarioError::validation("scan", "value_min exceeds value_max"));
    }
    let layout = layout_spec
        .build()
        .map_err(|e| ScenarioError::validation("scan", e))?;
    for name in query.select.iter().chain(query.predicates.iter().map(|p| &p.col)) {
        layout
            .column(name)
            .map_err(|e| ScenarioError::validation("scan", e))?;
    }
    if query.select.is_empty() && query.predicates.is_empty() {
        return Err(ScenarioError::validation("scan", columnar::ColumnarError::EmptyQuery));
    }
    Ok(ScanSection {
        layout,
        query,
        coalesce_gap: s.coalesce_gap.map(|g| g.0),
        value_min: s.value_min,
        value_max: s.value_max,
    })
}

/// Column values drawn uniformly from `[min, max]`, seeded per scenario.
pub fn generate_column_data(layout: &TableLayout, min: i64, max: i64, seed: u64) -> ColumnData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut data = ColumnData::new();
    for c in &layout.columns {
        let values = (0..layout.rows).map(|_| rng.random_range(min..=max)).collect();
        data.columns.insert(c.name.clone(), values);
    }
    data
}

pub fn load_workload(workload: &Workload, seed: u64) -> Result<Trace, ScenarioError> {
    match workload {
        Workload::TraceFile(path) => {
            let file = fs::File::open(path).map_err(|e| ScenarioError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            parse_trace(std::io::BufReader::new(file))
                .map_err(|e| ScenarioError::validation("workload", e))
        }
        Workload::Synth(spec) => {
            synthesize_trace(spec, seed).map_err(|e| ScenarioError::validation("workload", e))
        }
    }
}

fn gets(count: u64, bytes: u64) -> RequestTally {
    RequestTally::single(RequestKind::Get, count, bytes)
}

fn plan_summary(plan: &ScanPlan) -> serde_json::Value {
    json!({
        "requests": plan.request_count,
        "bytes": plan.total_bytes,
        "survivors": plan.survivors.len(),
    })
}

struct Run<'a> {
    book: &'a PriceBook,
    sections: Vec<SectionCost>,
    comparisons: Vec<ComparisonBlock>,
    details: serde_json::Map<String, serde_json::Value>,
}

impl Run<'_> {
    fn section(&mut self, name: &'static str, tally: RequestTally) -> Result<(), ScenarioError> {
        let s = SectionCost::price(name, self.book, tally)
            .map_err(|e| ScenarioError::pricing(name, e))?;
        self.sections.push(s);
        Ok(())
    }

    fn compare(
        &mut self,
        section: &'static str,
        name: &str,
        baseline: (&str, RequestTally),
        variant: (&str, RequestTally),
    ) -> Result<(), ScenarioError> {
        let line = |(label, tally): (&str, RequestTally)| {
            PricedLine::price(label, self.book, &tally).map_err(|e| ScenarioError::pricing(section, e))
        };
        let block = ComparisonBlock {
            name: name.to_string(),
            baseline: line(baseline)?,
            variant: line(variant)?,
        };
        self.comparisons.push(block);
        Ok(())
    }
}

/// Executes every present section in the order scan, fleet_scan, join,
/// cache. Deterministic for a given scenario.
pub fn run_scenario(s: &Scenario) -> Result<CostReport, ScenarioError> {
    let mut run = Run {
        book: &s.book,
        sections: Vec::new(),
        comparisons: Vec::new(),
        details: serde_json::Map::new(),
    };

    let trace = s
        .workload
        .as_ref()
        .map(|w| load_workload(w, s.seed))
        .transpose()?;
    if let Some(t) = &trace {
        run.details.insert("workload".into(), workload_summary(t)?);
    }

    if let Some(scan) = &s.scan {
        run_scan(&mut run, scan, s.seed)?;
    }
    if let Some(fs) = &s.fleet_scan {
        run_fleet_scan(&mut run, fs)?;
    }
    if let Some(join) = &s.join {
        run_join(&mut run, join)?;
    }
    if let (Some(cfg), Some(t)) = (&s.cache, &trace) {
        run_cache(&mut run, cfg, t)?;
    }

    let annual = s.report.annual.then_some(DAYS_PER_YEAR);
    CostReport::total(
        s.book.id(),
        s.seed,
        run.sections,
        run.comparisons,
        annual,
        serde_json::Value::Object(run.details),
        s.echo.clone(),
    )
    .map_err(|e| match e {
        ReportError::Overflow => ScenarioError::runtime("report", e),
        other => ScenarioError::validation("report", other),
    })
}

fn workload_summary(t: &Trace) -> Result<serde_json::Value, ScenarioError> {
    let records = t.len();
    let gets = t.gets().count();
    let mut out = json!({ "records": records, "gets": gets });
    if gets > 0 {
        let cdf = tracemodel::size_cdf(t).map_err(|e| ScenarioError::runtime("workload", e))?;
        let q = |p| tracemodel::quantile(&cdf, p).map_err(|e| ScenarioError::runtime("workload", e));
        out["p50_bytes"] = json!(q(0.5)?);
        out["p90_bytes"] = json!(q(0.9)?);
        let reuse = tracemodel::reuse_intervals(t, DEFAULT_BLOCK_BYTES)
            .map_err(|e| ScenarioError::runtime("workload", e))?;
        out["reuse_median_ms"] = json!(reuse.median_ms);
        out["reuse_under_2h"] = json!(reuse.fraction_under_threshold);
        out["top_10000_block_share"] = json!(tracemodel::popularity_share(t, DEFAULT_BLOCK_BYTES, 10_000)
            .map_err(|e| ScenarioError::runtime("workload", e))?);
    }
    Ok(out)
}

fn run_scan(run: &mut Run, scan: &ScanSection, seed: u64) -> Result<(), ScenarioError> {
    let data = generate_column_data(&scan.layout, scan.value_min, scan.value_max, seed);
    let plan = |pushdown| {
        let p = columnar::plan_scan(
            &scan.layout,
            &data,
            &scan.query.select,
            &scan.query.predicates,
            pushdown,
        )
        .map_err(|e| ScenarioError::validation("scan", e))?;
        Ok::<_, ScenarioError>(match scan.coalesce_gap {
            Some(gap) => coalesce_requests(&p, gap),
            None => p,
        })
    };
    let pushdown = plan(true)?;
    let full = plan(false)?;
    run.details.insert(
        "scan".into(),
        json!({
            "pushdown": plan_summary(&pushdown),
            "full_scan": plan_summary(&full),
            "coalesce_gap": scan.coalesce_gap,
            "query_pushdown": scan.query.pushdown,
        }),
    );
    let chosen = if scan.query.pushdown { &pushdown } else { &full };
    run.section("scan", chosen.tally())?;
    run.compare(
        "scan",
        "scan: full scan vs pushdown",
        ("full scan", full.tally()),
        ("pushdown", pushdown.tally()),
    )
}

fn run_fleet_scan(run: &mut Run, fs: &FleetScanSection) -> Result<(), ScenarioError> {
    let p = fleet_scan_projection(&fs.params).map_err(|e| match e {
        columnar::ColumnarError::Overflow(_) => ScenarioError::runtime("fleet_scan", e),
        other => ScenarioError::validation("fleet_scan", other),
    })?;
    run.details.insert("fleet_scan".into(), serde_json::to_value(p).expect("plain struct"));
    let pushdown = gets(p.pushdown_requests, p.pushdown_bytes);
    let full = gets(p.full_scan_requests, p.full_scan_bytes);
    run.section("fleet_scan", if fs.pushdown { pushdown.clone() } else { full.clone() })?;
    run.compare(
        "fleet_scan",
        "fleet scan per day: full scan vs pushdown",
        ("full scan", full),
        ("pushdown", pushdown),
    )
}

fn run_join(run: &mut Run, j: &JoinSection) -> Result<(), ScenarioError> {
    let join_err = |e: joinplan::JoinError| match e {
        joinplan::JoinError::Overflow(_) => ScenarioError::runtime("join", e),
        other => ScenarioError::validation("join", other),
    };
    let per_query = plan_join(&j.spec, j.request_bytes).map_err(join_err)?;
    let broadcast_bytes = fleet_aggregate(&j.fleet).map_err(join_err)?;
    let single_copy_bytes = fleet_aggregate(&FleetParams {
        workers: 1,
        ..j.fleet
    })
    .map_err(join_err)?;
    let broadcast_calls = fleet_api_calls(broadcast_bytes, j.request_bytes).map_err(join_err)?;
    let shuffle_calls = fleet_api_calls(single_copy_bytes, j.request_bytes).map_err(join_err)?;
    let waste = waste_fraction(j.fleet.workers).map_err(join_err)?;
    run.details.insert(
        "join".into(),
        json!({
            "per_query": per_query,
            "fleet_broadcast_bytes_per_day": broadcast_bytes,
            "fleet_broadcast_requests_per_day": broadcast_calls,
            "fleet_shuffle_bytes_per_day": single_copy_bytes,
            "fleet_shuffle_requests_per_day": shuffle_calls,
            "waste_fraction": waste,
            "waste_fraction_exact": format!("{}/{}", waste.numer, waste.denom),
        }),
    );
    let broadcast = gets(broadcast_calls, broadcast_bytes);
    let shuffle = gets(shuffle_calls, single_copy_bytes);
    let chosen = match per_query.strategy {
        JoinStrategy::Broadcast => broadcast.clone(),
        _ => shuffle.clone(),
    };
    run.section("join", chosen)?;
    run.compare(
        "join",
        "join build side per day: shuffle vs broadcast",
        ("shuffle", shuffle),
        ("broadcast", broadcast),
    )
}

fn run_cache(run: &mut Run, cfg: &CacheConfig, trace: &Trace) -> Result<(), ScenarioError> {
    let report = cachesim::simulate(trace, cfg).map_err(|e| ScenarioError::validation("cache", e))?;
    run.details.insert("cache".into(), serde_json::to_value(report).expect("plain struct"));
    let direct = gets(report.request_count, report.requested_bytes);
    run.section("cache", report.origin_tally())?;
    run.compare(
        "cache",
        "origin traffic: no cache vs cache",
        ("no cache", direct),
        ("cache", report.origin_tally()),
    )
}

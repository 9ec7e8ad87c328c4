use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use cloudcost::cachesim::{self, CacheConfig, FetchMode};
use cloudcost::columnar::{self, coalesce_requests, ColumnData, LayoutSpec, Query};
use cloudcost::joinplan::{self, FleetParams, JoinSpec, JoinStrategy, DEFAULT_BROADCAST_THRESHOLD};
use cloudcost::pricing::{builtin_pricebook, cost_of, PriceBook, PricingError, RequestTally};
use cloudcost::report::{self, CostReport, Format};
use cloudcost::scenario::{self, ErrorClass};
use cloudcost::tracemodel::{self, parse_trace, synthesize_trace, SynthSpec};
use cloudcost::units::{parse_bytes, Ppm};

#[derive(Parser)]
#[command(name = "cloudcost", version, about = "Price object-store API calls made by analytics I/O")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price a request tally (JSON: {"get": {"count": N, "bytes": B}, ...}).
    Price {
        #[arg(long)]
        book: String,
        #[arg(long)]
        tally: PathBuf,
    },
    /// Write a synthetic JSONL access trace.
    Synth {
        #[arg(long)]
        records: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = bytes)]
        p50: Option<u64>,
        #[arg(long, value_parser = bytes)]
        p90: Option<u64>,
    },
    /// Summarize a JSONL trace: size quantiles, reuse, popularity.
    Stats {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_parser = bytes, default_value = "1MB")]
        block: u64,
        #[arg(long, default_value_t = 10_000)]
        top: usize,
    },
    /// Plan a columnar scan with and without predicate pushdown.
    Scan {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        query: PathBuf,
        /// Column values as {"col": [..]}; random values from --seed if absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = bytes)]
        coalesce_gap: Option<u64>,
        #[arg(long, default_value = "s3-standard")]
        book: String,
    },
    /// Per-query and fleet-level I/O of broadcast vs shuffle joins.
    Join(JoinArgs),
    /// Replay a trace through a block cache.
    Cache {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_parser = bytes)]
        capacity: u64,
        #[arg(long, value_parser = bytes, default_value = "1MB")]
        block: u64,
        #[arg(long, value_enum, default_value_t = Fetch::Span)]
        fetch: Fetch,
        #[arg(long, default_value = "s3-standard")]
        book: String,
    },
    /// Run scenario files.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
    /// Diff two JSON reports produced by `scenario run`.
    Compare { a: PathBuf, b: PathBuf },
}

#[derive(Args)]
struct JoinArgs {
    #[arg(long)]
    workers: u64,
    #[arg(long, value_parser = bytes)]
    build_bytes: u64,
    #[arg(long, value_parser = bytes, default_value = "0")]
    probe_bytes: u64,
    /// Queries per day.
    #[arg(long)]
    queries: u64,
    /// Fraction of queries that broadcast, in [0, 1].
    #[arg(long)]
    broadcast_frac: f64,
    #[arg(long, value_parser = bytes)]
    request_bytes: u64,
    #[arg(long, value_enum, default_value_t = Strategy::Broadcast)]
    strategy: Strategy,
    #[arg(long, value_parser = bytes, default_value_t = DEFAULT_BROADCAST_THRESHOLD)]
    broadcast_threshold: u64,
    #[arg(long, default_value = "s3-standard")]
    book: String,
}

#[derive(Subcommand)]
enum ScenarioAction {
    Run {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = OutFormat::Json)]
        format: OutFormat,
        /// Add a 365-day extrapolation of the grand total.
        #[arg(long)]
        annual: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fetch {
    Span,
    PerRun,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Broadcast,
    Shuffle,
    Auto,
}

fn bytes(s: &str) -> Result<u64, String> {
    parse_bytes(s).map_err(|e| e.to_string())
}

/// Failure with its exit status: 2 for bad input, 3 for runtime faults.
struct Failure {
    code: u8,
    message: String,
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: e.to_string(),
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 3,
        message: e.to_string(),
    }
}

fn pricing_failure(e: PricingError) -> Failure {
    match e {
        PricingError::Overflow => runtime(e),
        other => invalid(other),
    }
}

fn join_failure(e: joinplan::JoinError) -> Failure {
    match e {
        joinplan::JoinError::Overflow(_) => runtime(e),
        other => invalid(other),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn load_book(id: &str) -> Result<PriceBook, Failure> {
    let path = Path::new(id);
    if path.extension().is_some_and(|e| e == "json") {
        PriceBook::load(path).map_err(invalid)
    } else {
        builtin_pricebook(id).map_err(invalid)
    }
}

fn load_trace(path: &Path) -> Result<tracemodel::Trace, Failure> {
    let file = fs::File::open(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    parse_trace(BufReader::new(file)).map_err(invalid)
}

fn priced(book: &PriceBook, tally: &RequestTally) -> Result<serde_json::Value, Failure> {
    let cost = cost_of(book, tally).map_err(pricing_failure)?;
    Ok(json!({
        "requests": tally.total_requests(),
        "bytes": tally.total_bytes(),
        "cost_nanousd": cost,
        "cost_usd": cost.usd_string(),
    }))
}

fn print_json(value: &serde_json::Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    io::stdout().write_all(text.as_bytes()).map_err(runtime)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Price { book, tally } => {
            let book = load_book(&book)?;
            let tally: RequestTally = read_json(&tally)?;
            tally.validate().map_err(invalid)?;
            let mut out = priced(&book, &tally)?;
            out["price_book"] = json!(book.id());
            print_json(&out)
        }
        Command::Synth {
            records,
            seed,
            out,
            p50,
            p90,
        } => {
            let mut spec = SynthSpec {
                records,
                ..SynthSpec::default()
            };
            match (p50, p90) {
                (None, None) => {}
                (Some(a), Some(b)) => spec = spec.with_quantiles(a, b),
                _ => return Err(invalid("--p50 and --p90 must be given together")),
            }
            spec.validate().map_err(invalid)?;
            let trace = synthesize_trace(&spec, seed).map_err(invalid)?;
            let file = fs::File::create(&out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
            trace.write_jsonl(io::BufWriter::new(file)).map_err(runtime)
        }
        Command::Stats { trace, block, top } => {
            let trace = load_trace(&trace)?;
            let cdf = tracemodel::size_cdf(&trace).map_err(invalid)?;
            let q = |p| tracemodel::quantile(&cdf, p).map_err(invalid);
            let reuse = tracemodel::reuse_intervals(&trace, block).map_err(invalid)?;
            let share = tracemodel::popularity_share(&trace, block, top).map_err(invalid)?;
            print_json(&json!({
                "records": trace.len(),
                "gets": trace.gets().count(),
                "p50_bytes": q(0.5)?,
                "p90_bytes": q(0.9)?,
                "p99_bytes": q(0.99)?,
                "reuse_median_ms": reuse.median_ms,
                "reuse_under_2h": reuse.fraction_under_threshold,
                "top_block_share": share,
                "top_blocks": top,
            }))
        }
        Command::Scan {
            layout,
            query,
            data,
            seed,
            coalesce_gap,
            book,
        } => {
            let book = load_book(&book)?;
            let layout = read_json::<LayoutSpec>(&layout)?.build().map_err(invalid)?;
            let query: Query = read_json(&query)?;
            let data = match data {
                Some(path) => {
                    let d: ColumnData = read_json(&path)?;
                    d.check_against(&layout).map_err(invalid)?;
                    d
                }
                None => scenario::generate_column_data(&layout, 0, 100, seed),
            };
            let plan = |pushdown| {
                columnar::plan_scan(&layout, &data, &query.select, &query.predicates, pushdown)
                    .map(|p| match coalesce_gap {
                        Some(gap) => coalesce_requests(&p, gap),
                        None => p,
                    })
                    .map_err(invalid)
            };
            let pushdown = plan(true)?;
            let full = plan(false)?;
            let summary = |p: &columnar::ScanPlan| -> Result<serde_json::Value, Failure> {
                let mut v = priced(&book, &p.tally())?;
                v["survivors"] = json!(p.survivors.len());
                Ok(v)
            };
            print_json(&json!({
                "price_book": book.id(),
                "pushdown": summary(&pushdown)?,
                "full_scan": summary(&full)?,
            }))
        }
        Command::Join(a) => run_join(a),
        Command::Cache {
            trace,
            capacity,
            block,
            fetch,
            book,
        } => {
            let book = load_book(&book)?;
            let trace = load_trace(&trace)?;
            let fetch = match fetch {
                Fetch::Span => FetchMode::Span,
                Fetch::PerRun => FetchMode::PerRun,
            };
            let config = CacheConfig::new(capacity, block).map_err(invalid)?.with_fetch(fetch);
            let report = cachesim::simulate(&trace, &config).map_err(invalid)?;
            let mut out = serde_json::to_value(report).map_err(runtime)?;
            out["origin"] = priced(&book, &report.origin_tally())?;
            out["price_book"] = json!(book.id());
            print_json(&out)
        }
        Command::Scenario {
            action: ScenarioAction::Run { file, format, annual },
        } => {
            let mut s = scenario::load_scenario(&file).map_err(scenario_failure)?;
            s.report.annual |= annual;
            let r = scenario::run_scenario(&s).map_err(scenario_failure)?;
            let format = match format {
                OutFormat::Json => Format::Json,
                OutFormat::Table => Format::Table,
            };
            io::stdout()
                .write_all(report::render_report(&r, format).as_bytes())
                .map_err(runtime)
        }
        Command::Compare { a, b } => {
            let a = CostReport::from_json(&read(&a)?).map_err(invalid)?;
            let b = CostReport::from_json(&read(&b)?).map_err(invalid)?;
            let cmp = report::compare(&a, &b).map_err(invalid)?;
            io::stdout().write_all(cmp.to_text().as_bytes()).map_err(runtime)
        }
    }
}

fn scenario_failure(e: scenario::ScenarioError) -> Failure {
    match e.class() {
        ErrorClass::Validation => invalid(e),
        ErrorClass::Runtime => runtime(e),
    }
}

fn run_join(a: JoinArgs) -> Result<(), Failure> {
    let book = load_book(&a.book)?;
    let fraction = Ppm::from_f64(a.broadcast_frac)
        .ok_or_else(|| invalid(format!("--broadcast-frac must be a number in [0, 1], got {}", a.broadcast_frac)))?;
    let fleet = FleetParams {
        queries_per_day: a.queries,
        broadcast_fraction: fraction,
        workers: a.workers,
        build_bytes: a.build_bytes,
    };
    fleet.validate().map_err(join_failure)?;
    let strategy = match a.strategy {
        Strategy::Broadcast => JoinStrategy::Broadcast,
        Strategy::Shuffle => JoinStrategy::Shuffle,
        Strategy::Auto => JoinStrategy::Auto,
    };
    let spec = JoinSpec {
        broadcast_threshold: a.broadcast_threshold,
        ..JoinSpec::new(a.build_bytes, a.probe_bytes, a.workers, strategy)
    };
    let per_query = joinplan::plan_join(&spec, a.request_bytes).map_err(join_failure)?;
    let broadcast_bytes = joinplan::fleet_aggregate(&fleet).map_err(join_failure)?;
    let shuffle_bytes = joinplan::fleet_aggregate(&FleetParams { workers: 1, ..fleet }).map_err(join_failure)?;
    let fleet_side = |bytes| -> Result<serde_json::Value, Failure> {
        let calls = joinplan::fleet_api_calls(bytes, a.request_bytes).map_err(join_failure)?;
        let tally = RequestTally::single(cloudcost::pricing::RequestKind::Get, calls, bytes);
        priced(&book, &tally)
    };
    let waste = joinplan::waste_fraction(a.workers).map_err(join_failure)?;
    print_json(&json!({
        "price_book": book.id(),
        "per_query": per_query,
        "fleet_per_day": {
            "broadcast": fleet_side(broadcast_bytes)?,
            "shuffle": fleet_side(shuffle_bytes)?,
        },
        "waste_fraction": waste,
        "waste_fraction_exact": format!("{}/{}", waste.numer, waste.denom),
    }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

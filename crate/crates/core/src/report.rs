//! Priced cost reports, their renderings, and report-to-report comparison.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pricing::{cost_of, PriceBook, PricingError, RequestTally};
use crate::units::{format_bytes, NanoUsd};

/// Requests, bytes and their price.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PricedLine {
    pub label: String,
    pub requests: u64,
    pub bytes: u64,
    pub cost_nanousd: NanoUsd,
    pub cost_usd: String,
}

impl PricedLine {
    pub fn price(label: &str, book: &PriceBook, tally: &RequestTally) -> Result<Self, PricingError> {
        let cost = cost_of(book, tally)?;
        Ok(PricedLine {
            label: label.to_string(),
            requests: tally.total_requests(),
            bytes: tally.total_bytes(),
            cost_nanousd: cost,
            cost_usd: cost.usd_string(),
        })
    }
}

/// One executed scenario section. The tally is kept so the cost can be
/// re-derived from it and the price book.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionCost {
    pub name: String,
    pub tally: RequestTally,
    pub requests: u64,
    pub bytes: u64,
    pub cost_nanousd: NanoUsd,
    pub cost_usd: String,
}

impl SectionCost {
    pub fn price(name: &str, book: &PriceBook, tally: RequestTally) -> Result<Self, PricingError> {
        let cost = cost_of(book, &tally)?;
        Ok(SectionCost {
            name: name.to_string(),
            requests: tally.total_requests(),
            bytes: tally.total_bytes(),
            tally,
            cost_nanousd: cost,
            cost_usd: cost.usd_string(),
        })
    }
}

/// Baseline against variant for one optimization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonBlock {
    pub name: String,
    pub baseline: PricedLine,
    pub variant: PricedLine,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnualTotal {
    pub days: u64,
    pub cost_nanousd: NanoUsd,
    pub cost_usd: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub price_book: String,
    pub seed: u64,
    pub sections: Vec<SectionCost>,
    pub comparisons: Vec<ComparisonBlock>,
    pub grand_total_nanousd: NanoUsd,
    pub grand_total_usd: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annual: Option<AnnualTotal>,
    /// Module-level outputs (plans, projections, cache statistics).
    pub details: serde_json::Value,
    /// The scenario as loaded.
    pub scenario: serde_json::Value,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("reports use different price books ('{0}' vs '{1}')")]
    BookMismatch(String, String),
    #[error("report json: {0}")]
    Json(String),
    #[error("cost overflow while totalling report")]
    Overflow,
}

impl CostReport {
    /// Sums section costs; with `annual_days`, also extrapolates the total.
    pub fn total(
        price_book: &str,
        seed: u64,
        sections: Vec<SectionCost>,
        comparisons: Vec<ComparisonBlock>,
        annual_days: Option<u64>,
        details: serde_json::Value,
        scenario: serde_json::Value,
    ) -> Result<Self, ReportError> {
        let mut total = NanoUsd::ZERO;
        for s in &sections {
            total = total.checked_add(s.cost_nanousd).ok_or(ReportError::Overflow)?;
        }
        let annual = match annual_days {
            Some(days) => {
                let cost = total.checked_mul(days).ok_or(ReportError::Overflow)?;
                Some(AnnualTotal {
                    days,
                    cost_nanousd: cost,
                    cost_usd: cost.usd_string(),
                })
            }
            None => None,
        };
        Ok(CostReport {
            price_book: price_book.to_string(),
            seed,
            sections,
            comparisons,
            grand_total_nanousd: total,
            grand_total_usd: total.usd_string(),
            annual,
            details,
            scenario,
        })
    }

    pub fn section(&self, name: &str) -> Option<&SectionCost> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn comparison(&self, name: &str) -> Option<&ComparisonBlock> {
        self.comparisons.iter().find(|c| c.name == name)
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        serde_json::from_str(text).map_err(|e| ReportError::Json(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Table,
}

/// Canonical JSON has object keys sorted at every level.
pub fn to_canonical_json(report: &CostReport) -> String {
    // serde_json's Map is a BTreeMap, so a round trip through Value sorts keys.
    let value = serde_json::to_value(report).expect("report is always serializable");
    let mut text = serde_json::to_string_pretty(&value).expect("value is always serializable");
    text.push('\n');
    text
}

pub fn render_report(report: &CostReport, format: Format) -> String {
    match format {
        Format::Json => to_canonical_json(report),
        Format::Table => render_table(report),
    }
}

fn render_table(r: &CostReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "price book: {}   seed: {}", r.price_book, r.seed);
    let _ = writeln!(out);
    let rows: Vec<[String; 4]> = r
        .sections
        .iter()
        .map(|s| {
            [
                s.name.clone(),
                s.requests.to_string(),
                format_bytes(s.bytes),
                s.cost_nanousd.display_usd(),
            ]
        })
        .collect();
    table(&mut out, ["section", "requests", "bytes", "cost"], &rows);
    let _ = writeln!(out, "grand total: {}", r.grand_total_nanousd.display_usd());
    if let Some(a) = &r.annual {
        let _ = writeln!(out, "annualized ({} days): {}", a.days, a.cost_nanousd.display_usd());
    }
    for c in &r.comparisons {
        let _ = writeln!(out);
        let _ = writeln!(out, "{}", c.name);
        let rows: Vec<[String; 4]> = [&c.baseline, &c.variant]
            .into_iter()
            .map(|l| {
                [
                    l.label.clone(),
                    l.requests.to_string(),
                    format_bytes(l.bytes),
                    l.cost_nanousd.display_usd(),
                ]
            })
            .collect();
        table(&mut out, ["", "requests", "bytes", "cost"], &rows);
    }
    out
}

fn table<const N: usize>(out: &mut String, header: [&str; N], rows: &[[String; N]]) {
    let mut widths = header.map(str::len);
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |out: &mut String, cells: [&str; N]| {
        for (i, cell) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(out, "{:<w$}", cell, w = widths[i]);
            } else {
                let _ = write!(out, "  {:>w$}", cell, w = widths[i]);
            }
        }
        out.push('\n');
    };
    line(out, header);
    for row in rows {
        line(out, std::array::from_fn(|i| row[i].as_str()));
    }
}

/// Change from a baseline value to a variant value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Delta {
    pub baseline: u64,
    pub variant: u64,
    pub change: i128,
    /// Absent when the baseline is zero.
    pub percent: Option<f64>,
}

impl Delta {
    pub fn new(baseline: u64, variant: u64) -> Self {
        let change = variant as i128 - baseline as i128;
        let percent = (baseline != 0).then(|| change as f64 / baseline as f64 * 100.0);
        Delta {
            baseline,
            variant,
            change,
            percent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineDelta {
    pub name: String,
    pub requests: Delta,
    pub bytes: Delta,
    pub cost_nanousd: Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportComparison {
    pub price_book: String,
    /// Per section present in either report, then `total`.
    pub lines: Vec<LineDelta>,
}

impl ReportComparison {
    pub fn line(&self, name: &str) -> Option<&LineDelta> {
        self.lines.iter().find(|l| l.name == name)
    }

    pub fn to_text(&self) -> String {
        let fmt_pct = |d: &Delta| match d.percent {
            Some(p) => format!("{p:+.1}%"),
            None => "n/a".to_string(),
        };
        let signed_usd = |change: i128| {
            let abs = NanoUsd(change.unsigned_abs() as u64).display_usd();
            if change < 0 {
                format!("-{abs}")
            } else {
                abs
            }
        };
        let rows: Vec<[String; 7]> = self
            .lines
            .iter()
            .map(|l| {
                [
                    l.name.clone(),
                    l.requests.baseline.to_string(),
                    l.requests.variant.to_string(),
                    fmt_pct(&l.requests),
                    fmt_pct(&l.bytes),
                    signed_usd(l.cost_nanousd.change),
                    fmt_pct(&l.cost_nanousd),
                ]
            })
            .collect();
        let mut out = format!("price book: {}\n", self.price_book);
        table(
            &mut out,
            ["section", "requests a", "requests b", "requests", "bytes", "cost change", "cost"],
            &rows,
        );
        out
    }
}

/// Deltas from report `a` (baseline) to report `b`.
pub fn compare(a: &CostReport, b: &CostReport) -> Result<ReportComparison, ReportError> {
    if a.price_book != b.price_book {
        return Err(ReportError::BookMismatch(a.price_book.clone(), b.price_book.clone()));
    }
    let mut names: Vec<&str> = a.sections.iter().map(|s| s.name.as_str()).collect();
    for s in &b.sections {
        if !names.contains(&s.name.as_str()) {
            names.push(&s.name);
        }
    }
    let pick = |r: &CostReport, name: &str| {
        r.section(name)
            .map_or((0, 0, 0), |s| (s.requests, s.bytes, s.cost_nanousd.0))
    };
    let mut lines: Vec<LineDelta> = names
        .into_iter()
        .map(|name| {
            let (ra, ba, ca) = pick(a, name);
            let (rb, bb, cb) = pick(b, name);
            LineDelta {
                name: name.to_string(),
                requests: Delta::new(ra, rb),
                bytes: Delta::new(ba, bb),
                cost_nanousd: Delta::new(ca, cb),
            }
        })
        .collect();
    let sum = |r: &CostReport| {
        r.sections.iter().fold((0u64, 0u64), |(q, b), s| {
            (q.saturating_add(s.requests), b.saturating_add(s.bytes))
        })
    };
    let (qa, ba) = sum(a);
    let (qb, bb) = sum(b);
    lines.push(LineDelta {
        name: "total".to_string(),
        requests: Delta::new(qa, qb),
        bytes: Delta::new(ba, bb),
        cost_nanousd: Delta::new(a.grand_total_nanousd.0, b.grand_total_nanousd.0),
    });
    Ok(ReportComparison {
        price_book: a.price_book.clone(),
        lines,
    })
}

//! Column-oriented table geometry and scan planning.
//!
//! A scan is planned as a sequence of ranged reads, one per page, before any
//! coalescing. With predicate pushdown the first predicate column is read in
//! full and every later column only at the pages that still hold surviving
//! rows; without it every page of every referenced column is read.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pricing::{RequestKind, RequestTally};
use crate::units::{Ppm, MB};

/// Default page size for columnar reads.
pub const DEFAULT_PAGE_BYTES: u64 = MB;

pub type RowSet = BTreeSet<u64>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ColumnarError {
    #[error("table must have at least one row")]
    NoRows,
    #[error("table must have at least one column")]
    NoColumns,
    #[error("column '{name}': value_bytes must be >= 1 and page_bytes >= value_bytes")]
    PageTooSmall { name: String },
    #[error("duplicate column '{0}'")]
    DuplicateColumn(String),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("query selects nothing and has no predicates")]
    EmptyQuery,
    #[error("column '{name}' has {got} values but the table has {rows} rows")]
    DataLength { name: String, got: usize, rows: u64 },
    #[error("{0} must be > 0")]
    NonPositive(&'static str),
    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),
}

/// Contiguous run of rows stored in one byte range of the file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub first_row: u64,
    pub rows: u64,
    pub offset: u64,
    pub len: u64,
}

impl Page {
    pub fn end_row(&self) -> u64 {
        self.first_row + self.rows
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub page_bytes: u64,
    pub value_bytes: u64,
    pub pages: Vec<Page>,
}

/// Column declaration in a layout file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub page_bytes: u64,
    pub value_bytes: u64,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, page_bytes: u64, value_bytes: u64) -> Self {
        ColumnSpec {
            name: name.into(),
            page_bytes,
            value_bytes,
        }
    }
}

/// Layout file: `{"table", "rows", "columns": [{"name","page_bytes","value_bytes"}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSpec {
    pub table: String,
    pub rows: u64,
    pub columns: Vec<ColumnSpec>,
}

impl LayoutSpec {
    pub fn build(&self) -> Result<TableLayout, ColumnarError> {
        build_layout(&self.table, self.rows, &self.columns)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableLayout {
    pub table: String,
    pub rows: u64,
    pub columns: Vec<Column>,
}

impl TableLayout {
    pub fn column(&self, name: &str) -> Result<&Column, ColumnarError> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| ColumnarError::UnknownColumn(name.to_string()))
    }

    pub fn total_bytes(&self) -> u64 {
        self.columns
            .iter()
            .flat_map(|c| &c.pages)
            .map(|p| p.len)
            .sum()
    }

    /// Checks the geometric invariants: each column's pages tile
    /// `[0, rows)` in order, and no two pages in the file share a byte.
    pub fn check(&self) -> Result<(), String> {
        let mut ranges = Vec::new();
        for c in &self.columns {
            let mut next = 0;
            for p in &c.pages {
                if p.first_row != next || p.rows == 0 {
                    return Err(format!("column {} has a row gap at {next}", c.name));
                }
                next = p.end_row();
                ranges.push((p.offset, p.offset + p.len));
            }
            if next != self.rows {
                return Err(format!("column {} covers {next} of {} rows", c.name, self.rows));
            }
        }
        ranges.sort_unstable();
        if ranges.windows(2).any(|w| w[0].1 > w[1].0) {
            return Err("overlapping pages".into());
        }
        Ok(())
    }
}

/// Packs `floor(page_bytes / value_bytes)` rows per page, column after
/// column, with the last page of each column possibly partial.
pub fn build_layout(
    table: &str,
    rows: u64,
    columns: &[ColumnSpec],
) -> Result<TableLayout, ColumnarError> {
    if rows == 0 {
        return Err(ColumnarError::NoRows);
    }
    if columns.is_empty() {
        return Err(ColumnarError::NoColumns);
    }
    let mut offset = 0u64;
    let mut out = Vec::with_capacity(columns.len());
    for (i, spec) in columns.iter().enumerate() {
        if columns[..i].iter().any(|c| c.name == spec.name) {
            return Err(ColumnarError::DuplicateColumn(spec.name.clone()));
        }
        if spec.value_bytes == 0 || spec.page_bytes < spec.value_bytes {
            return Err(ColumnarError::PageTooSmall {
                name: spec.name.clone(),
            });
        }
        let per_page = spec.page_bytes / spec.value_bytes;
        let mut pages = Vec::new();
        let mut first_row = 0;
        while first_row < rows {
            let n = per_page.min(rows - first_row);
            let len = n
                .checked_mul(spec.value_bytes)
                .ok_or(ColumnarError::Overflow("layout"))?;
            pages.push(Page {
                first_row,
                rows: n,
                offset,
                len,
            });
            offset = offset
                .checked_add(len)
                .ok_or(ColumnarError::Overflow("layout"))?;
            first_row += n;
        }
        out.push(Column {
            name: spec.name.clone(),
            page_bytes: spec.page_bytes,
            value_bytes: spec.value_bytes,
            pages,
        });
    }
    Ok(TableLayout {
        table: table.to_string(),
        rows,
        columns: out,
    })
}

/// In-memory column values, aligned by row index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ColumnData {
    pub columns: BTreeMap<String, Vec<i64>>,
}

impl ColumnData {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, values: Vec<i64>) -> Self {
        self.columns.insert(name.to_string(), values);
        self
    }

    pub fn values(&self, name: &str) -> Result<&[i64], ColumnarError> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| ColumnarError::UnknownColumn(name.to_string()))
    }

    /// Every layout column must have exactly `layout.rows` values.
    pub fn check_against(&self, layout: &TableLayout) -> Result<(), ColumnarError> {
        for c in &layout.columns {
            let got = self.values(&c.name)?.len();
            if got as u64 != layout.rows {
                return Err(ColumnarError::DataLength {
                    name: c.name.clone(),
                    got,
                    rows: layout.rows,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl Comparator {
    pub fn holds(self, value: i64, literal: i64) -> bool {
        match self {
            Comparator::Lt => value < literal,
            Comparator::Le => value <= literal,
            Comparator::Eq => value == literal,
            Comparator::Ge => value >= literal,
            Comparator::Gt => value > literal,
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Eq => "=",
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predicate {
    pub col: String,
    pub op: Comparator,
    pub lit: i64,
}

impl Predicate {
    pub fn new(col: &str, op: Comparator, lit: i64) -> Self {
        Predicate {
            col: col.to_string(),
            op,
            lit,
        }
    }
}

/// Query file: `{"select": [...], "where": [...], "pushdown": bool}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Query {
    pub select: Vec<String>,
    #[serde(rename = "where", default)]
    pub predicates: Vec<Predicate>,
    #[serde(default = "default_pushdown")]
    pub pushdown: bool,
}

fn default_pushdown() -> bool {
    true
}

/// Candidates whose value in `values` satisfies `pred`. Candidates at or
/// beyond the end of `values` are dropped.
pub fn apply_predicate(values: &[i64], pred: &Predicate, candidates: &RowSet) -> RowSet {
    candidates
        .iter()
        .copied()
        .filter(|&row| {
            values
                .get(row as usize)
                .is_some_and(|&v| pred.op.holds(v, pred.lit))
        })
        .collect()
}

/// Indexes of the pages of `column` whose row ranges intersect `rows`.
pub fn pages_for_rows(
    layout: &TableLayout,
    column: &str,
    rows: &RowSet,
) -> Result<BTreeSet<usize>, ColumnarError> {
    let col = layout.column(column)?;
    let mut out = BTreeSet::new();
    for (i, page) in col.pages.iter().enumerate() {
        if rows.range(page.first_row..page.end_row()).next().is_some() {
            out.insert(i);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PageRef {
    pub column: String,
    pub page: usize,
}

/// One ranged GET.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadRequest {
    pub obj: String,
    pub offset: u64,
    pub len: u64,
    pub pages: Vec<PageRef>,
}

impl ReadRequest {
    pub fn end(&self) -> u64 {
        self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanPlan {
    pub requests: Vec<ReadRequest>,
    pub survivors: RowSet,
    pub request_count: u64,
    pub total_bytes: u64,
}

impl ScanPlan {
    fn from_requests(requests: Vec<ReadRequest>, survivors: RowSet) -> Self {
        let request_count = requests.len() as u64;
        let total_bytes = requests.iter().map(|r| r.len).sum();
        ScanPlan {
            requests,
            survivors,
            request_count,
            total_bytes,
        }
    }

    pub fn tally(&self) -> RequestTally {
        RequestTally::single(RequestKind::Get, self.request_count, self.total_bytes)
    }

    pub fn pages_read(&self, column: &str) -> BTreeSet<usize> {
        self.requests
            .iter()
            .flat_map(|r| &r.pages)
            .filter(|p| p.column == column)
            .map(|p| p.page)
            .collect()
    }
}

struct Planner<'a> {
    layout: &'a TableLayout,
    read: BTreeSet<PageRef>,
    requests: Vec<ReadRequest>,
}

impl<'a> Planner<'a> {
    fn read_pages(&mut self, column: &str, pages: impl IntoIterator<Item = usize>) {
        let col = self
            .layout
            .column(column)
            .expect("columns are checked before planning");
        for page in pages {
            let page_ref = PageRef {
                column: column.to_string(),
                page,
            };
            if !self.read.insert(page_ref.clone()) {
                continue;
            }
            let p = col.pages[page];
            self.requests.push(ReadRequest {
                obj: self.layout.table.clone(),
                offset: p.offset,
                len: p.len,
                pages: vec![page_ref],
            });
        }
    }
}

/// Plans the ranged reads a scan issues. Both modes produce the same
/// survivors; they differ only in which pages are fetched.
pub fn plan_scan(
    layout: &TableLayout,
    data: &ColumnData,
    projection: &[String],
    predicates: &[Predicate],
    pushdown: bool,
) -> Result<ScanPlan, ColumnarError> {
    if projection.is_empty() && predicates.is_empty() {
        return Err(ColumnarError::EmptyQuery);
    }
    for name in projection.iter().chain(predicates.iter().map(|p| &p.col)) {
        layout.column(name)?;
        let got = data.values(name)?.len();
        if got as u64 != layout.rows {
            return Err(ColumnarError::DataLength {
                name: name.clone(),
                got,
                rows: layout.rows,
            });
        }
    }

    let mut planner = Planner {
        layout,
        read: BTreeSet::new(),
        requests: Vec::new(),
    };
    let mut survivors: RowSet = (0..layout.rows).collect();

    if pushdown {
        for (i, pred) in predicates.iter().enumerate() {
            let pages = if i == 0 {
                (0..layout.column(&pred.col)?.pages.len()).collect()
            } else {
                pages_for_rows(layout, &pred.col, &survivors)?
            };
            planner.read_pages(&pred.col, pages);
            survivors = apply_predicate(data.values(&pred.col)?, pred, &survivors);
        }
        for name in projection {
            let pages = pages_for_rows(layout, name, &survivors)?;
            planner.read_pages(name, pages);
        }
    } else {
        for name in predicates.iter().map(|p| &p.col).chain(projection) {
            let n = layout.column(name)?.pages.len();
            planner.read_pages(name, 0..n);
        }
        for pred in predicates {
            survivors = apply_predicate(data.values(&pred.col)?, pred, &survivors);
        }
    }
    Ok(ScanPlan::from_requests(planner.requests, survivors))
}

/// Merges requests on the same object whose byte gap is at most `max_gap`.
/// Gap bytes are transferred, so bytes can only grow while the request
/// count can only shrink. The result is ordered by `(object, offset)`.
pub fn coalesce_requests(plan: &ScanPlan, max_gap: u64) -> ScanPlan {
    let mut sorted = plan.requests.clone();
    sorted.sort_by(|a, b| (&a.obj, a.offset).cmp(&(&b.obj, b.offset)));
    let mut merged: Vec<ReadRequest> = Vec::with_capacity(sorted.len());
    for req in sorted {
        match merged.last_mut() {
            Some(last) if last.obj == req.obj && req.offset.saturating_sub(last.end()) <= max_gap => {
                let end = last.end().max(req.end());
                last.len = end - last.offset;
                last.pages.extend(req.pages);
            }
            _ => merged.push(req),
        }
    }
    ScanPlan::from_requests(merged, plan.survivors.clone())
}

/// Fleet-level daily request volume with and without pushdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FleetScanParams {
    pub daily_bytes_pushdown: u64,
    pub avg_request_bytes: u64,
    /// Full-scan bytes as a multiple of pushdown bytes.
    pub byte_inflation: Ppm,
    pub page_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FleetScanProjection {
    pub pushdown_requests: u64,
    pub pushdown_bytes: u64,
    pub full_scan_requests: u64,
    pub full_scan_bytes: u64,
}

pub fn fleet_scan_projection(p: &FleetScanParams) -> Result<FleetScanProjection, ColumnarError> {
    if p.daily_bytes_pushdown == 0 {
        return Err(ColumnarError::NonPositive("daily bytes"));
    }
    if p.avg_request_bytes == 0 {
        return Err(ColumnarError::NonPositive("average request bytes"));
    }
    if p.byte_inflation.0 == 0 {
        return Err(ColumnarError::NonPositive("byte inflation"));
    }
    if p.page_bytes == 0 {
        return Err(ColumnarError::NonPositive("page bytes"));
    }
    let full_scan_bytes = p
        .byte_inflation
        .apply(p.daily_bytes_pushdown)
        .ok_or(ColumnarError::Overflow("full-scan bytes"))?;
    Ok(FleetScanProjection {
        pushdown_requests: p.daily_bytes_pushdown.div_ceil(p.avg_request_bytes),
        pushdown_bytes: p.daily_bytes_pushdown,
        full_scan_requests: full_scan_bytes.div_ceil(p.page_bytes),
        full_scan_bytes,
    })
}

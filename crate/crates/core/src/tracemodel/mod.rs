//! Storage-access traces: JSON-lines ingestion, workload statistics and
//! seeded synthesis.

mod stats;
mod synth;

pub use stats::{popularity_share, quantile, reuse_intervals, size_cdf, ReuseStats, SizeCdf};
pub use synth::{synthesize_trace, SizeAnchor, SynthSpec, DEFAULT_ZIPF_EXPONENT};

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pricing::RequestKind;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("empty trace")]
    Empty,
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("trace has no get records")]
    NoReads,
    #[error("quantile {0} outside (0, 1]")]
    QuantileRange(f64),
    #[error("invalid synthesis parameters: {0}")]
    Synthesis(String),
    #[error("granularity must be > 0")]
    ZeroGranularity,
    #[error("k must be >= 1")]
    ZeroK,
    #[error("trace i/o: {0}")]
    Io(String),
}

/// One storage request.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AccessRecord {
    pub ts_ms: u64,
    pub obj: String,
    #[serde(default)]
    pub off: u64,
    #[serde(default)]
    pub len: u64,
    pub kind: RequestKind,
}

impl AccessRecord {
    pub fn get(ts_ms: u64, obj: impl Into<String>, off: u64, len: u64) -> Self {
        AccessRecord {
            ts_ms,
            obj: obj.into(),
            off,
            len,
            kind: RequestKind::Get,
        }
    }
}

fn is_ranged(kind: RequestKind) -> bool {
    matches!(kind, RequestKind::Get | RequestKind::Put)
}

/// Where a trace came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum Provenance {
    Ingested,
    Synthesized { seed: u64 },
}

/// Access records in non-decreasing timestamp order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    records: Vec<AccessRecord>,
    epoch_ms: u64,
    provenance: Provenance,
}

impl Trace {
    /// Builds a trace, stably sorting records by timestamp.
    pub fn new(mut records: Vec<AccessRecord>, provenance: Provenance) -> Result<Self, TraceError> {
        if records.is_empty() {
            return Err(TraceError::Empty);
        }
        for (i, r) in records.iter().enumerate() {
            if is_ranged(r.kind) && r.len == 0 {
                return Err(TraceError::Invalid {
                    line: i + 1,
                    message: format!("{} record must have len > 0", r.kind),
                });
            }
        }
        records.sort_by_key(|r| r.ts_ms);
        Ok(Trace {
            records,
            epoch_ms: 0,
            provenance,
        })
    }

    pub fn with_epoch(mut self, epoch_ms: u64) -> Self {
        self.epoch_ms = epoch_ms;
        self
    }

    pub fn records(&self) -> &[AccessRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn epoch_ms(&self) -> u64 {
        self.epoch_ms
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn gets(&self) -> impl Iterator<Item = &AccessRecord> {
        self.records.iter().filter(|r| r.kind == RequestKind::Get)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

// Signed fields so that negative offsets/lengths surface as validation
// errors rather than generic type errors.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    ts_ms: i64,
    obj: String,
    #[serde(default)]
    off: i64,
    #[serde(default)]
    len: i64,
    kind: String,
}

fn parse_line(line_no: usize, line: &str) -> Result<AccessRecord, TraceError> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| TraceError::Malformed {
        line: line_no,
        message: e.to_string(),
    })?;
    let invalid = |message: String| TraceError::Invalid {
        line: line_no,
        message,
    };
    let kind: RequestKind = raw.kind.parse().map_err(|e: crate::pricing::PricingError| {
        invalid(e.to_string())
    })?;
    if raw.ts_ms < 0 {
        return Err(invalid(format!("negative timestamp {}", raw.ts_ms)));
    }
    if raw.off < 0 {
        return Err(invalid(format!("negative offset {}", raw.off)));
    }
    if raw.len < 0 {
        return Err(invalid(format!("negative length {}", raw.len)));
    }
    if is_ranged(kind) && raw.len == 0 {
        return Err(invalid(format!("{kind} record must have len > 0")));
    }
    Ok(AccessRecord {
        ts_ms: raw.ts_ms as u64,
        obj: raw.obj,
        off: raw.off as u64,
        len: raw.len as u64,
        kind,
    })
}

/// Reads a JSON-lines trace. Blank lines are skipped; line numbers in errors
/// are 1-based positions in the input.
pub fn parse_trace<R: BufRead>(input: R) -> Result<Trace, TraceError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| TraceError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_line(i + 1, &line)?);
    }
    Trace::new(records, Provenance::Ingested)
}

pub fn parse_trace_str(text: &str) -> Result<Trace, TraceError> {
    parse_trace(text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_line() {
        let t = parse_trace_str(r#"{"ts_ms":5,"obj":"a","off":0,"len":10,"kind":"get"}"#).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.records()[0], AccessRecord::get(5, "a", 0, 10));
        assert_eq!(t.provenance(), Provenance::Ingested);
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse_trace_str("").unwrap_err().to_string(), "empty trace");
        assert_eq!(parse_trace_str("\n\n").unwrap_err(), TraceError::Empty);
    }

    #[test]
    fn sorts_unsorted_lines() {
        let text = r#"{"ts_ms":30,"obj":"c","off":0,"len":1,"kind":"get"}
{"ts_ms":10,"obj":"a","off":0,"len":1,"kind":"get"}
{"ts_ms":20,"obj":"b","off":0,"len":1,"kind":"get"}"#;
        let t = parse_trace_str(text).unwrap();
        let mut manual: Vec<u64> = vec![30, 10, 20];
        manual.sort();
        let got: Vec<u64> = t.records().iter().map(|r| r.ts_ms).collect();
        assert_eq!(got, manual);
        assert_eq!(t.records()[0].obj, "a");
    }

    #[test]
    fn non_ranged_kinds_default_offsets() {
        let t = parse_trace_str(r#"{"ts_ms":1,"obj":"bucket","kind":"list"}"#).unwrap();
        assert_eq!(t.records()[0].len, 0);
        assert_eq!(t.records()[0].kind, RequestKind::List);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"ts_ms\":1,\"obj\":\"a\",\"off\":0,\"len\":5,\"kind\":\"get\"}\nnot json\n";
        match parse_trace_str(text).unwrap_err() {
            TraceError::Malformed { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e:?}"),
        }
        let missing = r#"{"ts_ms":1,"off":0,"len":5,"kind":"get"}"#;
        assert!(matches!(
            parse_trace_str(missing),
            Err(TraceError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn negative_length_is_validation_error() {
        let err = parse_trace_str(r#"{"ts_ms":1,"obj":"a","off":0,"len":-4,"kind":"get"}"#)
            .unwrap_err();
        assert_eq!(
            err,
            TraceError::Invalid {
                line: 1,
                message: "negative length -4".into()
            }
        );
    }

    #[test]
    fn zero_length_get_rejected() {
        let err = parse_trace_str(r#"{"ts_ms":1,"obj":"a","off":0,"len":0,"kind":"get"}"#)
            .unwrap_err();
        assert!(matches!(err, TraceError::Invalid { line: 1, .. }));
    }

    #[test]
    fn unknown_kind_rejected() {
        let err = parse_trace_str(r#"{"ts_ms":1,"obj":"a","kind":"delete"}"#).unwrap_err();
        assert!(err.to_string().contains("unknown request kind 'delete'"), "{err}");
    }

    #[test]
    fn jsonl_round_trip() {
        let text = r#"{"ts_ms":1,"obj":"a","off":100,"len":5,"kind":"get"}
{"ts_ms":2,"obj":"b","off":0,"len":0,"kind":"head"}
"#;
        let t = parse_trace_str(text).unwrap();
        assert_eq!(t.to_jsonl(), text);
    }
}

//! Per-request price books and exact request-cost arithmetic.
//!
//! Object stores bill each API call by the class it falls in, independent of
//! the bytes it moves. A [`PriceBook`] maps every [`RequestKind`] to exactly
//! one [`OperationClass`] and each class to a price in nano-dollars per
//! request, so every built-in tier is an exact integer.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::NanoUsd;

/// Request kinds a trace or a plan can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestKind {
    Get,
    Put,
    Post,
    Copy,
    List,
    Head,
    Select,
    /// Bucket-configuration read (GCS "GET Bucket" when not listing).
    GetBucketConfig,
}

impl RequestKind {
    pub const ALL: [RequestKind; 8] = [
        RequestKind::Get,
        RequestKind::Put,
        RequestKind::Post,
        RequestKind::Copy,
        RequestKind::List,
        RequestKind::Head,
        RequestKind::Select,
        RequestKind::GetBucketConfig,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RequestKind::Get => "get",
            RequestKind::Put => "put",
            RequestKind::Post => "post",
            RequestKind::Copy => "copy",
            RequestKind::List => "list",
            RequestKind::Head => "head",
            RequestKind::Select => "select",
            RequestKind::GetBucketConfig => "get-bucket-config",
        }
    }
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RequestKind {
    type Err = PricingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RequestKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| PricingError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassKind {
    Read,
    Write,
}

/// A billing class together with the vendor's own name for it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OperationClass {
    pub kind: ClassKind,
    pub label: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PricingError {
    #[error("unknown request kind '{0}'")]
    UnknownKind(String),
    #[error("request kind '{kind}' is not classified by price book '{book}'")]
    Unclassified { book: String, kind: RequestKind },
    #[error("price book '{book}': request kind '{kind}' appears in more than one class")]
    DuplicateKind { book: String, kind: RequestKind },
    #[error("unknown price book '{0}'")]
    UnknownBook(String),
    #[error("cost overflow: money accumulator exceeds u64 nanoUSD")]
    Overflow,
    #[error("tally invalid: kind '{0}' has bytes but zero requests")]
    BytesWithoutRequests(RequestKind),
    #[error("price book file {path}: {message}")]
    File { path: String, message: String },
}

/// One priced class as it appears in a price-book file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceClass {
    #[serde(rename = "class")]
    pub kind: ClassKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub kinds: Vec<RequestKind>,
    pub nanousd_per_request: u64,
}

/// Vendor/tier price list. Construct through [`PriceBook::new`] (or serde,
/// which validates the same way) so that classification is total-or-error
/// and never ambiguous.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPriceBook", into = "RawPriceBook")]
pub struct PriceBook {
    id: String,
    classes: Vec<PriceClass>,
}

#[derive(Serialize, Deserialize)]
struct RawPriceBook {
    id: String,
    classes: Vec<PriceClass>,
}

impl TryFrom<RawPriceBook> for PriceBook {
    type Error = PricingError;

    fn try_from(raw: RawPriceBook) -> Result<Self, Self::Error> {
        PriceBook::new(raw.id, raw.classes)
    }
}

impl From<PriceBook> for RawPriceBook {
    fn from(book: PriceBook) -> Self {
        RawPriceBook {
            id: book.id,
            classes: book.classes,
        }
    }
}

impl PriceBook {
    pub fn new(id: impl Into<String>, classes: Vec<PriceClass>) -> Result<Self, PricingError> {
        let id = id.into();
        let mut seen = Vec::new();
        for class in &classes {
            for &kind in &class.kinds {
                if seen.contains(&kind) {
                    return Err(PricingError::DuplicateKind { book: id, kind });
                }
                seen.push(kind);
            }
        }
        Ok(PriceBook { id, classes })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn classes(&self) -> &[PriceClass] {
        &self.classes
    }

    fn class_of(&self, kind: RequestKind) -> Result<&PriceClass, PricingError> {
        self.classes
            .iter()
            .find(|c| c.kinds.contains(&kind))
            .ok_or_else(|| PricingError::Unclassified {
                book: self.id.clone(),
                kind,
            })
    }

    /// Price of a single request of `kind`.
    pub fn price_of(&self, kind: RequestKind) -> Result<NanoUsd, PricingError> {
        self.class_of(kind).map(|c| NanoUsd(c.nanousd_per_request))
    }

    /// Price of one request in the given class, if the book has one.
    pub fn class_price(&self, class: ClassKind) -> Option<NanoUsd> {
        self.classes
            .iter()
            .find(|c| c.kind == class)
            .map(|c| NanoUsd(c.nanousd_per_request))
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, PricingError> {
        let file_err = |message: String| PricingError::File {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        Self::from_json(&text).map_err(|e| file_err(e.to_string()))
    }
}

/// Deterministic class for `kind` under `book`'s vendor convention.
pub fn classify(book: &PriceBook, kind: RequestKind) -> Result<OperationClass, PricingError> {
    let class = book.class_of(kind)?;
    Ok(OperationClass {
        kind: class.kind,
        label: class
            .label
            .clone()
            .unwrap_or_else(|| match class.kind {
                ClassKind::Read => "Read operations".to_string(),
                ClassKind::Write => "Write operations".to_string(),
            }),
    })
}

fn class(kind: ClassKind, label: &str, kinds: &[RequestKind], nanousd: u64) -> PriceClass {
    PriceClass {
        kind,
        label: Some(label.to_string()),
        kinds: kinds.to_vec(),
        nanousd_per_request: nanousd,
    }
}

/// The August 2023 per-request prices for S3, GCS and the four Azure GPv2
/// tiers. A price of `$X per 1,000 requests` is `X * 10^6` nanoUSD per request.
pub fn builtin_pricebooks() -> Vec<PriceBook> {
    use ClassKind::{Read, Write};
    use RequestKind::*;

    let s3 = PriceBook {
        id: "s3-standard".into(),
        classes: vec![
            class(Write, "PUT, COPY, POST, LIST requests", &[Put, Copy, Post, List], 5_000),
            class(
                Read,
                "GET, SELECT, and all other requests",
                &[Get, Select, Head, GetBucketConfig],
                400,
            ),
        ],
    };
    // Copy is an XML-API PUT with a copy-source header; select has no GCS
    // analogue and is billed as an object GET.
    let gcs = PriceBook {
        id: "gcs-standard-xml".into(),
        classes: vec![
            class(
                Write,
                "GET Service, GET Bucket (listing), PUT, POST",
                &[Put, Post, List, Copy],
                5_000,
            ),
            class(
                Read,
                "GET Bucket (configuration), GET Object, HEAD",
                &[Get, Head, GetBucketConfig, Select],
                400,
            ),
        ],
    };
    let azure_tiers: [(&str, u64, u64); 4] = [
        ("premium", 2_280, 190),
        ("hot", 6_500, 500),
        ("cool", 13_000, 1_300),
        ("archive", 13_000, 650_000),
    ];
    let mut books = vec![s3, gcs];
    for (tier, write, read) in azure_tiers {
        books.push(PriceBook {
            id: format!("azure-gpv2-{tier}"),
            classes: vec![
                class(Write, "Write operations", &[Put, Post, Copy], write),
                class(
                    Read,
                    "Read operations",
                    &[Get, Head, List, Select, GetBucketConfig],
                    read,
                ),
            ],
        });
    }
    books
}

pub fn builtin_pricebook(id: &str) -> Result<PriceBook, PricingError> {
    builtin_pricebooks()
        .into_iter()
        .find(|b| b.id == id)
        .ok_or_else(|| PricingError::UnknownBook(id.to_string()))
}

/// Requests and bytes for one request kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindTally {
    pub count: u64,
    #[serde(default)]
    pub bytes: u64,
}

/// Per-kind request counts and transferred bytes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestTally {
    kinds: BTreeMap<RequestKind, KindTally>,
}

impl RequestTally {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tally with a single kind. Bytes are dropped when `count` is zero.
    pub fn single(kind: RequestKind, count: u64, bytes: u64) -> Self {
        let mut t = Self::new();
        t.add(kind, count, bytes);
        t
    }

    /// Adds requests, saturating at `u64::MAX` rather than wrapping.
    pub fn add(&mut self, kind: RequestKind, count: u64, bytes: u64) {
        if count == 0 {
            return;
        }
        let entry = self.kinds.entry(kind).or_default();
        entry.count = entry.count.saturating_add(count);
        entry.bytes = entry.bytes.saturating_add(bytes);
    }

    /// Multiset union of two tallies.
    pub fn merge(&mut self, other: &RequestTally) {
        for (&kind, t) in &other.kinds {
            self.add(kind, t.count, t.bytes);
        }
    }

    pub fn get(&self, kind: RequestKind) -> KindTally {
        self.kinds.get(&kind).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (RequestKind, KindTally)> + '_ {
        self.kinds.iter().map(|(&k, &t)| (k, t))
    }

    pub fn total_requests(&self) -> u64 {
        self.kinds.values().fold(0u64, |acc, t| acc.saturating_add(t.count))
    }

    pub fn total_bytes(&self) -> u64 {
        self.kinds.values().fold(0u64, |acc, t| acc.saturating_add(t.bytes))
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    /// Overwrites the byte count of a kind; the kind must already have requests.
    pub fn set_bytes(&mut self, kind: RequestKind, bytes: u64) {
        if let Some(t) = self.kinds.get_mut(&kind) {
            t.bytes = bytes;
        }
    }

    pub fn validate(&self) -> Result<(), PricingError> {
        for (&kind, t) in &self.kinds {
            if t.count == 0 && t.bytes != 0 {
                return Err(PricingError::BytesWithoutRequests(kind));
            }
        }
        Ok(())
    }
}

/// Exact cost of a tally: the sum of `count * price(class(kind))`.
pub fn cost_of(book: &PriceBook, tally: &RequestTally) -> Result<NanoUsd, PricingError> {
    tally.validate()?;
    let mut total = NanoUsd::ZERO;
    for (kind, t) in tally.iter() {
        let line = book
            .price_of(kind)?
            .checked_mul(t.count)
            .ok_or(PricingError::Overflow)?;
        total = total.checked_add(line).ok_or(PricingError::Overflow)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn book(id: &str) -> PriceBook {
        builtin_pricebook(id).unwrap()
    }

    #[test]
    fn builtin_ids() {
        let ids: Vec<_> = builtin_pricebooks().iter().map(|b| b.id.clone()).collect();
        assert_eq!(
            ids,
            [
                "s3-standard",
                "gcs-standard-xml",
                "azure-gpv2-premium",
                "azure-gpv2-hot",
                "azure-gpv2-cool",
                "azure-gpv2-archive"
            ]
        );
    }

    #[test]
    fn table_prices() {
        assert_eq!(book("s3-standard").class_price(ClassKind::Read), Some(NanoUsd(400)));
        assert_eq!(
            book("azure-gpv2-archive").class_price(ClassKind::Read),
            Some(NanoUsd(650_000))
        );
        assert_eq!(
            book("gcs-standard-xml").class_price(ClassKind::Write),
            Some(NanoUsd(5_000))
        );
    }

    #[test]
    fn classification_examples() {
        let s3 = book("s3-standard");
        assert_eq!(classify(&s3, RequestKind::List).unwrap().kind, ClassKind::Write);
        assert_eq!(classify(&s3, RequestKind::Get).unwrap().kind, ClassKind::Read);
        let gcs = book("gcs-standard-xml");
        assert_eq!(classify(&gcs, RequestKind::Head).unwrap().kind, ClassKind::Read);
        assert_eq!(classify(&gcs, RequestKind::List).unwrap().kind, ClassKind::Write);
        assert_eq!(
            classify(&gcs, RequestKind::GetBucketConfig).unwrap().kind,
            ClassKind::Read
        );
        let hot = book("azure-gpv2-hot");
        assert_eq!(classify(&hot, RequestKind::List).unwrap().kind, ClassKind::Read);
        assert_eq!(classify(&hot, RequestKind::Copy).unwrap().kind, ClassKind::Write);
    }

    #[test]
    fn every_builtin_is_total() {
        for b in builtin_pricebooks() {
            for kind in RequestKind::ALL {
                classify(&b, kind).unwrap();
            }
        }
    }

    #[test]
    fn unknown_kind_is_named() {
        let err = "delete".parse::<RequestKind>().unwrap_err();
        assert_eq!(err.to_string(), "unknown request kind 'delete'");
    }

    #[test]
    fn unclassified_kind_errors() {
        let partial = PriceBook::new(
            "partial",
            vec![class(ClassKind::Read, "r", &[RequestKind::Get], 1)],
        )
        .unwrap();
        assert!(matches!(
            classify(&partial, RequestKind::Put),
            Err(PricingError::Unclassified { .. })
        ));
    }

    #[test]
    fn duplicate_kind_rejected() {
        let json = r#"{"id":"dup","classes":[
            {"class":"read","kinds":["get"],"nanousd_per_request":1},
            {"class":"write","kinds":["get","put"],"nanousd_per_request":2}]}"#;
        let err = PriceBook::from_json(json).unwrap_err();
        assert!(err.to_string().contains("more than one class"), "{err}");
    }

    #[test]
    fn json_schema_round_trip() {
        let json = r#"{"id":"custom","classes":[
            {"class":"read","kinds":["get","head"],"nanousd_per_request":123},
            {"class":"write","kinds":["put"],"nanousd_per_request":4567}]}"#;
        let b = PriceBook::from_json(json).unwrap();
        assert_eq!(b.price_of(RequestKind::Head).unwrap(), NanoUsd(123));
        let again = PriceBook::from_json(&serde_json::to_string(&b).unwrap()).unwrap();
        assert_eq!(b, again);
        for builtin in builtin_pricebooks() {
            let text = serde_json::to_string(&builtin).unwrap();
            assert_eq!(PriceBook::from_json(&text).unwrap(), builtin);
        }
    }

    #[test]
    fn negative_price_rejected() {
        let json = r#"{"id":"neg","classes":[{"class":"read","kinds":["get"],"nanousd_per_request":-1}]}"#;
        assert!(PriceBook::from_json(json).is_err());
    }

    #[test]
    fn cost_examples() {
        let s3 = book("s3-standard");
        let million = RequestTally::single(RequestKind::Get, 1_000_000, 0);
        assert_eq!(cost_of(&s3, &million).unwrap(), NanoUsd(400_000_000));
        assert_eq!(cost_of(&s3, &million).unwrap().usd_string(), "0.4");
        assert_eq!(cost_of(&s3, &RequestTally::new()).unwrap(), NanoUsd(0));
    }

    #[test]
    fn fleet_scale_daily_get_cost() {
        let s3 = book("s3-standard");
        let tally = RequestTally::single(RequestKind::Get, 1_000_000_000_000, 0);
        let cost = cost_of(&s3, &tally).unwrap();
        // Independent check in decimal dollars: 10^12 / 1,000 * $0.0004.
        let per_thousand_usd = 0.0004_f64;
        let expected_usd = (1e12 / 1e3) * per_thousand_usd;
        assert_eq!(expected_usd, 400_000.0);
        assert_eq!(cost, NanoUsd(400_000_000_000_000));
        assert_eq!(cost.usd_string(), "400000");
    }

    #[test]
    fn overflow_is_explicit() {
        let archive = book("azure-gpv2-archive");
        let tally = RequestTally::single(RequestKind::Get, u64::MAX / 2, 0);
        assert_eq!(cost_of(&archive, &tally), Err(PricingError::Overflow));
        let mut two = RequestTally::single(RequestKind::Get, 20_000_000_000_000, 0);
        two.add(RequestKind::Put, 1_000_000_000_000_000, 0);
        assert_eq!(cost_of(&archive, &two), Err(PricingError::Overflow));
    }

    fn tally_strategy() -> impl Strategy<Value = RequestTally> {
        proptest::collection::vec((0usize..8, 0u64..1_000_000_000, 0u64..1u64 << 40), 0..8)
            .prop_map(|entries| {
                let mut t = RequestTally::new();
                for (k, c, b) in entries {
                    t.add(RequestKind::ALL[k], c, b);
                }
                t
            })
    }

    fn book_strategy() -> impl Strategy<Value = PriceBook> {
        (0usize..6).prop_map(|i| builtin_pricebooks().swap_remove(i))
    }

    proptest! {
        #[test]
        fn additive(book in book_strategy(), a in tally_strategy(), b in tally_strategy()) {
            let mut union = a.clone();
            union.merge(&b);
            let lhs = cost_of(&book, &union).unwrap();
            let rhs = cost_of(&book, &a).unwrap().0 + cost_of(&book, &b).unwrap().0;
            prop_assert_eq!(lhs.0, rhs);
        }

        #[test]
        fn monotone(book in book_strategy(), a in tally_strategy(), k in 0usize..8, extra in 1u64..1000) {
            let before = cost_of(&book, &a).unwrap();
            let mut bigger = a.clone();
            bigger.add(RequestKind::ALL[k], extra, 0);
            prop_assert!(cost_of(&book, &bigger).unwrap() >= before);
        }

        #[test]
        fn bytes_do_not_matter(book in book_strategy(), a in tally_strategy(), bytes in any::<u64>()) {
            let before = cost_of(&book, &a).unwrap();
            let mut mutated = a.clone();
            for kind in RequestKind::ALL {
                mutated.set_bytes(kind, bytes);
            }
            prop_assert_eq!(cost_of(&book, &mutated).unwrap(), before);
        }
    }
}

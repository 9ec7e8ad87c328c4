//! Decimal byte units and money formatting.
//!
//! All byte quantities use powers of ten (KB = 10^3 ... PB = 10^15). Money is
//! carried as integer nano-dollars.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const KB: u64 = 1_000;
pub const MB: u64 = 1_000_000;
pub const GB: u64 = 1_000_000_000;
pub const TB: u64 = 1_000_000_000_000;
pub const PB: u64 = 1_000_000_000_000_000;

/// Nano-dollars per dollar.
pub const NANOS_PER_USD: u64 = 1_000_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UnitError {
    #[error("invalid byte quantity '{0}'")]
    Invalid(String),
    #[error("byte quantity '{0}' overflows u64")]
    Overflow(String),
}

/// Parses `"10KB"`, `"1 MB"`, `"2PB"` or a bare integer into bytes.
pub fn parse_bytes(text: &str) -> Result<u64, UnitError> {
    let t = text.trim();
    let split = t
        .find(|c: char| !c.is_ascii_digit())
        .unwrap_or(t.len());
    let (digits, suffix) = t.split_at(split);
    if digits.is_empty() {
        return Err(UnitError::Invalid(text.to_string()));
    }
    let value: u64 = digits
        .parse()
        .map_err(|_| UnitError::Overflow(text.to_string()))?;
    let mult = match suffix.trim().to_ascii_uppercase().as_str() {
        "" | "B" => 1,
        "KB" => KB,
        "MB" => MB,
        "GB" => GB,
        "TB" => TB,
        "PB" => PB,
        _ => return Err(UnitError::Invalid(text.to_string())),
    };
    value
        .checked_mul(mult)
        .ok_or_else(|| UnitError::Overflow(text.to_string()))
}

/// An amount of money in nano-dollars (10^-9 USD).
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NanoUsd(pub u64);

impl NanoUsd {
    pub const ZERO: NanoUsd = NanoUsd(0);

    pub fn checked_add(self, other: NanoUsd) -> Option<NanoUsd> {
        self.0.checked_add(other.0).map(NanoUsd)
    }

    pub fn checked_mul(self, factor: u64) -> Option<NanoUsd> {
        self.0.checked_mul(factor).map(NanoUsd)
    }

    /// Dollar string with nine decimals, trailing zeros (and a bare point)
    /// trimmed: `400` -> `"0.0000004"`, `8e13` -> `"80000"`.
    pub fn usd_string(self) -> String {
        let whole = self.0 / NANOS_PER_USD;
        let frac = self.0 % NANOS_PER_USD;
        let s = format!("{whole}.{frac:09}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }

    /// Human rendering with a dollar sign and thousands separators.
    pub fn display_usd(self) -> String {
        let plain = self.usd_string();
        let (int, frac) = match plain.split_once('.') {
            Some((i, f)) => (i, Some(f)),
            None => (plain.as_str(), None),
        };
        let mut grouped = String::new();
        for (i, ch) in int.chars().enumerate() {
            if i > 0 && (int.len() - i) % 3 == 0 {
                grouped.push(',');
            }
            grouped.push(ch);
        }
        match frac {
            Some(f) => format!("${grouped}.{f}"),
            None => format!("${grouped}"),
        }
    }
}

impl fmt::Display for NanoUsd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_usd())
    }
}

/// Renders bytes with the largest decimal unit that divides evenly, else
/// one decimal place of the largest unit not exceeding the value.
pub fn format_bytes(bytes: u64) -> String {
    const UNITS: [(u64, &str); 5] = [(PB, "PB"), (TB, "TB"), (GB, "GB"), (MB, "MB"), (KB, "KB")];
    for (size, name) in UNITS {
        if bytes >= size {
            if bytes.is_multiple_of(size) {
                return format!("{} {name}", bytes / size);
            }
            return format!("{:.1} {name}", bytes as f64 / size as f64);
        }
    }
    format!("{bytes} B")
}

/// A non-negative ratio with six decimal digits of precision, stored as
/// parts per million so that products with byte counts stay exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ppm(pub u64);

impl Ppm {
    pub const ONE: Ppm = Ppm(1_000_000);

    /// Rounds to the nearest millionth; rejects negative or non-finite input.
    pub fn from_f64(value: f64) -> Option<Ppm> {
        if !value.is_finite() || value < 0.0 || value > (u64::MAX / 1_000_000) as f64 {
            return None;
        }
        Some(Ppm((value * 1e6).round() as u64))
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    /// `floor(value * self)`, or `None` on overflow of u64.
    pub fn apply(self, value: u64) -> Option<u64> {
        let wide = value as u128 * self.0 as u128 / 1_000_000;
        u64::try_from(wide).ok()
    }
}

impl Serialize for Ppm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Ppm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Ppm::from_f64(v).ok_or_else(|| {
            serde::de::Error::custom(format!("{v} is not a non-negative finite ratio"))
        })
    }
}

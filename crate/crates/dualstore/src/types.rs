//! Keys, values, transaction identifiers, and timestamps.
//!
//! Timestamps come in two variants. Scalar timestamps are plain integers and
//! totally ordered. Vector timestamps map replica names to counters and are
//! ordered pointwise, so two of them can be concurrent (neither `<=` the
//! other). The two variants never compare with each other: mixing them is a
//! [`Error::VariantMismatch`]. Snapshot, commit, and version timestamps all
//! draw from this one space.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A client-chosen key. Keys are compared for equality and hashed; nothing in
/// the store semantics relies on an order between keys. Output paths (dumps,
/// reports) sort by the raw string purely to keep emitted text deterministic.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Key(String);

impl Key {
    pub fn new(s: impl Into<String>) -> Self {
        Key(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Key {
    fn from(s: &str) -> Self {
        Key(s.to_string())
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A transaction identifier, unique for the lifetime of a system (and of a
/// journal file). The engine mints `t0, t1, ...`; history files may carry any
/// unique names.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxnId(String);

impl TxnId {
    pub fn new(s: impl Into<String>) -> Self {
        TxnId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for TxnId {
    fn from(s: &str) -> Self {
        TxnId(s.to_string())
    }
}

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A stored value: a signed integer or a byte string. Absence is expressed as
/// `Option<Value>` at API boundaries; no variant encodes it.
///
/// JSON form: integers are bare numbers, byte strings are arrays of bytes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Bytes(Vec<u8>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bytes(b) => {
                f.write_str("0x")?;
                for byte in b {
                    write!(f, "{byte:02x}")?;
                }
                Ok(())
            }
        }
    }
}

pub type ReplicaId = String;

/// A logical timestamp. See the module docs for the ordering rules.
///
/// Vector timestamps are kept normalized: zero entries are dropped on
/// construction and deserialization, so pointwise-equal vectors are also
/// structurally equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "TimestampRepr", into = "TimestampRepr")]
pub enum Timestamp {
    Scalar(u64),
    Vector(BTreeMap<ReplicaId, u64>),
}

/// Wire shape: `{"s": 7}` or `{"v": {"r1": 3}}`.
#[derive(Clone, Serialize, Deserialize)]
enum TimestampRepr {
    #[serde(rename = "s")]
    Scalar(u64),
    #[serde(rename = "v")]
    Vector(BTreeMap<ReplicaId, u64>),
}

impl From<TimestampRepr> for Timestamp {
    fn from(r: TimestampRepr) -> Self {
        match r {
            TimestampRepr::Scalar(n) => Timestamp::Scalar(n),
            TimestampRepr::Vector(m) => Timestamp::vector(m),
        }
    }
}

impl From<Timestamp> for TimestampRepr {
    fn from(t: Timestamp) -> Self {
        match t {
            Timestamp::Scalar(n) => TimestampRepr::Scalar(n),
            Timestamp::Vector(m) => TimestampRepr::Vector(m),
        }
    }
}

impl Timestamp {
    pub fn scalar(n: u64) -> Self {
        Timestamp::Scalar(n)
    }

    pub fn vector(entries: impl IntoIterator<Item = (ReplicaId, u64)>) -> Self {
        Timestamp::Vector(entries.into_iter().filter(|(_, n)| *n != 0).collect())
    }

    /// Canonical JSON encoding, used as a deterministic secondary sort key.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("timestamp serialization cannot fail")
    }

    /// Scalar value, or the sum of vector entries. Strictly monotone w.r.t.
    /// the partial order, which makes (weight, canonical encoding) a total
    /// order that extends it.
    pub fn weight(&self) -> u128 {
        match self {
            Timestamp::Scalar(n) => *n as u128,
            Timestamp::Vector(m) => m.values().map(|n| *n as u128).sum(),
        }
    }

    /// Total-order key extending the partial order: later timestamps always
    /// sort higher, and concurrent ones are broken deterministically.
    pub fn order_key(&self) -> (u128, String) {
        (self.weight(), self.canonical_json())
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Timestamp::Scalar(n) => write!(f, "{n}"),
            Timestamp::Vector(m) => {
                f.write_str("{")?;
                for (i, (r, n)) in m.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{r}:{n}")?;
                }
                f.write_str("}")
            }
        }
    }
}

/// Partial order on timestamps. Scalars compare numerically; vectors compare
/// pointwise with missing entries read as zero.
pub fn ts_leq(a: &Timestamp, b: &Timestamp) -> Result<bool> {
    match (a, b) {
        (Timestamp::Scalar(x), Timestamp::Scalar(y)) => Ok(x <= y),
        (Timestamp::Vector(x), Timestamp::Vector(y)) => {
            Ok(x.iter().all(|(r, n)| y.get(r).copied().unwrap_or(0) >= *n))
        }
        _ => Err(Error::VariantMismatch),
    }
}

/// Strict partial order: `a <= b` and `a != b`.
pub fn ts_lt(a: &Timestamp, b: &Timestamp) -> Result<bool> {
    Ok(ts_leq(a, b)? && a != b)
}

/// Neither `a <= b` nor `b <= a`. Always false for scalars.
pub fn ts_concurrent(a: &Timestamp, b: &Timestamp) -> Result<bool> {
    Ok(!ts_leq(a, b)? && !ts_leq(b, a)?)
}

/// A (dependence, version) timestamp pair with `dep <= ver`: everything up to
/// `dep` is a dependency of the write stamped `ver`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Otsp {
    dep: Timestamp,
    ver: Timestamp,
}

impl Otsp {
    pub fn new(dep: Timestamp, ver: Timestamp) -> Result<Self> {
        if !ts_leq(&dep, &ver)? {
            return Err(Error::InvariantViolation(format!(
                "dependence timestamp {dep} exceeds version timestamp {ver}"
            )));
        }
        Ok(Otsp { dep, ver })
    }

    pub fn dep(&self) -> &Timestamp {
        &self.dep
    }

    pub fn ver(&self) -> &Timestamp {
        &self.ver
    }
}

/// Strict order on timestamp pairs: `a` precedes `b` when everything `a`
/// wrote is settled before `b`'s dependencies start, i.e. `a.ver < b.dep`.
pub fn otsp_precedes(a: &Otsp, b: &Otsp) -> Result<bool> {
    ts_lt(&a.ver, &b.dep)
}

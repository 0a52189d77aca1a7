//! The update-effect algebra.
//!
//! An effect describes how a write transforms the value of one key:
//!
//! * [`Effect::LwwAssign`] replaces the value outright; concurrent assigns are
//!   reconciled last-writer-wins by tag.
//! * [`Effect::CounterAssign`] resets an integer counter to a constant.
//! * [`Effect::CounterIncr`] adds deltas to a counter. Each delta is tagged
//!   with the transaction that issued it, which is what makes merging safe:
//!   when the same increment reaches a merge along two paths it must count
//!   once, not twice.
//!
//! Effects compose sequentially (`compose`, left to right): an assignment
//! masks whatever precedes it, and an assignment followed by a delta folds
//! into a new assignment. Composition at the bare-effect level performs that
//! fold numerically and is the algebra the property suite checks.
//!
//! Stores and the engine do not track bare effects, though. Folding a delta
//! into a constant erases who contributed it, and without that provenance a
//! later merge cannot deduplicate shared history. They track an
//! [`EffectState`]: the most recent assignment (the base) plus the still
//! origin-tagged deltas composed on top of it (the pending set). A state with
//! no base and no pending deltas is "bottom", the state of a key nobody has
//! written.
//!
//! Merging concurrent states ([`merge`]) is commutative, associative, and
//! idempotent: bases are reconciled by a deterministic total order on their
//! tags, pending deltas by keyed union (at most one entry per origin).

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::types::{Timestamp, TxnId, Value};

/// Increment deltas keyed by originating transaction; at most one entry per
/// origin. Serializes as a sorted list of `[origin, delta]` pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DeltaSet(std::collections::BTreeMap<TxnId, i64>);

impl DeltaSet {
    pub fn new() -> Self {
        DeltaSet::default()
    }

    pub fn singleton(origin: TxnId, delta: i64) -> Self {
        DeltaSet(std::iter::once((origin, delta)).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, origin: &TxnId) -> Option<i64> {
        self.0.get(origin).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TxnId, i64)> {
        self.0.iter().map(|(o, d)| (o, *d))
    }

    /// Net sum of all deltas, checked.
    pub fn total(&self) -> Result<i64> {
        let mut acc: i64 = 0;
        for d in self.0.values() {
            acc = acc.checked_add(*d).ok_or(Error::Overflow)?;
        }
        Ok(acc)
    }

    /// Sequential composition: deltas from the same origin accumulate.
    pub fn compose_sum(&self, other: &DeltaSet) -> Result<DeltaSet> {
        let mut out = self.0.clone();
        for (origin, delta) in &other.0 {
            let entry = out.entry(origin.clone()).or_insert(0);
            *entry = entry.checked_add(*delta).ok_or(Error::Overflow)?;
        }
        Ok(DeltaSet(out))
    }

    /// Merge union. With `dedup` (the real semantics) an origin present on
    /// both sides contributes once; differing deltas for one origin cannot
    /// arise from a validated history, and the larger one is kept so the
    /// union stays commutative, associative, and idempotent. With `dedup`
    /// off the shared origins are summed instead; that is the planted fault
    /// the differential harness is expected to catch.
    pub fn union(&self, other: &DeltaSet, dedup: bool) -> Result<DeltaSet> {
        let mut out = self.0.clone();
        for (origin, delta) in &other.0 {
            match out.get_mut(origin) {
                None => {
                    out.insert(origin.clone(), *delta);
                }
                Some(existing) => {
                    if dedup {
                        *existing = (*existing).max(*delta);
                    } else {
                        *existing = existing.checked_add(*delta).ok_or(Error::Overflow)?;
                    }
                }
            }
        }
        Ok(DeltaSet(out))
    }
}

impl FromIterator<(TxnId, i64)> for DeltaSet {
    fn from_iter<I: IntoIterator<Item = (TxnId, i64)>>(iter: I) -> Self {
        DeltaSet(iter.into_iter().collect())
    }
}

impl Serialize for DeltaSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter())
    }
}

impl<'de> Deserialize<'de> for DeltaSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs: Vec<(TxnId, i64)> = Vec::deserialize(d)?;
        let mut map = std::collections::BTreeMap::new();
        for (origin, delta) in pairs {
            if map.insert(origin.clone(), delta).is_some() {
                return Err(D::Error::custom(format!("duplicate delta origin {origin}")));
            }
        }
        Ok(DeltaSet(map))
    }
}

/// A single update effect.
///
/// JSON forms: `{"lww":{"val":27,"tag":{"s":1}}}`,
/// `{"cassign":{"val":0,"tag":{"s":0}}}`, `{"cincr":[["t1",1]]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Effect {
    #[serde(rename = "lww")]
    LwwAssign { val: Value, tag: Timestamp },
    #[serde(rename = "cassign")]
    CounterAssign { val: i64, tag: Timestamp },
    #[serde(rename = "cincr")]
    CounterIncr(DeltaSet),
}

impl Effect {
    pub fn lww(val: Value, tag: Timestamp) -> Self {
        Effect::LwwAssign { val, tag }
    }

    pub fn counter_assign(val: i64, tag: Timestamp) -> Self {
        Effect::CounterAssign { val, tag }
    }

    pub fn incr(origin: TxnId, delta: i64) -> Self {
        Effect::CounterIncr(DeltaSet::singleton(origin, delta))
    }

    /// True for the two assignment variants.
    pub fn is_assign(&self) -> bool {
        !matches!(self, Effect::CounterIncr(_))
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Effect::LwwAssign { val, .. } => write!(f, "lww_{val}"),
            Effect::CounterAssign { val, .. } => write!(f, "assign_{val}"),
            Effect::CounterIncr(d) => match d.total() {
                Ok(n) => write!(f, "incr_{n}"),
                Err(_) => write!(f, "incr_overflow"),
            },
        }
    }
}

/// Apply a single effect to an optional current value.
///
/// Assignments produce their constant regardless of the input. A delta needs
/// an integer to add to: applying one to an absent value is an
/// [`Error::ImproperSequence`], to a byte string an [`Error::TypeMismatch`].
pub fn apply_value(e: &Effect, v: Option<&Value>) -> Result<Value> {
    match e {
        Effect::LwwAssign { val, .. } => Ok(val.clone()),
        Effect::CounterAssign { val, .. } => Ok(Value::Int(*val)),
        Effect::CounterIncr(deltas) => match v {
            None => Err(Error::ImproperSequence),
            Some(Value::Int(n)) => {
                Ok(Value::Int(n.checked_add(deltas.total()?).ok_or(Error::Overflow)?))
            }
            Some(Value::Bytes(_)) => {
                Err(Error::TypeMismatch("cannot increment a byte-string value".into()))
            }
        },
    }
}

/// Sequential composition of optional effects, left to right. `None` is the
/// identity. An assignment masks everything before it; an assignment followed
/// by a delta folds into a new assignment with the same tag; deltas compose
/// by summing per origin.
///
/// The fold here is numeric and loses delta provenance, which is exactly why
/// stores keep an [`EffectState`] instead of a composed effect. Increments
/// fold only into counter assignments; folding one into an `LwwAssign` would
/// silently coerce a register into a counter, so it reports
/// [`Error::TypeMismatch`].
pub fn compose(e1: Option<&Effect>, e2: Option<&Effect>) -> Result<Option<Effect>> {
    let (a, b) = match (e1, e2) {
        (None, _) => return Ok(e2.cloned()),
        (_, None) => return Ok(e1.cloned()),
        (Some(a), Some(b)) => (a, b),
    };
    match (a, b) {
        // A later assignment masks anything.
        (_, Effect::LwwAssign { .. }) | (_, Effect::CounterAssign { .. }) => Ok(Some(b.clone())),
        (Effect::CounterAssign { val, tag }, Effect::CounterIncr(d)) => {
            let folded = val.checked_add(d.total()?).ok_or(Error::Overflow)?;
            Ok(Some(Effect::CounterAssign { val: folded, tag: tag.clone() }))
        }
        (Effect::LwwAssign { .. }, Effect::CounterIncr(_)) => {
            Err(Error::TypeMismatch("cannot increment over a last-writer-wins assignment".into()))
        }
        (Effect::CounterIncr(d1), Effect::CounterIncr(d2)) => {
            Ok(Some(Effect::CounterIncr(d1.compose_sum(d2)?)))
        }
    }
}

/// The assignment at the root of a compacted state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseAssign {
    #[serde(rename = "lww")]
    Lww { val: Value, tag: Timestamp },
    #[serde(rename = "cassign")]
    Counter { val: i64, tag: Timestamp },
}

impl BaseAssign {
    pub fn tag(&self) -> &Timestamp {
        match self {
            BaseAssign::Lww { tag, .. } | BaseAssign::Counter { tag, .. } => tag,
        }
    }

    fn is_counter(&self) -> bool {
        matches!(self, BaseAssign::Counter { .. })
    }

    /// Deterministic total order for reconciling concurrent bases: later tags
    /// always win (the tag weight extends the partial order), and genuine
    /// ties fall back to the canonical encodings.
    pub(crate) fn order_key(&self) -> (u128, String, String) {
        let (w, tag_json) = self.tag().order_key();
        let payload = serde_json::to_string(self).expect("base serialization cannot fail");
        (w, tag_json, payload)
    }
}

impl From<BaseAssign> for Effect {
    fn from(b: BaseAssign) -> Effect {
        match b {
            BaseAssign::Lww { val, tag } => Effect::LwwAssign { val, tag },
            BaseAssign::Counter { val, tag } => Effect::CounterAssign { val, tag },
        }
    }
}

/// Controls the merge semantics. `counter_dedup` is on in the real algebra;
/// turning it off re-applies shared increments and exists only as a planted
/// fault for the differential harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MergePolicy {
    pub counter_dedup: bool,
}

impl Default for MergePolicy {
    fn default() -> Self {
        MergePolicy { counter_dedup: true }
    }
}

/// A compacted effect sequence: the latest assignment plus the origin-tagged
/// deltas composed after it. This is what stores persist and buffers hold; it
/// carries exactly the provenance merge needs for deduplication.
///
/// A state without a base is either bottom (nothing at all) or delta-only,
/// which arises from composing increments over nothing. Delta-only states can
/// be stored in buffers but cannot produce a value.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectState {
    pub base: Option<BaseAssign>,
    #[serde(default, skip_serializing_if = "DeltaSet::is_empty")]
    pub pending: DeltaSet,
}

impl EffectState {
    /// The state of a key nobody has written.
    pub fn bottom() -> Self {
        EffectState::default()
    }

    pub fn is_bottom(&self) -> bool {
        self.base.is_none() && self.pending.is_empty()
    }

    /// True when the state resolves to a concrete value, i.e. it is rooted in
    /// an assignment.
    pub fn is_assign(&self) -> bool {
        self.base.is_some()
    }

    pub fn from_effect(e: &Effect) -> Result<Self> {
        EffectState::bottom().apply_effect(e)
    }

    /// Sequential composition with one more effect, keeping provenance: a new
    /// assignment replaces the base and clears pending deltas (their origins
    /// are absorbed by the new constant); an increment joins the pending set,
    /// summing with this state's own prior delta for the same origin.
    pub fn apply_effect(&self, e: &Effect) -> Result<EffectState> {
        match e {
            Effect::LwwAssign { val, tag } => Ok(EffectState {
                base: Some(BaseAssign::Lww { val: val.clone(), tag: tag.clone() }),
                pending: DeltaSet::new(),
            }),
            Effect::CounterAssign { val, tag } => Ok(EffectState {
                base: Some(BaseAssign::Counter { val: *val, tag: tag.clone() }),
                pending: DeltaSet::new(),
            }),
            Effect::CounterIncr(d) => {
                if matches!(self.base, Some(BaseAssign::Lww { .. })) {
                    return Err(Error::TypeMismatch(
                        "cannot increment over a last-writer-wins assignment".into(),
                    ));
                }
                Ok(EffectState { base: self.base.clone(), pending: self.pending.compose_sum(d)? })
            }
        }
    }

    /// The value this state denotes, starting from nothing. Bottom denotes
    /// absence; a delta-only state cannot be evaluated.
    pub fn value(&self) -> Result<Option<Value>> {
        match &self.base {
            None => {
                if self.pending.is_empty() {
                    Ok(None)
                } else {
                    Err(Error::ImproperSequence)
                }
            }
            Some(BaseAssign::Lww { val, .. }) => {
                debug_assert!(self.pending.is_empty(), "pending deltas over an lww base");
                Ok(Some(val.clone()))
            }
            Some(BaseAssign::Counter { val, .. }) => {
                let sum = val.checked_add(self.pending.total()?).ok_or(Error::Overflow)?;
                Ok(Some(Value::Int(sum)))
            }
        }
    }
}

impl fmt::Display for EffectState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.base {
            None if self.pending.is_empty() => f.write_str("bottom"),
            None => write!(f, "deltas_only({})", self.pending.total().map_or(0, |n| n)),
            Some(_) => match self.value() {
                Ok(Some(v)) => write!(f, "assign_{v}"),
                _ => f.write_str("assign_overflow"),
            },
        }
    }
}

/// Compact a whole effect sequence into a state. The empty sequence is
/// bottom; a non-empty sequence must begin with an assignment.
pub fn compact(seq: &[Effect]) -> Result<EffectState> {
    if let Some(first) = seq.first() {
        if !first.is_assign() {
            return Err(Error::ImproperSequence);
        }
    }
    let mut state = EffectState::bottom();
    for e in seq {
        state = state.apply_effect(e)?;
    }
    Ok(state)
}

/// Merge concurrent states under the default policy (dedup on).
pub fn merge(states: &[EffectState]) -> Result<EffectState> {
    merge_with(states, MergePolicy::default())
}

/// Merge concurrent states: commutative, associative, idempotent.
///
/// Bottom states are neutral. The surviving states must agree on kind: all
/// last-writer-wins, or all counter-flavored (counter bases and/or delta-only
/// states). Mixing an assignment-rooted state with a delta-only sibling means
/// some branch incremented a key that was never initialized in its past, so
/// it reports [`Error::ImproperSequence`].
///
/// Bases reconcile to the greatest under the total tag order; pending deltas
/// take the keyed union, so an increment that reached the merge along several
/// paths counts once.
pub fn merge_with(states: &[EffectState], policy: MergePolicy) -> Result<EffectState> {
    let live: Vec<&EffectState> = states.iter().filter(|s| !s.is_bottom()).collect();
    if live.is_empty() {
        return Ok(EffectState::bottom());
    }

    let with_base = live.iter().filter(|s| s.base.is_some()).count();
    if with_base != 0 && with_base != live.len() {
        return Err(Error::ImproperSequence);
    }

    let mut winner: Option<&BaseAssign> = None;
    if with_base > 0 {
        let lww_count =
            live.iter().filter(|s| matches!(s.base, Some(BaseAssign::Lww { .. }))).count();
        if lww_count != 0 && lww_count != live.len() {
            return Err(Error::TypeMismatch(
                "cannot merge last-writer-wins and counter states".into(),
            ));
        }
        for s in &live {
            let base = s.base.as_ref().expect("all live states carry a base here");
            match winner {
                None => winner = Some(base),
                Some(w) => {
                    if base.order_key() > w.order_key() {
                        winner = Some(base);
                    }
                }
            }
        }
        if !winner.expect("non-empty").is_counter() {
            // Register states carry no pending deltas; the winner is the merge.
            return Ok(EffectState { base: winner.cloned(), pending: DeltaSet::new() });
        }
    }

    let mut pending = DeltaSet::new();
    for s in &live {
        pending = pending.union(&s.pending, policy.counter_dedup)?;
    }
    Ok(EffectState { base: winner.cloned(), pending })
}

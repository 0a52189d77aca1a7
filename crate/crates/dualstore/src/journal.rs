//! The append-only backend: a redo log of transaction records.
//!
//! Nothing is materialized at commit time; the journal just appends. The
//! state of a key is recovered on demand by walking the log backwards:
//!
//! * the poststate of an update record is its predecessor's poststate with
//!   the update's effect composed on (for the updated key), where the
//!   predecessor is the same transaction's previous record;
//! * the poststate of a commit record is its predecessor's poststate;
//! * the poststate of a begin record is the merge of the poststates of the
//!   maximal commit records visible to its snapshot. No visible commits
//!   means bottom.
//!
//! A lookup at timestamp `ts` behaves like the begin record of a phantom
//! transaction with snapshot `ts`: merge the maximal commits settled before
//! `ts` and read the key's poststate.
//!
//! Record order carries the invariants: each transaction's records follow
//! its begin, and a commit record precedes the begin of any committed
//! transaction that depends on it, so evaluation never needs a forward
//! reference. Poststates are memoized per (record position, key); the memo
//! is invisible (commits clear it, since a new commit can extend what a
//! still-running transaction's begin would see).
//!
//! Journals persist to files: a `DSJL1\n` magic header followed by
//! length-prefixed JSON records (4-byte little-endian length each). Loading
//! re-validates every structural invariant before accepting the log.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::effects::{merge_with, Effect, EffectState};
use crate::error::{Error, Result};
use crate::store::{Semantics, StoreOps};
use crate::types::{ts_leq, ts_lt, Key, Timestamp, TxnId};

const MAGIC: &[u8] = b"DSJL1\n";
/// Upper bound on one serialized record; larger lengths mean corruption.
const MAX_RECORD_LEN: u32 = 16 * 1024 * 1024;

/// One log entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum JournalRecord {
    #[serde(rename = "begin")]
    BeginTxnRec { txn: TxnId, st: Timestamp },
    #[serde(rename = "update")]
    UpdateRec { txn: TxnId, key: Key, eff: Effect },
    #[serde(rename = "commit")]
    CommitTxnRec { txn: TxnId, st: Timestamp, ct: Timestamp },
}

impl JournalRecord {
    pub fn txn(&self) -> &TxnId {
        match self {
            JournalRecord::BeginTxnRec { txn, .. }
            | JournalRecord::UpdateRec { txn, .. }
            | JournalRecord::CommitTxnRec { txn, .. } => txn,
        }
    }
}

impl fmt::Display for JournalRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JournalRecord::BeginTxnRec { txn, st } => write!(f, "BeginTxnRec({txn}, {st})"),
            JournalRecord::UpdateRec { txn, key, eff } => {
                write!(f, "UpdateRec({txn}, {key}, {eff})")
            }
            JournalRecord::CommitTxnRec { txn, st, ct } => {
                write!(f, "CommitTxnRec({txn}, {st}, {ct})")
            }
        }
    }
}

/// The append-only store. Clones share nothing; the memo cache never travels.
#[derive(Debug, Default)]
pub struct Journal {
    semantics: Semantics,
    records: Vec<JournalRecord>,
    /// Memoized poststates per (record position, key).
    cache: Mutex<HashMap<(usize, Key), EffectState>>,
}

impl Clone for Journal {
    fn clone(&self) -> Self {
        Journal {
            semantics: self.semantics,
            records: self.records.clone(),
            cache: Mutex::new(HashMap::new()),
        }
    }
}

/// Equality is over the log contents; the memo cache and semantics switches
/// are not state.
impl PartialEq for Journal {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl Journal {
    pub fn new() -> Self {
        Journal::default()
    }

    pub fn with_semantics(semantics: Semantics) -> Self {
        Journal { semantics, ..Journal::default() }
    }

    pub fn records(&self) -> &[JournalRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn begin_of(&self, txn: &TxnId) -> Option<(usize, &Timestamp)> {
        self.records.iter().enumerate().find_map(|(p, r)| match r {
            JournalRecord::BeginTxnRec { txn: t, st } if t == txn => Some((p, st)),
            _ => None,
        })
    }

    fn commit_of(&self, txn: &TxnId) -> Option<(usize, &Timestamp, &Timestamp)> {
        self.records.iter().enumerate().find_map(|(p, r)| match r {
            JournalRecord::CommitTxnRec { txn: t, st, ct } if t == txn => Some((p, st, ct)),
            _ => None,
        })
    }

    /// Positions of the maximal commit records visible to a snapshot at
    /// `st`: commits settled before `st`, minus those settled before another
    /// visible commit's snapshot.
    pub fn max_vis(&self, st: &Timestamp) -> Result<Vec<usize>> {
        let mut visible: Vec<(usize, &Timestamp, &Timestamp)> = Vec::new();
        for (p, r) in self.records.iter().enumerate() {
            if let JournalRecord::CommitTxnRec { st: cst, ct, .. } = r {
                if self.semantics.visibility.sees(ct, st)? {
                    visible.push((p, cst, ct));
                }
            }
        }
        let mut maximal = Vec::new();
        for (p, _, ct) in &visible {
            let mut dominated = false;
            for (_, ost, _) in &visible {
                if ts_lt(ct, ost)? {
                    dominated = true;
                    break;
                }
            }
            if !dominated {
                maximal.push(*p);
            }
        }
        Ok(maximal)
    }

    /// The state of `key` after the record at `pos` took effect.
    pub fn poststate(&self, pos: usize, key: &Key) -> Result<EffectState> {
        self.eval(pos, key, true)
    }

    /// Same recursion with the memo bypassed end to end; exists so tests can
    /// check memoization never changes a result.
    pub fn poststate_uncached(&self, pos: usize, key: &Key) -> Result<EffectState> {
        self.eval(pos, key, false)
    }

    fn eval(&self, pos: usize, key: &Key, memo: bool) -> Result<EffectState> {
        if memo {
            if let Some(hit) = self.cache.lock().expect("cache lock").get(&(pos, key.clone())) {
                return Ok(hit.clone());
            }
        }
        let record = self
            .records
            .get(pos)
            .ok_or_else(|| Error::InvariantViolation(format!("no record at position {pos}")))?;
        let state = match record {
            JournalRecord::BeginTxnRec { st, .. } => {
                let preds = self.max_vis(st)?;
                debug_assert!(
                    preds.iter().all(|p| *p < pos),
                    "visible commits must precede the begin that depends on them"
                );
                let states: Vec<EffectState> = preds
                    .into_iter()
                    .map(|p| self.eval(p, key, memo))
                    .collect::<Result<_>>()?;
                merge_with(&states, self.semantics.merge)?
            }
            JournalRecord::UpdateRec { txn, key: k, eff } => {
                let pred = self.pred_of(pos, txn)?;
                let before = self.eval(pred, key, memo)?;
                if k == key {
                    before.apply_effect(eff)?
                } else {
                    before
                }
            }
            JournalRecord::CommitTxnRec { txn, .. } => {
                let pred = self.pred_of(pos, txn)?;
                self.eval(pred, key, memo)?
            }
        };
        if memo {
            self.cache.lock().expect("cache lock").insert((pos, key.clone()), state.clone());
        }
        Ok(state)
    }

    /// The previous record of the same transaction, strictly before `pos`.
    fn pred_of(&self, pos: usize, txn: &TxnId) -> Result<usize> {
        self.records[..pos]
            .iter()
            .rposition(|r| r.txn() == txn)
            .ok_or_else(|| {
                Error::InvariantViolation(format!(
                    "record at position {pos} has no predecessor for transaction {txn}"
                ))
            })
    }

    /// One record per line in log notation, e.g. `BeginTxnRec(t0, 0)`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    /// Serialize the log to a file: magic header, then length-prefixed JSON
    /// records.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(64 * self.records.len() + MAGIC.len());
        bytes.extend_from_slice(MAGIC);
        for r in &self.records {
            let body = serde_json::to_vec(r)
                .map_err(|e| Error::InvariantViolation(format!("unserializable record: {e}")))?;
            bytes.extend_from_slice(&(body.len() as u32).to_le_bytes());
            bytes.extend_from_slice(&body);
        }
        std::fs::write(path, bytes)?;
        Ok(())
    }

    /// Load a journal file, re-validating structure and ordering invariants.
    /// Corruption reports the zero-based index of the unreadable record.
    pub fn load(path: &Path, semantics: Semantics) -> Result<Journal> {
        let bytes = std::fs::read(path)?;
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::CorruptRecord(0));
        }
        let mut records = Vec::new();
        let mut rest = &bytes[MAGIC.len()..];
        let mut index = 0usize;
        while !rest.is_empty() {
            if rest.len() < 4 {
                return Err(Error::CorruptRecord(index));
            }
            let len = u32::from_le_bytes([rest[0], rest[1], rest[2], rest[3]]);
            if len > MAX_RECORD_LEN || rest.len() - 4 < len as usize {
                return Err(Error::CorruptRecord(index));
            }
            let body = &rest[4..4 + len as usize];
            let record: JournalRecord =
                serde_json::from_slice(body).map_err(|_| Error::CorruptRecord(index))?;
            records.push(record);
            rest = &rest[4 + len as usize..];
            index += 1;
        }
        validate_records(&records)?;
        Ok(Journal { semantics, records, cache: Mutex::new(HashMap::new()) })
    }

    /// Appends with the commit-side ordering checks shared by the engine
    /// path and direct use.
    fn append_commit_checked(&mut self, txn: &TxnId, st: &Timestamp, ct: &Timestamp) -> Result<()> {
        let (begin_pos, begin_st) = self.begin_of(txn).ok_or_else(|| Error::UnknownTxn(txn.clone()))?;
        if self.commit_of(txn).is_some() {
            return Err(Error::DuplicateCommit(txn.clone()));
        }
        if begin_st != st {
            return Err(Error::InvariantViolation(format!(
                "commit snapshot {st} does not match begin snapshot {begin_st} for {txn}"
            )));
        }
        if !ts_leq(st, ct)? {
            return Err(Error::CtBeforeSnapshot { st: st.clone(), ct: ct.clone() });
        }
        for r in &self.records {
            if let JournalRecord::CommitTxnRec { ct: existing, .. } = r {
                if existing == ct {
                    return Err(Error::DuplicateCommitTs(ct.clone()));
                }
            }
        }
        // This commit must not land after the begin of an already committed
        // transaction that would depend on it, and the records after this
        // transaction's own begin must not include commits it depends on.
        for (p, r) in self.records.iter().enumerate() {
            match r {
                JournalRecord::BeginTxnRec { txn: j, st: stj } => {
                    if self.commit_of(j).is_some() && ts_lt(ct, stj)? {
                        return Err(Error::InvariantViolation(format!(
                            "commit at {ct} would follow the begin of committed transaction {j} that depends on it"
                        )));
                    }
                }
                JournalRecord::CommitTxnRec { ct: octs, .. } => {
                    if p > begin_pos && ts_lt(octs, st)? {
                        return Err(Error::InvariantViolation(format!(
                            "begin of {txn} precedes a commit at {octs} it depends on"
                        )));
                    }
                }
                _ => {}
            }
        }
        self.records.push(JournalRecord::CommitTxnRec {
            txn: txn.clone(),
            st: st.clone(),
            ct: ct.clone(),
        });
        // A fresh commit can extend what a still-running transaction's begin
        // sees, so memoized states may be stale.
        self.cache.lock().expect("cache lock").clear();
        Ok(())
    }
}

impl StoreOps for Journal {
    fn empty() -> Self {
        Journal::new()
    }

    fn do_begin(&mut self, txn: &TxnId, st: &Timestamp) -> Result<()> {
        if self.records.iter().any(|r| r.txn() == txn) {
            return Err(Error::DuplicateTxn(txn.clone()));
        }
        self.records.push(JournalRecord::BeginTxnRec { txn: txn.clone(), st: st.clone() });
        Ok(())
    }

    fn do_update(&mut self, txn: &TxnId, key: &Key, eff: &Effect) -> Result<()> {
        if self.begin_of(txn).is_none() {
            return Err(Error::UnknownTxn(txn.clone()));
        }
        if self.commit_of(txn).is_some() {
            return Err(Error::AlreadyCommitted(txn.clone()));
        }
        self.records.push(JournalRecord::UpdateRec {
            txn: txn.clone(),
            key: key.clone(),
            eff: eff.clone(),
        });
        Ok(())
    }

    fn do_commit(
        &mut self,
        txn: &TxnId,
        st: &Timestamp,
        _writes: &HashMap<Key, EffectState>,
        ct: &Timestamp,
    ) -> Result<()> {
        self.append_commit_checked(txn, st, ct)
    }

    /// A phantom begin at `ts`: merge the poststates of the maximal commits
    /// settled before it.
    fn lookup(&self, key: &Key, ts: &Timestamp) -> Result<EffectState> {
        let preds = self.max_vis(ts)?;
        let states: Vec<EffectState> =
            preds.into_iter().map(|p| self.poststate(p, key)).collect::<Result<_>>()?;
        merge_with(&states, self.semantics.merge)
    }
}

/// Structural validation of a full record list, used on load.
fn validate_records(records: &[JournalRecord]) -> Result<()> {
    let mut begun: HashMap<TxnId, (usize, Timestamp)> = HashMap::new();
    let mut committed: HashMap<TxnId, (usize, Timestamp)> = HashMap::new();
    let mut cts: Vec<Timestamp> = Vec::new();

    let bad = |pos: usize, msg: String| Error::InvariantViolation(format!("record {pos}: {msg}"));

    for (pos, r) in records.iter().enumerate() {
        match r {
            JournalRecord::BeginTxnRec { txn, st } => {
                if begun.contains_key(txn) {
                    return Err(bad(pos, format!("duplicate begin for {txn}")));
                }
                begun.insert(txn.clone(), (pos, st.clone()));
            }
            JournalRecord::UpdateRec { txn, .. } => {
                if !begun.contains_key(txn) {
                    return Err(bad(pos, format!("update for {txn} precedes its begin")));
                }
                if committed.contains_key(txn) {
                    return Err(bad(pos, format!("update for {txn} follows its commit")));
                }
            }
            JournalRecord::CommitTxnRec { txn, st, ct } => {
                let Some((_, begin_st)) = begun.get(txn) else {
                    return Err(bad(pos, format!("commit for {txn} precedes its begin")));
                };
                if committed.contains_key(txn) {
                    return Err(bad(pos, format!("duplicate commit for {txn}")));
                }
                if begin_st != st {
                    return Err(bad(pos, format!("commit snapshot differs from begin for {txn}")));
                }
                if !ts_leq(st, ct).map_err(|e| bad(pos, e.to_string()))? {
                    return Err(bad(pos, format!("commit timestamp {ct} precedes snapshot {st}")));
                }
                if cts.iter().any(|existing| existing == ct) {
                    return Err(bad(pos, format!("commit timestamp {ct} reused")));
                }
                cts.push(ct.clone());
                committed.insert(txn.clone(), (pos, ct.clone()));
            }
        }
    }

    // A committed transaction's begin must follow every commit it depends on.
    for (txn, (begin_pos, st)) in &begun {
        if !committed.contains_key(txn) {
            continue;
        }
        for (pos, r) in records.iter().enumerate().skip(*begin_pos + 1) {
            if let JournalRecord::CommitTxnRec { ct, .. } = r {
                if ts_lt(ct, st).map_err(|e| bad(pos, e.to_string()))? {
                    return Err(bad(
                        pos,
                        format!("commit at {ct} follows the begin of {txn} that depends on it"),
                    ));
                }
            }
        }
    }
    Ok(())
}

//! A reference evaluator used to cross-check both backends.
//!
//! It answers the same question as a store lookup (what does this key hold
//! at this timestamp?) but by a deliberately different route: no engine, no
//! version table, no log, no memoization. The history is indexed into
//! committed transactions with their raw per-key effect lists, and each
//! query recomputes everything from scratch:
//!
//! * the transactions settled strictly before the query point, thinned to
//!   the maximal ones (not settled before another visible snapshot);
//! * each maximal transaction contributes the recursively computed state at
//!   its own snapshot with its own effects replayed on top;
//! * contributions reconcile to the greatest base, and increments union
//!   keyed by origin so a shared ancestor's delta counts once.
//!
//! Aborted and unfinished transactions never enter the index, so inserting
//! discarded work into a history cannot change any answer here.
//!
//! The only shared vocabulary with the store path is the timestamp order
//! and the base tie-break key; agreement between this module and a backend
//! is therefore evidence about the backend, not an artifact of shared code.

use std::collections::{BTreeMap, HashMap};

use crate::effects::{BaseAssign, Effect};
use crate::error::{Error, Result};
use crate::history::{History, HistoryStep};
use crate::types::{ts_leq, Key, Timestamp, TxnId, Value};

struct OracleTxn {
    st: Timestamp,
    ct: Timestamp,
    effects: HashMap<Key, Vec<Effect>>,
}

/// Committed transactions only, keyed by id for deterministic scans.
pub struct OracleIndex {
    txns: BTreeMap<TxnId, OracleTxn>,
}

/// What a key holds from one vantage point: the winning assignment (if any)
/// plus per-origin increment totals not yet folded into it.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyOutcome {
    pub base: Option<BaseAssign>,
    pub incrs: BTreeMap<TxnId, i64>,
}

impl KeyOutcome {
    fn nothing() -> Self {
        KeyOutcome { base: None, incrs: BTreeMap::new() }
    }

    fn is_nothing(&self) -> bool {
        self.base.is_none() && self.incrs.is_empty()
    }

    fn apply(&mut self, origin: &TxnId, eff: &Effect) -> Result<()> {
        match eff {
            Effect::LwwAssign { val, tag } => {
                self.base = Some(BaseAssign::Lww { val: val.clone(), tag: tag.clone() });
                self.incrs.clear();
            }
            Effect::CounterAssign { val, tag } => {
                self.base = Some(BaseAssign::Counter { val: *val, tag: tag.clone() });
                self.incrs.clear();
            }
            Effect::CounterIncr(delta) => {
                if matches!(self.base, Some(BaseAssign::Lww { .. })) {
                    return Err(Error::TypeMismatch(format!(
                        "increment by {origin} over a last-writer-wins value"
                    )));
                }
                for (o, n) in delta.iter() {
                    let slot = self.incrs.entry(o.clone()).or_insert(0);
                    *slot = slot.checked_add(n).ok_or(Error::Overflow)?;
                }
            }
        }
        Ok(())
    }

    pub fn value(&self) -> Result<Option<Value>> {
        let Some(base) = &self.base else {
            if self.incrs.is_empty() {
                return Ok(None);
            }
            return Err(Error::ImproperSequence);
        };
        match base {
            BaseAssign::Lww { val, .. } => Ok(Some(val.clone())),
            BaseAssign::Counter { val, .. } => {
                let mut total = *val;
                for n in self.incrs.values() {
                    total = total.checked_add(*n).ok_or(Error::Overflow)?;
                }
                Ok(Some(Value::Int(total)))
            }
        }
    }
}

fn strictly_before(a: &Timestamp, b: &Timestamp) -> Result<bool> {
    Ok(ts_leq(a, b)? && !ts_leq(b, a)?)
}

/// Reconcile sibling outcomes. Empty contributions drop out; the rest must
/// agree on whether an assignment exists and which flavor it is. The
/// greatest base wins and increment sets union keyed by origin, a repeated
/// origin contributing its largest observed total.
fn reconcile(outcomes: Vec<KeyOutcome>) -> Result<KeyOutcome> {
    let live: Vec<KeyOutcome> = outcomes.into_iter().filter(|o| !o.is_nothing()).collect();
    if live.is_empty() {
        return Ok(KeyOutcome::nothing());
    }
    let with_base = live.iter().filter(|o| o.base.is_some()).count();
    if with_base != 0 && with_base != live.len() {
        return Err(Error::ImproperSequence);
    }
    let mut winner: Option<&BaseAssign> = None;
    if with_base > 0 {
        let lww = live
            .iter()
            .filter(|o| matches!(o.base, Some(BaseAssign::Lww { .. })))
            .count();
        if lww != 0 && lww != live.len() {
            return Err(Error::TypeMismatch(
                "cannot reconcile last-writer-wins and counter outcomes".into(),
            ));
        }
        for o in &live {
            let base = o.base.as_ref().expect("all live outcomes carry a base here");
            match winner {
                None => winner = Some(base),
                Some(w) => {
                    if base.order_key() > w.order_key() {
                        winner = Some(base);
                    }
                }
            }
        }
        if matches!(winner, Some(BaseAssign::Lww { .. })) {
            return Ok(KeyOutcome { base: winner.cloned(), incrs: BTreeMap::new() });
        }
    }
    let mut incrs: BTreeMap<TxnId, i64> = BTreeMap::new();
    for o in &live {
        for (origin, n) in &o.incrs {
            let slot = incrs.entry(origin.clone()).or_insert(*n);
            if *n > *slot {
                *slot = *n;
            }
        }
    }
    Ok(KeyOutcome { base: winner.cloned(), incrs })
}

impl OracleIndex {
    /// Index the committed transactions of a history. Reads are ignored;
    /// aborted and unfinished transactions are dropped.
    pub fn build(h: &History) -> OracleIndex {
        struct Open {
            st: Timestamp,
            effects: HashMap<Key, Vec<Effect>>,
        }
        let mut open: BTreeMap<TxnId, Open> = BTreeMap::new();
        let mut txns: BTreeMap<TxnId, OracleTxn> = BTreeMap::new();
        for step in h.steps() {
            match step {
                HistoryStep::Begin { txn, st } => {
                    open.insert(txn.clone(), Open { st: st.clone(), effects: HashMap::new() });
                }
                HistoryStep::Update { txn, key, eff } => {
                    if let Some(o) = open.get_mut(txn) {
                        o.effects.entry(key.clone()).or_default().push(eff.clone());
                    }
                }
                HistoryStep::Read { .. } => {}
                HistoryStep::Commit { txn, ct } => {
                    if let Some(o) = open.remove(txn) {
                        txns.insert(
                            txn.clone(),
                            OracleTxn { st: o.st, ct: ct.clone(), effects: o.effects },
                        );
                    }
                }
                HistoryStep::Abort { txn } => {
                    open.remove(txn);
                }
            }
        }
        OracleIndex { txns }
    }

    /// What `key` holds as seen from timestamp `at`, recomputed naively.
    pub fn outcome(&self, at: &Timestamp, key: &Key) -> Result<KeyOutcome> {
        let mut visible: Vec<(&TxnId, &OracleTxn)> = Vec::new();
        for (id, t) in &self.txns {
            if strictly_before(&t.ct, at)? {
                visible.push((id, t));
            }
        }
        let mut contributions = Vec::new();
        for (id, t) in &visible {
            let mut dominated = false;
            for (_, u) in &visible {
                if strictly_before(&t.ct, &u.st)? {
                    dominated = true;
                    break;
                }
            }
            if dominated {
                continue;
            }
            let mut outcome = self.outcome(&t.st, key)?;
            if let Some(effs) = t.effects.get(key) {
                for eff in effs {
                    outcome.apply(id, eff)?;
                }
            }
            contributions.push(outcome);
        }
        reconcile(contributions)
    }

    pub fn lookup(&self, key: &Key, at: &Timestamp) -> Result<Option<Value>> {
        self.outcome(at, key)?.value()
    }
}

//! The transaction engine: descriptors, lifecycle rules, and the commit
//! gate, generic over the backing store.
//!
//! A running transaction buffers its writes as composed per-key states and
//! never sees other in-flight work; its reads come from the buffer first and
//! otherwise from a store lookup at its own snapshot. Every rule is atomic:
//! all premises are checked before anything (engine bookkeeping or store)
//! mutates, so a rejected step leaves the system exactly as it was.
//!
//! Commit admission, in order:
//! 1. the transaction is running;
//! 2. the commit timestamp is not already taken by a committed transaction;
//! 3. the snapshot does not exceed the commit timestamp;
//! 4. no-invisible-commit: committing at `ct` must not slide under the
//!    snapshot of another transaction (see [`NictVariant`] for how far the
//!    check reaches);
//! 5. every written key resolves to an assignment-rooted state (a bare
//!    increment over nothing has no committable value);
//! 6. the store accepts the written states.
//!
//! Only then does the descriptor move to the committed set. The store sees
//! written keys only; buffer entries that exist because of reads stay
//! engine-internal.

use std::collections::{HashMap, HashSet};

use crate::effects::{Effect, EffectState};
use crate::error::{Error, Result};
use crate::history::HistoryStep;
use crate::store::StoreOps;
use crate::types::{ts_leq, ts_lt, Key, Timestamp, TxnId, Value};

/// How widely the no-invisible-commit premise quantifies.
///
/// The strong form forbids a commit timestamp below the snapshot of any
/// live or committed transaction. The refined forms only forbid it when the
/// committer actually wrote something the other transaction read, applied
/// to running transactions only or across the board. The refined forms keep
/// more schedules but allow commits that an append-only log cannot place
/// after a dependent reader, so the two backends can lawfully disagree on
/// histories the strong form would have rejected.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NictVariant {
    #[default]
    Strong,
    /// Read-set refinement against running transactions; committed
    /// transactions are still protected unconditionally.
    RefineRunning,
    /// Read-set refinement against running and committed transactions.
    RefineAll,
}

/// Per-transaction bookkeeping while it runs and after it settles.
#[derive(Clone, Debug, PartialEq)]
pub struct TxnDescriptor {
    pub id: TxnId,
    pub st: Timestamp,
    pub read_set: HashSet<Key>,
    pub write_set: HashSet<Key>,
    /// Buffered state per touched key: snapshot seed with this
    /// transaction's effects composed on.
    pub effect_buf: HashMap<Key, EffectState>,
    /// Set exactly when the descriptor moves to the committed set.
    pub ct: Option<Timestamp>,
}

impl TxnDescriptor {
    fn new(id: TxnId, st: Timestamp) -> Self {
        TxnDescriptor {
            id,
            st,
            read_set: HashSet::new(),
            write_set: HashSet::new(),
            effect_buf: HashMap::new(),
            ct: None,
        }
    }
}

/// The engine: a store plus transaction tables.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState<S> {
    store: S,
    running: HashMap<TxnId, TxnDescriptor>,
    committed: HashMap<TxnId, TxnDescriptor>,
    aborted: HashMap<TxnId, TxnDescriptor>,
    nict: NictVariant,
    next_id: usize,
}

impl<S: StoreOps> Default for SystemState<S> {
    fn default() -> Self {
        SystemState::new(NictVariant::Strong)
    }
}

impl<S: StoreOps> SystemState<S> {
    pub fn new(nict: NictVariant) -> Self {
        SystemState::with_store(S::empty(), nict)
    }

    pub fn with_store(store: S, nict: NictVariant) -> Self {
        SystemState {
            store,
            running: HashMap::new(),
            committed: HashMap::new(),
            aborted: HashMap::new(),
            nict,
            next_id: 0,
        }
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    pub fn running(&self) -> &HashMap<TxnId, TxnDescriptor> {
        &self.running
    }

    pub fn committed(&self) -> &HashMap<TxnId, TxnDescriptor> {
        &self.committed
    }

    pub fn aborted(&self) -> &HashMap<TxnId, TxnDescriptor> {
        &self.aborted
    }

    pub fn descriptor(&self, txn: &TxnId) -> Option<&TxnDescriptor> {
        self.running
            .get(txn)
            .or_else(|| self.committed.get(txn))
            .or_else(|| self.aborted.get(txn))
    }

    fn known(&self, txn: &TxnId) -> bool {
        self.descriptor(txn).is_some()
    }

    /// Fetch a running descriptor or say why it is not available.
    fn live(&self, txn: &TxnId) -> Result<&TxnDescriptor> {
        if let Some(d) = self.running.get(txn) {
            return Ok(d);
        }
        if self.committed.contains_key(txn) {
            return Err(Error::AlreadyCommitted(txn.clone()));
        }
        // Aborted transactions are gone for good; their id answers as unknown.
        Err(Error::UnknownTxn(txn.clone()))
    }

    /// Start a transaction under a caller-chosen id.
    pub fn begin_txn_as(&mut self, txn: &TxnId, st: &Timestamp) -> Result<()> {
        if self.known(txn) {
            return Err(Error::DuplicateTxn(txn.clone()));
        }
        self.store.do_begin(txn, st)?;
        self.running.insert(txn.clone(), TxnDescriptor::new(txn.clone(), st.clone()));
        Ok(())
    }

    /// Start a transaction under the next free minted id (`t0`, `t1`, ...).
    pub fn begin_txn(&mut self, st: &Timestamp) -> Result<TxnId> {
        loop {
            let id = TxnId::new(format!("t{}", self.next_id));
            self.next_id += 1;
            if !self.known(&id) {
                self.begin_txn_as(&id, st)?;
                return Ok(id);
            }
        }
    }

    /// The state a first touch of `key` would see: the buffer if the
    /// transaction already touched it, otherwise a snapshot lookup.
    fn seeded_state(&self, desc: &TxnDescriptor, key: &Key) -> Result<(EffectState, bool)> {
        match desc.effect_buf.get(key) {
            Some(state) => Ok((state.clone(), false)),
            None => Ok((self.store.lookup(key, &desc.st)?, true)),
        }
    }

    /// Read a key within a transaction. The first touch of a key seeds the
    /// buffer from the snapshot and joins the read set; a read that cannot
    /// produce a value (nothing assigned yet) rejects without touching
    /// anything.
    pub fn read(&mut self, txn: &TxnId, key: &Key) -> Result<Value> {
        let desc = self.live(txn)?;
        let (state, fresh) = self.seeded_state(desc, key)?;
        if !state.is_assign() {
            return Err(Error::UninitializedRead(key.clone()));
        }
        let value = state.value()?.expect("assigned state has a value");
        let desc = self.running.get_mut(txn).expect("checked running above");
        if fresh {
            desc.effect_buf.insert(key.clone(), state);
        }
        desc.read_set.insert(key.clone());
        Ok(value)
    }

    /// Apply one effect within a transaction. The first touch seeds the
    /// buffer from the snapshot (joining the read set); the effect composes
    /// onto the buffered state before the store hears about it, so a
    /// malformed composition rejects with nothing changed.
    pub fn update(&mut self, txn: &TxnId, key: &Key, eff: &Effect) -> Result<()> {
        let desc = self.live(txn)?;
        if let Effect::CounterIncr(delta) = eff {
            for (origin, _) in delta.iter() {
                if origin != txn {
                    return Err(Error::InvariantViolation(format!(
                        "increment by {txn} carries origin {origin}"
                    )));
                }
            }
        }
        let (seed, fresh) = self.seeded_state(desc, key)?;
        let next = seed.apply_effect(eff)?;
        self.store.do_update(txn, key, eff)?;
        let desc = self.running.get_mut(txn).expect("checked running above");
        desc.effect_buf.insert(key.clone(), next);
        if fresh {
            desc.read_set.insert(key.clone());
        }
        desc.write_set.insert(key.clone());
        Ok(())
    }

    /// Drop a running transaction. Its buffered effects never reach lookup
    /// results on either backend.
    pub fn abort_txn(&mut self, txn: &TxnId) -> Result<()> {
        self.live(txn)?;
        let desc = self.running.remove(txn).expect("checked running above");
        self.aborted.insert(txn.clone(), desc);
        Ok(())
    }

    /// The smallest-id transaction the no-invisible-commit premise would
    /// protect from this commit, if any. Scanning in id order keeps the
    /// reported conflict stable across runs.
    fn nict_conflict(
        &self,
        committer: &TxnId,
        ct: &Timestamp,
        writes: &HashSet<Key>,
    ) -> Result<Option<TxnId>> {
        let mut others: Vec<(&TxnDescriptor, bool)> = self
            .running
            .values()
            .filter(|d| &d.id != committer)
            .map(|d| (d, true))
            .chain(self.committed.values().map(|d| (d, false)))
            .collect();
        others.sort_by(|(a, _), (b, _)| a.id.cmp(&b.id));
        for (other, is_running) in others {
            if !ts_lt(ct, &other.st)? {
                continue;
            }
            let refined = match self.nict {
                NictVariant::Strong => false,
                NictVariant::RefineRunning => is_running,
                NictVariant::RefineAll => true,
            };
            if refined && !writes.iter().any(|k| other.read_set.contains(k)) {
                continue;
            }
            return Ok(Some(other.id.clone()));
        }
        Ok(None)
    }

    /// Commit a running transaction at `ct`. See the module docs for the
    /// premise order; nothing mutates unless every premise holds.
    pub fn commit_txn(&mut self, txn: &TxnId, ct: &Timestamp) -> Result<()> {
        let desc = self.live(txn)?;
        if self.committed.values().any(|d| d.ct.as_ref() == Some(ct)) {
            return Err(Error::DuplicateCommitTs(ct.clone()));
        }
        if !ts_leq(&desc.st, ct)? {
            return Err(Error::CtBeforeSnapshot { st: desc.st.clone(), ct: ct.clone() });
        }
        if let Some(victim) = self.nict_conflict(txn, ct, &desc.write_set)? {
            return Err(Error::NIctViolation { txn: victim, ct: ct.clone() });
        }
        let mut written: Vec<&Key> = desc.write_set.iter().collect();
        written.sort_by_key(|k| k.as_str());
        for k in &written {
            let state = desc.effect_buf.get(*k).expect("written keys are buffered");
            if !state.is_assign() {
                return Err(Error::NonAssignCommit((*k).clone()));
            }
        }
        let writes: HashMap<Key, EffectState> = written
            .iter()
            .map(|k| ((*k).clone(), desc.effect_buf[*k].clone()))
            .collect();
        let desc = self.running.get(txn).expect("checked running above");
        self.store.do_commit(txn, &desc.st, &writes, ct)?;
        let mut desc = self.running.remove(txn).expect("checked running above");
        desc.ct = Some(ct.clone());
        self.committed.insert(txn.clone(), desc);
        Ok(())
    }

    /// Drive one history step. Reads return their value; every other step
    /// returns nothing.
    pub fn run_step(&mut self, step: &HistoryStep) -> Result<Option<Value>> {
        match step {
            HistoryStep::Begin { txn, st } => self.begin_txn_as(txn, st).map(|_| None),
            HistoryStep::Update { txn, key, eff } => self.update(txn, key, eff).map(|_| None),
            HistoryStep::Read { txn, key, .. } => self.read(txn, key).map(Some),
            HistoryStep::Commit { txn, ct } => self.commit_txn(txn, ct).map(|_| None),
            HistoryStep::Abort { txn } => self.abort_txn(txn).map(|_| None),
        }
    }
}

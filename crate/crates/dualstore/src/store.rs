//! Backend-neutral store interface.
//!
//! Both backends expose the same five operations and are interchangeable
//! under the transaction engine: begin, per-key lookup at a timestamp,
//! buffered update, and atomic commit. What differs is the representation;
//! the visible behavior must not.

use std::collections::HashMap;

use crate::effects::{Effect, EffectState, MergePolicy};
use crate::error::Result;
use crate::types::{Key, Timestamp, TxnId};

/// Which versions a lookup at `ts` may see. `Strict` is the real rule
/// (strictly before `ts`); `Inclusive` widens the cut to `<=` and exists only
/// as a planted fault for the differential harness.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Visibility {
    #[default]
    Strict,
    Inclusive,
}

impl Visibility {
    /// The visibility cut: is a version/commit stamped `stamp` visible to a
    /// reader at `at`?
    pub fn sees(&self, stamp: &Timestamp, at: &Timestamp) -> Result<bool> {
        match self {
            Visibility::Strict => crate::types::ts_lt(stamp, at),
            Visibility::Inclusive => crate::types::ts_leq(stamp, at),
        }
    }
}

/// Store-level semantics switches. The default is the real behavior; the
/// other settings plant known faults so the fuzz suite can prove it would
/// catch them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Semantics {
    pub visibility: Visibility,
    pub merge: MergePolicy,
}

/// One writer at a time per store value; lookups are read-only and safe to
/// run concurrently.
pub trait StoreOps {
    /// A fresh, empty store with default semantics.
    fn empty() -> Self
    where
        Self: Sized;

    /// Note a transaction start. Backends that don't track transactions
    /// accept anything here; the engine owns id freshness.
    fn do_begin(&mut self, txn: &TxnId, st: &Timestamp) -> Result<()>;

    /// Stage one update for a running transaction.
    fn do_update(&mut self, txn: &TxnId, key: &Key, eff: &Effect) -> Result<()>;

    /// Atomically publish a transaction's written states at commit timestamp
    /// `ct`. `writes` is the effect buffer restricted to the write set.
    /// Either every entry lands or none does.
    fn do_commit(
        &mut self,
        txn: &TxnId,
        st: &Timestamp,
        writes: &HashMap<Key, EffectState>,
        ct: &Timestamp,
    ) -> Result<()>;

    /// The state of `key` as of `ts`: the merge of the maximal visible
    /// versions. Bottom when nothing is visible.
    fn lookup(&self, key: &Key, ts: &Timestamp) -> Result<EffectState>;
}

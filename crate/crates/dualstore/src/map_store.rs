//! The eager, map-shaped backend.
//!
//! Every commit immediately materializes the committed state of each written
//! key under `(key, commit timestamp)`, together with the committing
//! transaction's snapshot timestamp as the version's dependence. Begin and
//! update are no-ops here; all the work happens at commit and lookup.
//!
//! A lookup at `ts` considers the versions of the key strictly before `ts`,
//! orders them by the (dependence, version) pair order, and merges the
//! maximal ones. Storing plain values would be too little information for
//! that merge: the maximal versions of a counter may share inherited
//! increments, which must count once. Versions therefore hold full
//! [`EffectState`]s, provenance included.

use std::collections::HashMap;

use crate::effects::{merge_with, EffectState};
use crate::error::{Error, Result};
use crate::store::{Semantics, StoreOps};
use crate::types::{ts_lt, Key, Timestamp, TxnId};

#[derive(Clone, Debug, PartialEq)]
struct VersionEntry {
    /// Commit timestamp this version was published at.
    version: Timestamp,
    /// Snapshot timestamp of the committing transaction.
    dep: Timestamp,
    /// Always assignment-based; commit enforces it.
    state: EffectState,
}

/// Versioned store keyed by `(key, commit timestamp)`. Entries are write-once.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MapStore {
    semantics: Semantics,
    versions: HashMap<Key, Vec<VersionEntry>>,
}

impl MapStore {
    pub fn new() -> Self {
        MapStore::default()
    }

    pub fn with_semantics(semantics: Semantics) -> Self {
        MapStore { semantics, versions: HashMap::new() }
    }

    fn entries(&self, key: &Key) -> &[VersionEntry] {
        self.versions.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The maximal visible versions of `key` at `ts` as (version, dependence,
    /// state) triples, sorted by version encoding for deterministic output.
    ///
    /// Version v1 precedes v2 when v1's version timestamp settles strictly
    /// before v2's dependence; the maximal set is an antichain of mutually
    /// concurrent versions.
    pub fn maximal_versions(
        &self,
        key: &Key,
        ts: &Timestamp,
    ) -> Result<Vec<(Timestamp, Timestamp, EffectState)>> {
        let mut candidates: Vec<&VersionEntry> = Vec::new();
        for e in self.entries(key) {
            if self.semantics.visibility.sees(&e.version, ts)? {
                candidates.push(e);
            }
        }
        let mut maximal: Vec<&VersionEntry> = Vec::new();
        for e in &candidates {
            let mut dominated = false;
            for other in &candidates {
                if ts_lt(&e.version, &other.dep)? {
                    dominated = true;
                    break;
                }
            }
            if !dominated {
                maximal.push(e);
            }
        }
        if cfg!(debug_assertions) {
            for a in &maximal {
                for b in &maximal {
                    debug_assert!(
                        !ts_lt(&a.version, &b.dep).unwrap_or(false),
                        "maximal versions must form an antichain"
                    );
                }
            }
        }
        let mut out: Vec<(Timestamp, Timestamp, EffectState)> = maximal
            .into_iter()
            .map(|e| (e.version.clone(), e.dep.clone(), e.state.clone()))
            .collect();
        out.sort_by(|a, b| a.0.canonical_json().cmp(&b.0.canonical_json()));
        Ok(out)
    }

    /// One line per stored version: `key <TAB> version <TAB> dep <TAB> state`,
    /// sorted by (key, version encoding). Stable byte-for-byte.
    pub fn dump(&self) -> String {
        let mut lines: Vec<(String, String, String)> = Vec::new();
        for (key, entries) in &self.versions {
            for e in entries {
                lines.push((
                    key.as_str().to_string(),
                    e.version.canonical_json(),
                    format!(
                        "{}\t{}\t{}\t{}",
                        key,
                        e.version.canonical_json(),
                        e.dep.canonical_json(),
                        serde_json::to_string(&e.state).expect("state serialization cannot fail"),
                    ),
                ));
            }
        }
        lines.sort();
        let mut out = String::new();
        for (_, _, line) in lines {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

impl StoreOps for MapStore {
    fn empty() -> Self {
        MapStore::new()
    }

    fn do_begin(&mut self, _txn: &TxnId, _st: &Timestamp) -> Result<()> {
        Ok(())
    }

    fn do_update(&mut self, _txn: &TxnId, _key: &Key, _eff: &crate::effects::Effect) -> Result<()> {
        Ok(())
    }

    /// Publishes one `(key, ct)` version per written key, carrying `st` as
    /// the dependence. Checks everything before touching the map so a
    /// rejected commit stores nothing.
    fn do_commit(
        &mut self,
        _txn: &TxnId,
        st: &Timestamp,
        writes: &HashMap<Key, EffectState>,
        ct: &Timestamp,
    ) -> Result<()> {
        let mut keys: Vec<&Key> = writes.keys().collect();
        keys.sort_by_key(|k| k.as_str().to_string());

        debug_assert!(
            crate::types::ts_leq(st, ct).unwrap_or(false),
            "commit timestamp must not precede the snapshot"
        );
        for k in &keys {
            let state = &writes[*k];
            if !state.is_assign() {
                return Err(Error::NonAssignCommit((*k).clone()));
            }
            if self.entries(k).iter().any(|e| e.version == *ct) {
                return Err(Error::OverwriteAttempt { key: (*k).clone(), version: ct.clone() });
            }
        }
        for k in keys {
            self.versions.entry(k.clone()).or_default().push(VersionEntry {
                version: ct.clone(),
                dep: st.clone(),
                state: writes[k].clone(),
            });
        }
        Ok(())
    }

    fn lookup(&self, key: &Key, ts: &Timestamp) -> Result<EffectState> {
        let maximal = self.maximal_versions(key, ts)?;
        let states: Vec<EffectState> = maximal.into_iter().map(|(_, _, s)| s).collect();
        merge_with(&states, self.semantics.merge)
    }
}

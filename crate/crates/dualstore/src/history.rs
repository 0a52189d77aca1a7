//! Histories: flat step lists that drive a system, with a JSONL wire form.
//!
//! One step per line, internally tagged by `"op"`:
//!
//! ```text
//! {"op":"begin","txn":"t0","st":{"s":0}}
//! {"op":"update","txn":"t0","key":"a","eff":{"cassign":{"val":0,"tag":{"s":0}}}}
//! {"op":"read","txn":"t1","key":"a","expect":3}
//! {"op":"commit","txn":"t0","ct":{"s":1}}
//! {"op":"abort","txn":"t2"}
//! ```
//!
//! `validate` checks only step structure: transactions begin before they are
//! used, terminate at most once, and go quiet afterwards; timestamps use one
//! variant throughout; increments carry the stepping transaction as origin.
//! Commit ordering rules (snapshot bounds, timestamp reuse, interleaving
//! constraints) are the engine's business and are reported when the history
//! runs, not here.

use serde::{Deserialize, Serialize};

use crate::effects::Effect;
use crate::error::{Error, Result};
use crate::types::{Key, Timestamp, TxnId, Value};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum HistoryStep {
    Begin {
        txn: TxnId,
        st: Timestamp,
    },
    Update {
        txn: TxnId,
        key: Key,
        eff: Effect,
    },
    Read {
        txn: TxnId,
        key: Key,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect: Option<Value>,
    },
    Commit {
        txn: TxnId,
        ct: Timestamp,
    },
    Abort {
        txn: TxnId,
    },
}

impl HistoryStep {
    pub fn txn(&self) -> &TxnId {
        match self {
            HistoryStep::Begin { txn, .. }
            | HistoryStep::Update { txn, .. }
            | HistoryStep::Read { txn, .. }
            | HistoryStep::Commit { txn, .. }
            | HistoryStep::Abort { txn } => txn,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History(pub Vec<HistoryStep>);

impl History {
    pub fn steps(&self) -> &[HistoryStep] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Parse JSONL text. Blank lines are skipped; errors carry the one-based
/// line number.
pub fn parse_history(text: &str) -> Result<History> {
    let mut steps = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let step: HistoryStep = serde_json::from_str(line)
            .map_err(|e| Error::ParseError { line: idx + 1, msg: e.to_string() })?;
        steps.push(step);
    }
    Ok(History(steps))
}

/// One compact JSON object per line, trailing newline included.
pub fn serialize_history(h: &History) -> String {
    let mut out = String::new();
    for step in h.steps() {
        out.push_str(&serde_json::to_string(step).expect("steps serialize"));
        out.push('\n');
    }
    out
}

#[derive(Clone, Copy, PartialEq)]
enum TxnPhase {
    Running,
    Done,
}

/// Structural validation; errors carry the zero-based step index.
pub fn validate(h: &History) -> Result<()> {
    use std::collections::HashMap;
    let mut phase: HashMap<&TxnId, TxnPhase> = HashMap::new();
    let mut variant: Option<bool> = None; // true = scalar timestamps

    let bad = |step: usize, msg: String| Error::ValidationError { step, msg };

    let mut check_variant = |step: usize, ts: &Timestamp| -> Result<()> {
        let scalar = matches!(ts, Timestamp::Scalar(_));
        match variant {
            None => {
                variant = Some(scalar);
                Ok(())
            }
            Some(v) if v == scalar => Ok(()),
            Some(_) => Err(bad(step, "mixed scalar and vector timestamps".to_string())),
        }
    };

    for (i, step) in h.steps().iter().enumerate() {
        match step {
            HistoryStep::Begin { txn, st } => {
                if phase.contains_key(txn) {
                    return Err(bad(i, format!("transaction {txn} already begun")));
                }
                check_variant(i, st)?;
                phase.insert(txn, TxnPhase::Running);
            }
            HistoryStep::Update { txn, key: _, eff } => {
                match phase.get(txn) {
                    Some(TxnPhase::Running) => {}
                    Some(TxnPhase::Done) => {
                        return Err(bad(i, format!("update for terminated transaction {txn}")))
                    }
                    None => return Err(bad(i, format!("update before begin of {txn}"))),
                }
                match eff {
                    Effect::LwwAssign { tag, .. } | Effect::CounterAssign { tag, .. } => {
                        check_variant(i, tag)?;
                    }
                    Effect::CounterIncr(delta) => {
                        for (origin, _) in delta.iter() {
                            if origin != txn {
                                return Err(bad(
                                    i,
                                    format!("increment by {txn} carries origin {origin}"),
                                ));
                            }
                        }
                    }
                }
            }
            HistoryStep::Read { txn, .. } => match phase.get(txn) {
                Some(TxnPhase::Running) => {}
                Some(TxnPhase::Done) => {
                    return Err(bad(i, format!("read for terminated transaction {txn}")))
                }
                None => return Err(bad(i, format!("read before begin of {txn}"))),
            },
            HistoryStep::Commit { txn, ct } => {
                match phase.get(txn) {
                    Some(TxnPhase::Running) => {}
                    Some(TxnPhase::Done) => {
                        return Err(bad(i, format!("commit for terminated transaction {txn}")))
                    }
                    None => return Err(bad(i, format!("commit before begin of {txn}"))),
                }
                check_variant(i, ct)?;
                phase.insert(txn, TxnPhase::Done);
            }
            HistoryStep::Abort { txn } => {
                match phase.get(txn) {
                    Some(TxnPhase::Running) => {}
                    Some(TxnPhase::Done) => {
                        return Err(bad(i, format!("abort for terminated transaction {txn}")))
                    }
                    None => return Err(bad(i, format!("abort before begin of {txn}"))),
                }
                phase.insert(txn, TxnPhase::Done);
            }
        }
    }
    Ok(())
}

//! Hand-built histories used across tests and the command-line examples.

use crate::effects::Effect;
use crate::history::{History, HistoryStep};
use crate::types::{Key, Timestamp, TxnId};

fn ts(n: u64) -> Timestamp {
    Timestamp::scalar(n)
}

fn begin(txn: &str, st: u64) -> HistoryStep {
    HistoryStep::Begin { txn: TxnId::new(txn), st: ts(st) }
}

fn cassign(txn: &str, key: &str, val: i64, tag: u64) -> HistoryStep {
    HistoryStep::Update {
        txn: TxnId::new(txn),
        key: Key::new(key),
        eff: Effect::counter_assign(val, ts(tag)),
    }
}

fn incr(txn: &str, key: &str, by: i64) -> HistoryStep {
    HistoryStep::Update {
        txn: TxnId::new(txn),
        key: Key::new(key),
        eff: Effect::incr(TxnId::new(txn), by),
    }
}

fn commit(txn: &str, ct: u64) -> HistoryStep {
    HistoryStep::Commit { txn: TxnId::new(txn), ct: ts(ct) }
}

/// Five transactions over one counter. t1 and t2 run concurrently off the
/// same snapshot; t3 sees only t1; t4 begins between those commits and sees
/// both, so t1's increment reaches the final state along two paths and must
/// count once. Final value at any timestamp past ct 9 is 15.
pub fn diamond_history() -> History {
    History(vec![
        begin("t0", 0),
        cassign("t0", "a", 0, 0),
        commit("t0", 1),
        begin("t1", 2),
        incr("t1", "a", 1),
        begin("t2", 2),
        incr("t2", "a", 2),
        commit("t1", 4),
        begin("t3", 5),
        commit("t2", 6),
        incr("t3", "a", 4),
        begin("t4", 7),
        commit("t3", 8),
        incr("t4", "a", 8),
        commit("t4", 9),
    ])
}

/// The same shape with t2 committing at 5, exactly at t3's snapshot: still
/// invisible to t3 under strict visibility, and the final value is still 15.
pub fn diamond_history_early_commit() -> History {
    History(
        diamond_history()
            .0
            .into_iter()
            .map(|s| match s {
                HistoryStep::Commit { txn, .. } if txn.as_str() == "t2" => {
                    HistoryStep::Commit { txn, ct: ts(5) }
                }
                other => other,
            })
            .collect(),
    )
}

/// Two sequential counter transactions: an assignment of 27, then an
/// increment of 10 from a snapshot that sees it. Lookups read 27 between
/// the commits and 37 after both.
pub fn counter_pair_history() -> History {
    History(vec![
        begin("t0", 0),
        cassign("t0", "x", 27, 0),
        commit("t0", 100),
        begin("t1", 110),
        incr("t1", "x", 10),
        commit("t1", 120),
    ])
}

#![allow(dead_code)]

use dualstore::effects::{BaseAssign, DeltaSet, Effect, EffectState};
use dualstore::engine::{NictVariant, SystemState};
use dualstore::harness::{run_history, RunLog};
use dualstore::history::History;
use dualstore::journal::Journal;
use dualstore::map_store::MapStore;
use dualstore::types::{Key, Timestamp, TxnId, Value};
use proptest::prelude::*;

pub fn ts(n: u64) -> Timestamp {
    Timestamp::scalar(n)
}

pub fn key(s: &str) -> Key {
    Key::new(s)
}

pub fn txn(s: &str) -> TxnId {
    TxnId::new(s)
}

pub fn replay_map(h: &History) -> (SystemState<MapStore>, RunLog) {
    let mut sys = SystemState::with_store(MapStore::new(), NictVariant::Strong);
    let log = run_history(&mut sys, h, false);
    (sys, log)
}

pub fn replay_journal(h: &History) -> (SystemState<Journal>, RunLog) {
    let mut sys = SystemState::with_store(Journal::new(), NictVariant::Strong);
    let log = run_history(&mut sys, h, false);
    (sys, log)
}

// Tags draw from a small range so ties and reorderings actually happen.
pub fn arb_tag() -> impl Strategy<Value = Timestamp> {
    (0u64..=6).prop_map(Timestamp::scalar)
}

pub fn arb_origin() -> impl Strategy<Value = TxnId> {
    (0usize..6).prop_map(|i| TxnId::new(format!("t{i}")))
}

pub fn arb_value() -> impl Strategy<Value = Value> {
    prop_oneof![
        (-100i64..=100).prop_map(Value::Int),
        proptest::collection::vec(any::<u8>(), 0..=3).prop_map(Value::Bytes),
    ]
}

pub fn arb_delta_set() -> impl Strategy<Value = DeltaSet> {
    proptest::collection::btree_map(0usize..6, -50i64..=50, 0..=3)
        .prop_map(|m| m.into_iter().map(|(i, d)| (TxnId::new(format!("t{i}")), d)).collect())
}

// Deltas stay far from i64 bounds so composition never overflows and the
// laws hold without caveats.
pub fn arb_counter_effect() -> impl Strategy<Value = Effect> {
    prop_oneof![
        ((-1000i64..=1000), arb_tag()).prop_map(|(v, t)| Effect::counter_assign(v, t)),
        (arb_origin(), -100i64..=100).prop_map(|(o, d)| Effect::incr(o, d)),
    ]
}

pub fn arb_lww_effect() -> impl Strategy<Value = Effect> {
    (arb_value(), arb_tag()).prop_map(|(v, t)| Effect::lww(v, t))
}

pub fn arb_effect() -> impl Strategy<Value = Effect> {
    prop_oneof![arb_counter_effect(), arb_lww_effect()]
}

pub fn arb_assign_effect() -> impl Strategy<Value = Effect> {
    prop_oneof![
        ((-1000i64..=1000), arb_tag()).prop_map(|(v, t)| Effect::counter_assign(v, t)),
        (arb_value(), arb_tag()).prop_map(|(v, t)| Effect::lww(v, t)),
    ]
}

pub fn arb_counter_state() -> impl Strategy<Value = EffectState> {
    ((-100i64..=100), arb_tag(), arb_delta_set()).prop_map(|(val, tag, pending)| EffectState {
        base: Some(BaseAssign::Counter { val, tag }),
        pending,
    })
}

// Register states never hold pending deltas; composition forbids it.
pub fn arb_lww_state() -> impl Strategy<Value = EffectState> {
    (arb_value(), arb_tag()).prop_map(|(val, tag)| EffectState {
        base: Some(BaseAssign::Lww { val, tag }),
        pending: DeltaSet::new(),
    })
}

pub fn arb_delta_only_state() -> impl Strategy<Value = EffectState> {
    arb_delta_set().prop_map(|pending| EffectState { base: None, pending })
}

/// A mergeable family: same-kind states plus optional bottoms.
pub fn arb_merge_family() -> impl Strategy<Value = Vec<EffectState>> {
    let counters = proptest::collection::vec(
        prop_oneof![
            3 => arb_counter_state(),
            1 => Just(EffectState::bottom()),
        ],
        1..=4,
    );
    let lwws = proptest::collection::vec(
        prop_oneof![
            3 => arb_lww_state(),
            1 => Just(EffectState::bottom()),
        ],
        1..=4,
    );
    let deltas = proptest::collection::vec(
        prop_oneof![
            3 => arb_delta_only_state(),
            1 => Just(EffectState::bottom()),
        ],
        1..=4,
    );
    prop_oneof![counters, lwws, deltas]
}

/// A proper sequence: an assignment followed by same-kind effects.
pub fn arb_proper_seq() -> impl Strategy<Value = Vec<Effect>> {
    let counter = ((-1000i64..=1000), arb_tag(), proptest::collection::vec(arb_counter_effect(), 0..=5))
        .prop_map(|(v, t, rest)| {
            let mut seq = vec![Effect::counter_assign(v, t)];
            seq.extend(rest);
            seq
        });
    let lww = (arb_value(), arb_tag(), proptest::collection::vec(arb_lww_effect(), 0..=5)).prop_map(
        |(v, t, rest)| {
            let mut seq = vec![Effect::lww(v, t)];
            seq.extend(rest);
            seq
        },
    );
    prop_oneof![counter, lww]
}

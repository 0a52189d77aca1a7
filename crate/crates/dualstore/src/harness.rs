//! Replay, random history generation, and differential checking.
//!
//! The differential check runs one history three ways: through the engine
//! over the eager backend, through the engine over the append-only backend,
//! and through the reference evaluator. It then probes every key over a
//! timestamp grid and flags any point where the three answers differ, along
//! with any mismatch between the two engine runs' read values and error
//! logs. A deliberately broken semantics can be injected with [`Mutation`]
//! to confirm the comparison actually has teeth; the reference evaluator
//! never takes the mutation, so the checker measures the backends against
//! unbroken semantics.
//!
//! Generated histories are well-formed on purpose: commit timestamps climb
//! past every issued snapshot, so commits are admitted; first writes assign
//! before increments, so reads and merges resolve. Randomness governs the
//! interleaving, which is where the interesting behavior lives. Everything
//! is seeded, and a given seed always produces the same history.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use std::collections::{BTreeSet, HashSet};

use crate::effects::{Effect, MergePolicy};
use crate::engine::{NictVariant, SystemState};
use crate::error::Result;
use crate::history::{validate, History, HistoryStep};
use crate::journal::Journal;
use crate::map_store::MapStore;
use crate::oracle::OracleIndex;
use crate::store::{Semantics, StoreOps, Visibility};
use crate::types::{ts_lt, Key, Timestamp, TxnId, Value};

/// One successful read during replay.
#[derive(Clone, Debug, PartialEq)]
pub struct ReadRecord {
    pub step: usize,
    pub txn: TxnId,
    pub key: Key,
    pub value: Value,
    pub expect: Option<Value>,
}

/// What replay observed: read values and rejected steps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub reads: Vec<ReadRecord>,
    pub errors: Vec<(usize, String)>,
}

/// Drive a history through an engine. A rejected step leaves the system
/// unchanged, so replay can either stop at the first error or record it and
/// keep going.
pub fn run_history<S: StoreOps>(
    sys: &mut SystemState<S>,
    h: &History,
    stop_on_error: bool,
) -> RunLog {
    let mut log = RunLog::default();
    for (i, step) in h.steps().iter().enumerate() {
        match sys.run_step(step) {
            Ok(Some(value)) => {
                if let HistoryStep::Read { txn, key, expect } = step {
                    log.reads.push(ReadRecord {
                        step: i,
                        txn: txn.clone(),
                        key: key.clone(),
                        value,
                        expect: expect.clone(),
                    });
                }
            }
            Ok(None) => {}
            Err(e) => {
                log.errors.push((i, e.to_string()));
                if stop_on_error {
                    break;
                }
            }
        }
    }
    log
}

/// A switchable semantic fault for checking that the differential harness
/// can tell a broken store from a correct one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mutation {
    #[default]
    None,
    /// Merge sums a shared increment once per arrival path instead of
    /// unioning by origin.
    DedupOff,
    /// Lookups see commits at exactly the query timestamp, not just below it.
    InclusiveVis,
}

impl Mutation {
    pub fn semantics(self) -> Semantics {
        match self {
            Mutation::None => Semantics::default(),
            Mutation::DedupOff => Semantics {
                merge: MergePolicy { counter_dedup: false },
                ..Semantics::default()
            },
            Mutation::InclusiveVis => {
                Semantics { visibility: Visibility::Inclusive, ..Semantics::default() }
            }
        }
    }
}

/// Poll limit so a degenerate history cannot explode the grid.
pub const PROBE_CAP: usize = 10_000;

/// Every key in the history crossed with every scalar timestamp from zero
/// to just past the last commit. Histories written with vector timestamps
/// get no grid; probe points for those come from the caller.
pub fn probe_grid(h: &History) -> Vec<(Key, Timestamp)> {
    let mut names: BTreeSet<&str> = BTreeSet::new();
    let mut max_ct: u64 = 0;
    for step in h.steps() {
        match step {
            HistoryStep::Update { key, .. } | HistoryStep::Read { key, .. } => {
                names.insert(key.as_str());
            }
            HistoryStep::Commit { ct, .. } => match ct {
                Timestamp::Scalar(n) => max_ct = max_ct.max(*n),
                Timestamp::Vector(_) => return Vec::new(),
            },
            HistoryStep::Begin { .. } | HistoryStep::Abort { .. } => {}
        }
    }
    let mut grid = Vec::new();
    'fill: for at in 0..=max_ct + 2 {
        for name in &names {
            if grid.len() == PROBE_CAP {
                break 'fill;
            }
            grid.push((Key::new(*name), Timestamp::scalar(at)));
        }
    }
    grid
}

/// What one probe point resolved to. Faults compare by kind, since the
/// reference evaluator words its messages differently on purpose.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProbeOutcome {
    Absent,
    Val(Value),
    Fault(&'static str),
}

impl std::fmt::Display for ProbeOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProbeOutcome::Absent => write!(f, "absent"),
            ProbeOutcome::Val(v) => write!(f, "{v}"),
            ProbeOutcome::Fault(kind) => write!(f, "error[{kind}]"),
        }
    }
}

fn settle(res: Result<Option<Value>>) -> ProbeOutcome {
    match res {
        Ok(None) => ProbeOutcome::Absent,
        Ok(Some(v)) => ProbeOutcome::Val(v),
        Err(e) => ProbeOutcome::Fault(e.kind_name()),
    }
}

pub fn probe_store<S: StoreOps>(store: &S, key: &Key, at: &Timestamp) -> ProbeOutcome {
    settle(store.lookup(key, at).and_then(|s| s.value()))
}

pub fn probe_oracle(oracle: &OracleIndex, key: &Key, at: &Timestamp) -> ProbeOutcome {
    settle(oracle.lookup(key, at))
}

/// One probe point where the three routes did not all agree.
#[derive(Clone, Debug, PartialEq)]
pub struct Divergence {
    pub key: Key,
    pub at: Timestamp,
    pub map: ProbeOutcome,
    pub journal: ProbeOutcome,
    pub oracle: ProbeOutcome,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}@{}: map={} journal={} oracle={}",
            self.key, self.at, self.map, self.journal, self.oracle
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiffReport {
    pub divergences: Vec<Divergence>,
    /// Set when the two engine runs disagree on read values or rejections.
    pub log_mismatch: Option<String>,
    /// A smaller history that still shows the problem, when one was found.
    pub shrunk: Option<History>,
}

impl DiffReport {
    pub fn clean(&self) -> bool {
        self.divergences.is_empty() && self.log_mismatch.is_none()
    }
}

fn check_once(h: &History, mutation: Mutation) -> (Vec<Divergence>, Option<String>) {
    let sem = mutation.semantics();
    let mut map_sys =
        SystemState::with_store(MapStore::with_semantics(sem), NictVariant::Strong);
    let mut jrn_sys =
        SystemState::with_store(Journal::with_semantics(sem), NictVariant::Strong);
    let map_log = run_history(&mut map_sys, h, false);
    let jrn_log = run_history(&mut jrn_sys, h, false);
    let oracle = OracleIndex::build(h);

    let mut log_mismatch = None;
    if map_log.errors != jrn_log.errors {
        log_mismatch = Some(format!(
            "rejections differ: map {:?} vs journal {:?}",
            map_log.errors, jrn_log.errors
        ));
    } else if map_log.reads != jrn_log.reads {
        log_mismatch = Some(format!(
            "read values differ: map {:?} vs journal {:?}",
            map_log.reads, jrn_log.reads
        ));
    }

    let mut divergences = Vec::new();
    for (key, at) in probe_grid(h) {
        let map = probe_store(map_sys.store(), &key, &at);
        let journal = probe_store(jrn_sys.store(), &key, &at);
        let oracle_val = probe_oracle(&oracle, &key, &at);
        if map != journal || map != oracle_val {
            divergences.push(Divergence { key, at, map, journal, oracle: oracle_val });
        }
    }
    (divergences, log_mismatch)
}

/// Whether the three routes disagree anywhere on this history.
pub fn history_diverges(h: &History, mutation: Mutation) -> bool {
    let (divergences, log_mismatch) = check_once(h, mutation);
    !divergences.is_empty() || log_mismatch.is_some()
}

/// Whether both engine runs accept every step. Shrinking must stay inside
/// this regime: dropping a step can orphan an increment or a read, and a
/// history the engines reject is not evidence about lookup semantics.
fn replays_clean(h: &History, mutation: Mutation) -> bool {
    let sem = mutation.semantics();
    let mut map_sys =
        SystemState::with_store(MapStore::with_semantics(sem), NictVariant::Strong);
    let mut jrn_sys =
        SystemState::with_store(Journal::with_semantics(sem), NictVariant::Strong);
    run_history(&mut map_sys, h, false).errors.is_empty()
        && run_history(&mut jrn_sys, h, false).errors.is_empty()
}

/// Full differential check. On disagreement, greedily drops steps while the
/// disagreement survives (and the candidate stays well formed and cleanly
/// replayable), to a local fixpoint.
pub fn differential_check(h: &History, mutation: Mutation) -> DiffReport {
    let (divergences, log_mismatch) = check_once(h, mutation);
    let mut report = DiffReport { divergences, log_mismatch, shrunk: None };
    if report.clean() {
        return report;
    }
    let mut current = h.clone();
    loop {
        let mut improved = false;
        for i in 0..current.len() {
            let mut steps = current.0.clone();
            steps.remove(i);
            let candidate = History(steps);
            if validate(&candidate).is_ok()
                && replays_clean(&candidate, mutation)
                && history_diverges(&candidate, mutation)
            {
                current = candidate;
                improved = true;
                break;
            }
        }
        if !improved {
            break;
        }
    }
    report.shrunk = Some(current);
    report
}

/// Knobs for the random history generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenParams {
    pub txns: usize,
    pub keys: usize,
    /// Write-effect budget per transaction (reads are extra).
    pub max_effects: usize,
    /// Probability that a key is counter-flavored rather than
    /// last-writer-wins.
    pub counter_bias: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { txns: 6, keys: 2, max_effects: 4, counter_bias: 0.8 }
    }
}

/// Generate a well-formed history. Deterministic in the seed.
///
/// Generated histories respect three disciplines beyond structural
/// validity, all of which mark the edge of the regime where the two
/// backends provably agree:
///
/// * a transaction's first write to an unresolved key is an assignment, so
///   reads and merges always find a base value;
/// * every assignment's tag strictly exceeds the tags visible from the
///   writer's snapshot (plus its own earlier tag on that key). This is the
///   register contract: a causally newer write must carry a newer tag, or
///   reconciliation is free to resurrect the overwritten value on one route
///   and not another. Concurrent writers can still collide on a tag, which
///   is exactly the tie the deterministic reconciliation order exists for;
/// * counter keys are assigned once and incremented thereafter. A
///   reassignment whose snapshot already saw increments consumes them with
///   no trace, and a committed transaction that straddles the reassignment
///   re-exposes the consumed delta to the merge on the log-structured route
///   while version maximality drops it on the eager route. The algebra
///   cannot tell the two apart, so the generator stays out of that corner.
pub fn gen_history(seed: u64, p: &GenParams) -> History {
    struct Live {
        id: TxnId,
        st: u64,
        budget: usize,
        wrote: HashSet<usize>,
        assigned: HashSet<usize>,
        own_tag: std::collections::HashMap<usize, u64>,
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keys = p.keys.max(1);
    let key_names: Vec<String> = (0..keys).map(|i| format!("k{i}")).collect();
    let counter_key: Vec<bool> = (0..keys).map(|_| rng.gen_bool(p.counter_bias)).collect();

    let mut steps: Vec<HistoryStep> = Vec::new();
    let mut clock: u64 = 0;
    let mut spawned = 0usize;
    let mut live: Vec<Live> = Vec::new();
    // (key index, commit timestamp, tag) of every committed assignment; a
    // key resolves at snapshot `st` exactly when one of these has ct < st.
    let mut settled_assigns: Vec<(usize, u64, u64)> = Vec::new();

    let resolves = |settled: &[(usize, u64, u64)], k: usize, st: u64| {
        settled.iter().any(|(i, ct, _)| *i == k && *ct < st)
    };
    let visible_high = |settled: &[(usize, u64, u64)], k: usize, st: u64| {
        settled
            .iter()
            .filter(|(i, ct, _)| *i == k && *ct < st)
            .map(|(_, _, tag)| *tag)
            .max()
    };

    while spawned < p.txns || !live.is_empty() {
        let spawn_w = if spawned < p.txns { 30u32 } else { 0 };
        let step_w = if live.iter().any(|t| t.budget > 0) { 45u32 } else { 0 };
        let finish_w = if !live.is_empty() { 25u32 } else { 0 };
        let roll = rng.gen_range(0..spawn_w + step_w + finish_w);

        if roll < spawn_w {
            let id = TxnId::new(format!("t{spawned}"));
            let st = clock;
            steps.push(HistoryStep::Begin { txn: id.clone(), st: Timestamp::scalar(st) });
            live.push(Live {
                id,
                st,
                budget: rng.gen_range(0..=p.max_effects),
                wrote: HashSet::new(),
                assigned: HashSet::new(),
                own_tag: std::collections::HashMap::new(),
            });
            spawned += 1;
            // Half the time the clock holds still, so the next spawn shares
            // this snapshot and the two run truly concurrently.
            if rng.gen_bool(0.5) {
                clock += 1;
            }
        } else if roll < spawn_w + step_w {
            let candidates: Vec<usize> =
                (0..live.len()).filter(|i| live[*i].budget > 0).collect();
            let t = candidates[rng.gen_range(0..candidates.len())];
            let k = rng.gen_range(0..keys);
            let txn = live[t].id.clone();
            let key = Key::new(key_names[k].clone());
            let readable = resolves(&settled_assigns, k, live[t].st) || live[t].wrote.contains(&k);

            if readable && rng.gen_bool(0.25) {
                steps.push(HistoryStep::Read { txn, key, expect: None });
                continue;
            }
            live[t].budget -= 1;
            let assign_tag = {
                let snapshot_high = visible_high(&settled_assigns, k, live[t].st);
                let own = live[t].own_tag.get(&k).copied();
                let floor = snapshot_high.max(own).map_or(0, |h| h + 1);
                floor + rng.gen_range(0..=2)
            };
            let eff = if counter_key[k] {
                if !readable {
                    live[t].assigned.insert(k);
                    live[t].own_tag.insert(k, assign_tag);
                    Effect::counter_assign(
                        rng.gen_range(-20..=20),
                        Timestamp::scalar(assign_tag),
                    )
                } else {
                    Effect::incr(txn.clone(), rng.gen_range(-5..=5))
                }
            } else {
                live[t].assigned.insert(k);
                live[t].own_tag.insert(k, assign_tag);
                Effect::lww(
                    Value::Int(rng.gen_range(-50..=50)),
                    Timestamp::scalar(assign_tag),
                )
            };
            live[t].wrote.insert(k);
            steps.push(HistoryStep::Update { txn, key, eff });
        } else {
            let t = rng.gen_range(0..live.len());
            let done = live.swap_remove(t);
            if rng.gen_bool(0.08) {
                steps.push(HistoryStep::Abort { txn: done.id });
            } else {
                let ct = clock + 1;
                clock = ct;
                steps.push(HistoryStep::Commit {
                    txn: done.id,
                    ct: Timestamp::scalar(ct),
                });
                for k in done.assigned {
                    let tag = done.own_tag[&k];
                    settled_assigns.push((k, ct, tag));
                }
            }
        }
    }
    History(steps)
}

/// Two committed transactions neither of which settled before the other's
/// snapshot, writing a common key: the shape where merge semantics actually
/// matter.
pub fn history_has_diamond(h: &History) -> bool {
    struct C {
        st: Timestamp,
        ct: Timestamp,
        wrote: BTreeSet<String>,
    }
    let mut open: std::collections::HashMap<TxnId, C> = std::collections::HashMap::new();
    let mut done: Vec<C> = Vec::new();
    for step in h.steps() {
        match step {
            HistoryStep::Begin { txn, st } => {
                open.insert(
                    txn.clone(),
                    C { st: st.clone(), ct: st.clone(), wrote: BTreeSet::new() },
                );
            }
            HistoryStep::Update { txn, key, .. } => {
                if let Some(c) = open.get_mut(txn) {
                    c.wrote.insert(key.as_str().to_string());
                }
            }
            HistoryStep::Commit { txn, ct } => {
                if let Some(mut c) = open.remove(txn) {
                    c.ct = ct.clone();
                    done.push(c);
                }
            }
            HistoryStep::Read { .. } => {}
            HistoryStep::Abort { txn } => {
                open.remove(txn);
            }
        }
    }
    for (i, a) in done.iter().enumerate() {
        for b in &done[i + 1..] {
            let ordered = ts_lt(&a.ct, &b.st).unwrap_or(true)
                || ts_lt(&b.ct, &a.st).unwrap_or(true);
            if !ordered && a.wrote.intersection(&b.wrote).next().is_some() {
                return true;
            }
        }
    }
    false
}

/// Outcome of a seed sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct FuzzOutcome {
    pub checked: usize,
    /// Seeds whose histories produced any disagreement, ascending.
    pub divergent: Vec<u64>,
}

/// Check `count` seeded histories, fanned out over the available cores.
/// Each worker owns a contiguous seed range and scans it fully, and results
/// join in range order, so the outcome (including which seed is reported
/// first) does not depend on scheduling.
pub fn fuzz_scan(
    seed_start: u64,
    count: usize,
    params: &GenParams,
    mutation: Mutation,
) -> FuzzOutcome {
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(count.max(1));
    let chunk = count.div_ceil(workers);
    let mut divergent = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..workers {
            let lo = seed_start + (w * chunk) as u64;
            let hi = seed_start + (((w + 1) * chunk).min(count)) as u64;
            handles.push(scope.spawn(move || {
                let mut found = Vec::new();
                for seed in lo..hi {
                    let h = gen_history(seed, params);
                    if history_diverges(&h, mutation) {
                        found.push(seed);
                    }
                }
                found
            }));
        }
        for handle in handles {
            divergent.extend(handle.join().expect("fuzz worker panicked"));
        }
    });
    FuzzOutcome { checked: count, divergent }
}

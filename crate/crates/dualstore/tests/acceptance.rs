//! The release gate. Each test checks one numbered criterion and prints a
//! single PASS/FAIL line; run with `--nocapture` to see them all:
//!
//! ```text
//! cargo test -p dualstore --test acceptance -- --nocapture
//! ```

mod common;

use std::time::{Duration, Instant};

use common::*;
use dualstore::effects::{apply_value, compact, compose, merge, Effect};
use dualstore::engine::{NictVariant, SystemState};
use dualstore::error::Error;
use dualstore::harness::{fuzz_scan, GenParams, Mutation};
use dualstore::journal::Journal;
use dualstore::map_store::MapStore;
use dualstore::oracle::OracleIndex;
use dualstore::samples::{counter_pair_history, diamond_history};
use dualstore::store::StoreOps;
use dualstore::types::Value;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

fn report(n: usize, what: &str, r: Result<String, String>) {
    match r {
        Ok(detail) => println!("criterion {n}: PASS — {what}: {detail}"),
        Err(detail) => {
            println!("criterion {n}: FAIL — {what}: {detail}");
            panic!("criterion {n} failed: {detail}");
        }
    }
}

fn int(n: i64) -> Option<Value> {
    Some(Value::Int(n))
}

#[test]
fn criterion_1_golden_trace() {
    report(1, "canonical diamond replay", (|| {
        let t0 = Instant::now();
        let h = diamond_history();
        let (map_sys, map_log) = replay_map(&h);
        let (jrn_sys, jrn_log) = replay_journal(&h);
        if !map_log.errors.is_empty() || !jrn_log.errors.is_empty() {
            return Err(format!(
                "replay rejected steps: map {:?}, journal {:?}",
                map_log.errors, jrn_log.errors
            ));
        }
        let a = key("a");
        let at = ts(11);
        let m =
            map_sys.store().lookup(&a, &at).map_err(|e| e.to_string())?.value().map_err(|e| e.to_string())?;
        let j =
            jrn_sys.store().lookup(&a, &at).map_err(|e| e.to_string())?.value().map_err(|e| e.to_string())?;
        let o = OracleIndex::build(&h).lookup(&a, &at).map_err(|e| e.to_string())?;
        let elapsed = t0.elapsed();
        if m != int(15) || j != int(15) || o != int(15) {
            return Err(format!("lookup(a,11): map {m:?}, journal {j:?}, oracle {o:?}, want 15"));
        }
        if elapsed >= Duration::from_secs(1) {
            return Err(format!("took {elapsed:?}, budget is 1 s"));
        }
        Ok(format!("lookup(a,11)=15 on map, journal, oracle ({} ms)", elapsed.as_millis()))
    })());
}

#[test]
fn criterion_2_golden_map_contents() {
    report(2, "map store contents after the diamond", (|| {
        let (map_sys, _) = replay_map(&diamond_history());
        let got = map_sys.store().dump();
        let want = "a\t{\"s\":1}\t{\"s\":0}\t{\"base\":{\"cassign\":{\"val\":0,\"tag\":{\"s\":0}}}}\n\
a\t{\"s\":4}\t{\"s\":2}\t{\"base\":{\"cassign\":{\"val\":0,\"tag\":{\"s\":0}}},\"pending\":[[\"t1\",1]]}\n\
a\t{\"s\":6}\t{\"s\":2}\t{\"base\":{\"cassign\":{\"val\":0,\"tag\":{\"s\":0}}},\"pending\":[[\"t2\",2]]}\n\
a\t{\"s\":8}\t{\"s\":5}\t{\"base\":{\"cassign\":{\"val\":0,\"tag\":{\"s\":0}}},\"pending\":[[\"t1\",1],[\"t3\",4]]}\n\
a\t{\"s\":9}\t{\"s\":7}\t{\"base\":{\"cassign\":{\"val\":0,\"tag\":{\"s\":0}}},\"pending\":[[\"t1\",1],[\"t2\",2],[\"t4\",8]]}\n";
        if got != want {
            return Err(format!("dump mismatch:\n--- got ---\n{got}--- want ---\n{want}"));
        }
        Ok("five versions, bit-exact".into())
    })());
}

#[test]
fn criterion_3_golden_journal_contents() {
    report(3, "journal contents after the diamond", (|| {
        let (jrn_sys, _) = replay_journal(&diamond_history());
        let got = jrn_sys.store().dump();
        let want = "BeginTxnRec(t0, 0)\n\
UpdateRec(t0, a, assign_0)\n\
CommitTxnRec(t0, 0, 1)\n\
BeginTxnRec(t1, 2)\n\
UpdateRec(t1, a, incr_1)\n\
BeginTxnRec(t2, 2)\n\
UpdateRec(t2, a, incr_2)\n\
CommitTxnRec(t1, 2, 4)\n\
BeginTxnRec(t3, 5)\n\
CommitTxnRec(t2, 2, 6)\n\
UpdateRec(t3, a, incr_4)\n\
BeginTxnRec(t4, 7)\n\
CommitTxnRec(t3, 5, 8)\n\
UpdateRec(t4, a, incr_8)\n\
CommitTxnRec(t4, 7, 9)\n";
        if got != want {
            return Err(format!("dump mismatch:\n--- got ---\n{got}--- want ---\n{want}"));
        }
        Ok("15 records, record-for-record".into())
    })());
}

#[test]
fn criterion_4_micro_example() {
    report(4, "assign-then-increment micro example", (|| {
        let h = counter_pair_history();
        let (map_sys, _) = replay_map(&h);
        let (jrn_sys, _) = replay_journal(&h);
        let x = key("x");
        for (at, want) in [(101, 27), (111, 27), (121, 37)] {
            for (name, got) in [
                ("map", map_sys.store().lookup(&x, &ts(at)).map_err(|e| e.to_string())?.value()),
                ("journal", jrn_sys.store().lookup(&x, &ts(at)).map_err(|e| e.to_string())?.value()),
            ] {
                let got = got.map_err(|e| e.to_string())?;
                if got != int(want) {
                    return Err(format!("{name} lookup(x,{at}) = {got:?}, want {want}"));
                }
            }
        }
        Ok("27 at ts 101 and 111, 37 at ts 121, both backends".into())
    })());
}

fn law_runner() -> TestRunner {
    let cfg = Config { cases: 10_000, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn law_fail<T: std::fmt::Debug>(
    law: &str,
    e: proptest::test_runner::TestError<T>,
) -> Result<String, String> {
    Err(format!("{law}: {e}"))
}

#[test]
fn criterion_5_effect_algebra_laws() {
    report(5, "effect algebra laws, 10,000 cases each", (|| {
        // Identity: composing with nothing changes nothing.
        let mut r = law_runner();
        if let Err(e) = r.run(&arb_effect(), |x| {
            prop_assert_eq!(compose(None, Some(&x)).unwrap(), Some(x.clone()));
            prop_assert_eq!(compose(Some(&x), None).unwrap(), Some(x.clone()));
            prop_assert_eq!(compose(None, None).unwrap(), None);
            Ok(())
        }) {
            return law_fail("compose identity", e);
        }

        // Associativity within each effect kind.
        let mut r = law_runner();
        let triples = prop_oneof![
            (arb_counter_effect(), arb_counter_effect(), arb_counter_effect()),
            (arb_lww_effect(), arb_lww_effect(), arb_lww_effect()),
        ];
        if let Err(e) = r.run(&triples, |(a, b, c)| {
            let ab = compose(Some(&a), Some(&b)).unwrap();
            let left = compose(ab.as_ref(), Some(&c)).unwrap();
            let bc = compose(Some(&b), Some(&c)).unwrap();
            let right = compose(Some(&a), bc.as_ref()).unwrap();
            prop_assert_eq!(left, right);
            Ok(())
        }) {
            return law_fail("compose associativity", e);
        }

        // A later assignment masks anything before it, across kinds.
        let mut r = law_runner();
        if let Err(e) = r.run(&(arb_effect(), arb_assign_effect()), |(x, a)| {
            prop_assert_eq!(compose(Some(&x), Some(&a)).unwrap(), Some(a.clone()));
            Ok(())
        }) {
            return law_fail("assignment masking", e);
        }

        // Compacting a proper sequence gives the same value as applying the
        // effects one by one.
        let mut r = law_runner();
        if let Err(e) = r.run(&arb_proper_seq(), |seq| {
            let mut v: Option<Value> = None;
            for e in &seq {
                v = Some(apply_value(e, v.as_ref()).unwrap());
            }
            let state = compact(&seq).unwrap();
            prop_assert_eq!(state.value().unwrap(), v);
            Ok(())
        }) {
            return law_fail("compaction vs sequential application", e);
        }

        // Merge is commutative, associative, idempotent.
        let mut r = law_runner();
        if let Err(e) = r.run(&(arb_merge_family(), any::<u64>()), |(fam, salt)| {
            let base = merge(&fam).unwrap();

            let mut rev = fam.clone();
            rev.reverse();
            prop_assert_eq!(merge(&rev).unwrap(), base.clone());

            let mut rot = fam.clone();
            rot.rotate_left(salt as usize % fam.len().max(1));
            prop_assert_eq!(merge(&rot).unwrap(), base.clone());

            if fam.len() > 1 {
                let (head, tail) = fam.split_at(1);
                let mut nested = vec![head[0].clone(), merge(tail).unwrap()];
                prop_assert_eq!(merge(&nested).unwrap(), base.clone());
                nested = vec![merge(head).unwrap(), merge(tail).unwrap()];
                prop_assert_eq!(merge(&nested).unwrap(), base.clone());
            }

            let mut dup = fam.clone();
            dup.push(fam[salt as usize % fam.len()].clone());
            prop_assert_eq!(merge(&dup).unwrap(), base.clone());

            prop_assert_eq!(merge(&[base.clone()]).unwrap(), base);
            Ok(())
        }) {
            return law_fail("merge CAI", e);
        }

        Ok("identity, associativity, masking, compaction, merge CAI".into())
    })());
}

#[test]
fn criterion_6_differential_fuzz() {
    report(6, "differential fuzz over 10,000 histories", (|| {
        let t0 = Instant::now();
        let out = fuzz_scan(0, 10_000, &GenParams::default(), Mutation::None);
        let elapsed = t0.elapsed();
        if out.checked != 10_000 {
            return Err(format!("only {} histories checked", out.checked));
        }
        if !out.divergent.is_empty() {
            return Err(format!("disagreements at seeds {:?}", out.divergent));
        }
        if elapsed > Duration::from_secs(300) {
            return Err(format!("took {elapsed:?}, budget is 5 minutes"));
        }
        Ok(format!("10,000 histories, zero disagreements ({:.1} s)", elapsed.as_secs_f64()))
    })());
}

#[test]
fn criterion_7_mutation_sensitivity() {
    report(7, "planted faults caught by the fuzz suite", (|| {
        let dedup = fuzz_scan(0, 1000, &GenParams::default(), Mutation::DedupOff);
        let vis = fuzz_scan(0, 1000, &GenParams::default(), Mutation::InclusiveVis);
        let d = dedup
            .divergent
            .first()
            .ok_or_else(|| "dedup-off mutation survived 1,000 seeds".to_string())?;
        let v = vis
            .divergent
            .first()
            .ok_or_else(|| "inclusive-visibility mutation survived 1,000 seeds".to_string())?;
        Ok(format!(
            "dedup-off first caught at seed {d} ({} of 1,000), inclusive visibility at seed {v} ({} of 1,000)",
            dedup.divergent.len(),
            vis.divergent.len()
        ))
    })());
}

fn rule_checks<S>(mk: impl Fn() -> S) -> Result<(), String>
where
    S: StoreOps + Clone + PartialEq + std::fmt::Debug,
{
    let unchanged = |sys: &SystemState<S>, before: &SystemState<S>, rule: &str| {
        if sys != before {
            return Err(format!("{rule}: rejected step mutated the system"));
        }
        Ok(())
    };

    // DuplicateCommitTs: a taken commit timestamp is refused.
    let mut sys = SystemState::with_store(mk(), NictVariant::Strong);
    sys.begin_txn_as(&txn("t0"), &ts(0)).map_err(|e| e.to_string())?;
    sys.update(&txn("t0"), &key("a"), &Effect::counter_assign(1, ts(0))).map_err(|e| e.to_string())?;
    sys.commit_txn(&txn("t0"), &ts(2)).map_err(|e| e.to_string())?;
    sys.begin_txn_as(&txn("t1"), &ts(1)).map_err(|e| e.to_string())?;
    let before = sys.clone();
    match sys.commit_txn(&txn("t1"), &ts(2)) {
        Err(Error::DuplicateCommitTs(_)) => unchanged(&sys, &before, "DuplicateCommitTs")?,
        other => return Err(format!("DuplicateCommitTs: got {other:?}")),
    }

    // CtBeforeSnapshot: a commit cannot predate its own snapshot.
    let mut sys = SystemState::with_store(mk(), NictVariant::Strong);
    sys.begin_txn_as(&txn("t0"), &ts(5)).map_err(|e| e.to_string())?;
    let before = sys.clone();
    match sys.commit_txn(&txn("t0"), &ts(3)) {
        Err(Error::CtBeforeSnapshot { .. }) => unchanged(&sys, &before, "CtBeforeSnapshot")?,
        other => return Err(format!("CtBeforeSnapshot: got {other:?}")),
    }

    // NIctViolation: a commit cannot slip below a live snapshot.
    let mut sys = SystemState::with_store(mk(), NictVariant::Strong);
    sys.begin_txn_as(&txn("t0"), &ts(0)).map_err(|e| e.to_string())?;
    sys.begin_txn_as(&txn("t1"), &ts(5)).map_err(|e| e.to_string())?;
    let before = sys.clone();
    match sys.commit_txn(&txn("t0"), &ts(3)) {
        Err(Error::NIctViolation { txn: t, .. }) => {
            if t != txn("t1") {
                return Err(format!("NIctViolation blamed {t}, want t1"));
            }
            unchanged(&sys, &before, "NIctViolation")?;
        }
        other => return Err(format!("NIctViolation: got {other:?}")),
    }

    // UninitializedRead: reading a key with no assignment in its past.
    let mut sys = SystemState::with_store(mk(), NictVariant::Strong);
    sys.begin_txn_as(&txn("t0"), &ts(0)).map_err(|e| e.to_string())?;
    let before = sys.clone();
    match sys.read(&txn("t0"), &key("ghost")) {
        Err(Error::UninitializedRead(_)) => unchanged(&sys, &before, "UninitializedRead")?,
        other => return Err(format!("UninitializedRead: got {other:?}")),
    }

    Ok(())
}

#[test]
fn criterion_8_engine_rule_conformance() {
    report(8, "commit and read rules fire and reject atomically", (|| {
        rule_checks(MapStore::new).map_err(|e| format!("map: {e}"))?;
        rule_checks(Journal::new).map_err(|e| format!("journal: {e}"))?;
        Ok("4 rules x 2 backends, state structurally unchanged on rejection".into())
    })());
}

#[test]
fn criterion_9_journal_persistence() {
    report(9, "journal save/load round trips and corruption reporting", (|| {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let path = dir.path().join("j.dsj");

        // Golden histories round-trip identically.
        let (jrn_sys, _) = replay_journal(&diamond_history());
        let golden = jrn_sys.store();
        golden.save(&path).map_err(|e| e.to_string())?;
        let loaded = Journal::load(&path, Default::default()).map_err(|e| e.to_string())?;
        if &loaded != golden {
            return Err("golden journal changed across save/load".into());
        }

        // Fuzzed journals round-trip identically.
        for seed in 0..1000u64 {
            let h = dualstore::harness::gen_history(seed, &GenParams::default());
            let (sys, log) = replay_journal(&h);
            if !log.errors.is_empty() {
                return Err(format!("seed {seed}: replay rejected steps {:?}", log.errors));
            }
            sys.store().save(&path).map_err(|e| e.to_string())?;
            let loaded = Journal::load(&path, Default::default()).map_err(|e| e.to_string())?;
            if &loaded != sys.store() {
                return Err(format!("seed {seed}: journal changed across save/load"));
            }
        }

        // Corruption is reported with the failing record's position.
        golden.save(&path).map_err(|e| e.to_string())?;
        let clean = std::fs::read(&path).map_err(|e| e.to_string())?;

        let mut bad = clean.clone();
        bad[0] ^= 1;
        std::fs::write(&path, &bad).map_err(|e| e.to_string())?;
        match Journal::load(&path, Default::default()) {
            Err(Error::CorruptRecord(0)) => {}
            other => return Err(format!("bad magic: got {other:?}, want CorruptRecord(0)")),
        }

        let mut bad = clean.clone();
        bad.truncate(clean.len() - 2);
        std::fs::write(&path, &bad).map_err(|e| e.to_string())?;
        match Journal::load(&path, Default::default()) {
            Err(Error::CorruptRecord(14)) => {}
            other => return Err(format!("truncated tail: got {other:?}, want CorruptRecord(14)")),
        }

        let mut bad = clean.clone();
        bad.extend_from_slice(&[7, 0]);
        std::fs::write(&path, &bad).map_err(|e| e.to_string())?;
        match Journal::load(&path, Default::default()) {
            Err(Error::CorruptRecord(15)) => {}
            other => return Err(format!("dangling prefix: got {other:?}, want CorruptRecord(15)")),
        }

        let mut bad = clean.clone();
        bad.extend_from_slice(&4u32.to_le_bytes());
        bad.extend_from_slice(b"]]]]");
        std::fs::write(&path, &bad).map_err(|e| e.to_string())?;
        match Journal::load(&path, Default::default()) {
            Err(Error::CorruptRecord(15)) => {}
            other => return Err(format!("garbage record: got {other:?}, want CorruptRecord(15)")),
        }

        Ok("goldens and 1,000 fuzzed journals round-trip; 4 corruption shapes report their position".into())
    })());
}

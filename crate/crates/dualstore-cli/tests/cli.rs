//! End-to-end checks of the `dualstore` binary: output shapes and the
//! documented exit codes.

use std::path::Path;
use std::process::{Command, Output};

use dualstore::engine::{NictVariant, SystemState};
use dualstore::harness::run_history;
use dualstore::history::{parse_history, serialize_history};
use dualstore::journal::Journal;
use dualstore::samples::diamond_history;

const BIN: &str = env!("CARGO_BIN_EXE_dualstore");

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("DUALSTORE_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn write_diamond(dir: &Path) -> String {
    let path = dir.join("diamond.jsonl");
    std::fs::write(&path, serialize_history(&diamond_history())).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_probes_both_backends() {
    let dir = tempfile::tempdir().unwrap();
    let h = write_diamond(dir.path());
    let out = run_in(dir.path(), &["run", &h, "--backend", "both", "--probe", "a@11"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.matches("a@11 = 15").count(), 2, "stdout: {text}");
    assert!(text.contains("[map]") && text.contains("[journal]"), "stdout: {text}");
}

#[test]
fn run_reports_reads_and_checks_expectations() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.jsonl");
    std::fs::write(
        &good,
        concat!(
            "{\"op\":\"begin\",\"txn\":\"t0\",\"st\":{\"s\":0}}\n",
            "{\"op\":\"update\",\"txn\":\"t0\",\"key\":\"a\",\"eff\":{\"cassign\":{\"val\":7,\"tag\":{\"s\":0}}}}\n",
            "{\"op\":\"commit\",\"txn\":\"t0\",\"ct\":{\"s\":1}}\n",
            "{\"op\":\"begin\",\"txn\":\"t1\",\"st\":{\"s\":2}}\n",
            "{\"op\":\"read\",\"txn\":\"t1\",\"key\":\"a\",\"expect\":7}\n",
        ),
    )
    .unwrap();
    let out = run_in(dir.path(), &["run", good.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("read t1 a = 7"), "stdout: {}", stdout(&out));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        std::fs::read_to_string(&good).unwrap().replace("\"expect\":7", "\"expect\":8"),
    )
    .unwrap();
    let out = run_in(dir.path(), &["run", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("expected 8"), "stderr: {}", stderr(&out));
}

#[test]
fn run_maps_failures_to_documented_codes() {
    let dir = tempfile::tempdir().unwrap();

    let out = run_in(dir.path(), &["run", "no-such-file.jsonl"]);
    assert_eq!(code(&out), 1);

    // Engine rejection: a commit below its own snapshot.
    let p = dir.path().join("ct-before-st.jsonl");
    std::fs::write(
        &p,
        concat!(
            "{\"op\":\"begin\",\"txn\":\"t0\",\"st\":{\"s\":5}}\n",
            "{\"op\":\"commit\",\"txn\":\"t0\",\"ct\":{\"s\":3}}\n",
        ),
    )
    .unwrap();
    let out = run_in(dir.path(), &["run", p.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("CtBeforeSnapshot"), "stderr: {}", stderr(&out));

    // Unparsable and invalid histories are input problems, not engine errors.
    let p = dir.path().join("not-json.jsonl");
    std::fs::write(&p, "nope\n").unwrap();
    let out = run_in(dir.path(), &["run", p.to_str().unwrap()]);
    assert_eq!(code(&out), 1);

    let p = dir.path().join("invalid.jsonl");
    std::fs::write(&p, "{\"op\":\"abort\",\"txn\":\"t9\"}\n").unwrap();
    let out = run_in(dir.path(), &["run", p.to_str().unwrap()]);
    assert_eq!(code(&out), 1);

    let out = run_in(dir.path(), &["run", "x.jsonl", "--no-such-flag"]);
    assert_eq!(code(&out), 1);

    let out = run_in(dir.path(), &["--help"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn dump_prints_golden_tables() {
    let dir = tempfile::tempdir().unwrap();
    let h = write_diamond(dir.path());

    let out = run_in(dir.path(), &["dump", &h, "--backend", "map"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 5, "stdout: {text}");
    assert!(text.starts_with("a\t{\"s\":1}\t{\"s\":0}\t"), "stdout: {text}");

    let out = run_in(dir.path(), &["dump", &h, "--backend", "journal"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 15, "stdout: {text}");
    assert!(text.starts_with("BeginTxnRec(t0, 0)\n"), "stdout: {text}");
    assert!(text.ends_with("CommitTxnRec(t4, 7, 9)\n"), "stdout: {text}");

    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let out = run_in(dir.path(), &["dump", empty.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "");
}

#[test]
fn saved_journals_are_recognized_by_magic() {
    let dir = tempfile::tempdir().unwrap();
    let saved = dir.path().join("diamond.dsj");
    let mut sys = SystemState::with_store(Journal::new(), NictVariant::Strong);
    let log = run_history(&mut sys, &diamond_history(), true);
    assert!(log.errors.is_empty());
    sys.store().save(&saved).unwrap();
    let saved = saved.to_str().unwrap();

    let out = run_in(dir.path(), &["dump", saved, "--backend", "journal"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).lines().count(), 15);

    let out = run_in(dir.path(), &["dump", saved, "--backend", "map"]);
    assert_eq!(code(&out), 1);

    let out = run_in(dir.path(), &["lookup", saved, "a@11", "--backend", "journal"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "a@11 = 15\n");

    let out = run_in(dir.path(), &["run", saved]);
    assert_eq!(code(&out), 1);
}

#[test]
fn lookup_evaluates_probes() {
    let dir = tempfile::tempdir().unwrap();
    let h = write_diamond(dir.path());

    for backend in ["map", "journal"] {
        let out = run_in(dir.path(), &["lookup", &h, "a@11", "--backend", backend]);
        assert_eq!(code(&out), 0);
        assert_eq!(stdout(&out), "a@11 = 15\n", "backend {backend}");
    }

    let out = run_in(dir.path(), &["lookup", &h, "a@0"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "a@0 = absent\n");

    // The grammar itself confines `both` to replay commands.
    let out = run_in(dir.path(), &["lookup", &h, "a@11", "--backend", "both"]);
    assert_eq!(code(&out), 1);

    let out = run_in(dir.path(), &["lookup", &h, "a@eleven"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn fuzz_reports_agreement_and_divergence() {
    let dir = tempfile::tempdir().unwrap();

    let out = run_in(dir.path(), &["fuzz", "--count", "0"]);
    assert_eq!(code(&out), 1);

    let out = run_in(dir.path(), &["fuzz", "--count", "40"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("checked 40/40"), "stdout: {text}");
    assert!(text.contains("all 40 histories agree"), "stdout: {text}");

    // The planted merge fault is found and leaves a shrunk reproducer.
    let out = run_in(dir.path(), &["fuzz", "--count", "40", "--mutate", "dedup-off"]);
    assert_eq!(code(&out), 4, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("divergence at seed 8"), "stdout: {text}");
    assert!(text.contains("wrote repro-8.jsonl"), "stdout: {text}");
    let repro = std::fs::read_to_string(dir.path().join("repro-8.jsonl")).unwrap();
    let shrunk = parse_history(&repro).unwrap();
    assert!(!shrunk.is_empty());

    // Identical invocations produce identical bytes.
    let again = run_in(dir.path(), &["fuzz", "--count", "40", "--mutate", "dedup-off"]);
    assert_eq!(stdout(&again), text);
}

#[test]
fn fuzz_seed_env_var_wins() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .args(["fuzz", "--count", "1", "--mutate", "dedup-off", "--seed", "0"])
        .current_dir(dir.path())
        .env("DUALSTORE_SEED", "8")
        .output()
        .unwrap();
    assert_eq!(code(&out), 4, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("divergence at seed 8"), "stdout: {}", stdout(&out));

    let out = Command::new(BIN)
        .args(["fuzz", "--count", "1"])
        .current_dir(dir.path())
        .env("DUALSTORE_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

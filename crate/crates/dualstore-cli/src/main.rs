//! `dualstore`: replay transaction histories against the versioned map
//! store or the append-only journal, inspect their contents, and fuzz the
//! two backends against the reference evaluator.
//!
//! Exit codes: 0 success, 1 usage or input-file problem, 2 engine rejection,
//! 3 read-expectation mismatch, 4 fuzz divergence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dualstore::engine::{NictVariant, SystemState};
use dualstore::harness::{
    differential_check, fuzz_scan, gen_history, probe_store, GenParams, Mutation,
};
use dualstore::history::{parse_history, serialize_history, validate, History, HistoryStep};
use dualstore::journal::Journal;
use dualstore::map_store::MapStore;
use dualstore::store::{Semantics, StoreOps};
use dualstore::types::{Key, Timestamp};

const EXIT_USAGE: u8 = 1;
const EXIT_ENGINE: u8 = 2;
const EXIT_MISMATCH: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(name = "dualstore", version, about = "Dual-backend transactional key-value store")]
struct Cli {
    /// Strictness of the commit-timestamp rule during replay.
    #[arg(long, global = true, value_enum, default_value_t = NictArg::Strong)]
    nict: NictArg,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum NictArg {
    /// No commit may predate any live snapshot.
    Strong,
    /// Running transactions block only commits touching their read sets.
    Weaker1,
    /// All transactions block only commits touching their read sets.
    Weaker2,
}

impl NictArg {
    fn variant(self) -> NictVariant {
        match self {
            NictArg::Strong => NictVariant::Strong,
            NictArg::Weaker1 => NictVariant::RefineRunning,
            NictArg::Weaker2 => NictVariant::RefineAll,
        }
    }
}

/// Backends a query command can address. Replay commands also accept `both`.
#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Backend {
    Map,
    Journal,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum RunBackend {
    Map,
    Journal,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum MutateArg {
    /// Correct semantics.
    None,
    /// Plant the merge fault: shared increments count once per path.
    DedupOff,
    /// Plant the visibility fault: lookups see commits at the query time.
    InclusiveVis,
}

impl MutateArg {
    fn mutation(self) -> Mutation {
        match self {
            MutateArg::None => Mutation::None,
            MutateArg::DedupOff => Mutation::DedupOff,
            MutateArg::InclusiveVis => Mutation::InclusiveVis,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay a history file, printing every read; optional probes query the
    /// final store.
    Run {
        /// History file, one JSON step per line.
        history: PathBuf,
        #[arg(long, value_enum, default_value_t = RunBackend::Map)]
        backend: RunBackend,
        /// Lookup to evaluate after replay, as KEY@TS (repeatable).
        #[arg(long = "probe", value_name = "KEY@TS")]
        probes: Vec<String>,
    },
    /// Print a backend's contents: versions for the map store, records for
    /// the journal. Accepts a history file or a saved journal file.
    Dump {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Backend::Map)]
        backend: Backend,
    },
    /// Evaluate one KEY@TS lookup against a replayed history or a saved
    /// journal file.
    Lookup {
        file: PathBuf,
        /// Lookup position, as KEY@TS.
        probe: String,
        #[arg(long, value_enum, default_value_t = Backend::Map)]
        backend: Backend,
    },
    /// Generate seeded histories and compare the map store, the journal, and
    /// the reference evaluator on every one. Exits 4 at the first
    /// disagreement, leaving a repro file behind.
    Fuzz {
        /// First seed; the DUALSTORE_SEED environment variable overrides it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, value_enum, default_value_t = MutateArg::None)]
        mutate: MutateArg,
        /// Transactions per generated history.
        #[arg(long, default_value_t = GenParams::default().txns)]
        txns: usize,
        /// Distinct keys per generated history.
        #[arg(long, default_value_t = GenParams::default().keys)]
        keys: usize,
        /// Write-effect budget per transaction.
        #[arg(long, default_value_t = GenParams::default().max_effects)]
        max_effects: usize,
        /// Probability that a key holds a counter rather than a register.
        #[arg(long, default_value_t = GenParams::default().counter_bias)]
        counter_bias: f64,
    },
}

fn main() -> ExitCode {
    // Pipeline consumers like `head` close stdout early; exit on SIGPIPE
    // like other line-oriented tools instead of panicking mid-print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let nict = cli.nict.variant();
    let code = match cli.cmd {
        Cmd::Run { history, backend, probes } => cmd_run(&history, backend, &probes, nict),
        Cmd::Dump { file, backend } => cmd_dump(&file, backend, nict),
        Cmd::Lookup { file, probe, backend } => cmd_lookup(&file, &probe, backend, nict),
        Cmd::Fuzz { seed, count, mutate, txns, keys, max_effects, counter_bias } => {
            let params = GenParams { txns, keys, max_effects, counter_bias };
            cmd_fuzz(seed, count, mutate.mutation(), &params)
        }
    };
    ExitCode::from(code.unwrap_or_else(|c| c))
}

fn fail<T>(code: u8, msg: impl std::fmt::Display) -> Result<T, u8> {
    eprintln!("error: {msg}");
    Err(code)
}

fn parse_probe(text: &str) -> Result<(Key, Timestamp), u8> {
    let parsed = text.rsplit_once('@').and_then(|(k, ts)| {
        if k.is_empty() {
            return None;
        }
        ts.parse::<u64>().ok().map(|n| (Key::new(k), Timestamp::scalar(n)))
    });
    match parsed {
        Some(p) => Ok(p),
        None => fail(EXIT_USAGE, format!("probe '{text}' is not KEY@TS with an integer timestamp")),
    }
}

fn is_journal_file(path: &Path) -> Result<bool, u8> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(bytes.starts_with(b"DSJL1\n")),
        Err(e) => fail(EXIT_USAGE, format!("cannot read {}: {e}", path.display())),
    }
}

fn load_history(path: &Path) -> Result<History, u8> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_USAGE, format!("cannot read {}: {e}", path.display())),
    };
    let h = match parse_history(&text) {
        Ok(h) => h,
        Err(e) => return fail(EXIT_USAGE, format!("{}: {e}", path.display())),
    };
    if let Err(e) = validate(&h) {
        return fail(EXIT_USAGE, format!("{}: {e}", path.display()));
    }
    Ok(h)
}

/// Replay every step, print reads, check expectations, then print probes.
fn replay_section<S: StoreOps>(
    store: S,
    label: &str,
    h: &History,
    probes: &[(Key, Timestamp)],
    nict: NictVariant,
) -> Result<u8, u8> {
    let mut sys = SystemState::with_store(store, nict);
    println!("[{label}]");
    for step in h.steps() {
        match sys.run_step(step) {
            Ok(Some(value)) => {
                if let HistoryStep::Read { txn, key, expect } = step {
                    println!("read {txn} {key} = {value}");
                    if let Some(want) = expect {
                        if want != &value {
                            return fail(
                                EXIT_MISMATCH,
                                format!("{label}: read {txn} {key} returned {value}, expected {want}"),
                            );
                        }
                    }
                }
            }
            Ok(None) => {}
            Err(e) => return fail(EXIT_ENGINE, format!("{label}: {e}")),
        }
    }
    for (k, at) in probes {
        println!("{k}@{at} = {}", probe_store(sys.store(), k, at));
    }
    Ok(0)
}

fn cmd_run(
    path: &Path,
    backend: RunBackend,
    probe_args: &[String],
    nict: NictVariant,
) -> Result<u8, u8> {
    if is_journal_file(path)? {
        return fail(EXIT_USAGE, "run replays history files, not saved journals");
    }
    let h = load_history(path)?;
    let mut probes = Vec::new();
    for p in probe_args {
        probes.push(parse_probe(p)?);
    }
    if backend != RunBackend::Journal {
        replay_section(MapStore::new(), "map", &h, &probes, nict)?;
    }
    if backend != RunBackend::Map {
        replay_section(Journal::new(), "journal", &h, &probes, nict)?;
    }
    Ok(0)
}

fn cmd_dump(path: &Path, backend: Backend, nict: NictVariant) -> Result<u8, u8> {
    if is_journal_file(path)? {
        if backend != Backend::Journal {
            return fail(EXIT_USAGE, "a saved journal dumps only with --backend journal");
        }
        let j = match Journal::load(path, Semantics::default()) {
            Ok(j) => j,
            Err(e) => return fail(EXIT_USAGE, format!("{}: {e}", path.display())),
        };
        print!("{}", j.dump());
        return Ok(0);
    }
    let h = load_history(path)?;
    match backend {
        Backend::Map => {
            let sys = replay_quiet(MapStore::new(), &h, nict)?;
            print!("{}", sys.store().dump());
        }
        Backend::Journal => {
            let sys = replay_quiet(Journal::new(), &h, nict)?;
            print!("{}", sys.store().dump());
        }
    }
    Ok(0)
}

fn replay_quiet<S: StoreOps>(
    store: S,
    h: &History,
    nict: NictVariant,
) -> Result<SystemState<S>, u8> {
    let mut sys = SystemState::with_store(store, nict);
    for (i, step) in h.steps().iter().enumerate() {
        if let Err(e) = sys.run_step(step) {
            return fail(EXIT_ENGINE, format!("step {i}: {e}"));
        }
    }
    Ok(sys)
}

fn cmd_lookup(path: &Path, probe: &str, backend: Backend, nict: NictVariant) -> Result<u8, u8> {
    let (k, at) = parse_probe(probe)?;
    if is_journal_file(path)? {
        if backend != Backend::Journal {
            return fail(EXIT_USAGE, "a saved journal answers lookups only with --backend journal");
        }
        let j = match Journal::load(path, Semantics::default()) {
            Ok(j) => j,
            Err(e) => return fail(EXIT_USAGE, format!("{}: {e}", path.display())),
        };
        println!("{k}@{at} = {}", probe_store(&j, &k, &at));
        return Ok(0);
    }
    let h = load_history(path)?;
    match backend {
        Backend::Map => {
            let sys = replay_quiet(MapStore::new(), &h, nict)?;
            println!("{k}@{at} = {}", probe_store(sys.store(), &k, &at));
        }
        Backend::Journal => {
            let sys = replay_quiet(Journal::new(), &h, nict)?;
            println!("{k}@{at} = {}", probe_store(sys.store(), &k, &at));
        }
    }
    Ok(0)
}

fn cmd_fuzz(
    seed_flag: u64,
    count: usize,
    mutation: Mutation,
    params: &GenParams,
) -> Result<u8, u8> {
    let seed_start = match std::env::var("DUALSTORE_SEED") {
        Ok(v) => match v.parse::<u64>() {
            Ok(n) => n,
            Err(_) => return fail(EXIT_USAGE, format!("DUALSTORE_SEED '{v}' is not an integer")),
        },
        Err(_) => seed_flag,
    };
    if count == 0 {
        return fail(EXIT_USAGE, "--count must be at least 1");
    }

    let mut checked = 0usize;
    while checked < count {
        let block = (count - checked).min(1000);
        let out = fuzz_scan(seed_start + checked as u64, block, params, mutation);
        checked += out.checked;
        println!("checked {checked}/{count}");
        if let Some(&seed) = out.divergent.first() {
            let h = gen_history(seed, params);
            let report = differential_check(&h, mutation);
            println!("divergence at seed {seed}");
            for d in report.divergences.iter().take(5) {
                println!("{d}");
            }
            if let Some(m) = &report.log_mismatch {
                println!("{m}");
            }
            let repro = report.shrunk.unwrap_or(h);
            let repro_path = format!("repro-{seed}.jsonl");
            if let Err(e) = std::fs::write(&repro_path, serialize_history(&repro)) {
                return fail(EXIT_DIVERGENCE, format!("cannot write {repro_path}: {e}"));
            }
            println!("wrote {repro_path}");
            return fail(EXIT_DIVERGENCE, format!("routes disagree at seed {seed}"));
        }
    }
    println!("all {count} histories agree");
    Ok(0)
}

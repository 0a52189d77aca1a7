//! A versioned, transactional key-value store with two interchangeable
//! backends and the machinery to prove them equivalent.
//!
//! * [`types`]: keys, values, transaction ids, scalar/vector timestamps and
//!   their (partial) orders.
//! * [`effects`]: the update-effect algebra; mergeable, provenance-carrying
//!   key states.
//! * [`store`]: the backend-neutral store interface.
//! * [`map_store`]: the eager backend, a versioned map materialized at commit.
//! * [`journal`]: the append-only backend, a redo log evaluated on demand,
//!   with file persistence.
//! * [`engine`]: snapshot-isolated transactions over either backend.
//! * [`history`]: the JSONL history format driving runs and tests.
//! * [`oracle`]: a deliberately naive reference evaluator.
//! * [`harness`]: replay, differential checking, shrinking, and history
//!   generation.
//! * [`samples`]: canned histories used by documentation, tests, and the CLI
//!   examples.

pub mod effects;
pub mod engine;
pub mod error;
pub mod harness;
pub mod history;
pub mod journal;
pub mod map_store;
pub mod oracle;
pub mod samples;
pub mod store;
pub mod types;

pub use error::{Error, Result};

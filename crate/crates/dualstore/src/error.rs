use thiserror::Error;

use crate::types::{Key, Timestamp, TxnId};

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Display output starts with the variant name so
/// diagnostics stay greppable in CLI output and test logs.
#[derive(Error, Debug)]
pub enum Error {
    /// Scalar and vector timestamps are incomparable by construction.
    #[error("VariantMismatch: cannot compare scalar and vector timestamps")]
    VariantMismatch,

    #[error("TypeMismatch: {0}")]
    TypeMismatch(String),

    /// Counter arithmetic is checked; wraparound is never silent.
    #[error("Overflow: counter arithmetic out of range")]
    Overflow,

    /// A delta was applied where no assignment has ever provided a base value.
    #[error("ImproperSequence: effect sequence does not start with an assignment")]
    ImproperSequence,

    #[error("DuplicateTxn: transaction {0} already exists")]
    DuplicateTxn(TxnId),

    #[error("UnknownTxn: transaction {0} is not running")]
    UnknownTxn(TxnId),

    #[error("AlreadyCommitted: transaction {0} has already committed")]
    AlreadyCommitted(TxnId),

    #[error("DuplicateCommit: transaction {0} already has a commit record")]
    DuplicateCommit(TxnId),

    #[error("DuplicateCommitTs: commit timestamp {0} is already taken")]
    DuplicateCommitTs(Timestamp),

    #[error("CtBeforeSnapshot: commit timestamp {ct} precedes snapshot timestamp {st}")]
    CtBeforeSnapshot { st: Timestamp, ct: Timestamp },

    #[error("NIctViolation: commit timestamp {ct} precedes the snapshot of transaction {txn}")]
    NIctViolation { txn: TxnId, ct: Timestamp },

    #[error("UninitializedRead: key {0} does not resolve to an assignment")]
    UninitializedRead(Key),

    #[error("OverwriteAttempt: version ({key}, {version}) is already stored")]
    OverwriteAttempt { key: Key, version: Timestamp },

    #[error("NonAssignCommit: buffered state for key {0} is not assignment-based")]
    NonAssignCommit(Key),

    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),

    /// Position is the zero-based index of the record that failed to decode.
    #[error("CorruptRecord: record {0} is malformed or truncated")]
    CorruptRecord(usize),

    #[error("InvariantViolation: {0}")]
    InvariantViolation(String),

    /// Line numbers are 1-based.
    #[error("ParseError: line {line}: {msg}")]
    ParseError { line: usize, msg: String },

    /// Step indices are 0-based positions in the parsed history.
    #[error("ValidationError: step {step}: {msg}")]
    ValidationError { step: usize, msg: String },
}

impl Error {
    /// The bare variant label, for comparing failure kinds across
    /// independently implemented evaluation routes whose message payloads
    /// legitimately differ.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Error::VariantMismatch => "VariantMismatch",
            Error::TypeMismatch(_) => "TypeMismatch",
            Error::Overflow => "Overflow",
            Error::ImproperSequence => "ImproperSequence",
            Error::DuplicateTxn(_) => "DuplicateTxn",
            Error::UnknownTxn(_) => "UnknownTxn",
            Error::AlreadyCommitted(_) => "AlreadyCommitted",
            Error::DuplicateCommit(_) => "DuplicateCommit",
            Error::DuplicateCommitTs(_) => "DuplicateCommitTs",
            Error::CtBeforeSnapshot { .. } => "CtBeforeSnapshot",
            Error::NIctViolation { .. } => "NIctViolation",
            Error::UninitializedRead(_) => "UninitializedRead",
            Error::OverwriteAttempt { .. } => "OverwriteAttempt",
            Error::NonAssignCommit(_) => "NonAssignCommit",
            Error::Io(_) => "IoError",
            Error::CorruptRecord(_) => "CorruptRecord",
            Error::InvariantViolation(_) => "InvariantViolation",
            Error::ParseError { .. } => "ParseError",
            Error::ValidationError { .. } => "ValidationError",
        }
    }
}

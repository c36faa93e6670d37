use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
///
/// Contract violations (bad labels, shape mismatches) are reported through
/// the same type as I/O and parse failures so that the CLI can map every
/// failure onto an exit code in one place.
#[derive(Debug, Error)]
pub enum Error {
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("target of length {target_len} with {repeats} adjacent repeats needs at least {required} frames, got {frames}")]
    InfeasibleTarget {
        target_len: usize,
        repeats: usize,
        required: usize,
        frames: usize,
    },

    #[error("infeasible targets at example indices {0:?}")]
    InfeasibleExamples(Vec<usize>),

    #[error("brute-force search space {size} exceeds limit {limit}")]
    SearchSpaceTooLarge { size: f64, limit: f64 },

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("file is empty: {}", .0.display())]
    EmptyFile(PathBuf),

    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: field {field} is not a finite number: {value:?}")]
    NonNumeric {
        line: usize,
        field: usize,
        value: String,
    },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_label(label: usize, classes: usize) -> Result<()> {
    if label < classes {
        Ok(())
    } else {
        Err(Error::LabelOutOfRange { label, classes })
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}

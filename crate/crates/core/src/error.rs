use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("unsupported file version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("signal of {samples} samples is shorter than one {window}-sample window")]
    TooShort { samples: usize, window: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{}:{line}: {msg}", .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("overlapping alignment entries in {utt_id}: {first} and {second}")]
    Overlap {
        utt_id: String,
        first: String,
        second: String,
    },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value at coordinate {0}")]
    NonFinite(usize),
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(&'static str),
    #[error("corpus has no usable training chunks")]
    EmptyCorpus,
    #[error("segment [{start}, {end}) out of range for {frames} frames")]
    Range {
        start: usize,
        end: usize,
        frames: usize,
    },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("position {position} out of range for utterance {utt_id} ({len} segments)")]
    Index {
        utt_id: String,
        position: usize,
        len: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("experiment exceeded its {budget_s} s budget ({elapsed_s:.1} s)")]
    BudgetExceeded { budget_s: f64, elapsed_s: f64 },
    #[error("metric {metric} = {value} violates bound {bound}")]
    BoundViolated {
        metric: String,
        value: f64,
        bound: String,
    },
}

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::AnswerId;

/// Failures while reading, validating or writing corpus files.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{file}:{line}: malformed record: {reason}")]
    Malformed {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("{file}:{line}: duplicate token {token:?}")]
    DuplicateToken {
        file: String,
        line: usize,
        token: String,
    },
    #[error("{file}:{line}: duplicate vocabulary id {id}")]
    DuplicateTokenId { file: String, line: usize, id: u64 },
    #[error("{file}:{line}: answer {id} has no tokens")]
    EmptyAnswer {
        file: String,
        line: usize,
        id: AnswerId,
    },
    #[error("{file}:{line}: duplicate answer id {id}")]
    DuplicateAnswer {
        file: String,
        line: usize,
        id: AnswerId,
    },
    #[error("{file}:{line}: unknown token id {id}")]
    UnknownToken { file: String, line: usize, id: u64 },
    #[error("question {qid}: empty question")]
    EmptyQuestion { qid: String },
    #[error("question {qid}: no ground-truth answers")]
    EmptyTruth { qid: String },
    #[error("question {qid}: unknown answer id {id}")]
    UnknownAnswer { qid: String, id: AnswerId },
    #[error("question {qid}: ground truth not contained in pool")]
    TruthNotInPool { qid: String },
    #[error("question {qid}: duplicate answer id {id} in pool or truth")]
    DuplicateCandidate { qid: String, id: AnswerId },
    #[error("question {qid}: missing candidate pool")]
    MissingPool { qid: String },
    #[error("pool size {pool_size} is not in [{truth}, {answers}] (truth count, answer space)")]
    PoolSize {
        pool_size: usize,
        truth: usize,
        answers: usize,
    },
    #[error("no negative answer available outside the ground truth")]
    ExhaustedAnswerSpace,
    #[error("empty document collection")]
    NoDocuments,
    #[error("unrecognized corpus layout in {0}")]
    UnrecognizedLayout(PathBuf),
}

/// Shape and lookup failures in the layer primitives.
#[derive(Debug, Error, PartialEq)]
pub enum LayerError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("empty feature map")]
    EmptyFeatureMap,
    #[error("empty token sequence")]
    EmptySequence,
}

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid metric: {0}")]
    Parse(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {value:?}")]
    InvalidValue { key: String, value: String },
    #[error("inconsistent model configuration: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Crate-wide error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

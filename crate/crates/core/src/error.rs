//! Error types shared across the library. Every failure is a typed error;
//! panics are reserved for internal invariant violations (indexing bugs),
//! never for bad user input or unlucky sampling.

use thiserror::Error;

/// Top-level error for the core library.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("floorplan error: {0}")]
    Floorplan(#[from] FloorplanError),
    #[error("simulation error: {0}")]
    Sim(#[from] SimError),
    #[error("language error: {0}")]
    Lang(#[from] LangError),
    #[error("training error: {0}")]
    Rl(#[from] RlError),
    #[error("goal assessment error: {0}")]
    Ga(#[from] GaError),
    #[error("checkpoint error: {0}")]
    Ckpt(#[from] CkptError),
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("evaluation error: {0}")]
    Eval(#[from] EvalError),
}

#[derive(Debug, Error)]
pub enum FloorplanError {
    #[error("floorplan {plan_id} is disconnected")]
    Disconnected { plan_id: u32 },
    #[error("holdout size {holdout} must be smaller than total plan count {total}")]
    BadSplit { holdout: usize, total: usize },
    #[error("room {0} is not part of this house template")]
    UnknownRoom(String),
    #[error("no path between rooms {from} and {to}")]
    NoRoomPath { from: String, to: String },
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("object placement failed in room {room} after {attempts} attempts")]
    Placement { room: String, attempts: u32 },
    #[error("agent spawn failed after {attempts} attempts")]
    SpawnFailed { attempts: u32 },
    #[error("point ({x:.3}, {y:.3}) is not within 0.2 m of walkable space")]
    Unwalkable { x: f64, y: f64 },
    #[error("goal position is unreachable from ({x:.3}, {y:.3})")]
    Unreachable { x: f64, y: f64 },
    #[error("episode already terminated; call reset before stepping")]
    AlreadyTerminated,
    #[error("house has no eligible room for object placement")]
    NoEligibleRoom,
}

#[derive(Debug, Error)]
pub enum LangError {
    #[error("cannot parse instruction {text:?}: {reason}")]
    Parse { text: String, reason: String },
    #[error("unknown word {0:?}")]
    UnknownWord(String),
    #[error("token id {0} is outside the vocabulary")]
    BadToken(u16),
    #[error("the corridor cannot be named as an enhancement target")]
    CorridorTarget,
}

#[derive(Debug, Error)]
pub enum RlError {
    #[error("non-finite {quantity} encountered at update {update}")]
    NonFinite { quantity: String, update: u64 },
    #[error("rollout batch is empty")]
    EmptyBatch,
    #[error("mismatched dimensions: {0}")]
    Shape(String),
}

#[derive(Debug, Error)]
pub enum GaError {
    #[error("dataset has a single class (positives={positives}, total={total}); cannot train")]
    SingleClass { positives: usize, total: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("dataset io error: {0}")]
    Io(String),
    #[error("dataset index line {line} is malformed: {reason}")]
    BadIndex { line: usize, reason: String },
}

#[derive(Debug, Error)]
pub enum CkptError {
    #[error("checkpoint io error: {0}")]
    Io(String),
    #[error("checkpoint parse error: {0}")]
    Parse(String),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint kind mismatch: expected {expected}, found {found}")]
    Kind { expected: String, found: String },
    #[error("array {name} has {found} values but shape implies {expected}")]
    ArrayLen { name: String, expected: usize, found: usize },
    #[error("missing array {0}")]
    MissingArray(String),
    #[error("non-finite value in array {0}")]
    NonFinite(String),
    #[error("vocabulary mismatch between checkpoints: {0}")]
    VocabMismatch(String),
    #[error("architecture mismatch: {0}")]
    ArchMismatch(String),
}

#[derive(Debug, Error)]
#[error("config field `{field}`: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: &str, reason: impl Into<String>) -> Self {
        Self { field: field.to_string(), reason: reason.into() }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("trace io error: {0}")]
    Io(String),
    #[error("trace line {line} is malformed: {reason}")]
    BadTrace { line: usize, reason: String },
    #[error("empty trace cannot be classified")]
    EmptyTrace,
    #[error("evaluation produced no episodes")]
    NoEpisodes,
}

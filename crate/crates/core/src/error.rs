use thiserror::Error;

use crate::model::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("n must be at least 2, got {0}")]
    TooFewNodes(u32),
    #[error("phase constant c must be positive")]
    ZeroPhaseConstant,
    #[error("rumor bit length b must be positive")]
    ZeroRumorBits,
    #[error("failure scale must be a finite non-negative number, got {0}")]
    BadFailureScale(f64),
    #[error("rho must be at least 2, got {0}")]
    RhoTooSmall(u32),
    #[error("estimate spread must be at least 1, got {0}")]
    BadEstimateSpread(f64),
    #[error("start node {start} out of range for n = {n}")]
    StartNodeOutOfRange { start: u32, n: u32 },
    #[error("unknown mode `{0}` (expected jpp, push, pull or pushpull)")]
    UnknownMode(String),
    #[error("unknown failure timing `{0}` (expected none, start or per-round)")]
    UnknownFailureTiming(String),
    #[error("bad start node `{0}` (expected an id or `random`)")]
    BadStartNode(String),
    #[error("schedule of {0} rounds is too long to simulate; lower rho, c or the estimate spread")]
    ScheduleTooLong(u64),
}

/// A malformed round handed to the engine. These indicate a defect in the
/// protocol layer, never a simulated-world event.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolBug {
    #[error("round {round}: node {caller} is failed but placed an action")]
    FailedCaller { round: u32, caller: NodeId },
    #[error("round {round}: node {caller} placed more than one action")]
    DuplicateCaller { round: u32, caller: NodeId },
    #[error("round {round}: actions not sorted by caller id at node {caller}")]
    Unsorted { round: u32, caller: NodeId },
    #[error("round {round}: node {caller} out of range")]
    OutOfRange { round: u32, caller: NodeId },
    #[error("round {round}: node {caller} called itself")]
    SelfCall { round: u32, caller: NodeId },
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("protocol bug: {0}")]
    Protocol(#[from] ProtocolBug),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

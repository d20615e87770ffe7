use std::path::PathBuf;

use eamod_lp::LpError;
use thiserror::Error;

use crate::road_network::NodeId;

#[derive(Debug, Error)]
pub enum EamodError {
    #[error("node {to} is unreachable from node {from}")]
    UnreachableNode { from: NodeId, to: NodeId },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{}: row {row}: {msg}", path.display())]
    Parse { path: PathBuf, row: usize, msg: String },
    #[error("request {0} has identical origin and destination")]
    SelfLoopRequest(u64),
    #[error("cannot sample {requested} requests out of {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("bounds have mismatched shapes")]
    MismatchedShapes,
    #[error("no results to aggregate")]
    EmptyResults,
    #[error("battery capacity must be positive")]
    ZeroBattery,
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("instance too large for exhaustive search: {0}")]
    InstanceTooLarge(String),
    #[error("model is infeasible")]
    Infeasible,
    #[error("time limit reached without a feasible solution")]
    TimeLimit,
    #[error("served quota {quota} is unattainable")]
    InfeasibleQuota { quota: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl EamodError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EamodError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, EamodError>;

use std::path::PathBuf;

use thiserror::Error;

use crate::sim::SimTime;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("event scheduled at {at} ns but clock is already {now} ns")]
    ScheduleInPast { at: SimTime, now: SimTime },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("trace output failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("node {node} cannot reach host {dst}")]
    Unreachable { node: usize, dst: usize },

    #[error("invalid workload: {0}")]
    Workload(String),

    #[error("invalid protocol settings: {0}")]
    Protocol(String),

    #[error("invalid switch settings: {0}")]
    Switch(String),

    #[error("{path}:{line}: {msg}")]
    CdfParse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("Jain index undefined for an empty set")]
    Empty,
    #[error("Jain index undefined when every value is zero")]
    AllZero,
}

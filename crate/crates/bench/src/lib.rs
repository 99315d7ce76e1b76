//! Benchmark drivers and report writers behind the `veilaudit` binary.
//!
//! Every driver is a pure function of its config and seed; reports written
//! from the same inputs are byte-identical unless wall-clock timing is
//! explicitly requested.

pub mod aol;
pub mod attacks;
pub mod depth;
pub mod irp;
pub mod latency;
pub mod report;
pub mod stats;

use thiserror::Error;
use veilaudit_core::auditor::AuditorError;
use veilaudit_core::scenario::ScenarioError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("stats: {0}")]
    Stats(#[from] stats::StatsError),
    #[error("auditor: {0}")]
    Auditor(#[from] AuditorError),
    #[error("protocol: {0}")]
    Protocol(#[from] veilaudit_core::protocols::ProtocolError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
}

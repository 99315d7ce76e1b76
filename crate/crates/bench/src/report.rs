use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::stats::{bootstrap_ci, BootstrapCi, DEFAULT_RESAMPLES};
use crate::BenchError;

/// Aggregate of one benchmark point across its repeats.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub label: String,
    pub config: serde_json::Value,
    pub metrics: BTreeMap<String, BootstrapCi>,
    pub samples: BTreeMap<String, Vec<f64>>,
    pub p50_ms: Option<f64>,
    pub p95_ms: Option<f64>,
    pub tps_realized: Option<f64>,
}

impl RunReport {
    pub fn new(label: impl Into<String>, config: serde_json::Value) -> Self {
        RunReport {
            label: label.into(),
            config,
            metrics: BTreeMap::new(),
            samples: BTreeMap::new(),
            p50_ms: None,
            p95_ms: None,
            tps_realized: None,
        }
    }

    /// Records raw samples for a metric and its bootstrap interval.
    pub fn metric(&mut self, name: &str, samples: Vec<f64>, seed: u64) -> Result<&BootstrapCi, BenchError> {
        let ci = bootstrap_ci(&samples, DEFAULT_RESAMPLES, seed)?;
        self.samples.insert(name.to_string(), samples);
        self.metrics.insert(name.to_string(), ci);
        Ok(&self.metrics[name])
    }

    pub fn mean(&self, name: &str) -> f64 {
        self.metrics[name].mean
    }
}

/// `(x, mean, lo, hi)` rows for external plotting.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlotPoint {
    pub x: f64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn plot_series(reports: &[RunReport], x: impl Fn(&RunReport) -> f64, metric: &str) -> Vec<PlotPoint> {
    reports
        .iter()
        .filter_map(|r| {
            r.metrics.get(metric).map(|ci| PlotPoint { x: x(r), mean: ci.mean, lo: ci.lo, hi: ci.hi })
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BenchError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Per-run seed derived from the invocation seed and a position.
pub fn sub_seed(seed: u64, label: &str, index: u64) -> u64 {
    let d = veilaudit_core::algebra::digest32(
        b"veilaudit/bench-seed",
        &[&seed.to_be_bytes(), label.as_bytes(), &index.to_be_bytes()],
    );
    u64::from_be_bytes(d[..8].try_into().expect("8 bytes"))
}

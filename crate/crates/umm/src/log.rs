//! Per-trial decision logs and their CSV form.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use umm_core::covariance::{CovarianceScope, EstimatorKind};
use umm_core::decoder::{Decision, DecoderConfig, MeanStrategy};
use umm_core::trial::SymbolSet;

use crate::error::{io_at, Result};
use crate::session_io::atomic_write;

pub const LOG_HEADER: [&str; 15] = [
    "session_id",
    "trial_index",
    "predicted_symbol",
    "true_symbol",
    "correct",
    "d_best",
    "d_runner_up",
    "confidence",
    "instant_confidence",
    "cumulative_confidence",
    "cumulative_instant_confidence",
    "degenerate",
    "mean_strategy",
    "covariance_kind",
    "covariance_scope",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub session_id: String,
    pub trial_index: usize,
    pub predicted_symbol: String,
    pub true_symbol: Option<String>,
    pub correct: Option<bool>,
    pub d_best: f64,
    pub d_runner_up: f64,
    pub confidence: f64,
    pub instant_confidence: f64,
    pub cumulative_confidence: f64,
    pub cumulative_instant_confidence: f64,
    pub degenerate: bool,
    pub mean_strategy: String,
    pub covariance_kind: String,
    pub covariance_scope: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecisionLog {
    pub session_id: String,
    pub rows: Vec<LogRow>,
}

pub fn mean_strategy_name(m: MeanStrategy) -> &'static str {
    match m {
        MeanStrategy::Instant => "instant",
        MeanStrategy::Optimistic => "optimistic",
        MeanStrategy::ConfidenceWeighted => "confidence",
    }
}

pub fn covariance_kind_name(k: EstimatorKind) -> &'static str {
    match k {
        EstimatorKind::Shrinkage => "shrinkage",
        EstimatorKind::BlockToeplitz => "toeplitz",
        EstimatorKind::Fixed => "fixed",
    }
}

pub fn covariance_scope_name(s: CovarianceScope) -> &'static str {
    match s {
        CovarianceScope::CurrentTrial => "trial",
        CovarianceScope::PooledAll => "all",
    }
}

impl LogRow {
    pub fn new(
        session_id: &str,
        decision: &Decision,
        true_symbol: Option<usize>,
        symbols: &SymbolSet,
        config: &DecoderConfig,
    ) -> Self {
        let name = |s: usize| symbols.name(s).unwrap_or("?").to_string();
        Self {
            session_id: session_id.to_string(),
            trial_index: decision.trial_index,
            predicted_symbol: name(decision.chosen),
            true_symbol: true_symbol.map(name),
            correct: true_symbol.map(|t| t == decision.chosen),
            d_best: decision.best_distance(),
            d_runner_up: decision.runner_up_distance(),
            confidence: decision.confidence,
            instant_confidence: decision.instant_confidence,
            cumulative_confidence: decision.cumulative_confidence,
            cumulative_instant_confidence: decision.cumulative_instant_confidence,
            degenerate: decision.degenerate,
            mean_strategy: mean_strategy_name(config.mean_strategy).into(),
            covariance_kind: covariance_kind_name(config.covariance.kind).into(),
            covariance_scope: covariance_scope_name(config.covariance.scope).into(),
        }
    }
}

/// Serializes rows (with header) as CSV.
pub fn write_rows<W: io::Write>(out: W, rows: &[LogRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(LOG_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_log_file(path: &Path, logs: &[DecisionLog]) -> Result<()> {
    let rows: Vec<LogRow> = logs.iter().flat_map(|l| l.rows.iter().cloned()).collect();
    let mut buf = Vec::new();
    write_rows(&mut buf, &rows)?;
    atomic_write(path, &buf)
}

/// Reads a log file, grouping rows by session in order of first appearance.
pub fn read_log_file(path: &Path) -> Result<Vec<DecisionLog>> {
    let file = std::fs::File::open(path).map_err(io_at(path))?;
    read_logs(file)
}

pub fn read_logs<R: io::Read>(input: R) -> Result<Vec<DecisionLog>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut logs: Vec<DecisionLog> = Vec::new();
    for row in rdr.deserialize() {
        let row: LogRow = row?;
        match logs.iter_mut().find(|l| l.session_id == row.session_id) {
            Some(l) => l.rows.push(row),
            None => logs.push(DecisionLog {
                session_id: row.session_id.clone(),
                rows: vec![row],
            }),
        }
    }
    Ok(logs)
}

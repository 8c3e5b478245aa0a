//! Accuracy, learning curves and confidence histograms from decision logs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::log::DecisionLog;

/// Width of the confidence histogram bins.
pub const CONFIDENCE_BIN_WIDTH: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionAccuracy {
    pub session_id: String,
    pub trials: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Fraction of sessions that decoded trial `trial_index` correctly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningCurvePoint {
    pub trial_index: usize,
    pub sessions: usize,
    pub fraction_correct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramRow {
    pub bin_low: f64,
    pub bin_high: f64,
    pub correct: bool,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub sessions: Vec<SessionAccuracy>,
    pub pooled_trials: usize,
    pub pooled_correct: usize,
    pub pooled_accuracy: f64,
    pub learning_curve: Vec<LearningCurvePoint>,
    pub confidence_histogram: Vec<HistogramRow>,
}

pub fn compute_metrics(logs: &[DecisionLog]) -> Result<MetricsReport> {
    let mut sessions = Vec::with_capacity(logs.len());
    let mut per_index: Vec<(usize, usize)> = Vec::new();
    let mut confidences: Vec<(f64, bool)> = Vec::new();
    for log in logs {
        let mut correct = 0;
        for row in &log.rows {
            let ok = row.correct.ok_or_else(|| Error::MissingLabels {
                session: log.session_id.clone(),
            })?;
            correct += ok as usize;
            if per_index.len() <= row.trial_index {
                per_index.resize(row.trial_index + 1, (0, 0));
            }
            per_index[row.trial_index].0 += 1;
            per_index[row.trial_index].1 += ok as usize;
            confidences.push((row.confidence, ok));
        }
        let trials = log.rows.len();
        sessions.push(SessionAccuracy {
            session_id: log.session_id.clone(),
            trials,
            correct,
            accuracy: if trials == 0 { 0.0 } else { correct as f64 / trials as f64 },
        });
    }
    let pooled_trials: usize = sessions.iter().map(|s| s.trials).sum();
    let pooled_correct: usize = sessions.iter().map(|s| s.correct).sum();
    let learning_curve = per_index
        .iter()
        .enumerate()
        .filter(|(_, &(n, _))| n > 0)
        .map(|(i, &(n, ok))| LearningCurvePoint {
            trial_index: i,
            sessions: n,
            fraction_correct: ok as f64 / n as f64,
        })
        .collect();
    Ok(MetricsReport {
        sessions,
        pooled_trials,
        pooled_correct,
        pooled_accuracy: if pooled_trials == 0 {
            0.0
        } else {
            pooled_correct as f64 / pooled_trials as f64
        },
        learning_curve,
        confidence_histogram: histogram(&confidences),
    })
}

fn histogram(values: &[(f64, bool)]) -> Vec<HistogramRow> {
    let top = values.iter().map(|v| v.0).fold(0.0f64, f64::max);
    let bins = ((top / CONFIDENCE_BIN_WIDTH).floor() as usize + 1).min(10_000);
    let mut counts = vec![[0usize; 2]; bins];
    for &(c, ok) in values {
        let b = ((c.max(0.0) / CONFIDENCE_BIN_WIDTH).floor() as usize).min(bins - 1);
        counts[b][ok as usize] += 1;
    }
    let mut rows = Vec::with_capacity(2 * bins);
    for (b, pair) in counts.iter().enumerate() {
        let low = b as f64 * CONFIDENCE_BIN_WIDTH;
        for correct in [true, false] {
            rows.push(HistogramRow {
                bin_low: low,
                bin_high: low + CONFIDENCE_BIN_WIDTH,
                correct,
                count: pair[correct as usize],
            });
        }
    }
    rows
}

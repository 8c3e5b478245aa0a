//! Sequential offline replay of stored sessions.

use umm_core::covariance::CovarianceModel;
use umm_core::decoder::{Decoder, DecoderConfig, DecoderState};
use umm_core::trial::{SymbolSet, TrialRecord};

use crate::error::{Error, Result};
use crate::log::{DecisionLog, LogRow};

/// Log and final decoder state of one replayed session.
#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub log: DecisionLog,
    pub state: DecoderState,
    pub covariance: Option<CovarianceModel>,
}

/// A replay that stopped at a failing trial; `log` holds the rows before it.
#[derive(Debug)]
pub struct ReplayFailure {
    pub log: DecisionLog,
    pub trial_index: usize,
    pub error: Error,
}

/// Decodes the trials in order. Labels are copied into the log only after
/// the decoder has produced its decision.
pub fn replay_session(
    session_id: &str,
    records: &[TrialRecord],
    symbols: &SymbolSet,
    config: &DecoderConfig,
) -> Result<ReplayOutcome, Box<ReplayFailure>> {
    let mut log = DecisionLog {
        session_id: session_id.to_string(),
        rows: Vec::with_capacity(records.len()),
    };
    let mut decoder = match Decoder::new(*config) {
        Ok(d) => d,
        Err(e) => {
            return Err(Box::new(ReplayFailure {
                log,
                trial_index: 0,
                error: e.into(),
            }))
        }
    };
    for (i, record) in records.iter().enumerate() {
        match decoder.classify(&record.trial) {
            Ok(decision) => log.rows.push(LogRow::new(
                session_id,
                &decision,
                record.true_symbol,
                symbols,
                config,
            )),
            Err(e) => {
                return Err(Box::new(ReplayFailure {
                    log,
                    trial_index: i,
                    error: e.into(),
                }))
            }
        }
    }
    let covariance = decoder.covariance().cloned();
    Ok(ReplayOutcome {
        log,
        state: decoder.into_state(),
        covariance,
    })
}

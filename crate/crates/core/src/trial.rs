//! Trial data model: symbols, epochs, stimulus events and hypothesis partitions.
//!
//! Epoch features are flattened time-major: element `t * C + c` holds channel
//! `c` at time sample `t`. With this layout the `C x C` block at block position
//! `(i, j)` of a feature covariance is the spatial cross-covariance between
//! time samples `i` and `j`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Result, UmmError};

/// Ordered set of selectable symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolSet {
    names: Vec<String>,
}

impl SymbolSet {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.len() < 2 {
            return Err(UmmError::TooFewSymbols);
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(UmmError::InvalidConfig(format!("duplicate symbol '{name}'")));
            }
        }
        Ok(Self { names })
    }

    /// Symbols named `A`, `B`, ... for up to 26 symbols, then `S26`, `S27`, ...
    pub fn alphabetic(n: usize) -> Result<Self> {
        let names = (0..n)
            .map(|i| {
                if i < 26 {
                    String::from(char::from(b'A' + i as u8))
                } else {
                    format!("S{i}")
                }
            })
            .collect();
        Self::new(names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// One epoch: `channels x samples` feature amplitudes, stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochFeatures {
    channels: usize,
    samples: usize,
    data: Vec<f64>,
}

impl EpochFeatures {
    /// Builds an epoch from an already time-major flattened vector.
    pub fn from_time_major(channels: usize, samples: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || samples == 0 {
            return Err(UmmError::ArgumentOutOfRange("channels and samples must be positive"));
        }
        if data.len() != channels * samples {
            return Err(UmmError::ShapeMismatch {
                expected: channels * samples,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(UmmError::NonFinite);
        }
        Ok(Self {
            channels,
            samples,
            data,
        })
    }

    /// Builds an epoch from a channel-major buffer (`c * T + t`).
    pub fn from_channel_major(channels: usize, samples: usize, data: &[f64]) -> Result<Self> {
        if data.len() != channels * samples {
            return Err(UmmError::ShapeMismatch {
                expected: channels * samples,
                got: data.len(),
            });
        }
        let mut out = vec![0.0; data.len()];
        for c in 0..channels {
            for t in 0..samples {
                out[t * channels + c] = data[c * samples + t];
            }
        }
        Self::from_time_major(channels, samples, out)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn get(&self, channel: usize, sample: usize) -> f64 {
        self.data[sample * self.channels + channel]
    }

    /// Flattened time-major feature vector.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Channel-major copy (`c * T + t`), the on-disk layout.
    pub fn to_channel_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.data.len()];
        for t in 0..self.samples {
            for c in 0..self.channels {
                out[c * self.samples + t] = self.data[t * self.channels + c];
            }
        }
        out
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            channels: self.channels,
            samples: self.samples,
            data: self.data.iter().map(|v| v * alpha).collect(),
        }
    }
}

/// Symbols highlighted during one stimulus event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StimulusEvent {
    highlighted: Vec<usize>,
}

impl StimulusEvent {
    /// Highlighted symbol indices; duplicates are removed and the set sorted.
    pub fn new(mut highlighted: Vec<usize>) -> Result<Self> {
        if highlighted.is_empty() {
            return Err(UmmError::InvalidTrial("event highlights no symbol".into()));
        }
        highlighted.sort_unstable();
        highlighted.dedup();
        Ok(Self { highlighted })
    }

    pub fn highlighted(&self) -> &[usize] {
        &self.highlighted
    }

    pub fn contains(&self, symbol: usize) -> bool {
        self.highlighted.binary_search(&symbol).is_ok()
    }
}

/// Whether every symbol is highlighted equally often within a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeBalance {
    Balanced { targets_per_symbol: usize },
    Unbalanced,
}

/// Unlabeled trial: the only view of a trial the decoder ever receives.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    n_symbols: usize,
    epochs: Vec<EpochFeatures>,
    events: Vec<StimulusEvent>,
}

impl Trial {
    pub fn new(
        n_symbols: usize,
        epochs: Vec<EpochFeatures>,
        events: Vec<StimulusEvent>,
    ) -> Result<Self> {
        if n_symbols < 2 {
            return Err(UmmError::TooFewSymbols);
        }
        if epochs.is_empty() {
            return Err(UmmError::InvalidTrial("trial has no epochs".into()));
        }
        if epochs.len() != events.len() {
            return Err(UmmError::InvalidTrial(format!(
                "{} epochs but {} events",
                epochs.len(),
                events.len()
            )));
        }
        let (c, t) = (epochs[0].channels, epochs[0].samples);
        if let Some(bad) = epochs.iter().find(|e| e.channels != c || e.samples != t) {
            return Err(UmmError::ShapeMismatch {
                expected: c * t,
                got: bad.dim(),
            });
        }
        for ev in &events {
            if let Some(&s) = ev.highlighted.iter().find(|&&s| s >= n_symbols) {
                return Err(UmmError::SymbolUnknown {
                    symbol: s,
                    n_symbols,
                });
            }
        }
        Ok(Self {
            n_symbols,
            epochs,
            events,
        })
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn n_epochs(&self) -> usize {
        self.epochs.len()
    }

    pub fn channels(&self) -> usize {
        self.epochs[0].channels
    }

    pub fn samples(&self) -> usize {
        self.epochs[0].samples
    }

    pub fn dim(&self) -> usize {
        self.epochs[0].dim()
    }

    pub fn epochs(&self) -> &[EpochFeatures] {
        &self.epochs
    }

    pub fn events(&self) -> &[StimulusEvent] {
        &self.events
    }

    /// Number of events highlighting each symbol.
    pub fn targets_per_symbol(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_symbols];
        for ev in &self.events {
            for &s in &ev.highlighted {
                counts[s] += 1;
            }
        }
        counts
    }

    /// Unbalanced codes are accepted; this is the warning flag for them.
    pub fn balance(&self) -> CodeBalance {
        let counts = self.targets_per_symbol();
        if counts.iter().all(|&n| n == counts[0]) {
            CodeBalance::Balanced {
                targets_per_symbol: counts[0],
            }
        } else {
            CodeBalance::Unbalanced
        }
    }

    /// Balanced code with `1 < N+ < N-`.
    pub fn is_evaluation_grade(&self) -> bool {
        match self.balance() {
            CodeBalance::Balanced { targets_per_symbol } => {
                let non_targets = self.n_epochs() - targets_per_symbol;
                1 < targets_per_symbol && targets_per_symbol < non_targets
            }
            CodeBalance::Unbalanced => false,
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            n_symbols: self.n_symbols,
            epochs: self.epochs.iter().map(|e| e.scaled(alpha)).collect(),
            events: self.events.clone(),
        }
    }
}

/// A trial together with its ground-truth label, used for evaluation only.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: Trial,
    pub true_symbol: Option<usize>,
}

impl TrialRecord {
    pub fn unlabeled(trial: Trial) -> Self {
        Self {
            trial,
            true_symbol: None,
        }
    }
}

/// Epoch split under the hypothesis that `symbol` is the attended one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypothesisPartition {
    pub symbol: usize,
    pub targets: Vec<usize>,
    pub non_targets: Vec<usize>,
}

pub fn partition_epochs(trial: &Trial, symbol: usize) -> Result<HypothesisPartition> {
    if symbol >= trial.n_symbols {
        return Err(UmmError::SymbolUnknown {
            symbol,
            n_symbols: trial.n_symbols,
        });
    }
    let (targets, non_targets): (Vec<usize>, Vec<usize>) =
        (0..trial.n_epochs()).partition(|&k| trial.events[k].contains(symbol));
    if targets.is_empty() || non_targets.is_empty() {
        return Err(UmmError::DegeneratePartition { symbol });
    }
    Ok(HypothesisPartition {
        symbol,
        targets,
        non_targets,
    })
}

/// Mean of the selected epochs, accumulated as a running mean so that
/// averaging identical epochs reproduces them exactly.
pub(crate) fn mean_of(trial: &Trial, indices: &[usize]) -> Vec<f64> {
    let mut mean = vec![0.0; trial.dim()];
    for (n, &k) in indices.iter().enumerate() {
        let inv = 1.0 / (n + 1) as f64;
        for (m, &x) in mean.iter_mut().zip(trial.epochs[k].as_slice()) {
            *m += (x - *m) * inv;
        }
    }
    mean
}

/// Target and non-target means under a hypothesis.
pub fn hypothesis_class_means(
    trial: &Trial,
    partition: &HypothesisPartition,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if partition.targets.is_empty() || partition.non_targets.is_empty() {
        return Err(UmmError::DegeneratePartition {
            symbol: partition.symbol,
        });
    }
    let n = trial.n_epochs();
    if let Some(&k) = partition
        .targets
        .iter()
        .chain(&partition.non_targets)
        .find(|&&k| k >= n)
    {
        return Err(UmmError::ShapeMismatch {
            expected: n,
            got: k + 1,
        });
    }
    Ok((
        mean_of(trial, &partition.targets),
        mean_of(trial, &partition.non_targets),
    ))
}

/// Target mean minus non-target mean under a hypothesis.
pub fn hypothesis_mean_difference(
    trial: &Trial,
    partition: &HypothesisPartition,
) -> Result<Vec<f64>> {
    let (plus, minus) = hypothesis_class_means(trial, partition)?;
    Ok(plus.iter().zip(&minus).map(|(a, b)| a - b).collect())
}

/// Number of ways to choose `n_plus` target epochs out of `n_epochs` when the
/// stimulation code is ignored: `binomial(n_epochs, n_plus)`.
pub fn count_unconstrained_assignments(n_epochs: u64, n_plus: u64) -> Result<u128> {
    if n_plus == 0 || n_plus >= n_epochs {
        return Err(UmmError::ArgumentOutOfRange("need 0 < N+ < N"));
    }
    let k = n_plus.min(n_epochs - n_plus) as u128;
    let n = n_epochs as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1): it is (i + 1) * binomial(n, i + 1)
        acc = acc
            .checked_mul(n - i)
            .ok_or(UmmError::ArgumentOutOfRange("binomial coefficient overflows u128"))?
            / (i + 1);
    }
    Ok(acc)
}

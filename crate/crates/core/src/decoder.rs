//! Unsupervised mean-difference maximization.
//!
//! For every symbol the decoder assumes it was the attended one, splits the
//! trial's epochs into hypothetical targets and non-targets, and scores the
//! hypothesis by the squared Mahalanobis distance between the two class means
//! under a label-free global covariance. The highest-scoring symbol wins.
//!
//! Across trials the class means can be blended with the means accumulated
//! from earlier decisions (naive labeling), either with equal per-trial weights
//! ([`MeanStrategy::Optimistic`]) or weighted by clamped confidences
//! ([`MeanStrategy::ConfidenceWeighted`]). Comparing the cumulative confidence
//! of the blended decoder with that of the instantaneous one flags sessions
//! that learned inverted class means.

use alloc::vec;
use alloc::vec::Vec;

use faer::Mat;

use crate::covariance::{estimate_covariance, CovarianceConfig, CovarianceModel, CovarianceScope, EpochPool};
use crate::error::{Result, UmmError};
use crate::trial::{hypothesis_class_means, partition_epochs, Trial};

/// How the class means of a hypothesis are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanStrategy {
    /// Current trial only.
    Instant,
    /// Equal-weight blend with the means of all previous decisions.
    Optimistic,
    /// Confidence-weighted blend with the means of previous decisions.
    ConfidenceWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    pub mean_strategy: MeanStrategy,
    pub covariance: CovarianceConfig,
    /// Trials (since start or last reset) before the degeneracy rule is evaluated.
    pub degeneracy_warmup: usize,
    /// A session is flagged when `C_state < ratio * C_inst`.
    pub degeneracy_ratio: f64,
    /// Discard the accumulated means when the session is flagged.
    pub reset_on_degenerate: bool,
    /// Lower bound on the standard deviation in the confidence denominator.
    pub sigma_floor: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            mean_strategy: MeanStrategy::ConfidenceWeighted,
            covariance: CovarianceConfig::default(),
            degeneracy_warmup: 10,
            degeneracy_ratio: 1.1,
            reset_on_degenerate: false,
            sigma_floor: 1e-12,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        self.covariance.validate()?;
        if self.degeneracy_warmup < 1 {
            return Err(UmmError::InvalidConfig("degeneracy warmup must be >= 1".into()));
        }
        if !(self.degeneracy_ratio > 1.0 && self.degeneracy_ratio.is_finite()) {
            return Err(UmmError::InvalidConfig("degeneracy ratio must be > 1".into()));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return Err(UmmError::InvalidConfig("sigma floor must be positive".into()));
        }
        Ok(())
    }
}

/// Confidences of one processed trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialConfidence {
    /// Confidence of the configured mean strategy.
    pub state: f64,
    /// Confidence of the current-trial-only decoder.
    pub instant: f64,
}

/// Outcome of decoding one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    /// Zero-based position of the trial in the session.
    pub trial_index: usize,
    pub chosen: usize,
    pub runner_up: usize,
    /// Strategy distance per symbol.
    pub distances: Vec<f64>,
    /// Current-trial-only distance per symbol.
    pub instant_distances: Vec<f64>,
    pub confidence: f64,
    pub instant_confidence: f64,
    pub cumulative_confidence: f64,
    pub cumulative_instant_confidence: f64,
    pub degenerate: bool,
    /// The accumulated means were discarded after this decision.
    pub reset: bool,
}

impl Decision {
    pub fn best_distance(&self) -> f64 {
        self.distances[self.chosen]
    }

    pub fn runner_up_distance(&self) -> f64 {
        self.distances[self.runner_up]
    }
}

/// Sequential decoder state carried from one trial to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    trial_count: usize,
    target_mean: Vec<f64>,
    non_target_mean: Vec<f64>,
    weight_sum: f64,
    confidences: Vec<TrialConfidence>,
    cumulative_state: f64,
    cumulative_instant: f64,
    monitor_trials: usize,
    monitor_state: f64,
    monitor_instant: f64,
    resets: usize,
    pool: Option<EpochPool>,
    history: Vec<Decision>,
}

impl Default for DecoderState {
    fn default() -> Self {
        Self::new()
    }
}

impl DecoderState {
    pub fn new() -> Self {
        Self {
            trial_count: 0,
            target_mean: Vec::new(),
            non_target_mean: Vec::new(),
            weight_sum: 0.0,
            confidences: Vec::new(),
            cumulative_state: 0.0,
            cumulative_instant: 0.0,
            monitor_trials: 0,
            monitor_state: 0.0,
            monitor_instant: 0.0,
            resets: 0,
            pool: None,
            history: Vec::new(),
        }
    }

    /// State whose accumulators already hold class means, as if `trial_count`
    /// trials with total confidence weight `weight_sum` had been decoded.
    pub fn with_prior_means(
        target_mean: Vec<f64>,
        non_target_mean: Vec<f64>,
        trial_count: usize,
        weight_sum: f64,
    ) -> Result<Self> {
        if target_mean.len() != non_target_mean.len() || target_mean.is_empty() {
            return Err(UmmError::ShapeMismatch {
                expected: target_mean.len(),
                got: non_target_mean.len(),
            });
        }
        if !(weight_sum >= 0.0 && weight_sum.is_finite()) {
            return Err(UmmError::ArgumentOutOfRange("weight sum must be finite and >= 0"));
        }
        Ok(Self {
            trial_count,
            target_mean,
            non_target_mean,
            weight_sum,
            ..Self::new()
        })
    }

    /// Seeds the covariance pool with epochs recorded before decoding
    /// starts; they are used by [`CovarianceScope::PooledAll`] only.
    pub fn with_pool(mut self, pool: EpochPool) -> Self {
        self.pool = if pool.is_empty() { None } else { Some(pool) };
        self
    }

    pub fn trial_count(&self) -> usize {
        self.trial_count
    }

    pub fn target_mean(&self) -> &[f64] {
        &self.target_mean
    }

    pub fn non_target_mean(&self) -> &[f64] {
        &self.non_target_mean
    }

    /// Sum of clamped confidence weights of the accumulated trials.
    pub fn weight_sum(&self) -> f64 {
        self.weight_sum
    }

    pub fn confidences(&self) -> &[TrialConfidence] {
        &self.confidences
    }

    pub fn cumulative_confidence(&self) -> f64 {
        self.cumulative_state
    }

    pub fn cumulative_instant_confidence(&self) -> f64 {
        self.cumulative_instant
    }

    pub fn resets(&self) -> usize {
        self.resets
    }

    pub fn pool(&self) -> Option<&EpochPool> {
        self.pool.as_ref()
    }

    pub fn history(&self) -> &[Decision] {
        &self.history
    }

    fn has_means(&self) -> bool {
        !self.target_mean.is_empty()
    }

    fn reset_means(&mut self) {
        self.trial_count = 0;
        self.target_mean.clear();
        self.non_target_mean.clear();
        self.weight_sum = 0.0;
        self.monitor_trials = 0;
        self.monitor_state = 0.0;
        self.monitor_instant = 0.0;
        self.resets += 1;
    }
}

/// How hypothesis means are blended with the accumulated ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanBlend {
    Instant,
    Optimistic,
    /// Confidence-weighted, with `current` as the weight of the trial at hand.
    Confidence { current: f64 },
}

/// Squared Mahalanobis distance `delta^T Sigma^{-1} delta`, clipped at zero.
pub fn mahalanobis_sq(delta: &[f64], cov: &CovarianceModel) -> Result<f64> {
    let solved = cov.solve(delta)?;
    let d: f64 = delta.iter().zip(&solved).map(|(a, b)| a * b).sum();
    Ok(d.max(0.0))
}

/// Per-symbol hypothesis class means of a trial.
struct HypothesisMeans {
    target: Vec<Vec<f64>>,
    non_target: Vec<Vec<f64>>,
}

fn hypothesis_means(trial: &Trial) -> Result<HypothesisMeans> {
    let n = trial.n_symbols();
    let mut target = Vec::with_capacity(n);
    let mut non_target = Vec::with_capacity(n);
    for s in 0..n {
        let partition = partition_epochs(trial, s)?;
        let (plus, minus) = hypothesis_class_means(trial, &partition)?;
        target.push(plus);
        non_target.push(minus);
    }
    Ok(HypothesisMeans { target, non_target })
}

/// Blended mean-difference vector of one hypothesis.
fn blended_delta(
    plus: &[f64],
    minus: &[f64],
    state: &DecoderState,
    blend: MeanBlend,
) -> Vec<f64> {
    let instant = || plus.iter().zip(minus).map(|(a, b)| a - b).collect();
    match blend {
        MeanBlend::Instant => instant(),
        MeanBlend::Optimistic => {
            if !state.has_means() || state.trial_count == 0 {
                return instant();
            }
            let n = state.trial_count as f64;
            (0..plus.len())
                .map(|i| {
                    let tp = (state.target_mean[i] * n + plus[i]) / (n + 1.0);
                    let tm = (state.non_target_mean[i] * n + minus[i]) / (n + 1.0);
                    tp - tm
                })
                .collect()
        }
        MeanBlend::Confidence { current } => {
            let w = if state.has_means() { state.weight_sum } else { 0.0 };
            let total = w + current;
            // nothing accumulated yet (or 0/0): current-trial means
            if w == 0.0 || total <= 0.0 {
                return instant();
            }
            (0..plus.len())
                .map(|i| {
                    let tp = (state.target_mean[i] * w + plus[i] * current) / total;
                    let tm = (state.non_target_mean[i] * w + minus[i] * current) / total;
                    tp - tm
                })
                .collect()
        }
    }
}

/// Distances `delta_s^T Sigma^{-1} delta_s` for a set of difference vectors,
/// solved in one batch.
fn batch_distances(deltas: &[Vec<f64>], cov: &CovarianceModel) -> Result<Vec<f64>> {
    let d = cov.dim();
    if let Some(bad) = deltas.iter().find(|v| v.len() != d) {
        return Err(UmmError::ShapeMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let mut rhs = Mat::from_fn(d, deltas.len(), |i, j| deltas[j][i]);
    cov.solve_columns(rhs.as_mut())?;
    Ok(deltas
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let q: f64 = v.iter().enumerate().map(|(i, x)| x * rhs[(i, j)]).sum();
            q.max(0.0)
        })
        .collect())
}

/// Distance of every symbol hypothesis under the given blend.
pub fn score_hypotheses(
    trial: &Trial,
    cov: &CovarianceModel,
    state: &DecoderState,
    blend: MeanBlend,
) -> Result<Vec<f64>> {
    check_state_dim(state, trial)?;
    let means = hypothesis_means(trial)?;
    let deltas: Vec<Vec<f64>> = (0..trial.n_symbols())
        .map(|s| blended_delta(&means.target[s], &means.non_target[s], state, blend))
        .collect();
    batch_distances(&deltas, cov)
}

fn check_state_dim(state: &DecoderState, trial: &Trial) -> Result<()> {
    if state.has_means() && state.target_mean.len() != trial.dim() {
        return Err(UmmError::InconsistentDimensions {
            expected: state.target_mean.len(),
            got: trial.dim(),
        });
    }
    Ok(())
}

/// Winner, runner-up and standardized margin of a distance map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceOutcome {
    pub confidence: f64,
    pub chosen: usize,
    pub runner_up: usize,
}

fn argmax_excluding(values: &[f64], skip: Option<usize>) -> usize {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        match best {
            Some(b) if v <= values[b] => {}
            _ => best = Some(i),
        }
    }
    best.expect("at least one candidate")
}

/// Margin between winner and runner-up divided by the population standard
/// deviation of all non-winning distances (floored at `sigma_floor`).
/// Ties resolve to the lowest symbol index.
pub fn compute_confidence(distances: &[f64], sigma_floor: f64) -> Result<ConfidenceOutcome> {
    if distances.len() < 2 {
        return Err(UmmError::TooFewSymbols);
    }
    let chosen = argmax_excluding(distances, None);
    let runner_up = argmax_excluding(distances, Some(chosen));
    let others = distances.len() - 1;
    let mean = distances
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != chosen)
        .map(|(_, v)| v)
        .sum::<f64>()
        / others as f64;
    let var = distances
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != chosen)
        .map(|(_, v)| (v - mean) * (v - mean))
        .sum::<f64>()
        / others as f64;
    let sigma = libm::sqrt(var).max(sigma_floor);
    let confidence = ((distances[chosen] - distances[runner_up]) / sigma).max(0.0);
    Ok(ConfidenceOutcome {
        confidence,
        chosen,
        runner_up,
    })
}

/// Everything a trial contributes before the state is touched.
struct TrialEvaluation {
    means: HypothesisMeans,
    instant: Vec<f64>,
    instant_outcome: ConfidenceOutcome,
    distances: Vec<f64>,
    outcome: ConfidenceOutcome,
}

fn evaluate(
    trial: &Trial,
    config: &DecoderConfig,
    state: &DecoderState,
    cov: &CovarianceModel,
) -> Result<TrialEvaluation> {
    let means = hypothesis_means(trial)?;
    let n = trial.n_symbols();
    let instant_deltas: Vec<Vec<f64>> = (0..n)
        .map(|s| blended_delta(&means.target[s], &means.non_target[s], state, MeanBlend::Instant))
        .collect();
    let instant = batch_distances(&instant_deltas, cov)?;
    let instant_outcome = compute_confidence(&instant, config.sigma_floor)?;
    let blend = match config.mean_strategy {
        MeanStrategy::Instant => MeanBlend::Instant,
        MeanStrategy::Optimistic => MeanBlend::Optimistic,
        MeanStrategy::ConfidenceWeighted => MeanBlend::Confidence {
            current: instant_outcome.confidence,
        },
    };
    let (distances, outcome) = if blend == MeanBlend::Instant {
        (instant.clone(), instant_outcome)
    } else {
        let deltas: Vec<Vec<f64>> = (0..n)
            .map(|s| blended_delta(&means.target[s], &means.non_target[s], state, blend))
            .collect();
        let distances = batch_distances(&deltas, cov)?;
        let outcome = compute_confidence(&distances, config.sigma_floor)?;
        (distances, outcome)
    };
    Ok(TrialEvaluation {
        means,
        instant,
        instant_outcome,
        distances,
        outcome,
    })
}

/// Folds the winning hypothesis' class means into the accumulators.
fn accumulate(state: &mut DecoderState, strategy: MeanStrategy, plus: &[f64], minus: &[f64], instant_confidence: f64) {
    let d = plus.len();
    if !state.has_means() {
        state.target_mean = vec![0.0; d];
        state.non_target_mean = vec![0.0; d];
        state.weight_sum = 0.0;
    }
    match strategy {
        MeanStrategy::ConfidenceWeighted => {
            let weight = instant_confidence.min(1.0);
            let w = state.weight_sum;
            let total = w + weight;
            if total > 0.0 {
                for i in 0..d {
                    state.target_mean[i] = (state.target_mean[i] * w + plus[i] * weight) / total;
                    state.non_target_mean[i] = (state.non_target_mean[i] * w + minus[i] * weight) / total;
                }
                state.weight_sum = total;
            }
        }
        MeanStrategy::Optimistic | MeanStrategy::Instant => {
            let n = state.trial_count as f64;
            for i in 0..d {
                state.target_mean[i] = (state.target_mean[i] * n + plus[i]) / (n + 1.0);
                state.non_target_mean[i] = (state.non_target_mean[i] * n + minus[i]) / (n + 1.0);
            }
            state.weight_sum += instant_confidence.min(1.0);
        }
    }
    state.trial_count += 1;
}

/// Decodes one trial, advancing `state` only on success. Returns the decision
/// and the covariance estimate it used.
pub fn step(
    trial: &Trial,
    config: &DecoderConfig,
    state: &mut DecoderState,
) -> Result<(Decision, CovarianceModel)> {
    check_state_dim(state, trial)?;
    let mut pool = match state.pool.take() {
        Some(p) if config.covariance.scope == CovarianceScope::PooledAll => p,
        _ => EpochPool::new(trial.channels(), trial.samples()),
    };
    let mark = pool.mark();
    let evaluated = pool.push_trial(trial).and_then(|_| {
        let cov = estimate_covariance(&pool, &config.covariance)?;
        evaluate(trial, config, state, &cov).map(|ev| (ev, cov))
    });
    let (ev, cov) = match evaluated {
        Ok(v) => v,
        Err(e) => {
            pool.rollback(mark);
            if !pool.is_empty() {
                state.pool = Some(pool);
            }
            return Err(e);
        }
    };
    state.pool = Some(pool);

    let chosen = ev.outcome.chosen;
    accumulate(
        state,
        config.mean_strategy,
        &ev.means.target[chosen],
        &ev.means.non_target[chosen],
        ev.instant_outcome.confidence,
    );

    let c_state = ev.outcome.confidence;
    let c_inst = ev.instant_outcome.confidence;
    state.confidences.push(TrialConfidence {
        state: c_state,
        instant: c_inst,
    });
    state.cumulative_state += c_state;
    state.cumulative_instant += c_inst;
    state.monitor_trials += 1;
    state.monitor_state += c_state;
    state.monitor_instant += c_inst;

    let degenerate = config.mean_strategy != MeanStrategy::Instant
        && state.monitor_trials >= config.degeneracy_warmup
        && state.monitor_state < config.degeneracy_ratio * state.monitor_instant;
    let reset = degenerate && config.reset_on_degenerate;
    if reset {
        state.reset_means();
    }

    let decision = Decision {
        trial_index: state.history.len(),
        chosen,
        runner_up: ev.outcome.runner_up,
        distances: ev.distances,
        instant_distances: ev.instant,
        confidence: c_state,
        instant_confidence: c_inst,
        cumulative_confidence: state.cumulative_state,
        cumulative_instant_confidence: state.cumulative_instant,
        degenerate,
        reset,
    };
    state.history.push(decision.clone());
    Ok((decision, cov))
}

/// Functional form of [`step`]: the input state is left untouched.
pub fn classify_trial(
    trial: &Trial,
    config: &DecoderConfig,
    state: &DecoderState,
) -> Result<(Decision, DecoderState)> {
    config.validate()?;
    let mut next = state.clone();
    let (decision, _) = step(trial, config, &mut next)?;
    Ok((decision, next))
}

/// Binary epoch classifier `w^T x + b` derived from the accumulated means.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LdaModel {
    /// Positive for epochs on the target side.
    pub fn decision_value(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

/// `w = Sigma^{-1} (mu_+ - mu_-)` with bias `-w^T (mu_+ + mu_-) / 2`.
pub fn extract_lda_weights(state: &DecoderState, cov: &CovarianceModel) -> Result<LdaModel> {
    if !state.has_means() || (state.trial_count == 0 && state.weight_sum == 0.0) {
        return Err(UmmError::NoAccumulatedMeans);
    }
    let delta: Vec<f64> = state
        .target_mean
        .iter()
        .zip(&state.non_target_mean)
        .map(|(a, b)| a - b)
        .collect();
    let weights = cov.solve(&delta)?;
    let bias = -weights
        .iter()
        .zip(state.target_mean.iter().zip(&state.non_target_mean))
        .map(|(w, (a, b))| w * (a + b) * 0.5)
        .sum::<f64>();
    Ok(LdaModel { weights, bias })
}

/// Owns a configuration and a session state.
#[derive(Debug, Clone)]
pub struct Decoder {
    config: DecoderConfig,
    state: DecoderState,
    covariance: Option<CovarianceModel>,
}

impl Decoder {
    pub fn new(config: DecoderConfig) -> Result<Self> {
        Self::with_state(config, DecoderState::new())
    }

    pub fn with_state(config: DecoderConfig, state: DecoderState) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            state,
            covariance: None,
        })
    }

    pub fn classify(&mut self, trial: &Trial) -> Result<Decision> {
        let (decision, cov) = step(trial, &self.config, &mut self.state)?;
        self.covariance = Some(cov);
        Ok(decision)
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn state(&self) -> &DecoderState {
        &self.state
    }

    pub fn into_state(self) -> DecoderState {
        self.state
    }

    /// Covariance estimate of the most recent trial.
    pub fn covariance(&self) -> Option<&CovarianceModel> {
        self.covariance.as_ref()
    }

    pub fn lda(&self) -> Result<LdaModel> {
        let cov = self.covariance.as_ref().ok_or(UmmError::NoAccumulatedMeans)?;
        extract_lda_weights(&self.state, cov)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial::{EpochFeatures, StimulusEvent};

    fn diag(values: &[f64]) -> CovarianceModel {
        let d = values.len();
        CovarianceModel::from_matrix(Mat::from_fn(d, d, |i, j| if i == j { values[i] } else { 0.0 }))
            .unwrap()
    }

    #[test]
    fn mahalanobis_examples() {
        let id = CovarianceModel::identity(2);
        assert_eq!(mahalanobis_sq(&[3.0, 4.0], &id).unwrap(), 25.0);
        assert_eq!(mahalanobis_sq(&[2.0, 2.0], &diag(&[1.0, 4.0])).unwrap(), 5.0);
        assert_eq!(mahalanobis_sq(&[0.0, 0.0], &diag(&[1.0, 4.0])).unwrap(), 0.0);
        assert!(matches!(
            mahalanobis_sq(&[1.0], &id),
            Err(UmmError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn confidence_worked_example() {
        let out = compute_confidence(&[6.0, 10.0, 4.0, 2.0], 1e-12).unwrap();
        assert_eq!(out.chosen, 1);
        assert_eq!(out.runner_up, 0);
        // popstd(6, 4, 2) = sqrt(8 / 3)
        let sigma = (8.0f64 / 3.0).sqrt();
        assert!((sigma - 1.632_993_161_855_452).abs() < 1e-12);
        let want = 4.0 / sigma;
        assert!((out.confidence - want).abs() <= 1e-9 * want);
        assert!((out.confidence - 2.449_489_742_783_178).abs() < 1e-9);
    }

    #[test]
    fn confidence_ties_and_floor() {
        let out = compute_confidence(&[3.0, 5.0, 5.0, 1.0], 1e-12).unwrap();
        assert_eq!((out.chosen, out.runner_up), (1, 2));
        assert_eq!(out.confidence, 0.0);

        let out = compute_confidence(&[2.0, 2.0, 7.0], 1e-12).unwrap();
        assert_eq!((out.chosen, out.runner_up), (2, 0));
        assert_eq!(out.confidence, 5.0 / 1e-12);
        assert!(out.confidence.is_finite());

        // two symbols: sigma of a single value is zero
        let out = compute_confidence(&[1.0, 1.5], 1e-3).unwrap();
        assert_eq!(out.chosen, 1);
        assert!((out.confidence - 500.0).abs() < 1e-9);

        assert_eq!(compute_confidence(&[1.0], 1e-12), Err(UmmError::TooFewSymbols));
    }

    /// Two symbols, sequential events, one sample per channel.
    fn tiny_trial(values: &[[f64; 2]], symbols: &[usize]) -> Trial {
        let epochs = values
            .iter()
            .map(|v| EpochFeatures::from_time_major(2, 1, v.to_vec()).unwrap())
            .collect();
        let events = symbols
            .iter()
            .map(|&s| StimulusEvent::new(vec![s]).unwrap())
            .collect();
        Trial::new(3, epochs, events).unwrap()
    }

    fn sample_trial() -> Trial {
        tiny_trial(
            &[[2.0, 0.0], [1.0, 1.0], [0.0, 0.5], [3.0, -1.0], [0.5, 0.5], [-1.0, 0.0]],
            &[0, 1, 2, 0, 1, 2],
        )
    }

    #[test]
    fn optimistic_blend_matches_weighted_average() {
        let trial = sample_trial();
        let cov = diag(&[1.0, 2.0]);
        let state = DecoderState::with_prior_means(vec![1.0, 0.0], vec![0.0, 0.5], 3, 3.0).unwrap();
        let scores = score_hypotheses(&trial, &cov, &state, MeanBlend::Optimistic).unwrap();
        // symbol 0: targets {0, 3} mean (2.5, -0.5); non-targets mean (0.125, 0.5)
        let tp = [(1.0 * 3.0 + 2.5) / 4.0, (0.0 * 3.0 - 0.5) / 4.0];
        let tm = [(0.0 * 3.0 + 0.125) / 4.0, (0.5 * 3.0 + 0.5) / 4.0];
        let delta = [tp[0] - tm[0], tp[1] - tm[1]];
        let want = delta[0] * delta[0] + delta[1] * delta[1] / 2.0;
        assert!((scores[0] - want).abs() < 1e-12);
    }

    #[test]
    fn empty_history_optimistic_equals_instant() {
        let trial = sample_trial();
        let cov = diag(&[1.0, 3.0]);
        let state = DecoderState::new();
        let a = score_hypotheses(&trial, &cov, &state, MeanBlend::Instant).unwrap();
        let b = score_hypotheses(&trial, &cov, &state, MeanBlend::Optimistic).unwrap();
        let c = score_hypotheses(&trial, &cov, &state, MeanBlend::Confidence { current: 0.7 }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn unit_weights_make_confidence_blend_optimistic() {
        let trial = sample_trial();
        let cov = diag(&[2.0, 0.5]);
        let state = DecoderState::with_prior_means(vec![0.3, -0.2], vec![0.1, 0.4], 4, 4.0).unwrap();
        let o = score_hypotheses(&trial, &cov, &state, MeanBlend::Optimistic).unwrap();
        let c = score_hypotheses(&trial, &cov, &state, MeanBlend::Confidence { current: 1.0 }).unwrap();
        for (a, b) in o.iter().zip(&c) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn zero_weights_fall_back_to_instant() {
        let trial = sample_trial();
        let cov = diag(&[1.0, 1.0]);
        let state = DecoderState::with_prior_means(vec![5.0, 5.0], vec![-5.0, -5.0], 2, 0.0).unwrap();
        let a = score_hypotheses(&trial, &cov, &state, MeanBlend::Instant).unwrap();
        let c = score_hypotheses(&trial, &cov, &state, MeanBlend::Confidence { current: 0.0 }).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn lda_examples() {
        let state = DecoderState::with_prior_means(vec![3.0, 2.0], vec![1.0, 0.0], 1, 1.0).unwrap();
        let w = extract_lda_weights(&state, &CovarianceModel::identity(2)).unwrap();
        assert_eq!(w.weights, vec![2.0, 2.0]);
        let w = extract_lda_weights(&state, &diag(&[1.0, 4.0])).unwrap();
        assert_eq!(w.weights, vec![2.0, 0.5]);
        // midpoint (2, 1) lies on the boundary
        assert!(w.decision_value(&[2.0, 1.0]).abs() < 1e-12);
        assert_eq!(
            extract_lda_weights(&DecoderState::new(), &CovarianceModel::identity(2)),
            Err(UmmError::NoAccumulatedMeans)
        );
    }

    #[test]
    fn config_validation() {
        let mut cfg = DecoderConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.degeneracy_ratio = 1.0;
        assert!(cfg.validate().is_err());
        cfg = DecoderConfig {
            degeneracy_warmup: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn failed_trial_leaves_state_untouched() {
        let config = DecoderConfig {
            covariance: CovarianceConfig {
                kind: crate::covariance::EstimatorKind::Shrinkage,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut decoder = Decoder::new(config).unwrap();
        decoder.classify(&sample_trial()).unwrap();
        let before = decoder.state().clone();
        // symbol 2 never highlighted
        let bad = tiny_trial(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], &[0, 1, 0]);
        assert_eq!(
            decoder.classify(&bad).unwrap_err(),
            UmmError::DegeneratePartition { symbol: 2 }
        );
        assert_eq!(decoder.state(), &before);
        let wrong_dim = Trial::new(
            3,
            (0..3)
                .map(|_| EpochFeatures::from_time_major(3, 1, vec![0.0; 3]).unwrap())
                .collect(),
            (0..3).map(|s| StimulusEvent::new(vec![s]).unwrap()).collect(),
        )
        .unwrap();
        assert!(matches!(
            decoder.classify(&wrong_dim),
            Err(UmmError::InconsistentDimensions { .. })
        ));
        assert_eq!(decoder.state(), &before);
    }
}

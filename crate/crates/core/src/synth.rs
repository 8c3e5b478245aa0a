//! Synthetic ERP sessions with known ground truth.
//!
//! Each epoch is `snr * template + amplitude * noise`, where the template is
//! the target or non-target waveform depending on whether the trial's true
//! symbol was highlighted, and the noise is AR(1) in time and mixed across
//! channels by a fixed matrix `M`. The noise is exactly stationary: its
//! covariance has block `(i, j)` equal to `amplitude^2 * rho^|i-j| * M M^T`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use faer::{Mat, Side};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, UmmError};
use crate::trial::{EpochFeatures, StimulusEvent, Trial, TrialRecord};

/// Assignment of symbols to highlighting events within one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StimulationCode {
    /// Every symbol joins exactly `targets_per_symbol` of `epochs` events,
    /// drawn independently per symbol.
    PseudoRandom {
        epochs: usize,
        targets_per_symbol: usize,
    },
    /// `repetitions` shuffled passes over all rows and columns of a grid.
    RowColumn {
        rows: usize,
        cols: usize,
        repetitions: usize,
    },
    /// `repetitions` shuffled passes over all symbols, one per event.
    Sequential { repetitions: usize },
}

impl StimulationCode {
    pub fn epochs_per_trial(&self, n_symbols: usize) -> usize {
        match *self {
            StimulationCode::PseudoRandom { epochs, .. } => epochs,
            StimulationCode::RowColumn {
                rows,
                cols,
                repetitions,
            } => repetitions * (rows + cols),
            StimulationCode::Sequential { repetitions } => repetitions * n_symbols,
        }
    }

    pub fn targets_per_symbol(&self) -> usize {
        match *self {
            StimulationCode::PseudoRandom {
                targets_per_symbol, ..
            } => targets_per_symbol,
            StimulationCode::RowColumn { repetitions, .. } => 2 * repetitions,
            StimulationCode::Sequential { repetitions } => repetitions,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_symbols: usize,
    pub code: StimulationCode,
    pub channels: usize,
    pub samples: usize,
    /// Target waveform; a raised-cosine bump on random channels when `None`.
    pub target_template: Option<EpochFeatures>,
    /// Non-target waveform; zero when `None`.
    pub non_target_template: Option<EpochFeatures>,
    /// `C x C` spatial mixing; a seeded random SPD square root when `None`.
    pub spatial_mixing: Option<Mat<f64>>,
    pub noise_amplitude: f64,
    /// AR(1) coefficient of the temporal noise, in `[0, 1)`.
    pub ar_coefficient: f64,
    pub snr: f64,
    /// Standard deviation (in samples) of the per-epoch template shift.
    pub latency_jitter_std: f64,
    pub n_trials: usize,
    pub seed: u64,
}

impl SynthConfig {
    fn base(n_symbols: usize, code: StimulationCode, seed: u64) -> Self {
        Self {
            n_symbols,
            code,
            channels: 8,
            samples: 10,
            target_template: None,
            non_target_template: None,
            spatial_mixing: None,
            noise_amplitude: 1.0,
            ar_coefficient: 0.8,
            snr: 1.0,
            latency_jitter_std: 0.0,
            n_trials: 35,
            seed,
        }
    }

    /// 36 symbols, 68 pseudo-random events per trial, 16 targets per symbol.
    pub fn visual_random(seed: u64) -> Self {
        Self::base(
            36,
            StimulationCode::PseudoRandom {
                epochs: 68,
                targets_per_symbol: 16,
            },
            seed,
        )
    }

    /// 6 x 6 grid, 10 passes: 120 events, 20 targets per symbol.
    pub fn row_column(seed: u64) -> Self {
        Self::base(
            36,
            StimulationCode::RowColumn {
                rows: 6,
                cols: 6,
                repetitions: 10,
            },
            seed,
        )
    }

    /// 6 symbols, 15 passes: 90 events, 15 targets per symbol.
    pub fn sequential(seed: u64) -> Self {
        Self::base(6, StimulationCode::Sequential { repetitions: 15 }, seed)
    }

    pub fn dim(&self) -> usize {
        self.channels * self.samples
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(UmmError::InvalidConfig(msg.into()));
        if self.n_symbols < 2 {
            return bad("at least two symbols are required");
        }
        if self.channels == 0 || self.samples == 0 {
            return bad("channels and samples must be positive");
        }
        match self.code {
            StimulationCode::PseudoRandom {
                epochs,
                targets_per_symbol,
            } => {
                if !(1 < targets_per_symbol && targets_per_symbol + targets_per_symbol < epochs) {
                    return bad("pseudo-random code needs 1 < N+ < N - N+");
                }
                if self.n_symbols * targets_per_symbol < epochs {
                    return bad("pseudo-random code cannot highlight something in every event");
                }
            }
            StimulationCode::RowColumn {
                rows,
                cols,
                repetitions,
            } => {
                if rows < 2 || cols < 2 || repetitions == 0 {
                    return bad("row-column code needs rows, cols >= 2 and repetitions >= 1");
                }
                if rows * cols != self.n_symbols {
                    return bad("row-column code needs n_symbols = rows * cols");
                }
            }
            StimulationCode::Sequential { repetitions } => {
                if repetitions == 0 {
                    return bad("sequential code needs repetitions >= 1");
                }
            }
        }
        if !(0.0..1.0).contains(&self.ar_coefficient) {
            return bad("AR coefficient must lie in [0, 1)");
        }
        if !(self.snr >= 0.0 && self.snr.is_finite()) {
            return bad("snr must be finite and >= 0");
        }
        if !(self.noise_amplitude >= 0.0 && self.noise_amplitude.is_finite()) {
            return bad("noise amplitude must be finite and >= 0");
        }
        if !(self.latency_jitter_std >= 0.0 && self.latency_jitter_std.is_finite()) {
            return bad("latency jitter must be finite and >= 0");
        }
        for t in [&self.target_template, &self.non_target_template].into_iter().flatten() {
            if t.channels() != self.channels || t.samples() != self.samples {
                return Err(UmmError::InvalidConfig(format!(
                    "template is {}x{}, expected {}x{}",
                    t.channels(),
                    t.samples(),
                    self.channels,
                    self.samples
                )));
            }
        }
        if let Some(m) = &self.spatial_mixing {
            if m.nrows() != self.channels || m.ncols() != self.channels {
                return bad("spatial mixing must be channels x channels");
            }
        }
        Ok(())
    }
}

/// Seeded stream for templates and mixing, independent of the trial stream.
fn setup_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn session_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    rng
}

/// Positive raised-cosine bump peaking at 60 % of the epoch on a random
/// subset of channels with amplitudes in `[0.5, 1]`.
pub fn default_target_template(channels: usize, samples: usize, seed: u64) -> EpochFeatures {
    let mut rng = setup_rng(seed);
    let mut gains: Vec<f64> = (0..channels)
        .map(|_| {
            if rng.random_bool(0.5) {
                rng.random_range(0.5..=1.0)
            } else {
                0.0
            }
        })
        .collect();
    if gains.iter().all(|&g| g == 0.0) {
        let c = rng.random_range(0..channels);
        gains[c] = 1.0;
    }
    let peak = 0.6 * (samples - 1) as f64;
    let half_width = (0.25 * samples as f64).max(1.5);
    let mut data = vec![0.0; channels * samples];
    for t in 0..samples {
        let u = (t as f64 - peak) / half_width;
        let shape = if u.abs() < 1.0 {
            0.5 * (1.0 + libm::cos(core::f64::consts::PI * u))
        } else {
            0.0
        };
        for (c, g) in gains.iter().enumerate() {
            data[t * channels + c] = g * shape;
        }
    }
    EpochFeatures::from_time_major(channels, samples, data).expect("finite template")
}

/// Symmetric square root of a random SPD matrix with trace `channels`.
pub fn random_spatial_mixing(channels: usize, seed: u64) -> Mat<f64> {
    let mut rng = setup_rng(seed);
    // advance past the template draws so the two are not correlated
    rng.set_word_pos(1 << 20);
    let a = Mat::<f64>::from_fn(channels, channels, |_, _| StandardNormal.sample(&mut rng));
    let mut k = Mat::<f64>::zeros(channels, channels);
    for i in 0..channels {
        for j in 0..channels {
            let dot: f64 = (0..channels).map(|l| a[(i, l)] * a[(j, l)]).sum();
            k[(i, j)] = dot / channels as f64 + if i == j { 0.2 } else { 0.0 };
        }
    }
    let tr: f64 = (0..channels).map(|i| k[(i, i)]).sum();
    let scale = channels as f64 / tr;
    let evd = k
        .self_adjoint_eigen(Side::Lower)
        .expect("eigendecomposition of a small SPD matrix");
    let u = evd.U();
    let s = evd.S().column_vector();
    Mat::from_fn(channels, channels, |i, j| {
        (0..channels)
            .map(|l| u[(i, l)] * libm::sqrt((s[l] * scale).max(0.0)) * u[(j, l)])
            .sum()
    })
}

/// Configuration with templates and mixing resolved; generates sessions.
#[derive(Debug, Clone)]
pub struct SessionGenerator {
    config: SynthConfig,
    target: EpochFeatures,
    non_target: EpochFeatures,
    mixing: Mat<f64>,
}

impl SessionGenerator {
    pub fn new(config: &SynthConfig) -> Result<Self> {
        config.validate()?;
        let (c, t) = (config.channels, config.samples);
        let target = config
            .target_template
            .clone()
            .unwrap_or_else(|| default_target_template(c, t, config.seed));
        let non_target = config
            .non_target_template
            .clone()
            .unwrap_or_else(|| EpochFeatures::from_time_major(c, t, vec![0.0; c * t]).unwrap());
        let mixing = config
            .spatial_mixing
            .clone()
            .unwrap_or_else(|| random_spatial_mixing(c, config.seed));
        Ok(Self {
            config: config.clone(),
            target,
            non_target,
            mixing,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn target_template(&self) -> &EpochFeatures {
        &self.target
    }

    pub fn non_target_template(&self) -> &EpochFeatures {
        &self.non_target
    }

    pub fn spatial_mixing(&self) -> &Mat<f64> {
        &self.mixing
    }

    /// Exact covariance of the noise term of every epoch (time-major).
    pub fn noise_covariance(&self) -> Mat<f64> {
        let c = self.config.channels;
        let d = self.config.dim();
        let rho = self.config.ar_coefficient;
        let amp2 = self.config.noise_amplitude * self.config.noise_amplitude;
        let m = &self.mixing;
        let mut spatial = Mat::<f64>::zeros(c, c);
        for i in 0..c {
            for j in 0..c {
                spatial[(i, j)] = (0..c).map(|l| m[(i, l)] * m[(j, l)]).sum();
            }
        }
        Mat::from_fn(d, d, |row, col| {
            let lag = (row / c).abs_diff(col / c) as i32;
            amp2 * libm::pow(rho, lag as f64) * spatial[(row % c, col % c)]
        })
    }

    /// Events of one trial drawn from `rng`.
    pub fn stimulation_code(&self, rng: &mut ChaCha8Rng) -> Result<Vec<StimulusEvent>> {
        generate_stimulation_code(&self.config, rng)
    }

    pub fn generate_session(&self) -> Result<Vec<TrialRecord>> {
        let mut rng = session_rng(self.config.seed);
        (0..self.config.n_trials)
            .map(|_| {
                let true_symbol = rng.random_range(0..self.config.n_symbols);
                self.generate_trial(true_symbol, &mut rng)
            })
            .collect()
    }

    /// One trial with the given attended symbol.
    pub fn generate_trial(&self, true_symbol: usize, rng: &mut ChaCha8Rng) -> Result<TrialRecord> {
        if true_symbol >= self.config.n_symbols {
            return Err(UmmError::SymbolUnknown {
                symbol: true_symbol,
                n_symbols: self.config.n_symbols,
            });
        }
        let events = self.stimulation_code(rng)?;
        let epochs = events
            .iter()
            .map(|ev| {
                let template = if ev.contains(true_symbol) {
                    &self.target
                } else {
                    &self.non_target
                };
                self.epoch(template, rng)
            })
            .collect();
        let trial = Trial::new(self.config.n_symbols, epochs, events)?;
        Ok(TrialRecord {
            trial,
            true_symbol: Some(true_symbol),
        })
    }

    fn epoch(&self, template: &EpochFeatures, rng: &mut ChaCha8Rng) -> EpochFeatures {
        let cfg = &self.config;
        let (c, t) = (cfg.channels, cfg.samples);
        let shift = if cfg.latency_jitter_std > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            let s = libm::round(z * cfg.latency_jitter_std) as i64;
            s.clamp(-(t as i64 - 1), t as i64 - 1)
        } else {
            0
        };
        let rho = cfg.ar_coefficient;
        let innovation = libm::sqrt(1.0 - rho * rho);
        let mut state: Vec<f64> = (0..c).map(|_| StandardNormal.sample(rng)).collect();
        let mut data = vec![0.0; c * t];
        for step in 0..t {
            if step > 0 {
                for z in state.iter_mut() {
                    let e: f64 = StandardNormal.sample(rng);
                    *z = rho * *z + innovation * e;
                }
            }
            let src = step as i64 - shift;
            for ch in 0..c {
                let signal = if (0..t as i64).contains(&src) {
                    template.get(ch, src as usize)
                } else {
                    0.0
                };
                let mixed: f64 = (0..c).map(|l| self.mixing[(ch, l)] * state[l]).sum();
                data[step * c + ch] = cfg.snr * signal + cfg.noise_amplitude * mixed;
            }
        }
        EpochFeatures::from_time_major(c, t, data).expect("finite synthetic epoch")
    }
}

/// Events for one trial under the configured code.
pub fn generate_stimulation_code(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<StimulusEvent>> {
    config.validate()?;
    let n = config.n_symbols;
    let sets: Vec<Vec<usize>> = match config.code {
        StimulationCode::PseudoRandom {
            epochs,
            targets_per_symbol,
        } => {
            let mut sets = vec![Vec::new(); epochs];
            for s in 0..n {
                for k in index::sample(rng, epochs, targets_per_symbol) {
                    sets[k].push(s);
                }
            }
            // Fill empty events by moving one highlight out of a crowded
            // event; per-symbol target counts are unchanged.
            while let Some(empty) = sets.iter().position(|e| e.is_empty()) {
                let crowded: Vec<usize> = (0..epochs).filter(|&k| sets[k].len() > 1).collect();
                let from = crowded[rng.random_range(0..crowded.len())];
                let pick = rng.random_range(0..sets[from].len());
                let s = sets[from].swap_remove(pick);
                sets[empty].push(s);
            }
            sets
        }
        StimulationCode::RowColumn {
            rows,
            cols,
            repetitions,
        } => {
            let mut lines: Vec<usize> = (0..rows + cols).collect();
            let mut sets = Vec::with_capacity(repetitions * lines.len());
            for _ in 0..repetitions {
                lines.shuffle(rng);
                for &line in &lines {
                    let set = if line < rows {
                        (0..cols).map(|c| line * cols + c).collect()
                    } else {
                        (0..rows).map(|r| r * cols + (line - rows)).collect()
                    };
                    sets.push(set);
                }
            }
            sets
        }
        StimulationCode::Sequential { repetitions } => {
            let mut order: Vec<usize> = (0..n).collect();
            let mut sets = Vec::with_capacity(repetitions * n);
            for _ in 0..repetitions {
                order.shuffle(rng);
                sets.extend(order.iter().map(|&s| vec![s]));
            }
            sets
        }
    };
    sets.into_iter().map(StimulusEvent::new).collect()
}

pub fn generate_session(config: &SynthConfig) -> Result<Vec<TrialRecord>> {
    SessionGenerator::new(config)?.generate_session()
}

/// Two-dimensional four-letter toy paradigm.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub draws_per_letter: usize,
    /// Mean of the target letter's points; the others are centred at zero.
    pub target_mean: [f64; 2],
    /// Covariance of the shared Gaussian noise.
    pub noise_covariance: [[f64; 2]; 2],
    pub noise_scale: f64,
    pub seed: u64,
}

impl ToyConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            draws_per_letter: 20,
            target_mean: [1.0, -1.0],
            noise_covariance: [[1.0, 0.7], [0.7, 1.0]],
            noise_scale: 1.0,
            seed,
        }
    }
}

/// Letters of the toy paradigm; `B` is the attended one.
pub const TOY_LETTERS: [&str; 4] = ["A", "B", "C", "D"];
pub const TOY_TARGET: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyPoint {
    pub letter: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyHypothesis {
    pub letter: usize,
    pub target_mean: [f64; 2],
    pub non_target_mean: [f64; 2],
    pub delta: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyData {
    pub points: Vec<ToyPoint>,
    pub hypotheses: Vec<ToyHypothesis>,
    /// The points as a single four-symbol trial (one letter per event).
    pub trial: TrialRecord,
}

pub fn generate_toy_2d(seed: u64) -> ToyData {
    generate_toy_2d_with(&ToyConfig::new(seed)).expect("default toy configuration is valid")
}

pub fn generate_toy_2d_with(config: &ToyConfig) -> Result<ToyData> {
    if config.draws_per_letter < 2 {
        return Err(UmmError::InvalidConfig("need at least two draws per letter".into()));
    }
    let [[a, b], [b2, d]] = config.noise_covariance;
    if a <= 0.0 || a * d - b * b2 <= 0.0 || b != b2 {
        return Err(UmmError::InvalidConfig("toy noise covariance must be SPD".into()));
    }
    // lower Cholesky factor of the 2x2 noise covariance
    let l11 = libm::sqrt(a);
    let l21 = b / l11;
    let l22 = libm::sqrt(d - l21 * l21);
    let mut rng = session_rng(config.seed);
    let mut order: Vec<usize> = (0..4).collect();
    let mut points = Vec::with_capacity(4 * config.draws_per_letter);
    for _ in 0..config.draws_per_letter {
        order.shuffle(&mut rng);
        for &letter in &order {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let (mx, my) = if letter == TOY_TARGET {
                (config.target_mean[0], config.target_mean[1])
            } else {
                (0.0, 0.0)
            };
            points.push(ToyPoint {
                letter,
                x: mx + config.noise_scale * l11 * z1,
                y: my + config.noise_scale * (l21 * z1 + l22 * z2),
            });
        }
    }
    let hypotheses = (0..4)
        .map(|h| {
            let mean = |sel: &dyn Fn(&ToyPoint) -> bool| {
                let chosen: Vec<&ToyPoint> = points.iter().filter(|p| sel(p)).collect();
                let n = chosen.len() as f64;
                [
                    chosen.iter().map(|p| p.x).sum::<f64>() / n,
                    chosen.iter().map(|p| p.y).sum::<f64>() / n,
                ]
            };
            let target_mean = mean(&|p| p.letter == h);
            let non_target_mean = mean(&|p| p.letter != h);
            ToyHypothesis {
                letter: h,
                target_mean,
                non_target_mean,
                delta: [
                    target_mean[0] - non_target_mean[0],
                    target_mean[1] - non_target_mean[1],
                ],
            }
        })
        .collect();
    let epochs = points
        .iter()
        .map(|p| EpochFeatures::from_time_major(2, 1, vec![p.x, p.y]))
        .collect::<Result<Vec<_>>>()?;
    let events = points
        .iter()
        .map(|p| StimulusEvent::new(vec![p.letter]))
        .collect::<Result<Vec<_>>>()?;
    let trial = Trial::new(4, epochs, events)?;
    Ok(ToyData {
        points,
        hypotheses,
        trial: TrialRecord {
            trial,
            true_symbol: Some(TOY_TARGET),
        },
    })
}

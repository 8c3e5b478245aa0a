//! Label-free covariance estimation for the decoder metric.
//!
//! Two estimators are provided, both computed from an [`EpochPool`] of
//! flattened (time-major) epochs:
//!
//! * analytic Ledoit-Wolf shrinkage towards `nu * I`, `nu = trace(S) / D`;
//! * block-Toeplitz: the shrinkage estimate averaged along every block
//!   diagonal of its `T x T` grid of `C x C` blocks, optionally tapered by a
//!   linear lag weight.
//!
//! Every estimate is made symmetric positive-definite before factorization.
//! The shrinkage path clips eigenvalues below `eps = 1e-10 * trace / D`; the
//! block-Toeplitz path instead shifts the lag-0 block by `eps - lambda_min`,
//! which keeps the block structure bit-exact.

use alloc::vec;
use alloc::vec::Vec;

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::{Llt, Solve};
use faer::{Accum, Mat, MatMut, MatRef, Par, Side};

use crate::error::{Result, UmmError};
use crate::trial::Trial;

/// Relative eigenvalue floor used by the SPD repair.
pub const SPD_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Shrinkage,
    BlockToeplitz,
    /// A matrix supplied directly by the caller.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceScope {
    /// Only the epochs of the trial being decoded.
    CurrentTrial,
    /// The current trial and all previous ones.
    PooledAll,
}

/// How epochs are centered before the outer products are accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Centering {
    /// Subtract the mean over the whole pool.
    #[default]
    GrandMean,
    /// Subtract each trial's own mean.
    PerTrial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceConfig {
    pub kind: EstimatorKind,
    pub scope: CovarianceScope,
    /// Lag bound `b` of the linear taper `max(0, 1 - lag / b)`; `None` disables it.
    pub taper_bandwidth: Option<usize>,
    /// Replaces the analytic Ledoit-Wolf intensity when set.
    pub shrinkage_override: Option<f64>,
    pub centering: Centering,
}

impl Default for CovarianceConfig {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::BlockToeplitz,
            scope: CovarianceScope::PooledAll,
            taper_bandwidth: None,
            shrinkage_override: None,
            centering: Centering::GrandMean,
        }
    }
}

impl CovarianceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kind == EstimatorKind::Fixed {
            return Err(UmmError::InvalidConfig(
                "a fixed covariance cannot be estimated from data".into(),
            ));
        }
        if self.taper_bandwidth == Some(0) {
            return Err(UmmError::InvalidConfig("taper bandwidth must be >= 1".into()));
        }
        if let Some(g) = self.shrinkage_override {
            if !(0.0..=1.0).contains(&g) {
                return Err(UmmError::InvalidConfig(
                    "shrinkage intensity must lie in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Flattened epochs pooled across trials, stored row-major (`n x D`).
#[derive(Debug, Clone, PartialEq)]
pub struct EpochPool {
    channels: usize,
    samples: usize,
    data: Vec<f64>,
    trial_starts: Vec<usize>,
}

impl EpochPool {
    pub fn new(channels: usize, samples: usize) -> Self {
        Self {
            channels,
            samples,
            data: Vec::new(),
            trial_starts: Vec::new(),
        }
    }

    pub fn from_trials<'a>(trials: impl IntoIterator<Item = &'a Trial>) -> Result<Self> {
        let mut iter = trials.into_iter().peekable();
        let first = iter.peek().ok_or(UmmError::EmptyPool)?;
        let mut pool = Self::new(first.channels(), first.samples());
        for trial in iter {
            pool.push_trial(trial)?;
        }
        Ok(pool)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn dim(&self) -> usize {
        self.channels * self.samples
    }

    /// Number of pooled epochs.
    pub fn len(&self) -> usize {
        if self.dim() == 0 {
            0
        } else {
            self.data.len() / self.dim()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn trial_count(&self) -> usize {
        self.trial_starts.len()
    }

    pub fn epoch(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.data[k * d..(k + 1) * d]
    }

    pub fn clear(&mut self) {
        self.data.clear();
        self.trial_starts.clear();
    }

    pub fn push_trial(&mut self, trial: &Trial) -> Result<()> {
        if trial.channels() != self.channels || trial.samples() != self.samples {
            return Err(UmmError::InconsistentDimensions {
                expected: self.dim(),
                got: trial.dim(),
            });
        }
        self.trial_starts.push(self.len());
        self.data.reserve(trial.n_epochs() * self.dim());
        for e in trial.epochs() {
            self.data.extend_from_slice(e.as_slice());
        }
        Ok(())
    }

    pub(crate) fn mark(&self) -> (usize, usize) {
        (self.data.len(), self.trial_starts.len())
    }

    /// Drops everything pushed after `mark`.
    pub(crate) fn rollback(&mut self, mark: (usize, usize)) {
        self.data.truncate(mark.0);
        self.trial_starts.truncate(mark.1);
    }

    /// Row ranges of each pooled trial.
    fn trial_ranges(&self) -> impl Iterator<Item = core::ops::Range<usize>> + '_ {
        let n = self.len();
        self.trial_starts.iter().enumerate().map(move |(i, &start)| {
            let end = self.trial_starts.get(i + 1).copied().unwrap_or(n);
            start..end
        })
    }
}

/// Next pool under a covariance scope: replaced by the new trial for
/// [`CovarianceScope::CurrentTrial`], extended for [`CovarianceScope::PooledAll`].
pub fn update_scope(scope: CovarianceScope, mut pool: EpochPool, trial: &Trial) -> Result<EpochPool> {
    if pool.is_empty() && pool.trial_count() == 0 {
        pool = EpochPool::new(trial.channels(), trial.samples());
    }
    if scope == CovarianceScope::CurrentTrial {
        pool.clear();
    }
    pool.push_trial(trial)?;
    Ok(pool)
}

/// Centered pool as an `n x D` matrix.
fn centered(pool: &EpochPool, centering: Centering) -> Result<Mat<f64>> {
    let n = pool.len();
    if n == 0 {
        return Err(UmmError::EmptyPool);
    }
    let d = pool.dim();
    let mut x = Mat::<f64>::zeros(n, d);
    let mut center = |rows: core::ops::Range<usize>| {
        let count = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for k in rows.clone() {
            for (m, v) in mean.iter_mut().zip(pool.epoch(k)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= count;
        }
        for k in rows {
            for (j, (v, m)) in pool.epoch(k).iter().zip(&mean).enumerate() {
                x[(k, j)] = v - m;
            }
        }
    };
    match centering {
        Centering::GrandMean => center(0..n),
        Centering::PerTrial if pool.trial_count() == 0 => center(0..n),
        Centering::PerTrial => pool.trial_ranges().for_each(center),
    }
    Ok(x)
}

fn symmetrize(mut m: MatMut<'_, f64>) {
    let d = m.nrows();
    for j in 0..d {
        for i in (j + 1)..d {
            let v = (m[(i, j)] + m[(j, i)]) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// `X^T X / n`, exactly symmetric.
fn gram(x: MatRef<'_, f64>) -> Mat<f64> {
    let (n, d) = (x.nrows(), x.ncols());
    let mut s = Mat::<f64>::zeros(d, d);
    matmul(s.as_mut(), Accum::Replace, x.transpose(), x, 1.0 / n as f64, Par::Seq);
    symmetrize(s.as_mut());
    s
}

fn trace(m: MatRef<'_, f64>) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

/// Biased (divisor `n`) sample covariance around the pooled grand mean.
pub fn sample_covariance(pool: &EpochPool) -> Result<Mat<f64>> {
    sample_covariance_centered(pool, Centering::GrandMean)
}

pub fn sample_covariance_centered(pool: &EpochPool, centering: Centering) -> Result<Mat<f64>> {
    let x = centered(pool, centering)?;
    Ok(gram(x.as_ref()))
}

/// Analytic Ledoit-Wolf intensity for centered rows `x` with sample covariance `s`.
fn ledoit_wolf_intensity(x: MatRef<'_, f64>, s: MatRef<'_, f64>, nu: f64) -> f64 {
    let (n, d) = (x.nrows() as f64, x.ncols());
    let mut dist = 0.0;
    let mut s_norm2 = 0.0;
    for j in 0..d {
        for i in 0..d {
            let v = s[(i, j)];
            s_norm2 += v * v;
            let off = if i == j { v - nu } else { v };
            dist += off * off;
        }
    }
    let mut row_norm2 = vec![0.0; x.nrows()];
    for j in 0..d {
        for (k, r) in row_norm2.iter_mut().enumerate() {
            let v = x[(k, j)];
            *r += v * v;
        }
    }
    let fourth: f64 = row_norm2.iter().map(|r| r * r).sum();
    // sum_k ||x_k x_k^T - S||_F^2 = sum_k ||x_k||^4 - n ||S||_F^2
    let b2 = ((fourth / n - s_norm2) / (n * d as f64)).max(0.0);
    let d2 = dist / d as f64;
    if d2 <= 0.0 {
        0.0
    } else {
        (b2.min(d2) / d2).clamp(0.0, 1.0)
    }
}

fn shrunk_matrix(pool: &EpochPool, config: &CovarianceConfig) -> Result<(Mat<f64>, f64)> {
    if pool.len() < 2 {
        return Err(match pool.len() {
            0 => UmmError::EmptyPool,
            n => UmmError::InsufficientData { needed: 2, got: n },
        });
    }
    let x = centered(pool, config.centering)?;
    let mut s = gram(x.as_ref());
    let d = s.nrows();
    let nu = trace(s.as_ref()) / d as f64;
    let gamma = match config.shrinkage_override {
        Some(g) => g,
        None => ledoit_wolf_intensity(x.as_ref(), s.as_ref(), nu),
    };
    for j in 0..d {
        for i in 0..d {
            s[(i, j)] *= 1.0 - gamma;
        }
        s[(j, j)] += gamma * nu;
    }
    clip_repair(&mut s)?;
    Ok((s, gamma))
}

fn repair_floor(m: MatRef<'_, f64>) -> Result<f64> {
    let tr = trace(m);
    if !tr.is_finite() || tr <= 0.0 {
        return Err(UmmError::NotPositiveDefinite);
    }
    Ok(SPD_FLOOR * tr / m.nrows() as f64)
}

/// True when every eigenvalue of the symmetric `m` exceeds `floor`, certified
/// by a Cholesky factorization of `m - floor * I`.
fn exceeds_floor(m: MatRef<'_, f64>, floor: f64) -> bool {
    let mut shifted = m.to_owned();
    for i in 0..shifted.nrows() {
        shifted[(i, i)] -= floor;
    }
    shifted.llt(Side::Lower).is_ok()
}

/// Symmetrize, then raise every eigenvalue below the floor to the floor.
fn clip_repair(m: &mut Mat<f64>) -> Result<()> {
    symmetrize(m.as_mut());
    let floor = repair_floor(m.as_ref())?;
    if exceeds_floor(m.as_ref(), floor) {
        return Ok(());
    }
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| UmmError::NotPositiveDefinite)?;
    let u = evd.U();
    let vals = evd.S().column_vector();
    let d = m.nrows();
    let mut scaled = u.to_owned();
    for j in 0..d {
        let lambda = vals[j].max(floor);
        for i in 0..d {
            scaled[(i, j)] *= lambda;
        }
    }
    matmul(m.as_mut(), Accum::Replace, scaled.as_ref(), u.transpose(), 1.0, Par::Seq);
    symmetrize(m.as_mut());
    Ok(())
}

fn smallest_eigenvalue(m: MatRef<'_, f64>) -> Result<f64> {
    let vals = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| UmmError::NotPositiveDefinite)?;
    vals.first().copied().ok_or(UmmError::NotPositiveDefinite)
}

/// Lag blocks `W_0 .. W_{T-1}` (each `C x C`, column-major) of a symmetric matrix.
fn lag_blocks(s: MatRef<'_, f64>, channels: usize, samples: usize) -> Vec<Mat<f64>> {
    let c = channels;
    (0..samples)
        .map(|lag| {
            let count = (samples - lag) as f64;
            let mut w = Mat::<f64>::zeros(c, c);
            for j in 0..samples - lag {
                let i = j + lag;
                for b in 0..c {
                    for a in 0..c {
                        // (B_{i,j} + B_{j,i}^T) / 2
                        let v = (s[(i * c + a, j * c + b)] + s[(j * c + b, i * c + a)]) * 0.5;
                        w[(a, b)] += v;
                    }
                }
            }
            for b in 0..c {
                for a in 0..c {
                    w[(a, b)] /= count;
                }
            }
            w
        })
        .collect()
}

fn assemble_toeplitz(blocks: &[Mat<f64>], channels: usize) -> Mat<f64> {
    let c = channels;
    let t = blocks.len();
    let d = c * t;
    Mat::from_fn(d, d, |row, col| {
        let (i, a) = (row / c, row % c);
        let (j, b) = (col / c, col % c);
        if i >= j {
            blocks[i - j][(a, b)]
        } else {
            blocks[j - i][(b, a)]
        }
    })
}

/// Estimated (or supplied) covariance together with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    matrix: Mat<f64>,
    factor: Llt<f64>,
    kind: EstimatorKind,
    scope: CovarianceScope,
    shrinkage_intensity: f64,
    taper_bandwidth: Option<usize>,
    channels: usize,
    samples: usize,
    pool_size: usize,
}

impl CovarianceModel {
    fn factorized(
        matrix: Mat<f64>,
        kind: EstimatorKind,
        config: &CovarianceConfig,
        shrinkage_intensity: f64,
        pool: &EpochPool,
    ) -> Result<Self> {
        let factor = matrix
            .llt(Side::Lower)
            .map_err(|_| UmmError::NotPositiveDefinite)?;
        Ok(Self {
            matrix,
            factor,
            kind,
            scope: config.scope,
            shrinkage_intensity,
            taper_bandwidth: config.taper_bandwidth,
            channels: pool.channels(),
            samples: pool.samples(),
            pool_size: pool.len(),
        })
    }

    /// Wraps a caller-supplied SPD matrix (treated as one time sample of
    /// `dim` channels). Fails with `NotPositiveDefinite` if it cannot be factorized.
    pub fn from_matrix(matrix: Mat<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(UmmError::ShapeMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let d = matrix.nrows();
        let factor = matrix
            .llt(Side::Lower)
            .map_err(|_| UmmError::NotPositiveDefinite)?;
        Ok(Self {
            matrix,
            factor,
            kind: EstimatorKind::Fixed,
            scope: CovarianceScope::CurrentTrial,
            shrinkage_intensity: 0.0,
            taper_bandwidth: None,
            channels: d,
            samples: 1,
            pool_size: 0,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix(Mat::identity(dim, dim)).expect("identity is SPD")
    }

    /// Same estimate multiplied by `alpha > 0`.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(UmmError::ArgumentOutOfRange("scale must be positive and finite"));
        }
        let matrix = Mat::from_fn(self.dim(), self.dim(), |i, j| alpha * self.matrix[(i, j)]);
        let factor = matrix
            .llt(Side::Lower)
            .map_err(|_| UmmError::NotPositiveDefinite)?;
        Ok(Self {
            matrix,
            factor,
            ..self.clone()
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.matrix.as_ref()
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn scope(&self) -> CovarianceScope {
        self.scope
    }

    pub fn shrinkage_intensity(&self) -> f64 {
        self.shrinkage_intensity
    }

    pub fn taper_bandwidth(&self) -> Option<usize> {
        self.taper_bandwidth
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Number of epochs the estimate was computed from.
    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    /// `Sigma^{-1} v` through the Cholesky factor.
    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(UmmError::ShapeMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        let mut rhs = Mat::from_fn(v.len(), 1, |i, _| v[i]);
        self.factor.solve_in_place(rhs.as_mut());
        Ok((0..v.len()).map(|i| rhs[(i, 0)]).collect())
    }

    /// Solves in place for every column of `rhs` (`D x k`).
    pub fn solve_columns(&self, rhs: MatMut<'_, f64>) -> Result<()> {
        if rhs.nrows() != self.dim() {
            return Err(UmmError::ShapeMismatch {
                expected: self.dim(),
                got: rhs.nrows(),
            });
        }
        self.factor.solve_in_place(rhs);
        Ok(())
    }

    /// Explicit inverse; only for export and diagnostics.
    pub fn inverse(&self) -> Mat<f64> {
        let mut inv = Mat::<f64>::identity(self.dim(), self.dim());
        self.factor.solve_in_place(inv.as_mut());
        inv
    }
}

/// `Sigma^{-1} v` for a single vector.
pub fn spd_solve(model: &CovarianceModel, v: &[f64]) -> Result<Vec<f64>> {
    model.solve(v)
}

/// `Sigma^{-1} v` for every row vector in `rows`.
pub fn spd_solve_rows(model: &CovarianceModel, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = model.dim();
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(UmmError::ShapeMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let mut rhs = Mat::from_fn(d, rows.len(), |i, j| rows[j][i]);
    model.solve_columns(rhs.as_mut())?;
    Ok((0..rows.len())
        .map(|j| (0..d).map(|i| rhs[(i, j)]).collect())
        .collect())
}

/// Ledoit-Wolf shrinkage estimate `(1 - gamma) S + gamma nu I`.
pub fn shrinkage_covariance(pool: &EpochPool) -> Result<CovarianceModel> {
    shrinkage_covariance_with(
        pool,
        &CovarianceConfig {
            kind: EstimatorKind::Shrinkage,
            ..CovarianceConfig::default()
        },
    )
}

pub fn shrinkage_covariance_with(
    pool: &EpochPool,
    config: &CovarianceConfig,
) -> Result<CovarianceModel> {
    config.validate()?;
    let (s, gamma) = shrunk_matrix(pool, config)?;
    CovarianceModel::factorized(s, EstimatorKind::Shrinkage, config, gamma, pool)
}

/// Block-Toeplitz estimate with default settings (no taper).
pub fn block_toeplitz_covariance(pool: &EpochPool) -> Result<CovarianceModel> {
    block_toeplitz_covariance_with(pool, &CovarianceConfig::default())
}

pub fn block_toeplitz_covariance_with(
    pool: &EpochPool,
    config: &CovarianceConfig,
) -> Result<CovarianceModel> {
    config.validate()?;
    let (c, t) = (pool.channels(), pool.samples());
    if c * t != pool.dim() || c == 0 {
        return Err(UmmError::ShapeMismatch {
            expected: c * t,
            got: pool.dim(),
        });
    }
    let (s, gamma) = shrunk_matrix(pool, config)?;
    let mut blocks = lag_blocks(s.as_ref(), c, t);
    drop(s);
    if let Some(band) = config.taper_bandwidth {
        for (lag, w) in blocks.iter_mut().enumerate().skip(1) {
            let weight = (1.0 - lag as f64 / band as f64).max(0.0);
            for b in 0..c {
                for a in 0..c {
                    w[(a, b)] *= weight;
                }
            }
        }
    }
    let mut sigma = assemble_toeplitz(&blocks, c);
    let floor = repair_floor(sigma.as_ref())?;
    if !exceeds_floor(sigma.as_ref(), floor) {
        // structure-preserving repair: shift the lag-0 block's diagonal so the
        // smallest eigenvalue lands on the floor; retries only add round-off
        // slack on top
        let base = (floor - smallest_eigenvalue(sigma.as_ref())?).max(0.0);
        let mut attempts = 0;
        loop {
            let shift = base + floor * ((1u64 << attempts) - 1) as f64;
            let mut shifted = blocks.clone();
            for a in 0..c {
                shifted[0][(a, a)] += shift;
            }
            sigma = assemble_toeplitz(&shifted, c);
            if exceeds_floor(sigma.as_ref(), 0.5 * floor) {
                break;
            }
            attempts += 1;
            if attempts > 8 {
                return Err(UmmError::NotPositiveDefinite);
            }
        }
    }
    CovarianceModel::factorized(sigma, EstimatorKind::BlockToeplitz, config, gamma, pool)
}

/// Dispatches on `config.kind`.
pub fn estimate_covariance(pool: &EpochPool, config: &CovarianceConfig) -> Result<CovarianceModel> {
    match config.kind {
        EstimatorKind::Shrinkage => shrinkage_covariance_with(pool, config),
        EstimatorKind::BlockToeplitz => block_toeplitz_covariance_with(pool, config),
        EstimatorKind::Fixed => Err(UmmError::InvalidConfig(
            "a fixed covariance cannot be estimated from data".into(),
        )),
    }
}

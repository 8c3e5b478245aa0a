//! Naive reference decoder used as a test oracle.
//!
//! Everything here is written from the definitions with plain nested loops:
//! dense covariance, Ledoit-Wolf intensity from the per-sample sum, lag
//! averaging by explicit block indexing, Gauss-Jordan inversion, explicit
//! index partitions, and blended means recomputed from the full decision
//! history instead of running accumulators.
#![allow(dead_code, clippy::needless_range_loop)]

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Instant,
    Optimistic,
    Confidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Shrinkage,
    Toeplitz,
}

/// One trial for the oracle: time-major epochs and highlight sets.
#[derive(Debug, Clone)]
pub struct RawTrial {
    pub n_symbols: usize,
    pub epochs: Vec<Vec<f64>>,
    pub events: Vec<Vec<usize>>,
}

pub fn raw_trial(trial: &umm_core::trial::Trial) -> RawTrial {
    RawTrial {
        n_symbols: trial.n_symbols(),
        epochs: trial.epochs().iter().map(|e| e.as_slice().to_vec()).collect(),
        events: trial.events().iter().map(|e| e.highlighted().to_vec()).collect(),
    }
}

pub fn sample_cov(rows: &[Vec<f64>]) -> Matrix {
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            mean[j] += r[j];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut s = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                s[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    for row in &mut s {
        for v in row.iter_mut() {
            *v /= n as f64;
        }
    }
    s
}

/// Ledoit-Wolf shrunk covariance and its intensity.
pub fn ledoit_wolf(rows: &[Vec<f64>]) -> (Matrix, f64) {
    let n = rows.len();
    let d = rows[0].len();
    let s = sample_cov(rows);
    let nu = (0..d).map(|i| s[i][i]).sum::<f64>() / d as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            mean[j] += r[j] / n as f64;
        }
    }
    let mut b_sum = 0.0;
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                let v = (r[i] - mean[i]) * (r[j] - mean[j]) - s[i][j];
                b_sum += v * v;
            }
        }
    }
    let b2 = b_sum / (n * n) as f64 / d as f64;
    let mut d2 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let v = s[i][j] - if i == j { nu } else { 0.0 };
            d2 += v * v;
        }
    }
    d2 /= d as f64;
    let gamma = if d2 == 0.0 { 0.0 } else { b2.min(d2) / d2 };
    let shrunk = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| (1.0 - gamma) * s[i][j] + if i == j { gamma * nu } else { 0.0 })
                .collect()
        })
        .collect();
    (shrunk, gamma)
}

/// Average each lag's blocks (and their transposes) into a block-Toeplitz matrix.
pub fn toeplitz_average(s: &Matrix, channels: usize, samples: usize) -> Matrix {
    let c = channels;
    let d = c * samples;
    let mut out = vec![vec![0.0; d]; d];
    for lag in 0..samples {
        let mut w = vec![vec![0.0; c]; c];
        let mut count = 0.0;
        for j in 0..samples - lag {
            let i = j + lag;
            count += 1.0;
            for a in 0..c {
                for b in 0..c {
                    w[a][b] += 0.5 * (s[i * c + a][j * c + b] + s[j * c + b][i * c + a]);
                }
            }
        }
        for j in 0..samples - lag {
            let i = j + lag;
            for a in 0..c {
                for b in 0..c {
                    out[i * c + a][j * c + b] = w[a][b] / count;
                    out[j * c + b][i * c + a] = w[a][b] / count;
                }
            }
        }
    }
    out
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(m: &Matrix) -> Vec<f64> {
    let n = m.len();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// Whether `m - shift * I` has a plain Cholesky factor.
fn cholesky_succeeds(m: &Matrix, shift: f64) -> bool {
    let d = m.len();
    let mut l = vec![vec![0.0; d]; d];
    for j in 0..d {
        let mut diag = m[j][j] - shift;
        for k in 0..j {
            diag -= l[j][k] * l[j][k];
        }
        if diag <= 0.0 {
            return false;
        }
        l[j][j] = diag.sqrt();
        for i in j + 1..d {
            let mut v = m[i][j];
            for k in 0..j {
                v -= l[i][k] * l[j][k];
            }
            l[i][j] = v / l[j][j];
        }
    }
    true
}

/// Raises the smallest eigenvalue of a lag-averaged matrix to
/// `1e-10 * trace / D` by adding the deficit to the diagonal.
pub fn lift_diagonal(mut m: Matrix) -> Matrix {
    let d = m.len();
    let floor = 1e-10 * (0..d).map(|i| m[i][i]).sum::<f64>() / d as f64;
    if cholesky_succeeds(&m, floor) {
        return m;
    }
    let lowest = jacobi_eigenvalues(&m).into_iter().fold(f64::INFINITY, f64::min);
    if lowest <= floor {
        let shift = (floor - lowest).max(floor);
        for (i, row) in m.iter_mut().enumerate() {
            row[i] += shift;
        }
    }
    m
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(m: &Matrix) -> Matrix {
    let d = m.len();
    let mut a: Matrix = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..d).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        let p = a[col][col];
        assert!(p.abs() > 0.0, "singular matrix in oracle");
        for v in a[col].iter_mut() {
            *v /= p;
        }
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col {
                let f = row[col];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
    }
    a.into_iter().map(|r| r[d..].to_vec()).collect()
}

pub fn quad_form(inv: &Matrix, v: &[f64]) -> f64 {
    let mut q = 0.0;
    for i in 0..v.len() {
        for j in 0..v.len() {
            q += v[i] * inv[i][j] * v[j];
        }
    }
    q
}

/// Target and non-target means of the hypothesis that `symbol` is attended.
pub fn class_means(trial: &RawTrial, symbol: usize) -> (Vec<f64>, Vec<f64>) {
    let d = trial.epochs[0].len();
    let mut plus = vec![0.0; d];
    let mut minus = vec![0.0; d];
    let (mut np, mut nm) = (0.0, 0.0);
    for (epoch, event) in trial.epochs.iter().zip(&trial.events) {
        if event.contains(&symbol) {
            np += 1.0;
            for j in 0..d {
                plus[j] += epoch[j];
            }
        } else {
            nm += 1.0;
            for j in 0..d {
                minus[j] += epoch[j];
            }
        }
    }
    (
        plus.iter().map(|v| v / np).collect(),
        minus.iter().map(|v| v / nm).collect(),
    )
}

/// Winner (lowest index on ties), runner-up and confidence.
pub fn confidence(dist: &[f64]) -> (usize, usize, f64) {
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| dist[b].partial_cmp(&dist[a]).unwrap().then(a.cmp(&b)));
    let (best, second) = (order[0], order[1]);
    let rest: Vec<f64> = (0..dist.len()).filter(|&i| i != best).map(|i| dist[i]).collect();
    let mean = rest.iter().sum::<f64>() / rest.len() as f64;
    let var = rest.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rest.len() as f64;
    let sigma = var.sqrt().max(1e-12);
    (best, second, ((dist[best] - dist[second]) / sigma).max(0.0))
}

#[derive(Debug, Clone)]
pub struct OracleDecision {
    pub chosen: usize,
    pub distances: Vec<f64>,
    pub confidence: f64,
    pub instant_confidence: f64,
}

/// Decodes a whole session from scratch; each trial recomputes every
/// quantity from the raw history.
pub fn replay(
    trials: &[RawTrial],
    channels: usize,
    samples: usize,
    strategy: Strategy,
    estimator: Estimator,
    pooled: bool,
) -> Vec<OracleDecision> {
    let mut out: Vec<OracleDecision> = Vec::new();
    // (target mean, non-target mean, clamped weight) of each past decision
    let mut past: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    for (t, trial) in trials.iter().enumerate() {
        let rows: Vec<Vec<f64>> = if pooled {
            trials[..=t].iter().flat_map(|tr| tr.epochs.clone()).collect()
        } else {
            trial.epochs.clone()
        };
        let (shrunk, _) = ledoit_wolf(&rows);
        let sigma = match estimator {
            Estimator::Shrinkage => shrunk,
            Estimator::Toeplitz => lift_diagonal(toeplitz_average(&shrunk, channels, samples)),
        };
        let inv = invert(&sigma);
        let means: Vec<(Vec<f64>, Vec<f64>)> =
            (0..trial.n_symbols).map(|s| class_means(trial, s)).collect();
        let diff = |p: &[f64], m: &[f64]| p.iter().zip(m).map(|(a, b)| a - b).collect::<Vec<_>>();
        let instant: Vec<f64> = means.iter().map(|(p, m)| quad_form(&inv, &diff(p, m))).collect();
        let (_, _, c_inst) = confidence(&instant);
        let distances: Vec<f64> = match strategy {
            Strategy::Instant => instant.clone(),
            Strategy::Optimistic => means
                .iter()
                .map(|(p, m)| {
                    let k = past.len() as f64 + 1.0;
                    let mut bp = p.clone();
                    let mut bm = m.clone();
                    for (pp, pm, _) in &past {
                        for j in 0..bp.len() {
                            bp[j] += pp[j];
                            bm[j] += pm[j];
                        }
                    }
                    let delta: Vec<f64> = bp.iter().zip(&bm).map(|(a, b)| (a - b) / k).collect();
                    quad_form(&inv, &delta)
                })
                .collect(),
            Strategy::Confidence => means
                .iter()
                .map(|(p, m)| {
                    let w_past: f64 = past.iter().map(|x| x.2).sum();
                    let total = w_past + c_inst;
                    if w_past == 0.0 || total <= 0.0 {
                        return quad_form(&inv, &diff(p, m));
                    }
                    let mut bp: Vec<f64> = p.iter().map(|v| v * c_inst).collect();
                    let mut bm: Vec<f64> = m.iter().map(|v| v * c_inst).collect();
                    for (pp, pm, w) in &past {
                        for j in 0..bp.len() {
                            bp[j] += w * pp[j];
                            bm[j] += w * pm[j];
                        }
                    }
                    let delta: Vec<f64> = bp.iter().zip(&bm).map(|(a, b)| (a - b) / total).collect();
                    quad_form(&inv, &delta)
                })
                .collect(),
        };
        let (chosen, _, c) = confidence(&distances);
        past.push((means[chosen].0.clone(), means[chosen].1.clone(), c_inst.min(1.0)));
        out.push(OracleDecision {
            chosen,
            distances,
            confidence: c,
            instant_confidence: c_inst,
        });
    }
    out
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

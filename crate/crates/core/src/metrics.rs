//! Accuracy metrics over batches of Monte Carlo trials.

use nalgebra::DMatrix;

use crate::channel::{transition_probs_for_block, ChannelParams};
use crate::config::MeasurementConfig;
use crate::error::{Error, Result};
use crate::estimate::Estimate;

/// Estimates of one channel produced by one pipeline.
#[derive(Debug, Clone)]
pub struct TrialBatch {
    truth: ChannelParams,
    estimates: Vec<Estimate>,
}

impl TrialBatch {
    pub fn new(truth: ChannelParams, estimates: Vec<Estimate>) -> Result<Self> {
        let Some(first) = estimates.first() else {
            return Err(Error::TooFewTrials { needed: 1, got: 0 });
        };
        for e in &estimates {
            if e.d != truth.d() || e.x.len() != truth.probs().len() {
                return Err(Error::DimensionMismatch {
                    expected: truth.d(),
                    actual: e.d,
                });
            }
            let (a, b) = (&e.meta, &first.meta);
            if a.estimator != b.estimator || a.mitigation != b.mitigation || a.corrected != b.corrected {
                return Err(Error::InvalidMetricInput(
                    "batch mixes estimators, mitigation or correction".into(),
                ));
            }
        }
        Ok(Self { truth, estimates })
    }

    pub fn truth(&self) -> &ChannelParams {
        &self.truth
    }

    pub fn estimates(&self) -> &[Estimate] {
        &self.estimates
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.estimates.len() as f64;
        let mut mean = vec![0.0; self.truth.probs().len()];
        for e in &self.estimates {
            for (m, v) in mean.iter_mut().zip(&e.x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// `mean(x̂) − p` per parameter.
    pub fn mean_bias(&self) -> Vec<f64> {
        self.mean()
            .iter()
            .zip(self.truth.probs())
            .map(|(m, p)| m - p)
            .collect()
    }
}

/// `Σ_k` of the unbiased sample variance of `x̂_k`.
pub fn summed_variance(batch: &TrialBatch) -> Result<f64> {
    let n = batch.len();
    if n < 2 {
        return Err(Error::TooFewTrials { needed: 2, got: n });
    }
    let mean = batch.mean();
    let mut total = 0.0;
    for e in batch.estimates() {
        for (v, m) in e.x.iter().zip(&mean) {
            total += (v - m) * (v - m);
        }
    }
    Ok(total / (n - 1) as f64)
}

/// `Σ_k mean_trials (x̂_k − p_k)²`.
pub fn summed_mse(batch: &TrialBatch) -> f64 {
    let truth = batch.truth().probs();
    let total: f64 = batch
        .estimates()
        .iter()
        .map(|e| e.x.iter().zip(truth).map(|(v, p)| (v - p) * (v - p)).sum::<f64>())
        .sum();
    total / batch.len() as f64
}

/// Euclidean norm of the mean bias vector.
pub fn bias_norm(batch: &TrialBatch) -> f64 {
    batch.mean_bias().iter().map(|b| b * b).sum::<f64>().sqrt()
}

/// Mean over trials of the ℓ1 distance between estimate and truth.
pub fn mean_diamond(batch: &TrialBatch) -> f64 {
    let truth = batch.truth().probs();
    let total: f64 = batch.estimates().iter().map(|e| l1(&e.x, truth)).sum();
    total / batch.len() as f64
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Diamond-norm distance between two Weyl channels, which reduces to the ℓ1
/// distance of their parameter vectors.
pub fn diamond_distance(p: &ChannelParams, q: &ChannelParams) -> Result<f64> {
    if p.d() != q.d() {
        return Err(Error::DimensionMismatch {
            expected: p.d(),
            actual: q.d(),
        });
    }
    Ok(l1(p.probs(), q.probs()))
}

/// Least-squares slope of `ln(metric)` against `ln(N)`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::InvalidMetricInput(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidMetricInput("N must be strictly increasing".into()));
    }
    if let Some((n, v)) = points.iter().find(|(n, v)| n.is_nan() || v.is_nan() || *n <= 0.0 || *v <= 0.0) {
        return Err(Error::InvalidMetricInput(format!(
            "non-positive value at N = {n}: {v}"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, v)| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// `Σ p(1−p)`, the summed variance of the frequency estimator times `N`.
pub fn variance_spread(p: &[f64]) -> f64 {
    p.iter().map(|v| v * (1.0 - v)).sum()
}

/// `Σ √(p(1−p))`, the leading coefficient of the expected ℓ1 error times `√N`.
pub fn l1_spread(p: &[f64]) -> f64 {
    p.iter().map(|v| (v * (1.0 - v)).sqrt()).sum()
}

pub fn ope_analytic_variance(p: &[f64], shots: u64) -> f64 {
    variance_spread(p) / shots as f64
}

/// `tr(B Σ_b Bᵀ)` with `Σ_b` the block-diagonal multinomial covariance of the
/// stacked frequencies at `⌊N/K⌋` shots per probe.
pub fn dpepc_analytic_variance(ch: &ChannelParams, cfg: &MeasurementConfig, n: u64) -> Result<f64> {
    let d = cfg.d();
    let shots = (n / cfg.k() as u64) as f64;
    if shots == 0.0 {
        return Err(Error::TooFewShots {
            shots: n,
            configs: cfg.k(),
        });
    }
    let rows = cfg.k() * d;
    let mut cov = DMatrix::<f64>::zeros(rows, rows);
    for (i, block) in cfg.blocks().iter().enumerate() {
        let lambda = transition_probs_for_block(ch, block)?;
        for a in 0..d {
            for b in 0..d {
                let diag = if a == b { lambda[a] } else { 0.0 };
                cov[(i * d + a, i * d + b)] = (diag - lambda[a] * lambda[b]) / shots;
            }
        }
    }
    let b = cfg.estimator();
    Ok((b * cov * b.transpose()).trace())
}

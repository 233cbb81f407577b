//! Estimators, noise mitigation and simplex correction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::{make_depolarizing, transition_matrix, transition_probs_for_block, ChannelParams, TransitionMatrix};
use crate::config::MeasurementConfig;
use crate::error::{Error, Result};
use crate::linalg::condition_number;
use crate::sim::CountVector;

pub const DEFAULT_CONDITION_CAP: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Dpepc,
    Ope,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Dpepc => "dpepc",
            EstimatorKind::Ope => "ope",
        }
    }
}

/// Where the noise inversion was applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MitigationRoute {
    /// Closed-form depolarizing inversion on the final parameter vector.
    Depolarizing,
    /// Per-block inversion of the induced transition matrix before least squares.
    BlockInverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateMeta {
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub kappa_assumed: Option<f64>,
    #[serde(default)]
    pub mitigation: Option<MitigationRoute>,
    #[serde(default)]
    pub corrected: bool,
    /// Set when correction met a vector with no positive entry.
    #[serde(default)]
    pub correction_degenerate: bool,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl EstimateMeta {
    fn raw(estimator: EstimatorKind) -> Self {
        Self {
            estimator,
            kappa_assumed: None,
            mitigation: None,
            corrected: false,
            correction_degenerate: false,
            seed: None,
        }
    }
}

/// Estimated parameter vector, indexed by `k̄`. Before correction it may have
/// negative entries and need not sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub d: usize,
    pub x: Vec<f64>,
    pub meta: EstimateMeta,
}

impl Estimate {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.meta.seed = Some(seed);
        self
    }

    /// Projects onto the simplex with [`correct_to_simplex`].
    pub fn corrected(&self) -> Estimate {
        let c = correct_to_simplex(&self.x);
        Estimate {
            d: self.d,
            x: c.probs,
            meta: EstimateMeta {
                corrected: true,
                correction_degenerate: c.degenerate,
                ..self.meta.clone()
            },
        }
    }
}

/// Least-squares estimate `x̂ = B·b̂` from per-probe outcome counts.
pub fn dpepc_estimate(counts: &[CountVector], cfg: &MeasurementConfig) -> Result<Estimate> {
    let b_hat = stacked_frequencies(counts, cfg)?;
    Ok(estimate_from_frequencies(&b_hat, cfg, EstimateMeta::raw(EstimatorKind::Dpepc)))
}

fn stacked_frequencies(counts: &[CountVector], cfg: &MeasurementConfig) -> Result<Vec<f64>> {
    if counts.len() != cfg.k() {
        return Err(Error::MisalignedCounts(format!(
            "{} count vectors for {} probes",
            counts.len(),
            cfg.k()
        )));
    }
    let d = cfg.d();
    let mut b_hat = Vec::with_capacity(cfg.k() * d);
    for (i, (cv, &probe)) in counts.iter().zip(cfg.probes()).enumerate() {
        if cv.probe != Some(probe) {
            return Err(Error::MisalignedCounts(format!(
                "block {i} measured {:?}, configuration expects {probe}",
                cv.probe
            )));
        }
        if cv.counts.len() != d {
            return Err(Error::MisalignedCounts(format!(
                "block {i} has {} outcomes, expected {d}",
                cv.counts.len()
            )));
        }
        b_hat.extend(cv.frequencies()?);
    }
    Ok(b_hat)
}

fn estimate_from_frequencies(b_hat: &[f64], cfg: &MeasurementConfig, meta: EstimateMeta) -> Estimate {
    let x = cfg.estimator() * DVector::from_column_slice(b_hat);
    Estimate {
        d: cfg.d(),
        x: x.iter().copied().collect(),
        meta,
    }
}

/// Relative frequencies of the Bell-measurement outcomes.
pub fn ope_estimate(counts: &CountVector) -> Result<Estimate> {
    let x = counts.frequencies()?;
    let d = (x.len() as f64).sqrt().round() as usize;
    if d * d != x.len() || d < 2 {
        return Err(Error::MisalignedCounts(format!(
            "{} outcomes is not a square number of Weyl operators",
            x.len()
        )));
    }
    Ok(Estimate {
        d,
        x,
        meta: EstimateMeta::raw(EstimatorKind::Ope),
    })
}

/// `p̃ = (p̂ − κ/d²)/(1 − κ)` elementwise.
pub fn mitigate_depolarizing(est: &Estimate, kappa: f64, d: usize) -> Result<Estimate> {
    if est.d != d || est.x.len() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: est.d,
        });
    }
    if !(0.0..1.0).contains(&kappa) {
        return Err(Error::ParameterOutOfRange {
            name: "kappa",
            value: kappa,
            min: 0.0,
            max: 1.0,
        });
    }
    let shift = kappa / (d * d) as f64;
    let scale = 1.0 / (1.0 - kappa);
    Ok(Estimate {
        d,
        x: est.x.iter().map(|&v| (v - shift) * scale).collect(),
        meta: EstimateMeta {
            kappa_assumed: Some(kappa),
            mitigation: Some(MitigationRoute::Depolarizing),
            ..est.meta.clone()
        },
    })
}

/// Solves `(Γ·Λ)·α = observed` (or `Λ·α = observed` without readout noise).
///
/// `readout` must be column stochastic.
pub fn mitigate_general(
    observed: &[f64],
    lambda: &TransitionMatrix,
    readout: Option<&DMatrix<f64>>,
    condition_cap: f64,
) -> Result<Vec<f64>> {
    let d = lambda.dim();
    if observed.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: observed.len(),
        });
    }
    let total = match readout {
        Some(gamma) => {
            if gamma.nrows() != d || gamma.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: gamma.nrows(),
                });
            }
            for (j, col) in gamma.column_iter().enumerate() {
                if col.iter().any(|&v| v < 0.0) || (col.sum() - 1.0).abs() > 1e-12 {
                    return Err(Error::NotProbabilityVector(format!("readout column {j}")));
                }
            }
            gamma * lambda.as_matrix()
        }
        None => lambda.as_matrix().clone(),
    };
    let condition = condition_number(&total);
    if condition.is_infinite() {
        return Err(Error::Singular);
    }
    if condition > condition_cap {
        return Err(Error::IllConditioned {
            condition,
            cap: condition_cap,
        });
    }
    let solved = total
        .lu()
        .solve(&DVector::from_column_slice(observed))
        .ok_or(Error::Singular)?;
    Ok(solved.iter().copied().collect())
}

/// Least-squares estimate after inverting a known Pauli noise channel
/// block by block.
pub fn dpepc_estimate_block_mitigated(
    counts: &[CountVector],
    cfg: &MeasurementConfig,
    noise: &ChannelParams,
    readout: Option<&DMatrix<f64>>,
) -> Result<Estimate> {
    let b_hat = stacked_frequencies(counts, cfg)?;
    let d = cfg.d();
    let mut alpha = Vec::with_capacity(b_hat.len());
    for (block, beta) in cfg.blocks().iter().zip(b_hat.chunks(d)) {
        let lambda = transition_matrix(&transition_probs_for_block(noise, block)?)?;
        alpha.extend(mitigate_general(beta, &lambda, readout, DEFAULT_CONDITION_CAP)?);
    }
    let kappa = match noise.generator() {
        Some(crate::channel::GeneratorMeta::Depolarizing { kappa }) => Some(*kappa),
        _ => None,
    };
    let meta = EstimateMeta {
        kappa_assumed: kappa,
        mitigation: Some(MitigationRoute::BlockInverse),
        ..EstimateMeta::raw(EstimatorKind::Dpepc)
    };
    Ok(estimate_from_frequencies(&alpha, cfg, meta))
}

/// [`dpepc_estimate_block_mitigated`] for depolarizing probe noise.
pub fn dpepc_estimate_block_depolarizing(
    counts: &[CountVector],
    cfg: &MeasurementConfig,
    kappa: f64,
) -> Result<Estimate> {
    if !(0.0..1.0).contains(&kappa) {
        return Err(Error::ParameterOutOfRange {
            name: "kappa",
            value: kappa,
            min: 0.0,
            max: 1.0,
        });
    }
    dpepc_estimate_block_mitigated(counts, cfg, &make_depolarizing(cfg.d(), kappa)?, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub probs: Vec<f64>,
    /// No entry was positive; `probs` is uniform.
    pub degenerate: bool,
}

/// Clamps negative entries to zero and renormalizes.
///
/// Vectors that are already on the simplex (within `1e-12` of unit sum) are
/// returned with signed zeros cleared and otherwise untouched, which makes the
/// map idempotent.
pub fn correct_to_simplex(x: &[f64]) -> Correction {
    let clamped: Vec<f64> = x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    let total: f64 = clamped.iter().sum();
    if total.is_nan() || total <= 0.0 || total.is_infinite() {
        let n = x.len().max(1);
        return Correction {
            probs: vec![1.0 / n as f64; x.len()],
            degenerate: true,
        };
    }
    let untouched = x.iter().all(|&v| v >= 0.0) && (total - 1.0).abs() <= 1e-12;
    let probs = if untouched {
        clamped
    } else {
        clamped.into_iter().map(|v| v / total).collect()
    };
    Correction {
        probs,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{compose, make_random_channel, transition_probs};
    use crate::config::find_config;
    use crate::sim::{simulate_dpepc, RngStream};
    use proptest::prelude::*;

    /// Counts `shots·λ` for a channel whose transition probabilities are
    /// multiples of `1/shots`.
    fn exact_counts(ch: &ChannelParams, cfg: &MeasurementConfig, shots: u64) -> Vec<CountVector> {
        cfg.probes()
            .iter()
            .map(|&p| {
                let lambda = transition_probs(ch, p).unwrap();
                let counts = lambda.iter().map(|l| (l * shots as f64).round() as u64).collect();
                CountVector::new(Some(p), counts)
            })
            .collect()
    }

    fn dyadic_channel(d: usize, seed: u64) -> ChannelParams {
        // entries are multiples of 1/1024 so shots·λ is integral
        let mut rng = RngStream::new(seed, 0).rng();
        let raw = make_random_channel(d, &mut rng).unwrap();
        let mut ticks: Vec<u64> = raw.probs().iter().map(|p| (p * 1024.0).floor() as u64).collect();
        let short = 1024 - ticks.iter().sum::<u64>();
        ticks[0] += short;
        ChannelParams::new(d, ticks.iter().map(|&t| t as f64 / 1024.0).collect()).unwrap()
    }

    #[test]
    fn exact_counts_round_trip() {
        for d in [2, 3, 4, 5] {
            let cfg = find_config(d).unwrap();
            let ch = dyadic_channel(d, d as u64);
            let est = dpepc_estimate(&exact_counts(&ch, &cfg, 1 << 20), &cfg).unwrap();
            for (a, b) in est.x.iter().zip(ch.probs()) {
                assert!((a - b).abs() < 1e-9, "d={d}");
            }
        }
        let cfg = find_config(3).unwrap();
        let id = ChannelParams::identity(3).unwrap();
        let est = dpepc_estimate(&exact_counts(&id, &cfg, 100), &cfg).unwrap();
        assert!((est.x[0] - 1.0).abs() < 1e-12);
        assert!(est.x[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn uniform_fixed_point_for_qubit() {
        let cfg = find_config(2).unwrap();
        let est = dpepc_estimate(&exact_counts(&ChannelParams::uniform(2).unwrap(), &cfg, 1000), &cfg).unwrap();
        assert!(est.x.iter().all(|v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn dpepc_rejects_misaligned_counts() {
        let cfg = find_config(3).unwrap();
        let mut counts = exact_counts(&ChannelParams::uniform(3).unwrap(), &cfg, 9);
        counts.swap(0, 1);
        assert!(matches!(dpepc_estimate(&counts, &cfg), Err(Error::MisalignedCounts(_))));
        counts.pop();
        assert!(matches!(dpepc_estimate(&counts, &cfg), Err(Error::MisalignedCounts(_))));
    }

    #[test]
    fn ope_estimate_examples() {
        let est = ope_estimate(&CountVector::new(None, vec![10, 0, 0, 0])).unwrap();
        assert_eq!(est.x, vec![1.0, 0.0, 0.0, 0.0]);
        let est = ope_estimate(&CountVector::new(None, vec![3; 9])).unwrap();
        assert_eq!(est.d, 3);
        assert!(est.x.iter().all(|&v| (v - 1.0 / 9.0).abs() < 1e-15));
        assert!(matches!(ope_estimate(&CountVector::new(None, vec![0; 4])), Err(Error::ZeroShots)));
        assert!(ope_estimate(&CountVector::new(None, vec![1; 5])).is_err());
    }

    #[test]
    fn depolarizing_mitigation_examples() {
        let raw = |x: Vec<f64>| Estimate {
            d: 2,
            x,
            meta: EstimateMeta::raw(EstimatorKind::Ope),
        };
        let e = raw(vec![0.4, 0.3, 0.2, 0.1]);
        assert_eq!(mitigate_depolarizing(&e, 0.0, 2).unwrap().x, e.x);
        let u = mitigate_depolarizing(&raw(vec![0.25; 4]), 0.6, 2).unwrap();
        assert!(u.x.iter().all(|v| (v - 0.25).abs() < 1e-15));

        // forward: identity channel composed with dep(0.5); inverse must recover it
        let forward = compose(&ChannelParams::identity(2).unwrap(), &make_depolarizing(2, 0.5).unwrap()).unwrap();
        assert_eq!(forward.probs(), &[0.625, 0.125, 0.125, 0.125]);
        let back = mitigate_depolarizing(&raw(forward.probs().to_vec()), 0.5, 2).unwrap();
        assert_eq!(back.x, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(back.meta.mitigation, Some(MitigationRoute::Depolarizing));

        assert!(mitigate_depolarizing(&e, 1.0, 2).is_err());
        assert!(mitigate_depolarizing(&e, 0.5, 3).is_err());
    }

    #[test]
    fn general_mitigation_examples() {
        let id = transition_matrix(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(mitigate_general(&[0.2, 0.3, 0.5], &id, None, DEFAULT_CONDITION_CAP).unwrap(), vec![0.2, 0.3, 0.5]);
        let bsc = transition_matrix(&[0.8, 0.2]).unwrap();
        let alpha = mitigate_general(&[0.8, 0.2], &bsc, None, DEFAULT_CONDITION_CAP).unwrap();
        assert!((alpha[0] - 1.0).abs() < 1e-12 && alpha[1].abs() < 1e-12);
        let flat = transition_matrix(&[0.25; 4]).unwrap();
        assert!(matches!(
            mitigate_general(&[0.25; 4], &flat, None, DEFAULT_CONDITION_CAP),
            Err(Error::Singular)
        ));
        let near = transition_matrix(&[0.5 + 1e-9, 0.5 - 1e-9]).unwrap();
        assert!(matches!(
            mitigate_general(&[0.5, 0.5], &near, None, DEFAULT_CONDITION_CAP),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn readout_and_channel_noise_invert_together() {
        let lambda = transition_matrix(&[0.7, 0.2, 0.1]).unwrap();
        let gamma = DMatrix::from_row_slice(3, 3, &[0.9, 0.05, 0.0, 0.1, 0.9, 0.1, 0.0, 0.05, 0.9]);
        let alpha = DVector::from_column_slice(&[0.6, 0.3, 0.1]);
        let observed = &gamma * lambda.as_matrix() * &alpha;
        let back = mitigate_general(observed.as_slice(), &lambda, Some(&gamma), DEFAULT_CONDITION_CAP).unwrap();
        for (a, b) in back.iter().zip(alpha.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let not_stochastic = DMatrix::from_element(3, 3, 0.5);
        assert!(mitigate_general(observed.as_slice(), &lambda, Some(&not_stochastic), 1e8).is_err());
    }

    #[test]
    fn block_route_equals_closed_form_route() {
        let cfg = find_config(5).unwrap();
        let mut rng = RngStream::new(8, 0).rng();
        let ch = make_random_channel(5, &mut rng).unwrap();
        for kappa in [0.1, 0.5, 0.9] {
            let counts = simulate_dpepc(&ch, &cfg, 60_000, kappa, RngStream::new(8, 1)).unwrap();
            let closed = mitigate_depolarizing(&dpepc_estimate(&counts, &cfg).unwrap(), kappa, 5).unwrap();
            let block = dpepc_estimate_block_depolarizing(&counts, &cfg, kappa).unwrap();
            for (a, b) in closed.x.iter().zip(&block.x) {
                assert!((a - b).abs() < 1e-12);
            }
            assert_eq!(block.meta.mitigation, Some(MitigationRoute::BlockInverse));
            assert_eq!(block.meta.kappa_assumed, Some(kappa));
        }
    }

    #[test]
    fn correction_examples() {
        let c = correct_to_simplex(&[-0.1, 0.6, 0.5]);
        assert!(!c.degenerate);
        assert!((c.probs[0]).abs() == 0.0);
        assert!((c.probs[1] - 6.0 / 11.0).abs() < 1e-15 && (c.probs[2] - 5.0 / 11.0).abs() < 1e-15);
        let valid = [0.2, 0.3, 0.5];
        assert_eq!(correct_to_simplex(&valid).probs, valid.to_vec());
        let signed = correct_to_simplex(&[0.5, 0.5, -0.0]);
        assert_eq!(signed.probs, vec![0.5, 0.5, 0.0]);
        assert!(signed.probs[2].is_sign_positive());
        let bad = correct_to_simplex(&[-0.5, 0.0, -0.1, -0.2]);
        assert!(bad.degenerate);
        assert_eq!(bad.probs, vec![0.25; 4]);
    }

    proptest! {
        #[test]
        fn correction_is_idempotent(x in prop::collection::vec(-1.0f64..1.0, 1..30)) {
            let once = correct_to_simplex(&x);
            let twice = correct_to_simplex(&once.probs);
            prop_assert_eq!(&once.probs, &twice.probs);
            prop_assert!(once.probs.iter().all(|&v| v >= 0.0));
            prop_assert!((once.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn depolarizing_mitigation_inverts_forward_map(
            seed in 0u64..1000, kappa in 0.0f64..0.99, d in 2usize..6
        ) {
            let mut rng = RngStream::new(seed, 0).rng();
            let ch = make_random_channel(d, &mut rng).unwrap();
            let noisy = compose(&ch, &make_depolarizing(d, kappa).unwrap()).unwrap();
            let est = Estimate { d, x: noisy.probs().to_vec(), meta: EstimateMeta::raw(EstimatorKind::Ope) };
            let back = mitigate_depolarizing(&est, kappa, d).unwrap();
            for (a, b) in back.x.iter().zip(ch.probs()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

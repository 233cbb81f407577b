//! Seeded simulation of probe transmission and measurement.
//!
//! The fast paths draw multinomial counts from analytic outcome
//! distributions. The oracle path evolves explicit density matrices and reads
//! Born-rule probabilities in the probe eigenbasis, and exists to validate
//! the fast path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel, compose, make_depolarizing, transition_probs_for_block, ChannelParams};
use crate::config::MeasurementConfig;
use crate::error::{Error, Result};
use crate::linalg::outer;
use crate::weyl::{eigensystem, WeylIndex};

pub const ORACLE_MAX_DIM: usize = 16;

/// Identifies an independent random stream.
///
/// The generator for a `(master_seed, stream_id)` pair is fixed, so results do
/// not depend on which thread draws from which stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// Stream for a sub-task, derived by hashing `(stream_id, index)`.
    pub fn child(&self, index: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(1))),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Outcome counts of one measurement configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountVector {
    /// `None` marks the Bell measurement of the entanglement-assisted protocol.
    pub probe: Option<WeylIndex>,
    pub counts: Vec<u64>,
    pub shots: u64,
}

impl CountVector {
    pub fn new(probe: Option<WeylIndex>, counts: Vec<u64>) -> Self {
        let shots = counts.iter().sum();
        Self {
            probe,
            counts,
            shots,
        }
    }

    pub fn frequencies(&self) -> Result<Vec<f64>> {
        if self.shots == 0 {
            return Err(Error::ZeroShots);
        }
        let total: u64 = self.counts.iter().sum();
        if total != self.shots {
            return Err(Error::MisalignedCounts(format!(
                "counts sum to {total} but shots = {}",
                self.shots
            )));
        }
        let n = self.shots as f64;
        Ok(self.counts.iter().map(|&c| c as f64 / n).collect())
    }
}

/// Multinomial draw by sequential conditional binomials.
pub fn multinomial<R: Rng + ?Sized>(shots: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = shots;
    let mut mass = 1.0f64;
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            counts[i] = remaining;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = if q == 0.0 {
            0
        } else if q >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining, q)
                .expect("q in (0, 1)")
                .sample(rng)
        };
        counts[i] = draw;
        remaining -= draw;
        mass -= p;
    }
    counts
}

fn shots_per_config(n: u64, k: usize) -> Result<u64> {
    if n < k as u64 {
        return Err(Error::TooFewShots { shots: n, configs: k });
    }
    Ok(n / k as u64)
}

fn noisy_channel(ch: &ChannelParams, kappa: f64) -> Result<ChannelParams> {
    compose(ch, &make_depolarizing(ch.d(), kappa)?)
}

fn check_config_dim(ch: &ChannelParams, cfg: &MeasurementConfig) -> Result<()> {
    if ch.d() != cfg.d() {
        return Err(Error::DimensionMismatch {
            expected: cfg.d(),
            actual: ch.d(),
        });
    }
    Ok(())
}

/// `⌊N/K⌋` shots per probe, with probes depolarized at strength `κ` before
/// the channel. Block `i` draws from `stream.child(i)`.
pub fn simulate_dpepc(
    ch: &ChannelParams,
    cfg: &MeasurementConfig,
    n: u64,
    kappa: f64,
    stream: RngStream,
) -> Result<Vec<CountVector>> {
    check_config_dim(ch, cfg)?;
    let shots = shots_per_config(n, cfg.k())?;
    let noisy = noisy_channel(ch, kappa)?;
    cfg.blocks()
        .iter()
        .enumerate()
        .map(|(i, block)| {
            let lambda = transition_probs_for_block(&noisy, block)?;
            let mut rng = stream.child(i as u64).rng();
            Ok(CountVector::new(Some(block.probe()), multinomial(shots, &lambda, &mut rng)))
        })
        .collect()
}

/// Same contract as [`simulate_dpepc`] through explicit density matrices:
/// prepare the label-0 eigenstate, depolarize, apply the channel, measure in
/// the probe eigenbasis.
pub fn simulate_dpepc_oracle(
    ch: &ChannelParams,
    cfg: &MeasurementConfig,
    n: u64,
    kappa: f64,
    stream: RngStream,
) -> Result<Vec<CountVector>> {
    check_config_dim(ch, cfg)?;
    let d = ch.d();
    if d > ORACLE_MAX_DIM {
        return Err(Error::OracleDimension {
            d,
            max: ORACLE_MAX_DIM,
        });
    }
    let shots = shots_per_config(n, cfg.k())?;
    let dep = make_depolarizing(d, kappa)?;
    cfg.probes()
        .iter()
        .enumerate()
        .map(|(i, &probe)| {
            let basis = eigensystem(probe)
                .into_basis()
                .ok_or(Error::DegenerateProbe(probe))?;
            let rho = outer(basis.vector(0));
            let rho = apply_channel(ch, &apply_channel(&dep, &rho)?)?;
            let born = born_probabilities(&basis.diagonal_of(&rho));
            let mut rng = stream.child(i as u64).rng();
            Ok(CountVector::new(Some(probe), multinomial(shots, &born, &mut rng)))
        })
        .collect()
}

fn born_probabilities(diag: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = diag.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    clipped.into_iter().map(|v| v / total).collect()
}

/// Bell-measurement outcomes of the entanglement-assisted protocol: `N`
/// draws over the `d²` parameters of the (probe-depolarized) channel.
pub fn simulate_ope(ch: &ChannelParams, n: u64, kappa: f64, stream: RngStream) -> Result<CountVector> {
    if n == 0 {
        return Err(Error::TooFewShots { shots: 0, configs: 1 });
    }
    let noisy = noisy_channel(ch, kappa)?;
    let mut rng = stream.rng();
    Ok(CountVector::new(None, multinomial(n, noisy.probs(), &mut rng)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{make_random_channel, transition_probs};
    use crate::config::find_config;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn chi2_critical_001(df: usize) -> f64 {
        ChiSquared::new(df as f64).unwrap().inverse_cdf(0.999)
    }

    fn chi2_goodness(counts: &[u64], probs: &[f64]) -> (f64, usize) {
        let n: u64 = counts.iter().sum();
        let mut stat = 0.0;
        let mut df = 0;
        for (&c, &p) in counts.iter().zip(probs) {
            if p > 0.0 {
                let e = n as f64 * p;
                stat += (c as f64 - e).powi(2) / e;
                df += 1;
            }
        }
        (stat, df - 1)
    }

    #[test]
    fn stream_is_reproducible_and_distinct() {
        let s = RngStream::new(42, 7);
        let a: Vec<u64> = (0..4).map(|_| s.rng().random()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let mut r1 = s.child(0).rng();
        let mut r2 = s.child(1).rng();
        assert_ne!(r1.random::<u64>(), r2.random::<u64>());
        assert_ne!(RngStream::new(1, 0).rng().random::<u64>(), RngStream::new(2, 0).rng().random::<u64>());
    }

    #[test]
    fn multinomial_conserves_shots() {
        let mut rng = RngStream::new(1, 1).rng();
        let counts = multinomial(1000, &[0.2, 0.0, 0.5, 0.3], &mut rng);
        assert_eq!(counts.iter().sum::<u64>(), 1000);
        assert_eq!(counts[1], 0);
        assert_eq!(multinomial(10, &[1.0, 0.0], &mut rng), vec![10, 0]);
    }

    #[test]
    fn identity_channel_concentrates() {
        let cfg = find_config(3).unwrap();
        let ch = ChannelParams::identity(3).unwrap();
        for blocks in [
            simulate_dpepc(&ch, &cfg, 400, 0.0, RngStream::new(5, 0)).unwrap(),
            simulate_dpepc_oracle(&ch, &cfg, 400, 0.0, RngStream::new(5, 0)).unwrap(),
        ] {
            assert_eq!(blocks.len(), 4);
            for b in blocks {
                assert_eq!(b.counts, vec![100, 0, 0]);
            }
        }
        let ope = simulate_ope(&ch, 500, 0.0, RngStream::new(5, 1)).unwrap();
        assert_eq!(ope.counts[0], 500);
    }

    #[test]
    fn too_few_shots() {
        let cfg = find_config(3).unwrap();
        let ch = ChannelParams::uniform(3).unwrap();
        assert!(matches!(
            simulate_dpepc(&ch, &cfg, 3, 0.0, RngStream::new(0, 0)),
            Err(Error::TooFewShots { .. })
        ));
    }

    #[test]
    fn uniform_and_fully_depolarized_are_flat() {
        let cfg = find_config(3).unwrap();
        let uni = ChannelParams::uniform(3).unwrap();
        let flat = [1.0 / 3.0; 3];
        for b in simulate_dpepc(&uni, &cfg, 400_000, 0.0, RngStream::new(9, 0)).unwrap() {
            let (stat, df) = chi2_goodness(&b.counts, &flat);
            assert!(stat < chi2_critical_001(df), "{stat}");
        }
        let mut rng = RngStream::new(9, 1).rng();
        let ch = make_random_channel(3, &mut rng).unwrap();
        for b in simulate_dpepc(&ch, &cfg, 400_000, 1.0, RngStream::new(9, 2)).unwrap() {
            let (stat, df) = chi2_goodness(&b.counts, &flat);
            assert!(stat < chi2_critical_001(df), "{stat}");
        }
    }

    #[test]
    fn oracle_frequencies_within_four_sigma() {
        let cfg = find_config(3).unwrap();
        let mut rng = RngStream::new(21, 0).rng();
        let ch = make_random_channel(3, &mut rng).unwrap();
        let shots_total = 400_000;
        let blocks = simulate_dpepc_oracle(&ch, &cfg, shots_total, 0.0, RngStream::new(21, 1)).unwrap();
        for b in blocks {
            let lambda = transition_probs(&ch, b.probe.unwrap()).unwrap();
            let n = b.shots as f64;
            for (&c, &l) in b.counts.iter().zip(&lambda) {
                let sigma = (l * (1.0 - l) / n).sqrt();
                assert!((c as f64 / n - l).abs() <= 4.0 * sigma + 1e-12);
            }
        }
    }

    #[test]
    fn oracle_dimension_guard() {
        let cfg = find_config(17).unwrap();
        let ch = ChannelParams::uniform(17).unwrap();
        assert!(matches!(
            simulate_dpepc_oracle(&ch, &cfg, 1000, 0.0, RngStream::new(0, 0)),
            Err(Error::OracleDimension { .. })
        ));
    }

    #[test]
    fn ope_frequencies_within_four_sigma() {
        let ch = ChannelParams::new(2, vec![0.7, 0.1, 0.15, 0.05]).unwrap();
        let n = 1_000_000;
        let cv = simulate_ope(&ch, n, 0.0, RngStream::new(3, 3)).unwrap();
        for (&c, &p) in cv.counts.iter().zip(ch.probs()) {
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((c as f64 / n as f64 - p).abs() <= 4.0 * sigma);
        }
        let uni = simulate_ope(&ChannelParams::uniform(3).unwrap(), 900_000, 0.0, RngStream::new(3, 4)).unwrap();
        let (stat, df) = chi2_goodness(&uni.counts, &[1.0 / 9.0; 9]);
        assert!(stat < chi2_critical_001(df));
    }

    /// Equal-size two-sample statistic `Σ (a−b)²/(a+b)` and its degrees of freedom.
    fn chi2_two_sample(a: &[u64], b: &[u64]) -> (f64, usize) {
        let mut stat = 0.0;
        let mut cells = 0;
        for (&x, &y) in a.iter().zip(b) {
            if x + y > 0 {
                stat += (x as f64 - y as f64).powi(2) / (x + y) as f64;
                cells += 1;
            }
        }
        (stat, cells.max(2) - 1)
    }

    #[test]
    fn fast_and_oracle_paths_agree_in_distribution() {
        for d in 2..=8 {
            let cfg = find_config(d).unwrap();
            let mut rng = RngStream::new(77, d as u64).rng();
            let ch = make_random_channel(d, &mut rng).unwrap();
            let n = 100_000 * cfg.k() as u64;
            let fast = simulate_dpepc(&ch, &cfg, n, 0.2, RngStream::new(78, d as u64)).unwrap();
            let oracle = simulate_dpepc_oracle(&ch, &cfg, n, 0.2, RngStream::new(79, d as u64)).unwrap();
            for (a, b) in fast.iter().zip(&oracle) {
                assert_eq!(a.probe, b.probe);
                let (stat, df) = chi2_two_sample(&a.counts, &b.counts);
                assert!(stat < chi2_critical_001(df), "d = {d}: {stat} on {df} df");
            }
        }
    }

    #[test]
    fn empirical_transition_probs_converge() {
        for d in [3, 5, 7] {
            let cfg = find_config(d).unwrap();
            let mut rng = RngStream::new(5, d as u64).rng();
            let ch = make_random_channel(d, &mut rng).unwrap();
            let shots = 20_000u64;
            let blocks = simulate_dpepc(&ch, &cfg, shots * cfg.k() as u64, 0.0, RngStream::new(6, 0)).unwrap();
            let bound = 5.0 * (((d * cfg.k()) as f64).ln() / (2.0 * shots as f64)).sqrt();
            for b in blocks {
                let lambda = transition_probs(&ch, b.probe.unwrap()).unwrap();
                let worst = b
                    .frequencies()
                    .unwrap()
                    .iter()
                    .zip(&lambda)
                    .map(|(f, l)| (f - l).abs())
                    .fold(0.0, f64::max);
                assert!(worst <= bound, "d = {d}: {worst} > {bound}");
            }
        }
    }

    #[test]
    fn frequencies_reject_inconsistent_counts() {
        let cv = CountVector {
            probe: None,
            counts: vec![1, 2],
            shots: 4,
        };
        assert!(matches!(cv.frequencies(), Err(Error::MisalignedCounts(_))));
        let empty = CountVector::new(None, vec![0, 0]);
        assert!(matches!(empty.frequencies(), Err(Error::ZeroShots)));
    }
}

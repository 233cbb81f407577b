//! Discrete Weyl channel parameters and their action.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::config::DesignBlock;
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::weyl::{check_dim, omega_pow, WeylIndex};

pub const PROBABILITY_TOL: f64 = 1e-12;
const STATE_TOL: f64 = 1e-10;

/// How a parameter vector was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorMeta {
    ExpCorrelation { gamma: f64 },
    Depolarizing { kappa: f64 },
    RandomSimplex { seed: u64 },
    Composed,
}

/// Probability vector over the `d²` Weyl operators, indexed by `k̄ = n + m·d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChannel")]
pub struct ChannelParams {
    d: usize,
    p: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<GeneratorMeta>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    d: usize,
    p: Vec<f64>,
    #[serde(default)]
    generator: Option<GeneratorMeta>,
}

impl TryFrom<RawChannel> for ChannelParams {
    type Error = Error;

    fn try_from(raw: RawChannel) -> Result<Self> {
        let mut ch = ChannelParams::new(raw.d, raw.p)?;
        ch.generator = raw.generator;
        Ok(ch)
    }
}

pub(crate) fn check_probability_vector(p: &[f64], what: &str) -> Result<()> {
    if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(Error::NotProbabilityVector(format!("{what}[{i}] = {v}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROBABILITY_TOL {
        return Err(Error::NotProbabilityVector(format!("{what} sums to {total}")));
    }
    Ok(())
}

impl ChannelParams {
    pub fn new(d: usize, p: Vec<f64>) -> Result<Self> {
        check_dim(d)?;
        if p.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                actual: p.len(),
            });
        }
        check_probability_vector(&p, "p")?;
        Ok(Self {
            d,
            p,
            generator: None,
        })
    }

    pub fn identity(d: usize) -> Result<Self> {
        check_dim(d)?;
        let mut p = vec![0.0; d * d];
        p[0] = 1.0;
        Self::new(d, p)
    }

    pub fn uniform(d: usize) -> Result<Self> {
        check_dim(d)?;
        Self::new(d, vec![1.0 / (d * d) as f64; d * d])
    }

    /// Channel applying only `W_{n,m}`.
    pub fn pure(idx: WeylIndex) -> Self {
        let d = idx.d();
        let mut p = vec![0.0; d * d];
        p[idx.flat()] = 1.0;
        Self {
            d,
            p,
            generator: None,
        }
    }

    pub fn with_generator(mut self, meta: GeneratorMeta) -> Self {
        self.generator = Some(meta);
        self
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn prob(&self, idx: WeylIndex) -> f64 {
        self.p[idx.flat()]
    }

    pub fn generator(&self) -> Option<&GeneratorMeta> {
        self.generator.as_ref()
    }

    fn same_dim(&self, other: &ChannelParams) -> Result<()> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: other.d,
            });
        }
        Ok(())
    }
}

/// `λ_ℓ = Σ_{k̄ : f(k̄; probe) = ℓ} p_k̄` for a non-degenerate probe.
pub fn transition_probs(ch: &ChannelParams, probe: WeylIndex) -> Result<Vec<f64>> {
    let block = DesignBlock::new(probe)?;
    transition_probs_for_block(ch, &block)
}

/// [`transition_probs`] with a prebuilt design block.
pub fn transition_probs_for_block(ch: &ChannelParams, block: &DesignBlock) -> Result<Vec<f64>> {
    let d = block.probe().d();
    if ch.d != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: ch.d,
        });
    }
    let mut lambda = vec![0.0; d];
    for (k, &row) in block.fibers().iter().enumerate() {
        lambda[row] += ch.p[k];
    }
    Ok(lambda)
}

fn validate_state(rho: &DMatrix<C64>, d: usize) -> Result<()> {
    if rho.nrows() != d || rho.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: rho.nrows(),
        });
    }
    let herm_err = (rho - rho.adjoint()).camax();
    if herm_err > STATE_TOL {
        return Err(Error::MalformedState(format!("not Hermitian (deviation {herm_err:e})")));
    }
    let trace = rho.trace();
    if (trace - C64::new(1.0, 0.0)).norm() > STATE_TOL {
        return Err(Error::MalformedState(format!("trace {trace} != 1")));
    }
    let min_eig = rho.clone().symmetric_eigenvalues().min();
    if min_eig < -STATE_TOL {
        return Err(Error::MalformedState(format!("negative eigenvalue {min_eig:e}")));
    }
    Ok(())
}

/// `Σ p_{n,m} W_{n,m} ρ W_{n,m}†`.
///
/// Uses the monomial structure `(W ρ W†)_{ij} = ω^{(i−j)n} ρ_{i+m, j+m}`.
pub fn apply_channel(ch: &ChannelParams, rho: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let d = ch.d;
    validate_state(rho, d)?;
    let mut out = DMatrix::<C64>::zeros(d, d);
    for (k, &weight) in ch.p.iter().enumerate() {
        if weight == 0.0 {
            continue;
        }
        let (n, m) = (k % d, k / d);
        for i in 0..d {
            for j in 0..d {
                let phase = omega_pow((i + d - j) * n, d);
                out[(i, j)] += rho[((i + m) % d, (j + m) % d)] * phase * weight;
            }
        }
    }
    Ok(out)
}

/// Parameters of `ch1 ∘ ch2`: convolution over `Z_d × Z_d`.
pub fn compose(ch1: &ChannelParams, ch2: &ChannelParams) -> Result<ChannelParams> {
    ch1.same_dim(ch2)?;
    let d = ch1.d;
    let mut p = vec![0.0; d * d];
    for (k1, &w1) in ch1.p.iter().enumerate() {
        if w1 == 0.0 {
            continue;
        }
        let (a, b) = (k1 % d, k1 / d);
        for (k2, &w2) in ch2.p.iter().enumerate() {
            let (c, e) = (k2 % d, k2 / d);
            p[(a + c) % d + ((b + e) % d) * d] += w1 * w2;
        }
    }
    Ok(ChannelParams {
        d,
        p,
        generator: Some(GeneratorMeta::Composed),
    })
}

fn check_unit_interval(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::ParameterOutOfRange {
            name,
            value,
            min: 0.0,
            max: 1.0,
        });
    }
    Ok(())
}

/// `p_{0,0} = 1 − κ + κ/d²`, all other entries `κ/d²`.
pub fn make_depolarizing(d: usize, kappa: f64) -> Result<ChannelParams> {
    check_dim(d)?;
    check_unit_interval("kappa", kappa)?;
    let dd = (d * d) as f64;
    let mut p = vec![kappa / dd; d * d];
    p[0] = 1.0 - kappa + kappa / dd;
    Ok(ChannelParams {
        d,
        p,
        generator: Some(GeneratorMeta::Depolarizing { kappa }),
    })
}

/// Eigenvalues of `Φ(γ) = [γ^{|i−j|}] / d²`, sorted descending and assigned to
/// `k̄ = 0, 1, …`.
pub fn make_exp_corr_channel(d: usize, gamma: f64) -> Result<ChannelParams> {
    check_dim(d)?;
    check_unit_interval("gamma", gamma)?;
    let n = d * d;
    let scale = 1.0 / n as f64;
    let phi = DMatrix::<f64>::from_fn(n, n, |i, j| gamma.powi(i.abs_diff(j) as i32) * scale);
    let mut p: Vec<f64> = phi
        .symmetric_eigenvalues()
        .iter()
        .map(|&v| if v < 0.0 && v > -PROBABILITY_TOL { 0.0 } else { v })
        .collect();
    if let Some(v) = p.iter().find(|v| **v < 0.0) {
        return Err(Error::NotProbabilityVector(format!(
            "correlation matrix eigenvalue {v} is negative"
        )));
    }
    p.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    Ok(ChannelParams {
        d,
        p,
        generator: Some(GeneratorMeta::ExpCorrelation { gamma }),
    })
}

/// Channel drawn uniformly from the probability simplex.
pub fn make_random_channel<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<ChannelParams> {
    check_dim(d)?;
    let draws: Vec<f64> = (0..d * d).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    let p = draws.into_iter().map(|v: f64| v / total).collect();
    ChannelParams::new(d, p)
}

/// Circulant doubly stochastic matrix with entry `(j, i) = λ_{(j−i) mod d}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    lambda: Vec<f64>,
    matrix: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }
}

pub fn transition_matrix(lambda: &[f64]) -> Result<TransitionMatrix> {
    let d = lambda.len();
    check_dim(d)?;
    check_probability_vector(lambda, "lambda")?;
    let matrix = DMatrix::from_fn(d, d, |j, i| lambda[(j + d - i) % d]);
    Ok(TransitionMatrix {
        lambda: lambda.to_vec(),
        matrix,
    })
}

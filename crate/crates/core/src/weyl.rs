//! Discrete Weyl operators on a `d`-dimensional system.
//!
//! `W_{n,m} = Σ_k ω^{kn} |k⟩⟨k+m mod d|` with `ω = exp(2πi/d)`. Operators are
//! addressed either by the pair `(n, m)` or by the flat index `k̄ = n + m·d`,
//! which is also the position of `p_{n,m}` in every parameter vector of this
//! crate.

use std::f64::consts::TAU;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{normal_eigen, C64};

/// Eigenvalues closer than this are considered equal.
pub const EIGEN_CLUSTER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawIndex", into = "RawIndex")]
pub struct WeylIndex {
    n: usize,
    m: usize,
    d: usize,
}

#[derive(Serialize, Deserialize)]
struct RawIndex {
    n: usize,
    m: usize,
    d: usize,
}

impl TryFrom<RawIndex> for WeylIndex {
    type Error = Error;

    fn try_from(raw: RawIndex) -> Result<Self> {
        WeylIndex::new(raw.n, raw.m, raw.d)
    }
}

impl From<WeylIndex> for RawIndex {
    fn from(idx: WeylIndex) -> Self {
        RawIndex {
            n: idx.n,
            m: idx.m,
            d: idx.d,
        }
    }
}

impl WeylIndex {
    pub fn new(n: usize, m: usize, d: usize) -> Result<Self> {
        check_dim(d)?;
        if n >= d {
            return Err(Error::IndexOutOfRange { index: n, bound: d });
        }
        if m >= d {
            return Err(Error::IndexOutOfRange { index: m, bound: d });
        }
        Ok(Self { n, m, d })
    }

    /// Inverse of [`WeylIndex::flat`]: `n = k̄ mod d`, `m = ⌊k̄/d⌋`.
    pub fn from_flat(flat: usize, d: usize) -> Result<Self> {
        check_dim(d)?;
        if flat >= d * d {
            return Err(Error::IndexOutOfRange {
                index: flat,
                bound: d * d,
            });
        }
        Ok(Self {
            n: flat % d,
            m: flat / d,
            d,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn flat(&self) -> usize {
        self.n + self.m * self.d
    }

    pub fn is_identity(&self) -> bool {
        self.n == 0 && self.m == 0
    }

    /// All `d²` indices in ascending flat order.
    pub fn all(d: usize) -> Result<impl Iterator<Item = WeylIndex>> {
        check_dim(d)?;
        Ok((0..d * d).map(move |k| WeylIndex {
            n: k % d,
            m: k / d,
            d,
        }))
    }
}

impl fmt::Display for WeylIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "W({},{}; d={})", self.n, self.m, self.d)
    }
}

pub(crate) fn check_dim(d: usize) -> Result<()> {
    if d < 2 {
        Err(Error::InvalidDimension(d))
    } else {
        Ok(())
    }
}

/// `ω^power` with the exponent reduced mod `d` first.
pub fn omega_pow(power: usize, d: usize) -> C64 {
    let angle = TAU * (power % d) as f64 / d as f64;
    C64::new(angle.cos(), angle.sin())
}

/// A `d×d` unitary matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix(DMatrix<C64>);

impl UnitaryMatrix {
    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Largest elementwise deviation of `U U†` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let prod = &self.0 * self.0.adjoint();
        let dim = self.dim();
        let mut worst = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

pub fn weyl_matrix(idx: WeylIndex) -> UnitaryMatrix {
    let d = idx.d;
    let mut w = DMatrix::<C64>::zeros(d, d);
    for k in 0..d {
        w[(k, (k + idx.m) % d)] = omega_pow(k * idx.n, d);
    }
    UnitaryMatrix(w)
}

/// `(n_a·m_b − m_a·n_b) mod d`.
///
/// The operators commute iff this is zero. With the matrix definition above,
/// `W_a W_b = ω^{-c} W_b W_a` where `c` is the returned value.
pub fn commutation_phase(a: WeylIndex, b: WeylIndex) -> Result<usize> {
    if a.d != b.d {
        return Err(Error::DimensionMismatch {
            expected: a.d,
            actual: b.d,
        });
    }
    let d = a.d;
    Ok((a.n * b.m % d + d - a.m * b.n % d) % d)
}

/// Shift `f(k̄; n, m) = (m·a − n·b) mod d` where `k̄ = a + b·d`.
///
/// `W_{a,b}` maps the eigenvector of `W_{n,m}` labeled `i` onto the one
/// labeled `i + f` (up to phase).
pub fn f_shift(flat: usize, probe: WeylIndex) -> Result<usize> {
    let d = probe.d;
    if flat >= d * d {
        return Err(Error::IndexOutOfRange {
            index: flat,
            bound: d * d,
        });
    }
    let (a, b) = (flat % d, flat / d);
    Ok((probe.m * a % d + d - probe.n * b % d) % d)
}

/// Orthonormal eigenbasis of a non-degenerate Weyl operator.
///
/// Vector `i` has eigenvalue `reference_eigenvalue · ω^i`, where the reference
/// is the eigenvalue with the smallest argument in `[0, 2π)`. Global phases of
/// the vectors are arbitrary.
#[derive(Debug, Clone)]
pub struct LabeledEigenbasis {
    index: WeylIndex,
    vectors: Vec<DVector<C64>>,
    reference_eigenvalue: C64,
}

impl LabeledEigenbasis {
    pub fn index(&self) -> WeylIndex {
        self.index
    }

    pub fn vectors(&self) -> &[DVector<C64>] {
        &self.vectors
    }

    pub fn vector(&self, label: usize) -> &DVector<C64> {
        &self.vectors[label]
    }

    pub fn reference_eigenvalue(&self) -> C64 {
        self.reference_eigenvalue
    }

    pub fn eigenvalue(&self, label: usize) -> C64 {
        self.reference_eigenvalue * omega_pow(label, self.index.d)
    }

    /// `⟨i|ρ|i⟩` for every label.
    pub fn diagonal_of(&self, rho: &DMatrix<C64>) -> Vec<f64> {
        self.vectors
            .iter()
            .map(|v| (v.adjoint() * rho * v)[(0, 0)].re)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub enum Eigensystem {
    NonDegenerate(LabeledEigenbasis),
    Degenerate { distinct: usize },
}

impl Eigensystem {
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Eigensystem::Degenerate { .. })
    }

    pub fn basis(&self) -> Option<&LabeledEigenbasis> {
        match self {
            Eigensystem::NonDegenerate(b) => Some(b),
            Eigensystem::Degenerate { .. } => None,
        }
    }

    pub fn into_basis(self) -> Option<LabeledEigenbasis> {
        match self {
            Eigensystem::NonDegenerate(b) => Some(b),
            Eigensystem::Degenerate { .. } => None,
        }
    }
}

fn arg_unit(z: C64) -> f64 {
    let a = z.arg().rem_euclid(TAU);
    if TAU - a < EIGEN_CLUSTER_TOL {
        0.0
    } else {
        a
    }
}

pub fn eigensystem(idx: WeylIndex) -> Eigensystem {
    let d = idx.d;
    let w = weyl_matrix(idx);
    let (values, vectors) = normal_eigen(w.as_matrix());

    let mut clusters: Vec<C64> = Vec::with_capacity(d);
    for &z in &values {
        if !clusters.iter().any(|c| (c - z).norm() < EIGEN_CLUSTER_TOL) {
            clusters.push(z);
        }
    }
    if clusters.len() != d {
        return Eigensystem::Degenerate {
            distinct: clusters.len(),
        };
    }

    let reference = values
        .iter()
        .copied()
        .min_by(|a, b| arg_unit(*a).total_cmp(&arg_unit(*b)))
        .expect("d >= 2");
    let mut labeled: Vec<Option<DVector<C64>>> = vec![None; d];
    for (j, &z) in values.iter().enumerate() {
        let label = (0..d)
            .min_by(|&a, &b| {
                let da = (reference * omega_pow(a, d) - z).norm();
                let db = (reference * omega_pow(b, d) - z).norm();
                da.total_cmp(&db)
            })
            .expect("d >= 2");
        if labeled[label].is_some() {
            // Distinct eigenvalues that are not an ω-ladder; never happens for Weyl operators.
            return Eigensystem::Degenerate { distinct: d };
        }
        labeled[label] = Some(vectors.column(j).into_owned());
    }
    Eigensystem::NonDegenerate(LabeledEigenbasis {
        index: idx,
        vectors: labeled.into_iter().map(|v| v.expect("all labels filled")).collect(),
        reference_eigenvalue: reference,
    })
}

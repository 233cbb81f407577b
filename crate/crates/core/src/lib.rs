//! Entanglement-free parameter estimation of discrete Weyl channels.
//!
//! A discrete Weyl channel on a `d`-dimensional system mixes conjugations by
//! the `d²` Weyl operators `W_{n,m}` with a probability vector `p`. Preparing
//! an eigenstate of a non-degenerate Weyl operator, sending it through the
//! channel and measuring in the same eigenbasis realizes a classical symmetric
//! channel whose shift probabilities are sums of fibers of `p`. Stacking
//! enough such measurement configurations gives a full-rank linear system
//! that is inverted by least squares.
//!
//! The crate is organized bottom-up:
//!
//! - [`weyl`]: Weyl operator matrices, index arithmetic, labeled eigenbases.
//! - [`rank`]: exact integer rank and a modular row-space tracker.
//! - [`config`]: search for a sufficient set of probes and the estimator matrix.
//! - [`channel`]: channel parameters, channel action, composition, generators.
//! - [`sim`]: seeded multinomial simulation of both protocols.
//! - [`estimate`]: least-squares and frequency estimators, mitigation, correction.
//! - [`metrics`]: variance, MSE, diamond distance and analytic references.
//! - [`harness`]: declarative experiment sweeps, CSV output and reports.

pub mod channel;
pub mod config;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod rank;
pub mod sim;
pub mod weyl;

pub use channel::{ChannelParams, GeneratorMeta, TransitionMatrix};
pub use config::{ConfigCache, DesignBlock, MeasurementConfig};
pub use error::{Error, Result};
pub use estimate::{Estimate, EstimateMeta, EstimatorKind, MitigationRoute};
pub use harness::{ExperimentSpec, ResultRow};
pub use metrics::TrialBatch;
pub use sim::{CountVector, RngStream};
pub use weyl::{Eigensystem, LabeledEigenbasis, UnitaryMatrix, WeylIndex};

//! Probability-weighted averaging optimizers.
//!
//! This crate collects the family of stochastic optimizers that update a
//! Gaussian search distribution by averaging samples with cost-derived
//! probabilities:
//!
//! * the Cross-Entropy Method and CMA-ES as black-box optimizers over real
//!   vectors ([`es`]),
//! * PI², PI²-CMA and PI²-CMAES over Dynamic Movement Primitive policies
//!   ([`pi2`], [`dmp`]),
//! * the planar-arm viapoint benchmark used to compare them ([`arm`]).
//!
//! All numerical code is generic over the scalar type through the [`Real`]
//! trait. The `*64` / `*32` aliases at the crate root fix the scalar for
//! callers that do not care.

// Validation uses `!(x > 0)` and friends on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arm;
pub mod dmp;
mod error;
pub mod es;
mod linalg;
pub mod pi2;
pub mod rng;
mod scalar;
pub mod weighting;

pub use error::{Error, Result};
pub use scalar::{cast, Real};

pub use arm::{ArmModel, ArmPose, ViapointTask};
pub use dmp::{DmpPolicy, Trajectory};
pub use es::{Algorithm, CmaesConfig, CmaesState, IterationRecord, Minimized};
pub use pi2::{CovarianceUpdate, ExplorationMode, Pi2Config, RolloutBatch, UpdateReport};
pub use weighting::{GaussianSampler, GaussianSearchDistribution, ProbabilityWeights};

pub type Distribution64 = GaussianSearchDistribution<f64>;
pub type Distribution32 = GaussianSearchDistribution<f32>;
pub type Weights64 = ProbabilityWeights<f64>;
pub type Weights32 = ProbabilityWeights<f32>;
pub type CmaesState64 = CmaesState<f64>;
pub type CmaesConfig64 = CmaesConfig<f64>;
pub type Dmp64 = DmpPolicy<f64>;
pub type Dmp32 = DmpPolicy<f32>;
pub type Trajectory64 = Trajectory<f64>;
pub type Trajectory32 = Trajectory<f32>;
pub type Pi2Config64 = Pi2Config<f64>;
pub type RolloutBatch64 = RolloutBatch<f64>;
pub type UpdateReport64 = UpdateReport<f64>;
pub type ArmModel64 = ArmModel<f64>;
pub type ViapointTask64 = ViapointTask<f64>;

//! Numeric core for privacy-preserving federated rubric scoring.
//!
//! The pieces, bottom up:
//!
//! - [`params`]: flat parameter vectors and the low-rank A/B adapter.
//! - [`model`]: frozen-linear-plus-adapter multi-label scorer with analytic
//!   gradients.
//! - [`trainer`]: local mini-batch SGD with validation and early stopping.
//! - [`metrics`]: exact-match / macro-PRF / rubric-cell / score-MAE metrics.
//! - [`aggregator`]: adaptive performance- and size-weighted aggregation,
//!   the averaging baselines, and the momentum global update.
//! - [`privacy`]: L2 clipping, calibrated Gaussian noise, budget ledger.
//! - [`datapipe`]: schema validation, filtering, normalization, synthetic
//!   heterogeneous data, and the on-disk record format.
//!
//! All math is generic over [`Scalar`] (f32 or f64); the `*64` aliases below
//! are the concrete types the engine, protocol, and CLI work with.

pub mod aggregator;
pub mod datapipe;
pub mod error;
pub mod metrics;
pub mod model;
pub mod params;
pub mod privacy;
pub mod scalar;
pub mod trainer;

pub use aggregator::ClientId;
pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default-precision instantiations used across the workspace.
pub type ParameterVector64 = params::ParameterVector<f64>;
pub type LowRankAdapter64 = params::LowRankAdapter<f64>;
pub type Scorer64 = model::Scorer<f64>;
pub type TrainReport64 = trainer::TrainReport<f64>;
pub type ClientUpdate64 = aggregator::ClientUpdate<f64>;
pub type AggregationWeights64 = aggregator::AggregationWeights<f64>;
pub type StudentRecord64 = datapipe::StudentRecord<f64>;
pub type NormalizationParams64 = datapipe::NormalizationParams<f64>;
pub type SyntheticWorld64 = datapipe::SyntheticWorld<f64>;

//! Multiple-instance learning with Shapley-guided progressive pseudo-bag
//! augmentation.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what training and Shapley scoring use by
//! default.

pub mod dataio;
pub mod error;
pub mod metrics;
pub mod milnet;
pub mod pseudobag;
pub mod rng;
pub mod scalar;
pub mod shapley;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = milnet::Matrix<f64>;
pub type FeatureMatrix = milnet::FeatureMatrix<f64>;
pub type ModelParams = milnet::ModelParams<f64>;
pub type ForwardTrace = milnet::ForwardTrace<f64>;
pub type OptimizerState = milnet::OptimizerState<f64>;
pub type IisVector = shapley::IisVector<f64>;
pub type BagRecord = dataio::BagRecord<f64>;
pub type Dataset = dataio::Dataset<f64>;
pub type ScheduleState = pseudobag::ScheduleState<f64>;
pub type TrainOutcome = pseudobag::TrainOutcome<f64>;

pub type ModelParams32 = milnet::ModelParams<f32>;
pub type FeatureMatrix32 = milnet::FeatureMatrix<f32>;

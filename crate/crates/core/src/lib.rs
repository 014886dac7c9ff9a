//! Label-flip retraining for binary classifiers, with the class-weight and
//! threshold-shift baselines it is compared against, exact metrics, and an
//! experiment sweep harness.

pub mod bias;
pub mod config;
pub mod data;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod rng;

pub use bias::{BiasPlan, Direction, FlipRecord, SelectionPolicy};
pub use dataset::{Dataset, Example, ScoreVector, SplitSpec};
pub use error::{Error, Result};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use models::{ClassWeights, Classifier, ClassifierSpec, ModelKind, TrainConfig};
pub use rng::RngSeed;

//! Online network intrusion detection with a contrastive autoencoder.
//!
//! The pipeline: [`dataset`] turns raw flow records into fixed-width vectors,
//! [`model`] and [`loss`] train the autoencoder, [`decision`] turns
//! representations into labels, and [`online`] drives the pseudo-labelling
//! loop. [`eval`] computes metrics and renders reports.

pub mod dataset;
pub mod decision;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod online;
pub mod pipeline;
pub mod profiles;

pub use dataset::{
    Dataset, DatasetDescriptor, FeatureSchema, Label, LabeledExample, Provenance, StreamPlan,
    TrainingSet,
};
pub use decision::{DecisionMode, DecisionState, GaussianPair, HeadDecision, Verdict};
pub use error::{Error, Result};
pub use eval::{Metrics, ReportFormat, ReportRow};
pub use linalg::Matrix;
pub use loss::{LossConfig, LossVariant};
pub use model::{Activation, HeadMode, LayerSpec, ModelParams, TrainConfig};
pub use online::{Checkpoint, OnlineConfig, OnlineState, RunMode, RunReport};
pub use pipeline::{prepare, Prepared};
pub use profiles::Profile;

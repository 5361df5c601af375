//! Federated training under attack at desk scale.
//!
//! [`datadist`] splits a [`LabeledDataset`] across honest clients,
//! [`models`] provides the differentiable models and the optimizer, and
//! [`simulator`] runs DSGD or FedAvg with a robust aggregation pipeline
//! on the server and an attack on the Byzantine side.

pub mod data;
pub mod datadist;
pub mod error;
pub mod idx;
pub mod models;
pub mod seed;
pub mod simulator;

pub use data::{make_blobs, make_blobs_split, LabeledDataset};
pub use datadist::{ClientPartition, Distribution, DistributionKind};
pub use error::{Error, Result};
pub use idx::load_idx;
pub use models::{Arch, Batch, LrSchedule, ModelParams, OptimizerState};
pub use simulator::{evaluate, Algorithm, MetricRow, Simulation, TrainingSetup};

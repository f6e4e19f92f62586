//! Deep image clustering driven by a density-based curriculum and
//! density-core cluster assignment.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: embedding matrices, distances, rank selection, the seeded RNG.
//! - [`density`]: cutoff selection, Gaussian-kernel local density, difficulty scores.
//! - [`curriculum`]: exponential pacing schedule and per-cluster easy-sample selection.
//! - [`assignment`]: density cores, Student-t soft assignment `Q`, sharpened target `P`.
//! - [`objective`]: reconstruction/KL losses and the analytic clustering gradient.
//! - [`autoencoder`]: dense encoder/decoder with manual backprop, Adam, checkpoints.
//! - [`kmeans`]: k-means++ seeding and Lloyd iterations.
//! - [`metrics`]: Hungarian matching, clustering accuracy, NMI.
//! - [`data`]: optdigits/IDX/CSV loaders, synthetic blobs, augmentation, run export.
//! - [`pipeline`]: the full training driver and run configuration.

pub mod assignment;
pub mod autoencoder;
pub mod curriculum;
pub mod data;
pub mod density;
mod error;
pub mod kmeans;
pub mod metrics;
pub mod numerics;
pub mod objective;
pub mod pipeline;

pub use assignment::{AssignmentPair, ClusterState, CoreSet};
pub use autoencoder::{NetworkParams, OptimizerState};
pub use curriculum::{Curriculum, PaceSchedule};
pub use data::{Dataset, ImageShape};
pub use density::DensityProfile;
pub use error::{Error, Result};
pub use kmeans::KMeansResult;
pub use metrics::EvalReport;
pub use numerics::{EmbeddedMatrix, RngStream};
pub use objective::LossBreakdown;
pub use pipeline::{EpochRecord, RunConfig, TrainOutcome};

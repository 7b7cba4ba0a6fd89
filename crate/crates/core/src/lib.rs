//! Block-wise partitioning for fast extreme multi-label prediction.
//!
//! Training instances and labels are co-clustered so that each instance
//! cluster is paired with a small label cluster. A router sends a test point
//! to one cluster and only that cluster's label classifiers are evaluated.

pub mod bp;
pub mod cli;
pub mod codec;
pub mod dataset;
pub mod error;
pub mod export;
pub mod ingest;
pub mod kmeans;
pub mod linear;
pub mod metrics;
pub mod partition;
pub mod pipeline;
pub mod sparse;
pub mod synth;
pub mod tuning;

pub use bp::{fit_partition, objective, search_q, BpConfig, ObjectiveValue, QSetting};
pub use codec::Encode;
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use linear::{LinearModel, TrainConfig};
pub use partition::Partition;
pub use pipeline::{predict_bp, predict_naive, train_bp, train_naive, BpModel, PredictionResult};
pub use sparse::{BinaryLabelMatrix, SparseMatrix};

//! MicroMIL: weakly-supervised multiple-instance learning over bags of
//! microscopy-image feature vectors.
//!
//! A bag (one patient) is a variable-size set of instance feature vectors
//! with a single binary label. The pipeline clusters instances around
//! learnable centroids, picks one representative instance per cluster with
//! a hard Gumbel-Softmax (straight-through gradients), links the
//! representatives into a cosine-similarity graph, and classifies the bag
//! with a small graph network trained end-to-end on binary cross-entropy.
//!
//! The crate also ships the surrounding tooling: a binary bag format,
//! a synthetic generator with controllable redundancy, evaluation metrics,
//! redundancy analysis, and ablation switches for the selection and edge
//! construction stages.

pub mod bag_io;
pub mod dce;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod real;
pub mod rie;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use bag_io::{FeatureBag, Manifest, ManifestEntry};
pub use graph::EdgeMethod;
pub use metrics::EvalReport;
pub use model::{ClusterMode, Model, ModelParams};
pub use real::Real;
pub use rie::RieSelect;
pub use synth::SynthConfig;
pub use tensor::{Tape, Tensor, TensorId};
pub use train::TrainConfig;

/// Library-level error type for data and I/O failures. Programming
/// contract violations (shape mismatches, invalid temperatures) panic
/// instead.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    BadBagFile { path: String, reason: String },
    #[error("{path}:{line}: {reason}")]
    BadManifest {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: {reason}")]
    BadModelFile { path: String, reason: String },
    #[error("{0}")]
    InvalidConfig(String),
    #[error("{0}")]
    InvalidData(String),
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

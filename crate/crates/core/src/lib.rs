//! Joint prediction of multiple target brain-graph views from a single
//! source view: graph populations, multi-kernel similarity learning,
//! cluster-specific GCN generators with a topology-aware adversarial loss,
//! and the metrics to judge the predictions.

pub mod centrality;
pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod gcn;
pub mod linalg;
pub mod population;
pub mod similarity;
pub mod tensor;
pub mod training;

pub use centrality::Metric;
pub use error::{Error, Result};
pub use eval::EvaluationReport;
pub use population::{BrainGraph, DomainId, MultiDomainPopulation};
pub use similarity::SimilarityMatrix;
pub use tensor::{AdamState, NodeId, ParamId, ParamStore, Tape, Tensor};
pub use training::{LossWeights, TrainingConfig, TrainingState};

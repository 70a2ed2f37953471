//! Evaluation harness: synthetic threads with gold reply structure, agreement
//! metrics, and embedding inspection (clustering and 3D projection).

mod cluster;
mod metrics;
mod project;
mod synth;

pub use cluster::agglomerative;
pub use metrics::{edge_prf, evaluate, partition_ari, EvalReport};
pub use project::{project_3d, Projection};
pub use synth::{generate, topic_pools, GoldStandard, SynthConfig};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("post universes differ: {left} vs {right}")]
    UniverseMismatch { left: usize, right: usize },
    #[error("unknown post id {0:?}")]
    UnknownId(String),
    #[error("need at least {need} points, got {n}")]
    TooFewPoints { n: usize, need: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

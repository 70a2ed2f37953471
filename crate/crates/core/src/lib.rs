//! Reply-structure reconstruction for flat chat threads.
//!
//! The pipeline embeds each post with a context-trained LSTM encoder,
//! segments the thread with a fitted Hawkes process, keeps above-average
//! similarities inside each segment, orients them forward in time, and
//! thins the result to a forest whose trees are conversations.

pub mod corpus;
pub mod embedder;
pub mod graph;
pub mod harness;
pub mod ingest;
pub mod pipeline;
pub mod temporal;

pub use corpus::{Paradigm, TokenSeq, Vocab};
pub use embedder::{Embeddings, EncoderConfig, EncoderParams};
pub use graph::{Conversation, Edge, ReplyGraph, SimilarityMatrix};
pub use ingest::{Post, Thread};
pub use pipeline::{DisentangleSettings, Disentanglement, HawkesSource, TrainSettings, TrainedModel};
pub use temporal::{HawkesModel, Range};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Embed(#[from] embedder::EmbedError),
    #[error(transparent)]
    Temporal(#[from] temporal::TemporalError),
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
}

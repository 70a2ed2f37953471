//! Post encoder: a recurrent network mapping each post to a vector `l_i`
//! trained so that it lines up with the mean encoding `W_i` of its context
//! window and away from randomly drawn posts.

mod checkpoint;
mod loss;
mod lstm;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{cosine_with_grad, similarity, training_loss, training_loss_with_grad, LossGrad};
pub use lstm::{EncoderConfig, EncoderParams, ForwardCache};
pub use train::{sample_loss_and_grad, train, TrainOutput, TrainingSet};

use rayon::prelude::*;

use crate::corpus::{encode_text, TokenSeq, Vocab};
use crate::ingest::Thread;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("cannot encode an empty token sequence")]
    EmptySequence,
    #[error("token index {token} outside vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: u32, vocab_size: usize },
    #[error("context has no non-empty member posts")]
    EmptyContext,
    #[error("similarity of a zero vector is undefined")]
    ZeroVector,
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("no training windows")]
    NoWindows,
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// The vector `l_i` for one post.
#[derive(Debug, Clone, PartialEq)]
pub struct PostEmbedding(pub Vec<f64>);

/// The vector `W_i` for one context window.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextEmbedding(pub Vec<f64>);

pub fn encode_post(params: &EncoderParams, seq: &TokenSeq) -> Result<PostEmbedding, EmbedError> {
    params.encode(seq).map(PostEmbedding)
}

/// Mean of the member encodings. Empty members are skipped.
pub fn encode_context(params: &EncoderParams, member_seqs: &[TokenSeq]) -> Result<ContextEmbedding, EmbedError> {
    let encoded = member_seqs
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| params.encode(s))
        .collect::<Result<Vec<_>, _>>()?;
    mean_vector(params.embed_dim, &encoded)
        .map(ContextEmbedding)
        .ok_or(EmbedError::EmptyContext)
}

pub(crate) fn mean_vector(dim: usize, vectors: &[Vec<f64>]) -> Option<Vec<f64>> {
    if vectors.is_empty() {
        return None;
    }
    let mut sum = vec![0.0; dim];
    for v in vectors {
        lstm::axpy(&mut sum, 1.0, v);
    }
    let inv = 1.0 / vectors.len() as f64;
    sum.iter_mut().for_each(|v| *v *= inv);
    Some(sum)
}

/// Dense `n x dim` post-embedding matrix. Rows of posts with no encodable
/// tokens are zero and flagged in `empty`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub dim: usize,
    pub data: Vec<f64>,
    pub empty: Vec<bool>,
}

impl Embeddings {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let empty = rows.iter().map(|r| r.iter().all(|&v| v == 0.0)).collect();
        Self { dim, data, empty }
    }

    pub fn len(&self) -> usize {
        self.empty.len()
    }

    pub fn is_empty(&self) -> bool {
        self.empty.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(move |i| self.row(i))
    }
}

/// Encode every post of a thread. Posts are independent, so rows are
/// computed in parallel on the current rayon pool.
pub fn embed_thread(params: &EncoderParams, thread: &Thread, vocab: &Vocab, max_len: usize) -> Embeddings {
    let dim = params.embed_dim;
    let rows: Vec<Option<Vec<f64>>> = thread
        .posts
        .par_iter()
        .map(|post| {
            let seq = encode_text(vocab, &post.text, max_len);
            if seq.is_empty() {
                None
            } else {
                params.encode(&seq).ok()
            }
        })
        .collect();
    let mut data = Vec::with_capacity(rows.len() * dim);
    let mut empty = Vec::with_capacity(rows.len());
    for row in rows {
        match row {
            Some(v) => {
                data.extend_from_slice(&v);
                empty.push(false);
            }
            None => {
                data.extend(std::iter::repeat_n(0.0, dim));
                empty.push(true);
            }
        }
    }
    Embeddings { dim, data, empty }
}

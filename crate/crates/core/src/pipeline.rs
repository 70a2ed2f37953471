//! End-to-end training and disentanglement.

use crate::corpus::{build_vocab, thread_windows, Paradigm, Vocab};
use crate::embedder::{embed_thread, train, Embeddings, EncoderConfig, EncoderParams, TrainingSet};
use crate::graph::{extract_conversations, orient, prune_average, similarity_matrix, thin, Conversation, ReplyGraph};
use crate::ingest::Thread;
use crate::temporal::{detect_ranges, fit_thread, FitOptions, HawkesModel, Range, RangeOptions};
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub min_count: usize,
    pub paradigm: Paradigm,
    pub k: usize,
    /// `vocab_size` is overwritten with the size of the built vocabulary.
    pub encoder: EncoderConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            min_count: 2,
            paradigm: Paradigm::Symmetric,
            k: 4,
            encoder: EncoderConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub vocab: Vocab,
    pub config: EncoderConfig,
    pub params: EncoderParams,
    pub loss_curve: Vec<f64>,
}

pub fn train_model(threads: &[Thread], settings: &TrainSettings) -> Result<TrainedModel, Error> {
    let vocab = build_vocab(threads, settings.min_count);
    let windows: Vec<_> = threads
        .iter()
        .map(|t| thread_windows(t, settings.paradigm, settings.k))
        .collect();
    let config = EncoderConfig {
        vocab_size: vocab.len(),
        ..settings.encoder.clone()
    };
    let set = TrainingSet::new(threads, &vocab, &windows, config.max_len);
    let out = train(&set, &config)?;
    Ok(TrainedModel {
        vocab,
        config,
        params: out.params,
        loss_curve: out.loss_curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HawkesSource {
    Fixed(HawkesModel),
    Fit(FitOptions),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisentangleSettings {
    pub hawkes: HawkesSource,
    pub ranges: RangeOptions,
}

impl Default for DisentangleSettings {
    fn default() -> Self {
        Self {
            hawkes: HawkesSource::Fit(FitOptions::default()),
            ranges: RangeOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Disentanglement {
    pub embeddings: Embeddings,
    /// `None` when the thread has no time extent to fit.
    pub model: Option<HawkesModel>,
    pub ranges: Vec<Range>,
    /// Oriented graph before thinning.
    pub oriented: ReplyGraph,
    pub forest: ReplyGraph,
    pub conversations: Vec<Conversation>,
}

pub fn disentangle(
    thread: &Thread,
    params: &EncoderParams,
    vocab: &Vocab,
    max_len: usize,
    settings: &DisentangleSettings,
) -> Result<Disentanglement, Error> {
    let n = thread.len();
    let embeddings = embed_thread(params, thread, vocab, max_len);
    let ts = thread.timestamps();
    let flat = ts.first() == ts.last();
    let model = match settings.hawkes {
        _ if flat => None,
        HawkesSource::Fixed(m) => Some(m),
        HawkesSource::Fit(options) => Some(fit_thread(thread, options)?),
    };
    let ranges = match &model {
        Some(m) => detect_ranges(thread, m, settings.ranges)?,
        None if n == 0 => Vec::new(),
        None => vec![Range::new(0, n)],
    };
    let pruned = prune_average(similarity_matrix(&embeddings), &ranges)?;
    let oriented = orient(&pruned, thread)?;
    let forest = thin(&oriented);
    let conversations = extract_conversations(&forest)?;
    Ok(Disentanglement {
        embeddings,
        model,
        ranges,
        oriented,
        forest,
        conversations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Post;

    fn settings(epochs: usize) -> TrainSettings {
        TrainSettings {
            min_count: 1,
            paradigm: Paradigm::Symmetric,
            k: 2,
            encoder: EncoderConfig {
                embed_dim: 8,
                hidden_dim: 8,
                epochs,
                ..EncoderConfig::default()
            },
        }
    }

    fn post(i: usize, t: f64, text: &str) -> Post {
        Post {
            id: format!("p{i}"),
            timestamp: t,
            text: text.into(),
            author: None,
        }
    }

    #[test]
    fn single_post_thread() {
        let thread = Thread::new("one", vec![post(0, 5.0, "hello there")]);
        let corpus = Thread::new("c", vec![post(0, 0.0, "hello there"), post(1, 1.0, "general kenobi")]);
        let model = train_model(&[corpus], &settings(1)).unwrap();
        let out = disentangle(
            &thread,
            &model.params,
            &model.vocab,
            64,
            &DisentangleSettings::default(),
        )
        .unwrap();
        assert_eq!(out.conversations.len(), 1);
        assert_eq!(out.forest.edge_count(), 0);
        assert!(out.model.is_none());
    }

    #[test]
    fn empty_thread() {
        let corpus = Thread::new("c", vec![post(0, 0.0, "a b"), post(1, 1.0, "c d")]);
        let model = train_model(&[corpus], &settings(1)).unwrap();
        let out = disentangle(
            &Thread::new("e", vec![]),
            &model.params,
            &model.vocab,
            64,
            &DisentangleSettings::default(),
        )
        .unwrap();
        assert!(out.conversations.is_empty());
    }

    #[test]
    fn forest_respects_time() {
        let posts: Vec<Post> = (0..12)
            .map(|i| {
                post(
                    i,
                    (i / 2) as f64 * 3.0,
                    if i % 2 == 0 { "red apple pie" } else { "blue ocean wave" },
                )
            })
            .collect();
        let thread = Thread::new("t", posts);
        let model = train_model(std::slice::from_ref(&thread), &settings(3)).unwrap();
        let out = disentangle(
            &thread,
            &model.params,
            &model.vocab,
            64,
            &DisentangleSettings::default(),
        )
        .unwrap();
        assert!(out.forest.in_degrees().iter().all(|&d| d <= 1));
        for e in out.forest.edges() {
            assert!(thread.posts[e.parent].timestamp <= thread.posts[e.child].timestamp);
        }
        let total: usize = out.conversations.iter().map(|c| c.members.len()).sum();
        assert_eq!(total, 12);
    }
}

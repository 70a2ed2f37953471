//! Synthetic interleaved conversations with known reply structure.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{Post, Thread};
use crate::temporal::{simulate, HawkesModel};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_conversations: usize,
    /// Inclusive bounds on posts per conversation.
    pub posts_per_conversation: (usize, usize),
    /// Inclusive bounds on words per post.
    pub words_per_post: (usize, usize),
    /// Pairwise disjoint token pools; conversation `c` draws from pool
    /// `c % topics.len()`.
    pub topics: Vec<Vec<String>>,
    /// Arrival process per conversation, cycled when shorter.
    pub hawkes: Vec<HawkesModel>,
    /// Seconds between consecutive conversation start times.
    pub start_spacing: f64,
    /// Reply-selection sharpness: parent `j` of post `k` drawn with weight
    /// `exp(-(t_k - t_j) * temperature)`.
    pub temperature: f64,
}

/// `n_topics` disjoint pools of `size` synthetic words each.
pub fn topic_pools(n_topics: usize, size: usize) -> Vec<Vec<String>> {
    const SYLLABLES: [&str; 16] = [
        "ka", "lo", "mi", "nu", "pe", "ro", "sa", "ti", "vu", "xe", "yo", "za", "bri", "dso", "fle", "gku",
    ];
    (0..n_topics)
        .map(|t| {
            (0..size)
                .map(|w| {
                    let a = SYLLABLES[w % 16];
                    let b = SYLLABLES[(w / 16 + t * 5) % 16];
                    format!("{a}{b}{t}x{w}")
                })
                .collect()
        })
        .collect()
}

impl SynthConfig {
    /// Three well-separated conversations of 60 posts with disjoint
    /// 50-word vocabularies.
    pub fn easy() -> Self {
        Self {
            n_conversations: 3,
            posts_per_conversation: (60, 60),
            words_per_post: (4, 8),
            topics: topic_pools(3, 50),
            hawkes: vec![HawkesModel {
                mu: 0.5,
                alpha: 0.3,
                beta: 1.0,
            }],
            start_spacing: 600.0,
            temperature: 2.0,
        }
    }

    /// Two back-to-back ten-post conversations on disjoint vocabularies.
    pub fn toy() -> Self {
        Self {
            n_conversations: 2,
            posts_per_conversation: (10, 10),
            words_per_post: (3, 6),
            topics: topic_pools(2, 8),
            hawkes: vec![HawkesModel {
                mu: 0.2,
                alpha: 0.2,
                beta: 1.0,
            }],
            start_spacing: 300.0,
            temperature: 1.0,
        }
    }

    /// `conversations` overlapping conversations of exactly `posts` posts
    /// each, for scale runs.
    pub fn large(conversations: usize, posts: usize) -> Self {
        Self {
            n_conversations: conversations,
            posts_per_conversation: (posts.max(1), posts.max(1)),
            words_per_post: (3, 12),
            topics: topic_pools(conversations, 60),
            hawkes: vec![HawkesModel {
                mu: 0.05,
                alpha: 0.4,
                beta: 0.5,
            }],
            start_spacing: 400.0,
            temperature: 0.05,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        let (pmin, pmax) = self.posts_per_conversation;
        let (wmin, wmax) = self.words_per_post;
        if self.n_conversations == 0 || pmin == 0 || pmin > pmax || wmin == 0 || wmin > wmax {
            return bad("counts must be >= 1 with min <= max");
        }
        if self.topics.is_empty() || self.topics.iter().any(Vec::is_empty) {
            return bad("every topic pool must be non-empty");
        }
        let mut seen = std::collections::HashSet::new();
        for pool in &self.topics {
            for w in pool {
                if !seen.insert(w.as_str()) {
                    return bad("topic pools must be pairwise disjoint");
                }
            }
        }
        if self.hawkes.is_empty() || self.hawkes.iter().any(|h| h.validate().is_err() || h.mu <= 0.0) {
            return bad("every Hawkes model needs mu > 0, alpha >= 0, beta > 0");
        }
        if !(self.start_spacing >= 0.0 && self.temperature >= 0.0) {
            return bad("start_spacing and temperature must be >= 0");
        }
        Ok(())
    }
}

/// Gold reply structure keyed by post id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GoldStandard {
    /// Child id -> parent id; roots are absent.
    pub parents: BTreeMap<String, String>,
    /// Post id -> conversation id.
    pub labels: BTreeMap<String, usize>,
}

impl GoldStandard {
    /// Parent index per canonical post of `thread`.
    pub fn parent_indices(&self, thread: &Thread) -> Result<Vec<Option<usize>>, HarnessError> {
        let index = id_index(thread);
        let mut out = vec![None; thread.len()];
        for (child, parent) in &self.parents {
            let c = *index
                .get(child.as_str())
                .ok_or_else(|| HarnessError::UnknownId(child.clone()))?;
            let p = *index
                .get(parent.as_str())
                .ok_or_else(|| HarnessError::UnknownId(parent.clone()))?;
            out[c] = Some(p);
        }
        Ok(out)
    }

    /// Conversation label per canonical post of `thread`.
    pub fn label_indices(&self, thread: &Thread) -> Result<Vec<usize>, HarnessError> {
        if self.labels.len() != thread.len() {
            return Err(HarnessError::UniverseMismatch {
                left: self.labels.len(),
                right: thread.len(),
            });
        }
        thread
            .posts
            .iter()
            .map(|p| {
                self.labels
                    .get(&p.id)
                    .copied()
                    .ok_or_else(|| HarnessError::UnknownId(p.id.clone()))
            })
            .collect()
    }
}

fn id_index(thread: &Thread) -> std::collections::HashMap<&str, usize> {
    thread
        .posts
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id.as_str(), i))
        .collect()
}

struct RawPost {
    time: f64,
    conversation: usize,
    ordinal: usize,
    text: String,
    parent_ordinal: Option<usize>,
}

pub fn generate(config: &SynthConfig, seed: u64) -> Result<(Thread, GoldStandard), HarnessError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = Vec::new();
    for c in 0..config.n_conversations {
        let count = rng.gen_range(config.posts_per_conversation.0..=config.posts_per_conversation.1);
        let model = config.hawkes[c % config.hawkes.len()];
        let pool = &config.topics[c % config.topics.len()];
        let start = c as f64 * config.start_spacing;
        let times = simulate(&model, start, f64::INFINITY, Some(count), &mut rng);
        for (k, &t) in times.iter().enumerate() {
            let words = rng.gen_range(config.words_per_post.0..=config.words_per_post.1);
            let text = (0..words)
                .map(|_| pool[rng.gen_range(0..pool.len())].as_str())
                .collect::<Vec<_>>()
                .join(" ");
            let parent_ordinal = (k > 0).then(|| {
                // Weights relative to the most recent post avoid underflow.
                let weights: Vec<f64> = (0..k)
                    .map(|j| (-(times[k - 1] - times[j]) * config.temperature).exp())
                    .collect();
                let total: f64 = weights.iter().sum();
                let mut u = rng.gen::<f64>() * total;
                let mut pick = k - 1;
                for (j, w) in weights.iter().enumerate() {
                    if u < *w {
                        pick = j;
                        break;
                    }
                    u -= w;
                }
                pick
            });
            raw.push(RawPost {
                time: t,
                conversation: c,
                ordinal: k,
                text,
                parent_ordinal,
            });
        }
    }
    raw.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then(a.conversation.cmp(&b.conversation))
            .then(a.ordinal.cmp(&b.ordinal))
    });
    let ids: BTreeMap<(usize, usize), String> = raw
        .iter()
        .enumerate()
        .map(|(i, r)| ((r.conversation, r.ordinal), format!("m{i:05}")))
        .collect();
    let mut gold = GoldStandard::default();
    let mut posts = Vec::with_capacity(raw.len());
    for r in raw {
        let id = ids[&(r.conversation, r.ordinal)].clone();
        if let Some(p) = r.parent_ordinal {
            gold.parents.insert(id.clone(), ids[&(r.conversation, p)].clone());
        }
        gold.labels.insert(id.clone(), r.conversation);
        posts.push(Post {
            id,
            timestamp: r.time,
            text: r.text,
            author: None,
        });
    }
    Ok((Thread::new(format!("synth-{seed}"), posts), gold))
}

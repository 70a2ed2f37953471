//! Minibatch gradient descent over context-window samples.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{encode_text, ContextWindow, TokenSeq, Vocab};
use crate::ingest::Thread;

use super::loss::training_loss_with_grad;
use super::lstm::{EncoderConfig, EncoderParams, ForwardCache};
use super::{mean_vector, EmbedError};

/// Rejection-sampling attempts before falling back to an explicit candidate list.
const NEGATIVE_ATTEMPTS: usize = 64;

/// Upper bound on the averaged batch gradient norm. Cosine gradients scale
/// with the inverse output norm, which is tiny at initialization.
const CLIP_NORM: f64 = 1.0;

#[derive(Debug, Clone)]
struct Sample {
    center: usize,
    members: Vec<usize>,
    negatives: Vec<usize>,
}

/// Encoded posts of one or more threads plus their training windows, with
/// post indices flattened across threads.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    seqs: Vec<TokenSeq>,
    /// `(start, end)` of the thread that owns each post.
    owner: Vec<(usize, usize)>,
    windows: Vec<(usize, Vec<usize>)>,
}

impl TrainingSet {
    /// `windows[t]` are the windows of `threads[t]`. Empty posts are dropped
    /// from contexts; windows left with an empty center or no members are skipped.
    pub fn new(threads: &[Thread], vocab: &Vocab, windows: &[Vec<ContextWindow>], max_len: usize) -> Self {
        let mut seqs = Vec::new();
        let mut owner = Vec::new();
        let mut flat = Vec::new();
        for (t, thread) in threads.iter().enumerate() {
            let start = seqs.len();
            let end = start + thread.len();
            for post in &thread.posts {
                seqs.push(encode_text(vocab, &post.text, max_len));
                owner.push((start, end));
            }
            for w in windows.get(t).into_iter().flatten() {
                if w.center >= thread.len() || seqs[start + w.center].is_empty() {
                    continue;
                }
                let members: Vec<usize> = w
                    .members
                    .iter()
                    .filter(|&&m| m < thread.len() && !seqs[start + m].is_empty())
                    .map(|&m| start + m)
                    .collect();
                if !members.is_empty() {
                    flat.push((start + w.center, members));
                }
            }
        }
        Self {
            seqs,
            owner,
            windows: flat,
        }
    }

    pub fn window_count(&self) -> usize {
        self.windows.len()
    }

    pub fn post_count(&self) -> usize {
        self.seqs.len()
    }

    fn draw_negatives<R: Rng>(&self, rng: &mut R, center: usize, members: &[usize], count: usize) -> Vec<usize> {
        let (start, end) = self.owner[center];
        let eligible = |j: usize| j != center && !members.contains(&j) && !self.seqs[j].is_empty();
        let mut out = Vec::with_capacity(count);
        let mut fallback: Option<Vec<usize>> = None;
        while out.len() < count {
            let mut pick = None;
            for _ in 0..NEGATIVE_ATTEMPTS {
                let j = rng.gen_range(start..end);
                if eligible(j) {
                    pick = Some(j);
                    break;
                }
            }
            if pick.is_none() {
                let pool = fallback.get_or_insert_with(|| (start..end).filter(|&j| eligible(j)).collect());
                if pool.is_empty() {
                    break;
                }
                pick = Some(pool[rng.gen_range(0..pool.len())]);
            }
            out.extend(pick);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: EncoderParams,
    /// Mean sample loss per epoch, measured before each batch's update.
    pub loss_curve: Vec<f64>,
}

/// Loss and full parameter gradient for a single (post, context, negatives)
/// sample, with the context embedding taken as the mean of member encodings
/// and each negative as a single post encoding.
pub fn sample_loss_and_grad(
    params: &EncoderParams,
    post: &TokenSeq,
    members: &[TokenSeq],
    negatives: &[TokenSeq],
) -> Result<(f64, EncoderParams), EmbedError> {
    let center = params.forward(post)?;
    let member_caches = members
        .iter()
        .map(|s| params.forward(s))
        .collect::<Result<Vec<_>, _>>()?;
    let neg_caches = negatives
        .iter()
        .map(|s| params.forward(s))
        .collect::<Result<Vec<_>, _>>()?;
    let outputs: Vec<Vec<f64>> = member_caches.iter().map(|c| c.output.clone()).collect();
    let positive = mean_vector(params.embed_dim, &outputs).ok_or(EmbedError::EmptyContext)?;
    let neg_refs: Vec<&[f64]> = neg_caches.iter().map(|c| c.output.as_slice()).collect();
    let g = training_loss_with_grad(&center.output, &positive, &neg_refs)?;
    let mut grads = params.zero_like();
    params.backward(&center, &g.d_post, &mut grads);
    let share = 1.0 / member_caches.len() as f64;
    let d_member: Vec<f64> = g.d_positive.iter().map(|v| v * share).collect();
    for cache in &member_caches {
        params.backward(cache, &d_member, &mut grads);
    }
    for (cache, d) in neg_caches.iter().zip(&g.d_negatives) {
        params.backward(cache, d, &mut grads);
    }
    Ok((g.loss, grads))
}

/// Train the encoder. Negatives are drawn once per window up front, so a
/// zero learning rate yields a flat loss curve. Deterministic in `config.seed`.
pub fn train(set: &TrainingSet, config: &EncoderConfig) -> Result<TrainOutput, EmbedError> {
    config.validate()?;
    if set.windows.is_empty() {
        return Err(EmbedError::NoWindows);
    }
    let mut params = EncoderParams::init(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let samples: Vec<Sample> = set
        .windows
        .iter()
        .map(|(center, members)| Sample {
            center: *center,
            members: members.clone(),
            negatives: set.draw_negatives(&mut rng, *center, members, config.negatives_per_sample),
        })
        .collect();

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut sample_loss = vec![f64::NAN; samples.len()];
    for _epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let grads = batch_step(&params, set, &samples, batch, &mut sample_loss);
            if config.learning_rate > 0.0 {
                if let Some((grads, used)) = grads {
                    let norm = grads.squared_norm().sqrt() / used as f64;
                    let clip = if norm > CLIP_NORM { CLIP_NORM / norm } else { 1.0 };
                    params.add_scaled(&grads, -config.learning_rate * clip / used as f64);
                }
            }
        }
        let (sum, count) = sample_loss
            .iter()
            .filter(|l| l.is_finite())
            .fold((0.0, 0usize), |(s, c), l| (s + l, c + 1));
        loss_curve.push(if count == 0 { f64::NAN } else { sum / count as f64 });
    }
    Ok(TrainOutput { params, loss_curve })
}

/// One minibatch: every distinct post is encoded and backpropagated once,
/// with output gradients summed over every sample that references it.
fn batch_step(
    params: &EncoderParams,
    set: &TrainingSet,
    samples: &[Sample],
    batch: &[usize],
    sample_loss: &mut [f64],
) -> Option<(EncoderParams, usize)> {
    let mut caches: BTreeMap<usize, ForwardCache> = BTreeMap::new();
    for &s in batch {
        let sample = &samples[s];
        for &p in std::iter::once(&sample.center)
            .chain(&sample.members)
            .chain(&sample.negatives)
        {
            if let std::collections::btree_map::Entry::Vacant(slot) = caches.entry(p) {
                // Empty sequences never reach a sample.
                slot.insert(params.forward(&set.seqs[p]).expect("non-empty sequence"));
            }
        }
    }
    let mut d_out: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut used = 0usize;
    for &s in batch {
        let sample = &samples[s];
        let outputs: Vec<Vec<f64>> = sample.members.iter().map(|m| caches[m].output.clone()).collect();
        let positive = mean_vector(params.embed_dim, &outputs).expect("non-empty members");
        let neg_refs: Vec<&[f64]> = sample.negatives.iter().map(|n| caches[n].output.as_slice()).collect();
        let Ok(g) = training_loss_with_grad(&caches[&sample.center].output, &positive, &neg_refs) else {
            sample_loss[s] = f64::NAN;
            continue;
        };
        sample_loss[s] = g.loss;
        used += 1;
        let mut acc = |post: usize, grad: &[f64], scale: f64| {
            let slot = d_out.entry(post).or_insert_with(|| vec![0.0; grad.len()]);
            for (a, g) in slot.iter_mut().zip(grad) {
                *a += scale * g;
            }
        };
        acc(sample.center, &g.d_post, 1.0);
        let share = 1.0 / sample.members.len() as f64;
        for &m in &sample.members {
            acc(m, &g.d_positive, share);
        }
        for (&n, d) in sample.negatives.iter().zip(&g.d_negatives) {
            acc(n, d, 1.0);
        }
    }
    if used == 0 {
        return None;
    }
    let mut grads = params.zero_like();
    for (post, d) in &d_out {
        params.backward(&caches[post], d, &mut grads);
    }
    Some((grads, used))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, build_windows, Paradigm};
    use crate::ingest::Post;

    fn two_topic_thread() -> Thread {
        let a = ["apple", "pear", "plum", "fig", "kiwi", "lime"];
        let b = ["bolt", "nut", "gear", "cog", "axle", "lever"];
        let posts = (0..20)
            .map(|i| {
                let pool = if i < 10 { &a } else { &b };
                let text = (0..4).map(|j| pool[(i * 7 + j * 3) % 6]).collect::<Vec<_>>().join(" ");
                Post {
                    id: format!("p{i}"),
                    timestamp: i as f64 * 10.0,
                    text,
                    author: None,
                }
            })
            .collect();
        Thread::new("toy", posts)
    }

    fn setup() -> (TrainingSet, EncoderConfig) {
        let thread = two_topic_thread();
        let vocab = build_vocab(std::slice::from_ref(&thread), 1);
        let windows = build_windows(thread.len(), Paradigm::Symmetric, 2);
        let set = TrainingSet::new(&[thread], &vocab, &[windows], 16);
        let config = EncoderConfig {
            embed_dim: 8,
            hidden_dim: 8,
            vocab_size: vocab.len(),
            max_len: 16,
            seed: 5,
            learning_rate: 0.05,
            epochs: 30,
            negatives_per_sample: 3,
            batch_size: 4,
        };
        (set, config)
    }

    #[test]
    fn sample_gradient_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = EncoderParams::init_with(&mut rng, 7, 3, 3, 0.5);
        let seq = |v: &[u32]| TokenSeq(v.to_vec());
        let post = seq(&[2, 3, 4]);
        let members = [seq(&[3, 5]), seq(&[6, 2, 2])];
        let negatives = [seq(&[1, 4]), seq(&[5])];
        let (_, grads) = sample_loss_and_grad(&params, &post, &members, &negatives).unwrap();
        let eps = 1e-6;
        for b in 0..5 {
            for i in 0..params.blocks()[b].len() {
                let mut plus = params.clone();
                plus.blocks_mut()[b][i] += eps;
                let mut minus = params.clone();
                minus.blocks_mut()[b][i] -= eps;
                let fp = sample_loss_and_grad(&plus, &post, &members, &negatives).unwrap().0;
                let fm = sample_loss_and_grad(&minus, &post, &members, &negatives).unwrap().0;
                let numeric = (fp - fm) / (2.0 * eps);
                let analytic = grads.blocks()[b][i];
                assert!(
                    (numeric - analytic).abs() < 1e-6 * (1.0 + numeric.abs()),
                    "block {b} index {i}: {numeric} vs {analytic}"
                );
            }
        }
    }

    #[test]
    fn loss_decreases() {
        let (set, config) = setup();
        let out = train(&set, &config).unwrap();
        assert_eq!(out.loss_curve.len(), 30);
        assert!(
            out.loss_curve.last().unwrap() < out.loss_curve.first().unwrap(),
            "{:?}",
            out.loss_curve
        );
        assert!(out.params.is_finite());
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let (set, mut config) = setup();
        config.learning_rate = 0.0;
        config.epochs = 4;
        let out = train(&set, &config).unwrap();
        assert_eq!(out.params, EncoderParams::init(&config));
        assert!(out.loss_curve.windows(2).all(|w| w[0] == w[1]), "{:?}", out.loss_curve);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (set, mut config) = setup();
        config.epochs = 5;
        let a = train(&set, &config).unwrap();
        let b = train(&set, &config).unwrap();
        assert_eq!(a.params, b.params);
        let bits = |c: &[f64]| c.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.loss_curve), bits(&b.loss_curve));
    }

    #[test]
    fn no_windows_is_an_error() {
        let (_, config) = setup();
        let set = TrainingSet::new(&[], &build_vocab(&[], 1), &[], 8);
        assert!(matches!(train(&set, &config), Err(EmbedError::NoWindows)));
    }

    #[test]
    fn negatives_avoid_window() {
        let (set, _) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (center, members) in &set.windows {
            for n in set.draw_negatives(&mut rng, *center, members, 10) {
                assert_ne!(n, *center);
                assert!(!members.contains(&n));
            }
        }
    }
}

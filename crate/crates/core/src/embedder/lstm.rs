//! Single-layer LSTM post encoder with explicit backpropagation through time.
//!
//! Gate rows in the stacked weight matrices are ordered input, forget,
//! candidate, output; each block is `hidden_dim` rows tall.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TokenSeq;

use super::EmbedError;

const INIT_RANGE: f64 = 0.08;
const FORGET_BIAS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub negatives_per_sample: usize,
    pub batch_size: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            hidden_dim: 64,
            vocab_size: 2,
            max_len: 64,
            seed: 0,
            learning_rate: 0.1,
            epochs: 30,
            negatives_per_sample: 5,
            batch_size: 16,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("vocab_size", self.vocab_size),
            ("max_len", self.max_len),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(EmbedError::InvalidConfig(format!("{name} must be >= 1")));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(EmbedError::InvalidConfig(
                "learning_rate must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// All trainable weights, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub vocab_size: usize,
    /// `vocab_size x embed_dim`
    pub embedding: Vec<f64>,
    /// `4*hidden_dim x embed_dim`
    pub w_input: Vec<f64>,
    /// `4*hidden_dim x hidden_dim`
    pub w_hidden: Vec<f64>,
    /// `4*hidden_dim`
    pub bias: Vec<f64>,
    /// `hidden_dim x embed_dim`
    pub projection: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(vocab_size: usize, embed_dim: usize, hidden_dim: usize) -> Self {
        let h4 = 4 * hidden_dim;
        Self {
            embed_dim,
            hidden_dim,
            vocab_size,
            embedding: vec![0.0; vocab_size * embed_dim],
            w_input: vec![0.0; h4 * embed_dim],
            w_hidden: vec![0.0; h4 * hidden_dim],
            bias: vec![0.0; h4],
            projection: vec![0.0; hidden_dim * embed_dim],
        }
    }

    /// Uniform `[-0.08, 0.08]` weights, forget-gate bias 1.
    pub fn init(config: &EncoderConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::init_with(
            &mut rng,
            config.vocab_size,
            config.embed_dim,
            config.hidden_dim,
            INIT_RANGE,
        )
    }

    pub fn init_with<R: Rng>(rng: &mut R, vocab_size: usize, embed_dim: usize, hidden_dim: usize, range: f64) -> Self {
        let mut p = Self::zeros(vocab_size, embed_dim, hidden_dim);
        for block in [&mut p.embedding, &mut p.w_input, &mut p.w_hidden, &mut p.projection] {
            for w in block.iter_mut() {
                *w = rng.gen_range(-range..=range);
            }
        }
        p.bias[hidden_dim..2 * hidden_dim].fill(FORGET_BIAS);
        p
    }

    pub fn blocks(&self) -> [&[f64]; 5] {
        [
            &self.embedding,
            &self.w_input,
            &self.w_hidden,
            &self.bias,
            &self.projection,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [
            &mut self.embedding,
            &mut self.w_input,
            &mut self.w_hidden,
            &mut self.bias,
            &mut self.projection,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|w| w.is_finite()))
    }

    fn check_seq(&self, seq: &TokenSeq) -> Result<(), EmbedError> {
        if seq.is_empty() {
            return Err(EmbedError::EmptySequence);
        }
        if let Some(&bad) = seq.0.iter().find(|&&t| t as usize >= self.vocab_size) {
            return Err(EmbedError::TokenOutOfRange {
                token: bad,
                vocab_size: self.vocab_size,
            });
        }
        Ok(())
    }

    /// Encode a token sequence into a post embedding.
    pub fn encode(&self, seq: &TokenSeq) -> Result<Vec<f64>, EmbedError> {
        Ok(self.forward(seq)?.output)
    }

    /// Forward pass that keeps every intermediate needed by [`Self::backward`].
    pub fn forward(&self, seq: &TokenSeq) -> Result<ForwardCache, EmbedError> {
        self.check_seq(seq)?;
        let (d, h) = (self.embed_dim, self.hidden_dim);
        let steps = seq.len();
        let mut cache = ForwardCache {
            tokens: seq.0.clone(),
            gates: Vec::with_capacity(steps),
            cells: vec![vec![0.0; h]],
            hiddens: vec![vec![0.0; h]],
            output: vec![0.0; d],
        };
        let mut z = vec![0.0; 4 * h];
        for &tok in &seq.0 {
            let x = &self.embedding[tok as usize * d..(tok as usize + 1) * d];
            let h_prev = cache.hiddens.last().unwrap();
            z.copy_from_slice(&self.bias);
            for (r, zr) in z.iter_mut().enumerate() {
                *zr += dot(&self.w_input[r * d..(r + 1) * d], x) + dot(&self.w_hidden[r * h..(r + 1) * h], h_prev);
            }
            let mut gate = vec![0.0; 4 * h];
            for j in 0..h {
                gate[j] = sigmoid(z[j]);
                gate[h + j] = sigmoid(z[h + j]);
                gate[2 * h + j] = z[2 * h + j].tanh();
                gate[3 * h + j] = sigmoid(z[3 * h + j]);
            }
            let c_prev = cache.cells.last().unwrap();
            let c: Vec<f64> = (0..h)
                .map(|j| gate[h + j] * c_prev[j] + gate[j] * gate[2 * h + j])
                .collect();
            let hid: Vec<f64> = (0..h).map(|j| gate[3 * h + j] * c[j].tanh()).collect();
            cache.gates.push(gate);
            cache.cells.push(c);
            cache.hiddens.push(hid);
        }
        let last = cache.hiddens.last().unwrap();
        for (j, &hj) in last.iter().enumerate() {
            if hj != 0.0 {
                axpy(&mut cache.output, hj, &self.projection[j * d..(j + 1) * d]);
            }
        }
        Ok(cache)
    }

    /// Accumulate into `grads` the gradient of a scalar objective given its
    /// gradient `d_output` with respect to this sequence's output vector.
    pub fn backward(&self, cache: &ForwardCache, d_output: &[f64], grads: &mut EncoderParams) {
        let (d, h) = (self.embed_dim, self.hidden_dim);
        let steps = cache.tokens.len();
        let last = &cache.hiddens[steps];
        let mut dh = vec![0.0; h];
        for j in 0..h {
            axpy(&mut grads.projection[j * d..(j + 1) * d], last[j], d_output);
            dh[j] = dot(&self.projection[j * d..(j + 1) * d], d_output);
        }
        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..steps).rev() {
            let gate = &cache.gates[t];
            let c = &cache.cells[t + 1];
            let c_prev = &cache.cells[t];
            for j in 0..h {
                let (ig, fg, gg, og) = (gate[j], gate[h + j], gate[2 * h + j], gate[3 * h + j]);
                let tc = c[j].tanh();
                dc[j] += dh[j] * og * (1.0 - tc * tc);
                dz[j] = dc[j] * gg * ig * (1.0 - ig);
                dz[h + j] = dc[j] * c_prev[j] * fg * (1.0 - fg);
                dz[2 * h + j] = dc[j] * ig * (1.0 - gg * gg);
                dz[3 * h + j] = dh[j] * tc * og * (1.0 - og);
                dc[j] *= fg;
            }
            let tok = cache.tokens[t] as usize;
            let x = &self.embedding[tok * d..(tok + 1) * d];
            let h_prev = &cache.hiddens[t];
            dh.fill(0.0);
            let dx = &mut grads.embedding[tok * d..(tok + 1) * d];
            for (r, &dzr) in dz.iter().enumerate() {
                if dzr == 0.0 {
                    continue;
                }
                grads.bias[r] += dzr;
                axpy(&mut grads.w_input[r * d..(r + 1) * d], dzr, x);
                axpy(&mut grads.w_hidden[r * h..(r + 1) * h], dzr, h_prev);
                axpy(dx, dzr, &self.w_input[r * d..(r + 1) * d]);
                axpy(&mut dh, dzr, &self.w_hidden[r * h..(r + 1) * h]);
            }
        }
    }

    /// `self += scale * other`, block by block.
    pub fn add_scaled(&mut self, other: &EncoderParams, scale: f64) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            axpy(dst, scale, src);
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.blocks().iter().flat_map(|b| b.iter()).map(|w| w * w).sum()
    }

    pub fn zero_like(&self) -> Self {
        Self::zeros(self.vocab_size, self.embed_dim, self.hidden_dim)
    }
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    tokens: Vec<u32>,
    /// Post-activation gates per step, `[i | f | g | o]`.
    gates: Vec<Vec<f64>>,
    /// Cell states; index 0 is the zero initial state.
    cells: Vec<Vec<f64>>,
    hiddens: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(dst: &mut [f64], a: f64, x: &[f64]) {
    for (d, v) in dst.iter_mut().zip(x) {
        *d += a * v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EncoderParams {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        EncoderParams::init_with(&mut rng, 6, 4, 5, 0.5)
    }

    #[test]
    fn zero_params_give_zero_output() {
        let p = EncoderParams::zeros(5, 3, 4);
        assert_eq!(p.encode(&TokenSeq(vec![2, 3, 4])).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn order_sensitive_and_deterministic() {
        let p = small();
        let ab = p.encode(&TokenSeq(vec![2, 3])).unwrap();
        let ba = p.encode(&TokenSeq(vec![3, 2])).unwrap();
        assert_ne!(ab, ba);
        assert_eq!(ab, p.encode(&TokenSeq(vec![2, 3])).unwrap());
    }

    #[test]
    fn empty_and_out_of_range_rejected() {
        let p = small();
        assert!(matches!(p.encode(&TokenSeq(vec![])), Err(EmbedError::EmptySequence)));
        assert!(matches!(
            p.encode(&TokenSeq(vec![9])),
            Err(EmbedError::TokenOutOfRange { token: 9, .. })
        ));
    }

    #[test]
    fn init_respects_range_and_forget_bias() {
        let cfg = EncoderConfig {
            vocab_size: 7,
            embed_dim: 3,
            hidden_dim: 2,
            ..Default::default()
        };
        let p = EncoderParams::init(&cfg);
        assert!(p.embedding.iter().all(|w| w.abs() <= INIT_RANGE));
        assert_eq!(&p.bias, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(p, EncoderParams::init(&cfg));
    }

    #[test]
    fn backward_matches_finite_difference_on_linear_readout() {
        let p = small();
        let seq = TokenSeq(vec![2, 4, 1]);
        let upstream = [0.3, -1.2, 0.7, 0.25];
        let objective = |q: &EncoderParams| dot(&q.encode(&seq).unwrap(), &upstream);
        let mut grads = p.zero_like();
        p.backward(&p.forward(&seq).unwrap(), &upstream, &mut grads);
        let eps = 1e-6;
        for b in 0..5 {
            for i in 0..p.blocks()[b].len() {
                let mut plus = p.clone();
                plus.blocks_mut()[b][i] += eps;
                let mut minus = p.clone();
                minus.blocks_mut()[b][i] -= eps;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * eps);
                let an = grads.blocks()[b][i];
                assert!((fd - an).abs() < 1e-7, "block {b} idx {i}: fd {fd} vs {an}");
            }
        }
    }
}

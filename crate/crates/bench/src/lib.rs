//! Seeded fixtures shared by the benchmarks.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use untangle_core::corpus::TokenSeq;
use untangle_core::embedder::EncoderParams;
use untangle_core::graph::{Edge, ReplyGraph};
use untangle_core::Embeddings;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_embeddings(n: usize, dim: usize, seed: u64) -> Embeddings {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect())
        .collect();
    Embeddings::from_rows(&rows)
}

/// Forward-only graph where each pair is linked with probability `density`.
pub fn random_forward_graph(n: usize, density: f64, seed: u64) -> ReplyGraph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for parent in 0..n {
        for child in parent + 1..n {
            if r.gen_bool(density) {
                edges.push(Edge {
                    parent,
                    child,
                    weight: r.gen(),
                });
            }
        }
    }
    ReplyGraph::from_edges(n, edges).expect("forward edges are valid")
}

/// Sorted event times with exponential gaps of mean `mean_gap`.
pub fn event_times(n: usize, mean_gap: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let mut t = 0.0;
    (0..n)
        .map(|_| {
            t += -mean_gap * (1.0 - r.gen::<f64>()).ln();
            t
        })
        .collect()
}

pub fn random_tokens(len: usize, vocab_size: usize, seed: u64) -> TokenSeq {
    let mut r = rng(seed);
    TokenSeq((0..len).map(|_| r.gen_range(2..vocab_size as u32)).collect())
}

pub fn encoder(vocab_size: usize, dim: usize, seed: u64) -> EncoderParams {
    EncoderParams::init_with(&mut rng(seed), vocab_size, dim, dim, 0.1)
}

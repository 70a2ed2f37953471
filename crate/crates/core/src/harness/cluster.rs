//! Average-linkage agglomerative clustering under cosine distance.

use crate::embedder::Embeddings;
use crate::graph::similarity_matrix;

use super::HarnessError;

/// Merge clusters bottom-up until `n_clusters` remain.
///
/// Distances are `1 - cos`; zero rows sit at distance 1 from everything.
/// Ties go to the lexicographically smallest pair of cluster slots, where a
/// merged cluster keeps the lower slot. Labels are numbered by first
/// appearance in post order.
pub fn agglomerative(embeddings: &Embeddings, n_clusters: usize) -> Result<Vec<usize>, HarnessError> {
    let n = embeddings.len();
    if n == 0 {
        return Err(HarnessError::TooFewPoints { n, need: 1 });
    }
    if n_clusters == 0 || n_clusters > n {
        return Err(HarnessError::InvalidConfig(format!(
            "n_clusters must be in 1..={n}, got {n_clusters}"
        )));
    }
    let sim = similarity_matrix(embeddings);
    let mut dist: Vec<f64> = sim.values().iter().map(|s| 1.0 - s).collect();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut slot: Vec<usize> = (0..n).collect();
    let mut remaining = n;
    while remaining > n_clusters {
        let mut best = (f64::INFINITY, 0, 0);
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                let d = dist[i * n + j];
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        let (_, a, b) = best;
        let (sa, sb) = (size[a] as f64, size[b] as f64);
        for k in (0..n).filter(|&k| active[k] && k != a && k != b) {
            let d = (sa * dist[k * n + a] + sb * dist[k * n + b]) / (sa + sb);
            dist[k * n + a] = d;
            dist[a * n + k] = d;
        }
        size[a] += size[b];
        active[b] = false;
        for s in slot.iter_mut().filter(|s| **s == b) {
            *s = a;
        }
        remaining -= 1;
    }
    let mut relabel = std::collections::HashMap::new();
    Ok(slot
        .iter()
        .map(|s| {
            let next = relabel.len();
            *relabel.entry(*s).or_insert(next)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::partition_ari;

    fn four_points() -> Embeddings {
        Embeddings::from_rows(&[vec![1.0, 0.05], vec![0.0, 1.0], vec![1.0, -0.02], vec![0.03, 1.0]])
    }

    fn cos_dist(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        1.0 - dot / (na * nb)
    }

    #[test]
    fn extremes() {
        let e = four_points();
        assert_eq!(agglomerative(&e, 4).unwrap(), [0, 1, 2, 3]);
        assert_eq!(agglomerative(&e, 1).unwrap(), [0, 0, 0, 0]);
        assert!(agglomerative(&Embeddings::from_rows(&[]), 1).is_err());
        assert!(agglomerative(&e, 5).is_err());
    }

    #[test]
    fn two_pairs_match_brute_force() {
        let e = four_points();
        let rows: Vec<&[f64]> = e.rows().collect();
        // Enumerate every 2-partition; score by mean within-cluster distance.
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1u32..(1 << 3) {
            let labels: Vec<usize> = (0..4)
                .map(|i| if i < 3 && mask & (1 << i) != 0 { 1 } else { 0 })
                .collect();
            let mut total = 0.0;
            let mut count = 0;
            for i in 0..4 {
                for j in i + 1..4 {
                    if labels[i] == labels[j] {
                        total += cos_dist(rows[i], rows[j]);
                        count += 1;
                    }
                }
            }
            let score = total / count.max(1) as f64;
            if count > 0 && score < best.0 {
                best = (score, labels);
            }
        }
        let got = agglomerative(&e, 2).unwrap();
        assert_eq!(got, [0, 1, 0, 1]);
        assert_eq!(partition_ari(&got, &best.1).unwrap(), 1.0);
    }
}

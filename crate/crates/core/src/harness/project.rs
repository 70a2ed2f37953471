//! Three-component PCA projection for visual inspection of embeddings.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedder::Embeddings;

use super::HarnessError;

const POWER_ITERS: usize = 5000;
const POWER_TOL: f64 = 1e-13;
const START_SEED: u64 = 0x5eed;

/// Centered coordinates on the top three principal axes plus the variance
/// captured by each axis, in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: Vec<[f64; 3]>,
    pub variances: [f64; 3],
}

fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d)
        .map(|i| m[i * d..(i + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
    }
}

pub fn project_3d(embeddings: &Embeddings) -> Result<Projection, HarnessError> {
    let n = embeddings.len();
    if n < 3 {
        return Err(HarnessError::TooFewPoints { n, need: 3 });
    }
    let d = embeddings.dim;
    let mut mean = vec![0.0; d];
    for row in embeddings.rows() {
        mean.iter_mut().zip(row).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = embeddings
        .rows()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = vec![0.0; d * d];
    for r in &centered {
        for i in 0..d {
            if r[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                cov[i * d + j] += r[i] * r[j];
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= n as f64);

    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut axes: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for _ in 0..3.min(d) {
        let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        orthogonalize(&mut v, &basis);
        normalize(&mut v);
        for _ in 0..POWER_ITERS {
            let mut next = mat_vec(&cov, &v);
            orthogonalize(&mut next, &basis);
            if normalize(&mut next) == 0.0 {
                break;
            }
            let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if delta < POWER_TOL {
                break;
            }
        }
        let cv = mat_vec(&cov, &v);
        let lambda: f64 = cv.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().max(0.0);
        // Deflate so the next axis converges to the following eigenvector.
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] -= lambda * v[i] * v[j];
            }
        }
        basis.push(v.clone());
        axes.push((lambda, v));
    }
    axes.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut variances = [0.0; 3];
    for (k, (lambda, _)) in axes.iter().enumerate() {
        variances[k] = *lambda;
    }
    let coords = centered
        .iter()
        .map(|r| {
            let mut c = [0.0; 3];
            for (k, (_, axis)) in axes.iter().enumerate() {
                c[k] = r.iter().zip(axis).map(|(x, y)| x * y).sum();
            }
            c
        })
        .collect();
    Ok(Projection { coords, variances })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn preserves_distances_of_3d_data() {
        let raw = [
            [1.0, 2.0, -0.5],
            [-0.3, 0.7, 1.1],
            [2.2, -1.0, 0.4],
            [0.0, 0.1, -2.0],
            [-1.5, 0.3, 0.9],
        ];
        let mean: Vec<f64> = (0..3).map(|k| raw.iter().map(|r| r[k]).sum::<f64>() / 5.0).collect();
        let rows: Vec<Vec<f64>> = raw.iter().map(|r| (0..3).map(|k| r[k] - mean[k]).collect()).collect();
        let p = project_3d(&Embeddings::from_rows(&rows)).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((dist(&rows[i], &rows[j]) - dist(&p.coords[i], &p.coords[j])).abs() < 1e-6);
            }
        }
        assert!(p.variances[0] >= p.variances[1] && p.variances[1] >= p.variances[2]);
    }

    #[test]
    fn identical_rows_project_to_origin() {
        let rows = vec![vec![0.3, -1.0, 2.0, 0.5]; 4];
        let p = project_3d(&Embeddings::from_rows(&rows)).unwrap();
        assert!(p.coords.iter().all(|c| c.iter().all(|v| v.abs() < 1e-12)));
    }

    #[test]
    fn needs_three_points() {
        assert!(project_3d(&Embeddings::from_rows(&[vec![1.0], vec![2.0]])).is_err());
    }

    #[test]
    fn component_variance_descends() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..6).map(|k| rng.gen_range(-1.0..1.0) * (6 - k) as f64).collect())
            .collect();
        let p = project_3d(&Embeddings::from_rows(&rows)).unwrap();
        let var = |k: usize| p.coords.iter().map(|c| c[k] * c[k]).sum::<f64>() / 40.0;
        assert!(var(0) >= var(1) && var(1) >= var(2));
        for k in 0..3 {
            assert!((var(k) - p.variances[k]).abs() < 1e-8 * p.variances[0]);
        }
    }
}

//! Cosine similarity and the negative-sampling objective.

use super::lstm::{dot, sigmoid};
use super::{ContextEmbedding, EmbedError, PostEmbedding};

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `a.b / (|a| |b|)`.
pub fn similarity(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch(a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine plus its gradients with respect to both arguments.
pub fn cosine_with_grad(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>), EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch(a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    let cos = dot(a, b) / (na * nb);
    let inv = 1.0 / (na * nb);
    let da = a.iter().zip(b).map(|(x, y)| y * inv - cos * x / (na * na)).collect();
    let db = a.iter().zip(b).map(|(x, y)| x * inv - cos * y / (nb * nb)).collect();
    Ok((cos, da, db))
}

/// `-log sigma(x)`, computed without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// `-log sigma(cos(l, w+)) - sum_j log sigma(-cos(l, w-_j))`
pub fn training_loss(
    l: &PostEmbedding,
    positive: &ContextEmbedding,
    negatives: &[ContextEmbedding],
) -> Result<f64, EmbedError> {
    let mut loss = neg_log_sigmoid(similarity(&l.0, &positive.0)?);
    for neg in negatives {
        loss += neg_log_sigmoid(-similarity(&l.0, &neg.0)?);
    }
    Ok(loss)
}

/// Loss value and its gradient with respect to every input vector.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub d_post: Vec<f64>,
    pub d_positive: Vec<f64>,
    pub d_negatives: Vec<Vec<f64>>,
}

pub fn training_loss_with_grad(l: &[f64], positive: &[f64], negatives: &[&[f64]]) -> Result<LossGrad, EmbedError> {
    let (cos, dl, dp) = cosine_with_grad(l, positive)?;
    let mut loss = neg_log_sigmoid(cos);
    // d/dc [-log sigma(c)] = sigma(c) - 1
    let coef = sigmoid(cos) - 1.0;
    let mut d_post: Vec<f64> = dl.iter().map(|g| coef * g).collect();
    let d_positive = dp.iter().map(|g| coef * g).collect();
    let mut d_negatives = Vec::with_capacity(negatives.len());
    for neg in negatives {
        let (cos, dl, dn) = cosine_with_grad(l, neg)?;
        loss += neg_log_sigmoid(-cos);
        // d/dc [-log sigma(-c)] = sigma(c)
        let coef = sigmoid(cos);
        for (acc, g) in d_post.iter_mut().zip(&dl) {
            *acc += coef * g;
        }
        d_negatives.push(dn.iter().map(|g| coef * g).collect());
    }
    Ok(LossGrad {
        loss,
        d_post,
        d_positive,
        d_negatives,
    })
}

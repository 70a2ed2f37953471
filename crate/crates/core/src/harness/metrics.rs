//! Edge-level and partition-level agreement scores.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::HarnessError;

fn check_universe(left: usize, right: usize) -> Result<(), HarnessError> {
    if left != right {
        return Err(HarnessError::UniverseMismatch { left, right });
    }
    Ok(())
}

fn edge_set(parents: &[Option<usize>]) -> BTreeSet<(usize, usize)> {
    parents
        .iter()
        .enumerate()
        .filter_map(|(child, p)| p.map(|p| (child, p)))
        .collect()
}

/// Precision, recall and F1 of predicted reply edges.
///
/// An empty prediction has precision 1 when the gold set is also empty and
/// 0 otherwise; recall against an empty gold set follows the same rule.
pub fn edge_prf(predicted: &[Option<usize>], gold: &[Option<usize>]) -> Result<(f64, f64, f64), HarnessError> {
    check_universe(predicted.len(), gold.len())?;
    let pred = edge_set(predicted);
    let gold = edge_set(gold);
    let hits = pred.intersection(&gold).count() as f64;
    let ratio = |num: f64, den: usize, other_empty: bool| {
        if den == 0 {
            if other_empty {
                1.0
            } else {
                0.0
            }
        } else {
            num / den as f64
        }
    };
    let precision = ratio(hits, pred.len(), gold.is_empty());
    let recall = ratio(hits, gold.len(), pred.is_empty());
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((precision, recall, f1))
}

fn pairs(n: usize) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand index from the pair-counting contingency table.
///
/// When both partitions are trivial in the same way the index is 0/0; it
/// is reported as 1 for identical partitions and 0 otherwise.
pub fn partition_ari(predicted: &[usize], gold: &[usize]) -> Result<f64, HarnessError> {
    check_universe(predicted.len(), gold.len())?;
    let n = predicted.len();
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&a, &b) in predicted.iter().zip(gold) {
        *joint.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let index: f64 = joint.values().map(|&c| pairs(c)).sum();
    let row_sum: f64 = rows.values().map(|&c| pairs(c)).sum();
    let col_sum: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    let expected = if total == 0.0 { 0.0 } else { row_sum * col_sum / total };
    let max_index = 0.5 * (row_sum + col_sum);
    let denom = max_index - expected;
    if denom.abs() < 1e-12 {
        let same = rows.len() == joint.len() && cols.len() == joint.len();
        return Ok(if same { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ari: f64,
    pub predicted_conversations: usize,
    pub gold_conversations: usize,
    /// Predicted minus gold conversation count.
    pub conversation_count_delta: i64,
}

pub fn evaluate(
    predicted_parents: &[Option<usize>],
    gold_parents: &[Option<usize>],
    predicted_labels: &[usize],
    gold_labels: &[usize],
) -> Result<EvalReport, HarnessError> {
    let (precision, recall, f1) = edge_prf(predicted_parents, gold_parents)?;
    let ari = partition_ari(predicted_labels, gold_labels)?;
    let count = |labels: &[usize]| labels.iter().collect::<BTreeSet<_>>().len();
    let (p, g) = (count(predicted_labels), count(gold_labels));
    Ok(EvalReport {
        precision,
        recall,
        f1,
        ari,
        predicted_conversations: p,
        gold_conversations: g,
        conversation_count_delta: p as i64 - g as i64,
    })
}

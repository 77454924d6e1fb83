//! Listwise softmax accuracy loss and the novelty regularizer.

use super::NarError;

/// `exp(γ r_i) / Σ exp(γ r_j)` with max subtraction.
pub fn softmax_probs(scores: &[f64], gamma: f64) -> Vec<f64> {
    let m = scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e: Vec<f64> = scores.iter().map(|&r| (gamma * (r - m)).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// `-ln P(positive)`.
pub fn accuracy_loss(scores: &[f64], positive: usize, gamma: f64) -> Result<f64, NarError> {
    if positive >= scores.len() {
        return Err(NarError::MissingPositive);
    }
    let m = scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = scores.iter().map(|&r| (gamma * (r - m)).exp()).sum::<f64>().ln();
    Ok(lse - gamma * (scores[positive] - m))
}

/// Probability-weighted mean novelty over the negatives, with the
/// probabilities renormalized over the negatives alone.
pub fn novelty_loss(neg_scores: &[f64], novelty: &[f64], gamma: f64) -> Result<f64, NarError> {
    if neg_scores.is_empty() {
        return Err(NarError::NoNegatives);
    }
    let q = softmax_probs(neg_scores, gamma);
    Ok(q.iter().zip(novelty).map(|(p, n)| p * n).sum())
}

/// Loss terms of one click and the gradient of `weight * (acc - β nov)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClickLoss {
    pub acc: f64,
    pub nov: f64,
    pub dscores: Vec<f64>,
}

/// `scores[0]` is the positive; `novelty` covers `scores[1..]`.
pub fn click_loss(scores: &[f64], novelty: &[f64], gamma: f64, beta: f64, weight: f64) -> Result<ClickLoss, NarError> {
    let acc = accuracy_loss(scores, 0, gamma)?;
    let negs = &scores[1..];
    let nov = novelty_loss(negs, novelty, gamma)?;
    let p = softmax_probs(scores, gamma);
    let q = softmax_probs(negs, gamma);
    let mut d: Vec<f64> = p.iter().map(|&pi| weight * gamma * pi).collect();
    d[0] -= weight * gamma;
    for i in 0..negs.len() {
        d[i + 1] -= weight * beta * gamma * q[i] * (novelty[i] - nov);
    }
    Ok(ClickLoss { acc, nov, dscores: d })
}

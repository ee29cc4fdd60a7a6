use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The `k` highest-scoring labels (ties to the lower id), returned sorted.
pub fn predict_topk<T: Scalar>(scores: &[T], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.len() {
        return Err(Error::Config(format!(
            "top-k needs 1 ≤ k ≤ {} labels, got k = {k}",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut picked = order[..k].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Micro- and macro-averaged F1 over per-node label sets.
///
/// Labels with no true and no predicted occurrences contribute an F1 of 0 to
/// the macro average.
pub fn f1_scores<S: AsRef<[usize]>>(predicted: &[S], truth: &[S], num_labels: usize) -> (f64, f64) {
    let mut tp = vec![0usize; num_labels];
    let mut fp = vec![0usize; num_labels];
    let mut fn_ = vec![0usize; num_labels];
    for (p, t) in predicted.iter().zip(truth) {
        let (p, t) = (p.as_ref(), t.as_ref());
        for &l in p {
            if t.contains(&l) {
                tp[l] += 1;
            } else {
                fp[l] += 1;
            }
        }
        for &l in t {
            if !p.contains(&l) {
                fn_[l] += 1;
            }
        }
    }
    let f1 = |tp: usize, fp: usize, fn_: usize| {
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    let micro = f1(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    let macro_ = if num_labels == 0 {
        0.0
    } else {
        (0..num_labels).map(|l| f1(tp[l], fp[l], fn_[l])).sum::<f64>() / num_labels as f64
    };
    (micro, macro_)
}

/// Probability that a positive outscores a negative, ties counted half.
pub fn auc_score<T: Scalar>(pos: &[T], neg: &[T]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Empty("AUC needs positive and negative scores".into()));
    }
    let mut neg_sorted: Vec<T> = neg.to_vec();
    neg_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let mut wins = 0.0;
    for &p in pos {
        let below = neg_sorted.partition_point(|&n| n < p);
        let not_above = neg_sorted.partition_point(|&n| n <= p);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    Ok(wins / (pos.len() as f64 * neg.len() as f64))
}

/// `a·b / (‖a‖‖b‖)`; zero when either vector is zero.
pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> T {
    let dot = crate::math::dot(a, b);
    let na = crate::math::dot(a, a).sqrt();
    let nb = crate::math::dot(b, b).sqrt();
    if na == T::zero() || nb == T::zero() {
        T::zero()
    } else {
        dot / (na * nb)
    }
}

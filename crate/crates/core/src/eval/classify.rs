//! One-vs-rest logistic regression node classification.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::{f1_scores, predict_topk};
use crate::error::{Error, Result};
use crate::graph::LabelTable;
use crate::math::{dot, log_sigmoid, sigmoid, DenseMatrix};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRegConfig {
    pub l2: f64,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            l2: 1e-4,
            epochs: 500,
            lr: 0.1,
        }
    }
}

/// Per-label binary classifier.
#[derive(Clone, Debug, PartialEq)]
pub enum BinaryClassifier<T> {
    Linear { weights: Vec<T>, bias: T },
    /// Label that is always (or never) present in training.
    Constant(T),
}

impl<T: Scalar> BinaryClassifier<T> {
    pub fn score(&self, x: &[T]) -> T {
        match self {
            BinaryClassifier::Linear { weights, bias } => sigmoid(dot(weights, x) + *bias),
            BinaryClassifier::Constant(p) => *p,
        }
    }
}

/// L2-regularized mean log loss of one binary problem and its gradient `(d_w, d_b)`.
pub fn logistic_loss_and_grad<T: Scalar>(
    x: &DenseMatrix<T>,
    y: &[bool],
    weights: &[T],
    bias: T,
    l2: T,
) -> (T, Vec<T>, T) {
    let n = T::from_count(x.rows().max(1));
    let mut loss = T::zero();
    let mut d_w = vec![T::zero(); weights.len()];
    let mut d_b = T::zero();
    for (row, &label) in x.iter_rows().zip(y) {
        let z = dot(weights, row) + bias;
        let target = if label { T::one() } else { T::zero() };
        loss -= if label { log_sigmoid(z) } else { log_sigmoid(-z) };
        let r = sigmoid(z) - target;
        for (g, &v) in d_w.iter_mut().zip(row) {
            *g += r * v;
        }
        d_b += r;
    }
    let half = T::lit(0.5);
    let reg: T = weights.iter().map(|&w| w * w).sum::<T>() * half * l2;
    for (g, &w) in d_w.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (loss / n + reg, d_w, d_b / n)
}

/// Train one binary logistic regression per label with full-batch gradient descent.
pub fn train_logreg_ovr<T: Scalar>(
    features: &DenseMatrix<T>,
    labels: &[&[usize]],
    num_labels: usize,
    config: &LogRegConfig,
) -> Result<Vec<BinaryClassifier<T>>> {
    if features.rows() == 0 {
        return Err(Error::Empty("classifier training set".into()));
    }
    if labels.len() != features.rows() {
        return Err(Error::shape("train_logreg_ovr", features.shape(), (labels.len(), 1)));
    }
    let lr = T::lit(config.lr);
    let l2 = T::lit(config.l2);
    let mut out = Vec::with_capacity(num_labels);
    for c in 0..num_labels {
        let y: Vec<bool> = labels.iter().map(|set| set.contains(&c)).collect();
        let positives = y.iter().filter(|&&b| b).count();
        if positives == 0 || positives == y.len() {
            out.push(BinaryClassifier::Constant(T::from_count(positives) / T::from_count(y.len())));
            continue;
        }
        let mut weights = vec![T::zero(); features.cols()];
        let mut bias = T::zero();
        for _ in 0..config.epochs {
            let (_, d_w, d_b) = logistic_loss_and_grad(features, &y, &weights, bias, l2);
            for (w, g) in weights.iter_mut().zip(d_w) {
                *w -= lr * g;
            }
            bias -= lr * d_b;
        }
        out.push(BinaryClassifier::Linear { weights, bias });
    }
    Ok(out)
}

/// Averaged classification metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationReport {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub runs: usize,
    pub per_run: Vec<(f64, f64)>,
}

/// Repeated random train/test splits over labeled nodes; train on a
/// `train_fraction` share, predict top-k on the rest, average F1 over runs.
pub fn run_classification_eval<T: Scalar>(
    features: &DenseMatrix<T>,
    labels: &LabelTable,
    train_fraction: f64,
    runs: usize,
    seed: u64,
    config: &LogRegConfig,
) -> Result<ClassificationReport> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if runs == 0 {
        return Err(Error::Config("need at least one run".into()));
    }
    if labels.node_count() != features.rows() {
        return Err(Error::Config(format!(
            "label table covers {} nodes but features have {} rows",
            labels.node_count(),
            features.rows()
        )));
    }
    let nodes = labels.labeled_nodes();
    if nodes.len() < 2 {
        return Err(Error::Empty("need at least two labeled nodes".into()));
    }
    let n_train = ((train_fraction * nodes.len() as f64).floor() as usize).clamp(1, nodes.len() - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_run = Vec::with_capacity(runs);
    for _ in 0..runs {
        let mut order = nodes.clone();
        order.shuffle(&mut rng);
        let (train, test) = order.split_at(n_train);
        let x_train = features.select_rows(train);
        let y_train: Vec<&[usize]> = train.iter().map(|&i| labels.labels_of(i)).collect();
        let classifiers = train_logreg_ovr(&x_train, &y_train, labels.num_labels(), config)?;

        let mut predicted = Vec::with_capacity(test.len());
        let mut truth = Vec::with_capacity(test.len());
        for &node in test {
            let x = features.row(node);
            let scores: Vec<T> = classifiers.iter().map(|c| c.score(x)).collect();
            let k = labels.labels_of(node).len();
            predicted.push(predict_topk(&scores, k)?);
            truth.push(labels.labels_of(node).to_vec());
        }
        per_run.push(f1_scores(&predicted, &truth, labels.num_labels()));
    }
    let micro_f1 = per_run.iter().map(|r| r.0).sum::<f64>() / runs as f64;
    let macro_f1 = per_run.iter().map(|r| r.1).sum::<f64>() / runs as f64;
    Ok(ClassificationReport {
        micro_f1,
        macro_f1,
        runs,
        per_run,
    })
}

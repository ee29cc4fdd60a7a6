//! Downstream evaluation: node classification, link prediction, memory
//! accounting and basis usage.

mod classify;
mod memory;
mod metrics;

pub use classify::{
    logistic_loss_and_grad, run_classification_eval, train_logreg_ovr, BinaryClassifier, ClassificationReport,
    LogRegConfig,
};
pub use memory::{
    format_centi, memory_report, preset, round_centi, CompressionRatios, DatasetPreset, Layout, MemoryCost,
    MemoryModel, RatioConvention, DATASET_PRESETS,
};
pub use metrics::{auc_score, cosine_similarity, f1_scores, predict_topk};

use crate::compressor::Codebook;
use crate::error::{Error, Result};
use crate::graph::EdgeSplit;
use crate::math::DenseMatrix;
use crate::scalar::Scalar;

/// Combined evaluation summary. Absent metrics are `None`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub micro_f1: Option<f64>,
    pub macro_f1: Option<f64>,
    pub auc: Option<f64>,
    pub param_count: Option<u128>,
    pub byte_cost: Option<u128>,
    pub compression_ratio_params: Option<f64>,
    pub compression_ratio_bytes: Option<f64>,
    pub runs: usize,
}

impl EvalReport {
    /// `metric,value` lines, skipping absent fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push_str(&format!("{k},{v}\n"));
            }
        };
        push("micro_f1", self.micro_f1.map(|v| format!("{v:.6}")));
        push("macro_f1", self.macro_f1.map(|v| format!("{v:.6}")));
        push("auc", self.auc.map(|v| format!("{v:.6}")));
        push("param_count", self.param_count.map(|v| v.to_string()));
        push("byte_cost", self.byte_cost.map(|v| v.to_string()));
        push("compression_ratio_params", self.compression_ratio_params.map(|v| format!("{v:.4}")));
        push("compression_ratio_bytes", self.compression_ratio_bytes.map(|v| format!("{v:.4}")));
        push("runs", Some(self.runs.to_string()));
        out
    }
}

/// AUC of cosine scores for held-out positive pairs against sampled negatives.
pub fn run_linkpred_eval<T: Scalar>(embeddings: &DenseMatrix<T>, split: &EdgeSplit) -> Result<f64> {
    let n = embeddings.rows();
    let score = |&(a, b): &(usize, usize)| -> Result<T> {
        for id in [a, b] {
            if id >= n {
                return Err(Error::NodeOutOfRange { id, count: n });
            }
        }
        Ok(cosine_similarity(embeddings.row(a), embeddings.row(b)))
    };
    let pos = split.positive_pairs.iter().map(score).collect::<Result<Vec<_>>>()?;
    let neg = split.negative_pairs.iter().map(score).collect::<Result<Vec<_>>>()?;
    auc_score(&pos, &neg)
}

/// How many code entries point at each basis vector.
pub fn basis_utilization<T: Scalar>(cb: &Codebook<T>) -> Vec<usize> {
    let mut counts = vec![0; cb.s()];
    for &c in cb.codes() {
        counts[c] += 1;
    }
    counts
}

/// Fraction of basis vectors never selected.
pub fn unused_fraction(counts: &[usize]) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    counts.iter().filter(|&&c| c == 0).count() as f64 / counts.len() as f64
}

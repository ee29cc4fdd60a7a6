//! Optional TOML run configuration.
//!
//! ```toml
//! seed = 7
//! out_dir = "runs/blog"
//!
//! [compress]
//! s = 128
//! t = 8
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub pretrain: PretrainSection,
    #[serde(default)]
    pub compress: CompressSection,
    #[serde(default)]
    pub train_e2e: TrainE2eSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub memory: MemorySection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainSection {
    pub edges: Option<PathBuf>,
    pub dim: Option<usize>,
    pub walks_per_node: Option<usize>,
    pub walk_length: Option<usize>,
    pub window: Option<usize>,
    pub negatives: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressSection {
    pub embeddings: Option<PathBuf>,
    pub s: Option<usize>,
    pub t: Option<usize>,
    pub flavor: Option<String>,
    pub k: Option<usize>,
    pub kd_d: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub layers: Option<usize>,
    pub hidden: Option<usize>,
    pub validation_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainE2eSection {
    pub edges: Option<PathBuf>,
    pub s: Option<usize>,
    pub t: Option<usize>,
    pub flavor: Option<String>,
    pub k: Option<usize>,
    pub kd_d: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub layers: Option<usize>,
    pub hidden: Option<usize>,
    pub dim: Option<usize>,
    pub input_dim: Option<usize>,
    pub beta: Option<f64>,
    pub reconstruction_gradient: Option<String>,
    pub linkpred_holdout: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub embeddings: Option<PathBuf>,
    pub codebook: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub train_fraction: Option<f64>,
    pub runs: Option<usize>,
    pub float_bytes: Option<u64>,
    pub int_bytes: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemorySection {
    pub dataset: Option<String>,
    pub nodes: Option<u64>,
    pub dim: Option<u64>,
    pub s: Option<u64>,
    pub t: Option<u64>,
    pub k: Option<u64>,
    pub kd_d: Option<u64>,
    pub float_bytes: Option<u64>,
    pub int_bytes: Option<u64>,
}

pub fn load(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

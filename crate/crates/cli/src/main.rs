use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

#[derive(Parser, Debug)]
#[command(name = "mcne", version, about = "Compact graph embeddings with shared multi-hot codes")]
pub struct Cli {
    /// RNG seed for every stochastic step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with per-command settings; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for all outputs (created if missing).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Learn skip-gram embeddings from random walks over an edge list.
    Pretrain(PretrainArgs),
    /// Compress an embedding file into a codebook.
    Compress(CompressArgs),
    /// Train codes end to end from the graph topology.
    TrainE2e(TrainE2eArgs),
    /// Node classification, link prediction and memory accounting.
    Eval(EvalArgs),
    /// Parameter and byte cost of embedding layouts.
    ReportMemory(MemoryArgs),
}

#[derive(Args, Debug, Default)]
pub struct PretrainArgs {
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub walks_per_node: Option<usize>,
    #[arg(long)]
    pub walk_length: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

/// Code and optimizer settings shared by `compress` and `train-e2e`.
#[derive(Args, Debug, Default, Clone)]
pub struct CodeArgs {
    /// Number of basis vectors.
    #[arg(long)]
    pub s: Option<usize>,
    /// Codes per node.
    #[arg(long)]
    pub t: Option<usize>,
    /// `multi_hot` or `kd`.
    #[arg(long)]
    pub flavor: Option<String>,
    /// KD block size.
    #[arg(long = "k")]
    pub kd_k: Option<usize>,
    /// KD block count.
    #[arg(long = "kd-d")]
    pub kd_d: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct CompressArgs {
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub code: CodeArgs,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct TrainE2eArgs {
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[command(flatten)]
    pub code: CodeArgs,
    /// Embedding dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    /// GCN input width (defaults to the embedding dimension).
    #[arg(long)]
    pub input_dim: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// `compressor_only`, `detached_target` or `joint`.
    #[arg(long)]
    pub reconstruction_gradient: Option<String>,
    /// Hold out this fraction of edges for link prediction.
    #[arg(long)]
    pub linkpred_holdout: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct EvalArgs {
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    /// `node label` lines for classification.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Split file written by `train-e2e --linkpred-holdout`.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[command(flatten)]
    pub memory: MemoryModelArgs,
}

#[derive(Args, Debug, Default, Clone)]
pub struct MemoryModelArgs {
    #[arg(long)]
    pub float_bytes: Option<u64>,
    #[arg(long)]
    pub int_bytes: Option<u64>,
}

#[derive(Args, Debug, Default)]
pub struct MemoryArgs {
    /// Preset network (`blogcatalog`, `dblp`, `flickr`, `youtube`) or `all`.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub nodes: Option<u64>,
    #[arg(long)]
    pub dim: Option<u64>,
    #[arg(long)]
    pub s: Option<u64>,
    #[arg(long)]
    pub t: Option<u64>,
    #[arg(long = "k")]
    pub kd_k: Option<u64>,
    #[arg(long = "kd-d")]
    pub kd_d: Option<u64>,
    #[command(flatten)]
    pub memory: MemoryModelArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

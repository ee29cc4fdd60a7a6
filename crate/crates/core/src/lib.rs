//! Multi-hot compact node embeddings.
//!
//! Node embedding tables are stored as a small shared basis matrix plus `t`
//! integer codes per node; a node's embedding is the sum of the basis rows its
//! codes name. Two models learn such codebooks:
//!
//! * [`mcne_p`] compresses a pre-learned embedding table (encoder → Gumbel
//!   compressor → sum decoder, trained on reconstruction loss);
//! * [`mcne_t`] learns compact embeddings directly from topology with a GCN
//!   encoder and a neighbor-vs-non-neighbor ranking loss.
//!
//! [`pretrain`] provides a random-walk skip-gram pretrainer, [`eval`] the
//! classification, link-prediction and memory-accounting protocol, and [`io`]
//! the text file formats.
//!
//! All numeric code is generic over [`Scalar`] (`f32`/`f64`); the aliases
//! below fix the scalar to `f64`, the precision used for training.

pub mod compressor;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod math;
pub mod mcne_p;
pub mod mcne_t;
pub mod pretrain;
pub mod scalar;

pub use compressor::{code_space_size, CodeFlavor, Codebook, CompressorParams, TauSchedule};
pub use error::{Error, Result};
pub use graph::{EdgeSplit, Graph, LabelTable};
pub use math::DenseMatrix;
pub use mcne_p::{McnePModel, ReconstructionGradient, TrainConfig};
pub use pretrain::{EmbeddingTable, SgnsConfig};
pub use scalar::Scalar;

pub type Matrix = DenseMatrix<f64>;
pub type Matrix32 = DenseMatrix<f32>;
pub type Codebook64 = Codebook<f64>;
pub type Embeddings = EmbeddingTable<f64>;

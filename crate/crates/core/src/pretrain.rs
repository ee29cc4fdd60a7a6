//! Random-walk skip-gram with negative sampling, used to produce the dense
//! embedding tables that the compressor consumes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{random_walks, Graph};
use crate::math::{dot, log_sigmoid, sigmoid, DenseMatrix};
use crate::scalar::Scalar;

/// Dense `|V| × d` embedding table.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable<T> {
    pub matrix: DenseMatrix<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn new(matrix: DenseMatrix<T>) -> Result<Self> {
        if !matrix.is_finite() {
            return Err(Error::NonFinite("embedding table".into()));
        }
        Ok(EmbeddingTable { matrix })
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.matrix.rows()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    #[inline]
    pub fn row(&self, node: usize) -> &[T] {
        self.matrix.row(node)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgnsConfig {
    pub dim: usize,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial step size, decayed linearly to `lr · 1e-4` over training.
    pub lr: f64,
    pub seed: u64,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 128,
            walks_per_node: 10,
            walk_length: 40,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            seed: 1,
        }
    }
}

/// A center node, one observed context node and sampled negative context nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingPair {
    pub center: usize,
    pub context: usize,
    pub negatives: Vec<usize>,
}

/// Center ("input") and context ("output") tables.
#[derive(Clone, Debug, PartialEq)]
pub struct SkipGram<T> {
    pub center: DenseMatrix<T>,
    pub context: DenseMatrix<T>,
}

/// Gradients of one pair loss with respect to the vectors it touches.
#[derive(Clone, Debug)]
pub struct PairGrad<T> {
    pub center: Vec<T>,
    pub context: Vec<T>,
    pub negatives: Vec<Vec<T>>,
}

impl<T: Scalar> SkipGram<T> {
    /// Center rows uniform in ±0.5/d, context rows zero.
    pub fn init<R: Rng + ?Sized>(node_count: usize, dim: usize, rng: &mut R) -> Self {
        SkipGram {
            center: DenseMatrix::uniform(node_count, dim, 0.5 / dim as f64, rng),
            context: DenseMatrix::zeros(node_count, dim),
        }
    }

    /// `−ln σ(u_ctx·v) − Σ_n ln σ(−u_n·v)` and its gradient.
    pub fn pair_loss_and_grad(&self, pair: &TrainingPair) -> (T, PairGrad<T>) {
        let v = self.center.row(pair.center);
        let u = self.context.row(pair.context);
        let score = dot(u, v);
        let mut loss = -log_sigmoid(score);
        let g = sigmoid(score) - T::one();
        let mut d_center: Vec<T> = u.iter().map(|&x| g * x).collect();
        let d_context = v.iter().map(|&x| g * x).collect();
        let mut d_negs = Vec::with_capacity(pair.negatives.len());
        for &n in &pair.negatives {
            let un = self.context.row(n);
            let s = dot(un, v);
            loss -= log_sigmoid(-s);
            let g = sigmoid(s);
            for (dc, &x) in d_center.iter_mut().zip(un) {
                *dc += g * x;
            }
            d_negs.push(v.iter().map(|&x| g * x).collect());
        }
        (
            loss,
            PairGrad {
                center: d_center,
                context: d_context,
                negatives: d_negs,
            },
        )
    }

    /// Plain SGD step on one pair; returns the pair loss before the update.
    pub fn sgd_step(&mut self, pair: &TrainingPair, lr: T) -> T {
        let (loss, grad) = self.pair_loss_and_grad(pair);
        axpy(self.context.row_mut(pair.context), -lr, &grad.context);
        for (&n, gn) in pair.negatives.iter().zip(&grad.negatives) {
            axpy(self.context.row_mut(n), -lr, gn);
        }
        axpy(self.center.row_mut(pair.center), -lr, &grad.center);
        loss
    }

    /// Total loss over a fixed pair set.
    pub fn total_loss(&self, pairs: &[TrainingPair]) -> T {
        pairs.iter().map(|p| self.pair_loss_and_grad(p).0).sum()
    }

    /// One full-batch gradient step over a fixed pair set; returns the loss before the step.
    pub fn full_batch_step(&mut self, pairs: &[TrainingPair], lr: T) -> T {
        let mut d_center = DenseMatrix::zeros(self.center.rows(), self.center.cols());
        let mut d_context = DenseMatrix::zeros(self.context.rows(), self.context.cols());
        let mut loss = T::zero();
        for p in pairs {
            let (l, g) = self.pair_loss_and_grad(p);
            loss += l;
            axpy(d_center.row_mut(p.center), T::one(), &g.center);
            axpy(d_context.row_mut(p.context), T::one(), &g.context);
            for (&n, gn) in p.negatives.iter().zip(&g.negatives) {
                axpy(d_context.row_mut(n), T::one(), gn);
            }
        }
        self.center.add_scaled(-lr, &d_center).expect("same shape");
        self.context.add_scaled(-lr, &d_context).expect("same shape");
        loss
    }
}

fn axpy<T: Scalar>(y: &mut [T], alpha: T, x: &[T]) {
    for (a, &b) in y.iter_mut().zip(x) {
        *a += alpha * b;
    }
}

/// Enumerate (center, context) pairs within `window` along every walk and
/// attach `negatives` uniformly drawn nodes different from the context.
pub fn training_pairs<R: Rng + ?Sized>(
    walks: &[Vec<usize>],
    window: usize,
    negatives: usize,
    node_count: usize,
    rng: &mut R,
) -> Vec<TrainingPair> {
    let mut pairs = Vec::new();
    for walk in walks {
        for (pos, &center) in walk.iter().enumerate() {
            let lo = pos.saturating_sub(window);
            let hi = (pos + window + 1).min(walk.len());
            for (other, &context) in walk.iter().enumerate().take(hi).skip(lo) {
                if other == pos {
                    continue;
                }
                let negs = sample_negatives(context, negatives, node_count, rng);
                pairs.push(TrainingPair {
                    center,
                    context,
                    negatives: negs,
                });
            }
        }
    }
    pairs
}

fn sample_negatives<R: Rng + ?Sized>(
    context: usize,
    count: usize,
    node_count: usize,
    rng: &mut R,
) -> Vec<usize> {
    if node_count < 2 {
        return Vec::new();
    }
    (0..count)
        .map(|_| loop {
            let n = rng.gen_range(0..node_count);
            if n != context {
                break n;
            }
        })
        .collect()
}

/// Train skip-gram embeddings on uniform random walks; returns the center table.
pub fn train_sgns<T: Scalar>(g: &Graph, config: &SgnsConfig) -> Result<EmbeddingTable<T>> {
    if config.dim < 2 {
        return Err(Error::Config(format!("embedding dim must be ≥ 2, got {}", config.dim)));
    }
    if config.window < 1 {
        return Err(Error::Config("window must be ≥ 1".into()));
    }
    if g.edge_count() == 0 {
        return Err(Error::Graph("edgeless graph has no training pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = SkipGram::<T>::init(g.node_count(), config.dim, &mut rng);
    if config.epochs == 0 {
        return EmbeddingTable::new(model.center);
    }
    let walks = random_walks(g, config.walks_per_node, config.walk_length, rng.gen())?;
    let pairs_per_epoch: usize = walks
        .iter()
        .map(|w| (0..w.len()).map(|p| p.min(config.window) + (w.len() - 1 - p).min(config.window)).sum::<usize>())
        .sum();
    let total_steps = (pairs_per_epoch * config.epochs).max(1) as f64;
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        let pairs = training_pairs(&walks, config.window, config.negatives, g.node_count(), &mut rng);
        let mut loss = 0.0;
        for pair in &pairs {
            let frac = step as f64 / total_steps;
            let lr = config.lr * (1.0 - frac).max(1e-4);
            loss += model.sgd_step(pair, T::lit(lr)).as_f64();
            step += 1;
        }
        log::debug!(
            "sgns epoch {epoch}: mean pair loss {:.4}",
            loss / pairs.len().max(1) as f64
        );
    }
    EmbeddingTable::new(model.center)
}

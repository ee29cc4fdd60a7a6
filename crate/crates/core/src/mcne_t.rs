//! End-to-end compact embeddings learned directly from graph topology.
//!
//! A GCN over the normalized adjacency produces latent rows `g`, the Gumbel
//! compressor and sum decoder turn them into `ĝ`, and training minimises a
//! pairwise topology loss on `ĝ` plus `β` times the reconstruction error
//! `‖g − ĝ‖²`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compressor::{anneal_tau, compose, select_basis, Codebook, CompressorParams};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, Graph, NormalizedAdjacency};
use crate::math::{
    adam_update, dot, log_sigmoid, mse_grad, mse_loss, sample_standard_gumbel, sigmoid, AdamConfig, DenseMatrix,
    OptimizerState,
};
use crate::math::ops::tanh_backward_from_output;
pub use crate::mcne_p::ReconstructionGradient;
use crate::mcne_p::TrainConfig;
use crate::pretrain::EmbeddingTable;
use crate::scalar::Scalar;

/// GCN hidden width when the config leaves it unset.
pub const DEFAULT_GCN_HIDDEN: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Triplets for a batch plus the anchors that could not produce one.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TripletSample {
    pub triplets: Vec<Triplet>,
    /// Anchors without neighbours.
    pub skipped_isolated: usize,
    /// Anchors adjacent to every other node.
    pub skipped_saturated: usize,
}

/// One uniform neighbour and one uniform non-neighbour per anchor.
pub fn sample_triplets<R: Rng + ?Sized>(g: &Graph, batch: &[usize], rng: &mut R) -> Result<TripletSample> {
    let n = g.node_count();
    let mut out = TripletSample::default();
    for &anchor in batch {
        if anchor >= n {
            return Err(Error::NodeOutOfRange { id: anchor, count: n });
        }
        let nbrs = g.neighbors(anchor);
        if nbrs.is_empty() {
            out.skipped_isolated += 1;
            continue;
        }
        if nbrs.len() + 1 >= n {
            out.skipped_saturated += 1;
            continue;
        }
        let positive = nbrs[rng.gen_range(0..nbrs.len())];
        let negative = loop {
            let c = rng.gen_range(0..n);
            if c != anchor && nbrs.binary_search(&c).is_err() {
                break c;
            }
        };
        out.triplets.push(Triplet {
            anchor,
            positive,
            negative,
        });
    }
    Ok(out)
}

/// `−ln σ(a·p − a·n)`.
pub fn loss_topology<T: Scalar>(anchor: &[T], positive: &[T], negative: &[T]) -> T {
    -log_sigmoid(dot(anchor, positive) - dot(anchor, negative))
}

/// Gradients of [`loss_topology`] w.r.t. anchor, positive and negative.
pub fn loss_topology_grad<T: Scalar>(anchor: &[T], positive: &[T], negative: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
    let diff = dot(anchor, positive) - dot(anchor, negative);
    let c = -sigmoid(-diff);
    let d_a = positive.iter().zip(negative).map(|(&p, &q)| c * (p - q)).collect();
    let d_p = anchor.iter().map(|&a| c * a).collect();
    let d_n = anchor.iter().map(|&a| -c * a).collect();
    (d_a, d_p, d_n)
}

/// Sorted distinct nodes touched by a batch; rows of the batch noise follow this order.
pub fn batch_nodes(triplets: &[Triplet]) -> Vec<usize> {
    let mut nodes: Vec<usize> = triplets
        .iter()
        .flat_map(|t| [t.anchor, t.positive, t.negative])
        .collect();
    nodes.sort_unstable();
    nodes.dedup();
    nodes
}

/// Loss components of one batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts<T> {
    pub topology: T,
    pub reconstruction: T,
    pub combined: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McneTModel<T> {
    /// Trainable input features `|V| × d_0`.
    pub g0: DenseMatrix<T>,
    pub gcn_weights: Vec<DenseMatrix<T>>,
    pub a_hat: NormalizedAdjacency<T>,
    pub compressor: CompressorParams<T>,
    pub beta: T,
    pub reconstruction_gradient: ReconstructionGradient,
}

struct GcnTrace<T> {
    /// `Â·G_k` for each layer.
    propagated: Vec<DenseMatrix<T>>,
    /// `G_0 … G_L`.
    activations: Vec<DenseMatrix<T>>,
}

impl<T: Scalar> McneTModel<T> {
    pub fn new<R: Rng + ?Sized>(g: &Graph, config: &TrainConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let n = g.node_count();
        if n == 0 {
            return Err(Error::Empty("graph has no nodes".into()));
        }
        let d0 = config.input_dim.unwrap_or(config.d);
        let hidden = config.hidden_width.unwrap_or(DEFAULT_GCN_HIDDEN);
        let g0 = DenseMatrix::glorot_uniform(n, d0, rng);
        let mut gcn_weights = Vec::with_capacity(config.encoder_layers);
        let mut fan_in = d0;
        for k in 0..config.encoder_layers {
            let width = if k + 1 == config.encoder_layers { config.d } else { hidden };
            gcn_weights.push(DenseMatrix::glorot_uniform(fan_in, width, rng));
            fan_in = width;
        }
        let compressor = CompressorParams::new(config.d, config.s, config.t, config.d, config.flavor, rng)?;
        Ok(McneTModel {
            g0,
            gcn_weights,
            a_hat: normalize_adjacency(g),
            compressor,
            beta: T::lit(config.beta),
            reconstruction_gradient: config.reconstruction_gradient,
        })
    }

    pub fn node_count(&self) -> usize {
        self.g0.rows()
    }

    /// `G_0`, the GCN weights, then compressor weight, bias and basis.
    pub fn tensors(&self) -> Vec<&DenseMatrix<T>> {
        let mut out = vec![&self.g0];
        out.extend(self.gcn_weights.iter());
        out.extend(self.compressor.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix<T>> {
        let mut out = vec![&mut self.g0];
        out.extend(self.gcn_weights.iter_mut());
        out.extend(self.compressor.tensors_mut());
        out
    }

    fn gcn_trace(&self) -> Result<GcnTrace<T>> {
        let mut propagated = Vec::with_capacity(self.gcn_weights.len());
        let mut activations = vec![self.g0.clone()];
        for w in &self.gcn_weights {
            let m = self.a_hat.matmul(activations.last().expect("non-empty"))?;
            activations.push(m.matmul(w)?.map(|v| v.tanh()));
            propagated.push(m);
        }
        Ok(GcnTrace {
            propagated,
            activations,
        })
    }

    /// Latent rows `G_L` for the whole graph.
    pub fn gcn_forward(&self) -> Result<DenseMatrix<T>> {
        Ok(self.gcn_trace()?.activations.pop().expect("non-empty"))
    }

    fn check_triplets(&self, triplets: &[Triplet]) -> Result<()> {
        let n = self.node_count();
        for t in triplets {
            for id in [t.anchor, t.positive, t.negative] {
                if id >= n {
                    return Err(Error::NodeOutOfRange { id, count: n });
                }
            }
        }
        Ok(())
    }

    /// Combined loss of a batch with explicit noise over [`batch_nodes`] and
    /// gradients in [`tensors`](Self::tensors) order.
    pub fn loss_and_grad(
        &self,
        triplets: &[Triplet],
        noise: Option<&DenseMatrix<T>>,
    ) -> Result<(LossParts<T>, Vec<DenseMatrix<T>>)> {
        self.loss_and_grad_inner(triplets, noise, None)
    }

    /// Combined loss with the reconstruction target replaced by rows of
    /// `target` (`|V| × d`). Its gradient is what the detached mode follows.
    pub fn loss_against(
        &self,
        triplets: &[Triplet],
        noise: Option<&DenseMatrix<T>>,
        target: &DenseMatrix<T>,
    ) -> Result<LossParts<T>> {
        Ok(self.loss_and_grad_inner(triplets, noise, Some(target))?.0)
    }

    fn loss_and_grad_inner(
        &self,
        triplets: &[Triplet],
        noise: Option<&DenseMatrix<T>>,
        frozen: Option<&DenseMatrix<T>>,
    ) -> Result<(LossParts<T>, Vec<DenseMatrix<T>>)> {
        if triplets.is_empty() {
            return Err(Error::Empty("no triplets in batch".into()));
        }
        self.check_triplets(triplets)?;
        let trace = self.gcn_trace()?;
        let latent_all = trace.activations.last().expect("non-empty");
        let nodes = batch_nodes(triplets);
        let slot: BTreeMap<usize, usize> = nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let latent = latent_all.select_rows(&nodes);
        let fwd = self.compressor.forward_batch(&latent, noise)?;
        let g_hat = &fwd.output;

        let m = T::from_count(triplets.len());
        let mut topology = T::zero();
        let mut d_ghat = DenseMatrix::zeros(g_hat.rows(), g_hat.cols());
        for t in triplets {
            let (a, p, q) = (slot[&t.anchor], slot[&t.positive], slot[&t.negative]);
            let (ra, rp, rq) = (g_hat.row(a), g_hat.row(p), g_hat.row(q));
            topology += loss_topology(ra, rp, rq);
            let (da, dp, dq) = loss_topology_grad(ra, rp, rq);
            for (row, grad) in [(a, da), (p, dp), (q, dq)] {
                for (o, v) in d_ghat.row_mut(row).iter_mut().zip(grad) {
                    *o += v / m;
                }
            }
        }
        topology /= m;

        let mut anchors: Vec<usize> = triplets.iter().map(|t| slot[&t.anchor]).collect();
        anchors.sort_unstable();
        anchors.dedup();
        let g_anchor = match frozen {
            Some(target) => {
                if target.shape() != latent_all.shape() {
                    return Err(Error::shape("reconstruction target", target.shape(), latent_all.shape()));
                }
                let ids: Vec<usize> = anchors.iter().map(|&r| nodes[r]).collect();
                target.select_rows(&ids)
            }
            None => latent.select_rows(&anchors),
        };
        let mode = if frozen.is_some() {
            ReconstructionGradient::DetachedTarget
        } else {
            self.reconstruction_gradient
        };
        let ghat_anchor = g_hat.select_rows(&anchors);
        let reconstruction = mse_loss(&ghat_anchor, &g_anchor)?;
        let d_rec = mse_grad(&ghat_anchor, &g_anchor)?;

        let mut d_rec_hat = DenseMatrix::zeros(g_hat.rows(), g_hat.cols());
        for (r, &row) in anchors.iter().enumerate() {
            for (o, &v) in d_rec_hat.row_mut(row).iter_mut().zip(d_rec.row(r)) {
                *o = self.beta * v;
            }
        }
        let (cg, d_latent) = match mode {
            ReconstructionGradient::CompressorOnly => {
                let (mut cg, d_latent) = self.compressor.backward_batch(&fwd, &d_ghat)?;
                let (cg_rec, _) = self.compressor.backward_batch(&fwd, &d_rec_hat)?;
                cg.weight.add_scaled(T::one(), &cg_rec.weight)?;
                cg.bias.add_scaled(T::one(), &cg_rec.bias)?;
                cg.basis.add_scaled(T::one(), &cg_rec.basis)?;
                (cg, d_latent)
            }
            ReconstructionGradient::Joint | ReconstructionGradient::DetachedTarget => {
                d_ghat.add_scaled(T::one(), &d_rec_hat)?;
                let (cg, mut d_latent) = self.compressor.backward_batch(&fwd, &d_ghat)?;
                if mode == ReconstructionGradient::Joint {
                    for (r, &row) in anchors.iter().enumerate() {
                        for (o, &v) in d_latent.row_mut(row).iter_mut().zip(d_rec.row(r)) {
                            *o -= self.beta * v;
                        }
                    }
                }
                (cg, d_latent)
            }
        };

        let mut d_act = DenseMatrix::zeros(latent_all.rows(), latent_all.cols());
        for (i, &v) in nodes.iter().enumerate() {
            d_act.row_mut(v).copy_from_slice(d_latent.row(i));
        }
        let mut d_weights = Vec::with_capacity(self.gcn_weights.len());
        for (k, w) in self.gcn_weights.iter().enumerate().rev() {
            let d_pre = tanh_backward_from_output(&trace.activations[k + 1], &d_act)?;
            d_weights.push(trace.propagated[k].t_matmul(&d_pre)?);
            // Â is symmetric
            d_act = self.a_hat.matmul(&d_pre.matmul_t(w)?)?;
        }
        d_weights.reverse();

        let mut grads = Vec::with_capacity(self.gcn_weights.len() + 4);
        grads.push(d_act);
        grads.extend(d_weights);
        grads.extend([cg.weight, cg.bias, cg.basis]);
        let parts = LossParts {
            topology,
            reconstruction,
            combined: topology + self.beta * reconstruction,
        };
        Ok((parts, grads))
    }

    /// Hard codes for every node from the noise-free compressor.
    pub fn hard_codes(&self) -> Result<Vec<usize>> {
        self.compressor.hard_codes(&self.gcn_forward()?)
    }

    /// Decoder output under hard one-hot selections.
    pub fn hard_forward(&self) -> Result<DenseMatrix<T>> {
        let codes = self.hard_codes()?;
        let (s, t, d) = (self.compressor.s, self.compressor.t, self.compressor.output_dim());
        let mut out = Vec::with_capacity(self.node_count() * d);
        let mut one_hot = vec![T::zero(); s];
        for node_codes in codes.chunks(t) {
            let mut selected = Vec::with_capacity(t);
            for &c in node_codes {
                one_hot[c] = T::one();
                selected.push(select_basis(&one_hot, &self.compressor.basis)?);
                one_hot[c] = T::zero();
            }
            out.extend(compose(&selected)?);
        }
        DenseMatrix::from_vec(self.node_count(), d, out)
    }

    pub fn export_codebook(&self) -> Result<Codebook<T>> {
        Codebook::new(
            self.compressor.basis.clone(),
            self.hard_codes()?,
            self.compressor.t,
            self.compressor.flavor,
        )
    }
}

/// Combined loss of a batch with freshly sampled Gumbel noise.
pub fn loss_combined<T: Scalar, R: Rng + ?Sized>(
    triplets: &[Triplet],
    model: &McneTModel<T>,
    rng: &mut R,
) -> Result<LossParts<T>> {
    let rows = batch_nodes(triplets).len();
    let noise = sample_standard_gumbel::<T, _>(rows, model.compressor.s * model.compressor.t, rng);
    Ok(model.loss_and_grad(triplets, Some(&noise))?.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McneTEpochLog {
    pub epoch: usize,
    pub topology_loss: f64,
    pub reconstruction_loss: f64,
    pub combined_loss: f64,
    pub tau: f64,
}

#[derive(Clone, Debug)]
pub struct McneTRun<T> {
    pub codebook: Codebook<T>,
    /// Reconstructed rows of the codebook.
    pub embeddings: EmbeddingTable<T>,
    /// Snapshot with the lowest training loss.
    pub model: McneTModel<T>,
    pub log: Vec<McneTEpochLog>,
    /// `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub best_loss: Option<f64>,
    pub skipped_isolated: usize,
    pub skipped_saturated: usize,
}

/// Train on the graph and export the lowest-training-loss snapshot.
pub fn train_mcne_t<T: Scalar>(g: &Graph, config: &TrainConfig) -> Result<McneTRun<T>> {
    config.validate()?;
    if g.edge_count() == 0 {
        return Err(Error::Config("end-to-end training needs at least one edge".into()));
    }
    let n = g.node_count();
    if (0..n).all(|v| g.degree(v) + 1 >= n) {
        return Err(Error::Config("complete graph has no negative samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = McneTModel::<T>::new(g, config, &mut rng)?;
    anneal_tau(&mut model.compressor, &config.tau, 0);
    let mut best: (McneTModel<T>, Option<usize>, Option<f64>) = (model.clone(), None, None);
    let mut opt = OptimizerState::for_params(&model.tensors(), AdamConfig::with_learning_rate(config.lr));
    let st = config.s * config.t;
    let mut anchors: Vec<usize> = (0..n).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let (mut skipped_isolated, mut skipped_saturated) = (0, 0);

    for epoch in 0..config.epochs {
        let tau = anneal_tau(&mut model.compressor, &config.tau, epoch).as_f64();
        anchors.shuffle(&mut rng);
        let (mut top, mut rec, mut comb, mut count) = (0.0, 0.0, 0.0, 0usize);
        for batch in anchors.chunks(config.batch_size) {
            let sample = sample_triplets(g, batch, &mut rng)?;
            skipped_isolated += sample.skipped_isolated;
            skipped_saturated += sample.skipped_saturated;
            if sample.triplets.is_empty() {
                continue;
            }
            let rows = batch_nodes(&sample.triplets).len();
            let noise = sample_standard_gumbel::<T, _>(rows, st, &mut rng);
            let (parts, grads) = model.loss_and_grad(&sample.triplets, Some(&noise))?;
            let w = sample.triplets.len() as f64;
            top += parts.topology.as_f64() * w;
            rec += parts.reconstruction.as_f64() * w;
            comb += parts.combined.as_f64() * w;
            count += sample.triplets.len();
            let grad_refs: Vec<&DenseMatrix<T>> = grads.iter().collect();
            adam_update(&mut model.tensors_mut(), &grad_refs, &mut opt)?;
        }
        let c = count.max(1) as f64;
        let entry = McneTEpochLog {
            epoch,
            topology_loss: top / c,
            reconstruction_loss: rec / c,
            combined_loss: comb / c,
            tau,
        };
        if !entry.combined_loss.is_finite() {
            return Err(Error::NonFinite(format!("loss at epoch {epoch}")));
        }
        log::debug!(
            "mcne_t epoch {epoch}: topo {:.6} rec {:.6} total {:.6} tau {tau}",
            entry.topology_loss,
            entry.reconstruction_loss,
            entry.combined_loss
        );
        log.push(entry);
        if best.2.is_none_or(|b| entry.combined_loss < b) {
            best = (model.clone(), Some(epoch), Some(entry.combined_loss));
        }
    }
    if skipped_isolated + skipped_saturated > 0 {
        log::warn!("skipped {skipped_isolated} isolated and {skipped_saturated} saturated anchors");
    }

    let (model, best_epoch, best_loss) = best;
    let codebook = model.export_codebook()?;
    let embeddings = EmbeddingTable::new(codebook.reconstruct_all())?;
    Ok(McneTRun {
        codebook,
        embeddings,
        model,
        log,
        best_epoch,
        best_loss,
        skipped_isolated,
        skipped_saturated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compressor::CodeFlavor;
    use crate::eval::cosine_similarity;
    use crate::graph::generate_sbm;
    use crate::math::{flatten, grad_check, unflatten};

    fn toy_config(d: usize, s: usize, t: usize) -> TrainConfig {
        TrainConfig {
            s,
            t,
            d,
            hidden_width: Some(4),
            batch_size: 8,
            epochs: 0,
            ..TrainConfig::default()
        }
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn edgeless_single_layer_is_tanh_of_product() {
        let g = Graph::edgeless(3);
        let cfg = TrainConfig {
            encoder_layers: 1,
            ..toy_config(2, 2, 1)
        };
        let m = McneTModel::<f64>::new(&g, &cfg, &mut rng(0)).unwrap();
        let want = m.g0.matmul(&m.gcn_weights[0]).unwrap().map(f64::tanh);
        assert_eq!(m.gcn_forward().unwrap(), want);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        let mut m = McneTModel::<f64>::new(&g, &toy_config(2, 2, 1), &mut rng(0)).unwrap();
        for w in &mut m.gcn_weights {
            w.scale(0.0);
        }
        assert!(m.gcn_forward().unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn propagation_depends_on_edges() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2)]).unwrap();
        let m = McneTModel::<f64>::new(&g, &toy_config(3, 4, 2), &mut rng(3)).unwrap();
        let before = m.gcn_forward().unwrap();
        let mut m2 = m.clone();
        m2.a_hat = normalize_adjacency(&Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap());
        assert_ne!(before, m2.gcn_forward().unwrap());
    }

    #[test]
    fn path_middle_is_saturated() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let s = sample_triplets(&g, &[1], &mut rng(0)).unwrap();
        assert!(s.triplets.is_empty());
        assert_eq!(s.skipped_saturated, 1);
    }

    #[test]
    fn star_centre_forced_negative() {
        let g = Graph::from_edges(7, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]).unwrap();
        let mut r = rng(1);
        for _ in 0..20 {
            let s = sample_triplets(&g, &[0, 6], &mut r).unwrap();
            assert_eq!(s.triplets.len(), 1);
            assert_eq!(s.triplets[0].negative, 6);
            assert_eq!(s.skipped_isolated, 1);
        }
    }

    #[test]
    fn triplets_respect_adjacency() {
        let (g, _) = generate_sbm(&[15, 15], 0.4, 0.05, 2).unwrap();
        let batch: Vec<usize> = (0..30).collect();
        let s = sample_triplets(&g, &batch, &mut rng(5)).unwrap();
        for t in &s.triplets {
            assert!(g.has_edge(t.anchor, t.positive));
            assert!(!g.has_edge(t.anchor, t.negative));
            assert_ne!(t.anchor, t.negative);
        }
        assert_eq!(s.triplets.len() + s.skipped_isolated + s.skipped_saturated, 30);
    }

    #[test]
    fn topology_loss_examples() {
        assert!((loss_topology(&[0.0f64, 0.0], &[1.0, 2.0], &[3.0, 4.0]) - std::f64::consts::LN_2).abs() < 1e-15);
        let v: f64 = loss_topology(&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]);
        assert!((v - 0.313_261_687_518_222_8).abs() < 1e-12);
    }

    #[test]
    fn topology_gradient_matches_finite_differences() {
        let a = [0.4, -1.2, 0.3];
        let p = [0.9, 0.1, -0.5];
        let q = [-0.2, 0.7, 1.1];
        let (da, dp, dq) = loss_topology_grad(&a, &p, &q);
        let analytic: Vec<f64> = da.into_iter().chain(dp).chain(dq).collect();
        let point: Vec<f64> = a.iter().chain(&p).chain(&q).copied().collect();
        let f = |x: &[f64]| loss_topology(&x[0..3], &x[3..6], &x[6..9]);
        assert!(grad_check(f, &analytic, &point, 1e-5).unwrap() < 1e-4);
    }

    fn toy_batch() -> (Graph, Vec<Triplet>) {
        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (2, 3)]).unwrap();
        let triplets = vec![
            Triplet { anchor: 0, positive: 1, negative: 4 },
            Triplet { anchor: 3, positive: 4, negative: 1 },
            Triplet { anchor: 5, positive: 4, negative: 0 },
        ];
        (g, triplets)
    }

    fn full_grad_check(flavor: CodeFlavor, s: usize, t: usize, mode: ReconstructionGradient) {
        let (g, triplets) = toy_batch();
        let cfg = TrainConfig {
            flavor,
            reconstruction_gradient: mode,
            ..toy_config(3, s, t)
        };
        let mut model = McneTModel::<f64>::new(&g, &cfg, &mut rng(11)).unwrap();
        model.compressor.tau = 0.7;
        let rows = batch_nodes(&triplets).len();
        let noise = sample_standard_gumbel::<f64, _>(rows, s * t, &mut rng(12));
        let (_, grads) = model.loss_and_grad(&triplets, Some(&noise)).unwrap();
        let analytic = flatten(&grads.iter().collect::<Vec<_>>());
        let point = flatten(&model.tensors());
        let frozen = model.gcn_forward().unwrap();
        let f = |p: &[f64]| {
            let mut m = model.clone();
            unflatten(&mut m.tensors_mut(), p).unwrap();
            match mode {
                ReconstructionGradient::Joint => m.loss_and_grad(&triplets, Some(&noise)).unwrap().0.combined,
                ReconstructionGradient::DetachedTarget => {
                    m.loss_against(&triplets, Some(&noise), &frozen).unwrap().combined
                }
                ReconstructionGradient::CompressorOnly => unreachable!("checked against the joint gradient"),
            }
        };
        let err = grad_check(f, &analytic, &point, 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn combined_gradient_matches_finite_differences() {
        full_grad_check(CodeFlavor::MultiHot, 4, 2, ReconstructionGradient::Joint);
    }

    #[test]
    fn combined_gradient_matches_finite_differences_kd() {
        full_grad_check(CodeFlavor::Kd { block_size: 2, blocks: 2 }, 4, 2, ReconstructionGradient::Joint);
    }

    #[test]
    fn detached_gradient_matches_frozen_target_surrogate() {
        full_grad_check(CodeFlavor::MultiHot, 4, 2, ReconstructionGradient::DetachedTarget);
        full_grad_check(CodeFlavor::Kd { block_size: 2, blocks: 2 }, 4, 2, ReconstructionGradient::DetachedTarget);
    }

    #[test]
    fn detached_and_joint_agree_on_loss_value() {
        let (g, triplets) = toy_batch();
        let mut model = McneTModel::<f64>::new(&g, &toy_config(3, 4, 2), &mut rng(2)).unwrap();
        let a = model.loss_and_grad(&triplets, None).unwrap().0;
        let frozen = model.gcn_forward().unwrap();
        assert_eq!(model.loss_against(&triplets, None, &frozen).unwrap(), a);
        model.reconstruction_gradient = ReconstructionGradient::Joint;
        assert_eq!(model.loss_and_grad(&triplets, None).unwrap().0, a);
    }

    #[test]
    fn compressor_only_splits_joint_gradient() {
        let (g, triplets) = toy_batch();
        let build = |mode, beta| {
            let cfg = TrainConfig {
                reconstruction_gradient: mode,
                beta,
                ..toy_config(3, 4, 2)
            };
            McneTModel::<f64>::new(&g, &cfg, &mut rng(7)).unwrap()
        };
        let noise = sample_standard_gumbel::<f64, _>(batch_nodes(&triplets).len(), 8, &mut rng(8));
        let split = build(ReconstructionGradient::CompressorOnly, 0.3).loss_and_grad(&triplets, Some(&noise)).unwrap();
        let joint = build(ReconstructionGradient::Joint, 0.3).loss_and_grad(&triplets, Some(&noise)).unwrap();
        let topo = build(ReconstructionGradient::Joint, 0.0).loss_and_grad(&triplets, Some(&noise)).unwrap();
        assert_eq!(split.0, joint.0);
        let close = |a: &DenseMatrix<f64>, b: &DenseMatrix<f64>| {
            a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + y.abs()))
        };
        let n_gcn = 1 + 2;
        // GCN tensors follow the topology term, compressor tensors the full loss
        for k in 0..n_gcn {
            assert!(close(&split.1[k], &topo.1[k]), "tensor {k}");
        }
        for k in n_gcn..split.1.len() {
            assert!(close(&split.1[k], &joint.1[k]), "tensor {k}");
        }
    }

    #[test]
    fn beta_zero_is_topology_only() {
        let (g, triplets) = toy_batch();
        let cfg = TrainConfig {
            beta: 0.0,
            ..toy_config(3, 4, 2)
        };
        let model = McneTModel::<f64>::new(&g, &cfg, &mut rng(1)).unwrap();
        let parts = model.loss_and_grad(&triplets, None).unwrap().0;
        assert_eq!(parts.combined, parts.topology);
        assert!(parts.reconstruction > 0.0);
    }

    #[test]
    fn epochs_zero_exports_initialization() {
        let (g, _) = toy_batch();
        let cfg = toy_config(3, 4, 2);
        let run = train_mcne_t::<f64>(&g, &cfg).unwrap();
        let mut r = rng(cfg.seed);
        let mut init = McneTModel::<f64>::new(&g, &cfg, &mut r).unwrap();
        init.compressor.tau = 1.0;
        assert_eq!(run.model, init);
        assert!(run.log.is_empty());
        assert_eq!(run.best_epoch, None);
        assert_eq!(run.embeddings.matrix, run.model.hard_forward().unwrap());
    }

    #[test]
    fn rejects_bad_graphs() {
        let cfg = toy_config(3, 4, 2);
        assert!(train_mcne_t::<f64>(&Graph::edgeless(4), &cfg).is_err());
        let k3 = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert!(train_mcne_t::<f64>(&k3, &cfg).is_err());
    }

    #[test]
    fn two_cliques_separate() {
        let (g, labels) = generate_sbm(&[10, 10], 1.0, 0.0, 0).unwrap();
        let cfg = TrainConfig {
            s: 8,
            t: 2,
            d: 8,
            hidden_width: Some(16),
            lr: 0.01,
            batch_size: 20,
            epochs: 150,
            ..TrainConfig::default()
        };
        let run = train_mcne_t::<f64>(&g, &cfg).unwrap();
        let best = run.best_loss.unwrap();
        assert!(run.log.iter().all(|e| best <= e.combined_loss));
        let e = &run.embeddings.matrix;
        assert_eq!(e, &run.model.hard_forward().unwrap());
        let (mut intra, mut inter, mut ni, mut nx) = (0.0, 0.0, 0, 0);
        for a in 0..20 {
            for b in a + 1..20 {
                let c = cosine_similarity(e.row(a), e.row(b));
                if labels.labels_of(a) == labels.labels_of(b) {
                    intra += c;
                    ni += 1;
                } else {
                    inter += c;
                    nx += 1;
                }
            }
        }
        let (intra, inter) = (intra / ni as f64, inter / nx as f64);
        assert!(intra > inter, "intra {intra} inter {inter}");
    }
}

//! Compression of a pre-learned embedding table.
//!
//! Each embedding row passes through a tanh MLP encoder, the Gumbel
//! compressor and the sum decoder; the model is trained to reconstruct the
//! row. The parameters with the lowest validation loss are kept and exported
//! as a [`Codebook`].

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compressor::{
    anneal_tau, CodeFlavor, Codebook, CompressorForward, CompressorParams, SoftAssignment, TauSchedule,
};
use crate::error::{Error, Result};
use crate::math::{
    adam_update, affine, mse_grad, mse_loss, sample_standard_gumbel, AdamConfig, DenseMatrix, OptimizerState,
};
use crate::math::ops::tanh_backward_from_output;
use crate::pretrain::EmbeddingTable;
use crate::scalar::Scalar;

/// Hyperparameters shared by both compact-embedding models.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Number of shared basis vectors.
    pub s: usize,
    /// Codes per node.
    pub t: usize,
    /// Embedding dimension (width of the basis vectors).
    pub d: usize,
    pub flavor: CodeFlavor,
    /// Encoder depth (MLP layers or GCN layers).
    pub encoder_layers: usize,
    /// Hidden width; `None` picks the model default (`s/2` for the MLP encoder, 1000 for the GCN).
    pub hidden_width: Option<usize>,
    /// GCN input width; `None` means `d`.
    pub input_dim: Option<usize>,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub tau: TauSchedule,
    /// Weight of the reconstruction term in the end-to-end loss.
    pub beta: f64,
    pub validation_fraction: f64,
    /// Which parameters the end-to-end reconstruction term trains.
    pub reconstruction_gradient: ReconstructionGradient,
    pub seed: u64,
}

/// Gradient routing of the end-to-end reconstruction term `‖g − ĝ‖²`, where
/// `g` is the GCN latent and `ĝ` the decoder output computed from it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReconstructionGradient {
    /// Only the compressor and basis receive it; the GCN learns from the
    /// topology term alone.
    #[default]
    CompressorOnly,
    /// `g` is a constant target, but the path through `ĝ` reaches the GCN.
    DetachedTarget,
    /// Full gradient through both `g` and `ĝ`.
    Joint,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            s: 128,
            t: 8,
            d: 256,
            flavor: CodeFlavor::MultiHot,
            encoder_layers: 2,
            hidden_width: None,
            input_dim: None,
            lr: 0.001,
            batch_size: 128,
            epochs: 500,
            tau: TauSchedule::default(),
            beta: 0.3,
            validation_fraction: 0.05,
            reconstruction_gradient: ReconstructionGradient::CompressorOnly,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.flavor.validate(self.s, self.t)?;
        let counts = [
            ("d", self.d),
            ("encoder_layers", self.encoder_layers),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be ≥ 1")));
            }
        }
        if self.hidden_width == Some(0) || self.input_dim == Some(0) {
            return Err(Error::Config("layer widths must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.lr > 0.0) || !(self.beta >= 0.0) {
            return Err(Error::Config("lr must be > 0 and beta ≥ 0".into()));
        }
        if !(self.tau.min > 0.0 && self.tau.min <= self.tau.init) {
            return Err(Error::Config("tau schedule needs 0 < tau_min ≤ tau_init".into()));
        }
        Ok(())
    }

    /// Latent width feeding the compressor in the MLP encoder: `s/2` (at least 1).
    pub fn latent_dim(&self) -> usize {
        (self.s / 2).max(1)
    }

    /// Output widths of the MLP encoder layers.
    pub fn encoder_widths(&self) -> Vec<usize> {
        let latent = self.latent_dim();
        let l = self.encoder_layers;
        if l == 2 {
            return vec![self.hidden_width.unwrap_or(latent), latent];
        }
        (1..=l)
            .map(|k| {
                if k == l {
                    latent
                } else {
                    let ratio = latent as f64 / self.d as f64;
                    ((self.d as f64) * ratio.powf(k as f64 / l as f64)).round().max(1.0) as usize
                }
            })
            .collect()
    }
}

/// One dense layer `x·W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub weight: DenseMatrix<T>,
    pub bias: DenseMatrix<T>,
}

/// Per-epoch training record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McnePModel<T> {
    pub encoder: Vec<Layer<T>>,
    pub compressor: CompressorParams<T>,
}

/// Encoder activations kept for the backward pass.
struct EncoderTrace<T> {
    /// `inputs[k]` feeds layer `k`; the last entry is the latent output.
    activations: Vec<DenseMatrix<T>>,
}

impl<T: Scalar> McnePModel<T> {
    pub fn new<R: Rng + ?Sized>(config: &TrainConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut encoder = Vec::with_capacity(config.encoder_layers);
        let mut fan_in = config.d;
        for width in config.encoder_widths() {
            encoder.push(Layer {
                weight: DenseMatrix::glorot_uniform(fan_in, width, rng),
                bias: DenseMatrix::zeros(1, width),
            });
            fan_in = width;
        }
        let compressor = CompressorParams::new(fan_in, config.s, config.t, config.d, config.flavor, rng)?;
        Ok(McnePModel { encoder, compressor })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.first().map_or(self.compressor.latent_dim(), |l| l.weight.rows())
    }

    pub fn tensors(&self) -> Vec<&DenseMatrix<T>> {
        let mut out: Vec<&DenseMatrix<T>> = Vec::new();
        for layer in &self.encoder {
            out.push(&layer.weight);
            out.push(&layer.bias);
        }
        out.extend(self.compressor.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix<T>> {
        let mut out: Vec<&mut DenseMatrix<T>> = Vec::new();
        for layer in &mut self.encoder {
            out.push(&mut layer.weight);
            out.push(&mut layer.bias);
        }
        out.extend(self.compressor.tensors_mut());
        out
    }

    fn encode_trace(&self, x: &DenseMatrix<T>) -> Result<EncoderTrace<T>> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("encoder input", x.shape(), (x.rows(), self.input_dim())));
        }
        let mut activations = vec![x.clone()];
        for layer in &self.encoder {
            let pre = affine(activations.last().expect("non-empty"), &layer.weight, layer.bias.data())?;
            activations.push(pre.map(|v| v.tanh()));
        }
        Ok(EncoderTrace { activations })
    }

    /// Latent vectors for a batch of rows.
    pub fn encode_batch(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        Ok(self.encode_trace(x)?.activations.pop().expect("non-empty"))
    }

    /// Latent vector of one row.
    pub fn encode(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.encode_batch(&DenseMatrix::row_vector(x))?.into_data())
    }

    /// Stochastic soft forward of one row at the compressor's current temperature.
    pub fn forward<R: Rng + ?Sized>(&self, x: &[T], rng: &mut R) -> Result<(Vec<T>, SoftAssignment<T>)> {
        let (s, t) = (self.compressor.s, self.compressor.t);
        let noise = sample_standard_gumbel::<T, _>(1, s * t, rng);
        let latent = self.encode_batch(&DenseMatrix::row_vector(x))?;
        let fwd = self.compressor.forward_batch(&latent, Some(&noise))?;
        let y = DenseMatrix::from_vec(t, s, fwd.pre.data().iter().map(|&z| crate::math::softplus(z)).collect())?;
        let soft = SoftAssignment {
            h: DenseMatrix::from_vec(t, s, fwd.h.into_data())?,
            y,
            noise: DenseMatrix::from_vec(t, s, noise.into_data())?,
        };
        Ok((fwd.output.into_data(), soft))
    }

    /// Reconstructions for a batch with explicit noise (`None` = noise-free).
    pub fn reconstruct_soft(&self, x: &DenseMatrix<T>, noise: Option<&DenseMatrix<T>>) -> Result<DenseMatrix<T>> {
        let latent = self.encode_batch(x)?;
        Ok(self.compressor.forward_batch(&latent, noise)?.output)
    }

    /// Mean squared row reconstruction error and gradients, in [`tensors`](Self::tensors) order.
    pub fn loss_and_grad(
        &self,
        x: &DenseMatrix<T>,
        noise: Option<&DenseMatrix<T>>,
    ) -> Result<(T, Vec<DenseMatrix<T>>)> {
        let trace = self.encode_trace(x)?;
        let latent = trace.activations.last().expect("non-empty");
        let fwd: CompressorForward<T> = self.compressor.forward_batch(latent, noise)?;
        let loss = mse_loss(&fwd.output, x)?;
        let d_out = mse_grad(&fwd.output, x)?;
        let (cg, mut d_act) = self.compressor.backward_batch(&fwd, &d_out)?;

        let mut layer_grads = Vec::with_capacity(self.encoder.len());
        for (k, layer) in self.encoder.iter().enumerate().rev() {
            let d_pre = tanh_backward_from_output(&trace.activations[k + 1], &d_act)?;
            let input = &trace.activations[k];
            let d_w = input.t_matmul(&d_pre)?;
            let d_b = d_pre.col_sums();
            d_act = d_pre.matmul_t(&layer.weight)?;
            layer_grads.push((d_w, d_b));
        }
        layer_grads.reverse();
        let mut grads = Vec::with_capacity(2 * self.encoder.len() + 3);
        for (w, b) in layer_grads {
            grads.push(w);
            grads.push(b);
        }
        grads.extend([cg.weight, cg.bias, cg.basis]);
        Ok((loss, grads))
    }

    /// Hard codes for every row (noise-free argmax).
    pub fn export_codebook(&self, table: &EmbeddingTable<T>) -> Result<Codebook<T>> {
        let latent = self.encode_batch(&table.matrix)?;
        let codes = self.compressor.hard_codes(&latent)?;
        Codebook::new(self.compressor.basis.clone(), codes, self.compressor.t, self.compressor.flavor)
    }
}

/// Outcome of a compression run.
#[derive(Clone, Debug)]
pub struct McnePRun<T> {
    pub codebook: Codebook<T>,
    /// Best (lowest validation loss) parameters.
    pub model: McnePModel<T>,
    pub log: Vec<EpochLog>,
    /// Validation loss of the initial parameters.
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    /// Epoch of the retained snapshot; `None` if the initialization was never beaten.
    pub best_epoch: Option<usize>,
    pub validation_rows: Vec<usize>,
}

/// Split row ids into (train, validation).
fn split_rows<R: Rng + ?Sized>(n: usize, fraction: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let mut n_val = (fraction * n as f64).floor() as usize;
    if fraction > 0.0 && n_val == 0 && n > 1 {
        n_val = 1;
    }
    let val = ids.split_off(n - n_val);
    (ids, val)
}

/// Noise-free soft reconstruction loss at the current temperature.
fn eval_loss<T: Scalar>(model: &McnePModel<T>, rows: &DenseMatrix<T>) -> Result<f64> {
    let recon = model.reconstruct_soft(rows, None)?;
    Ok(mse_loss(&recon, rows)?.as_f64())
}

/// Train the compression model on an embedding table and export its best snapshot.
pub fn train_mcne_p<T: Scalar>(table: &EmbeddingTable<T>, config: &TrainConfig) -> Result<McnePRun<T>> {
    config.validate()?;
    if table.node_count() == 0 {
        return Err(Error::Empty("embedding table has no rows".into()));
    }
    if table.dim() != config.d {
        return Err(Error::Config(format!(
            "embedding dim {} does not match configured d = {}",
            table.dim(),
            config.d
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = McnePModel::<T>::new(config, &mut rng)?;
    let (mut train_rows, val_rows) = split_rows(table.node_count(), config.validation_fraction, &mut rng);
    let val_matrix = if val_rows.is_empty() {
        table.matrix.select_rows(&train_rows)
    } else {
        table.matrix.select_rows(&val_rows)
    };

    anneal_tau(&mut model.compressor, &config.tau, 0);
    let initial_val_loss = eval_loss(&model, &val_matrix)?;
    let mut best = (model.clone(), initial_val_loss, None);

    let mut opt = OptimizerState::for_params(&model.tensors(), AdamConfig::with_learning_rate(config.lr));
    let (s, t) = (config.s, config.t);
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let tau = anneal_tau(&mut model.compressor, &config.tau, epoch).as_f64();
        train_rows.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in train_rows.chunks(config.batch_size) {
            let x = table.matrix.select_rows(batch);
            let noise = sample_standard_gumbel::<T, _>(batch.len(), s * t, &mut rng);
            let (loss, grads) = model.loss_and_grad(&x, Some(&noise))?;
            total += loss.as_f64() * batch.len() as f64;
            let grad_refs: Vec<&DenseMatrix<T>> = grads.iter().collect();
            adam_update(&mut model.tensors_mut(), &grad_refs, &mut opt)?;
        }
        let train_loss = total / train_rows.len().max(1) as f64;
        let val_loss = eval_loss(&model, &val_matrix)?;
        if !val_loss.is_finite() || !train_loss.is_finite() {
            return Err(Error::NonFinite(format!("loss at epoch {epoch}")));
        }
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            tau,
        });
        if val_loss < best.1 {
            best = (model.clone(), val_loss, Some(epoch));
        }
        log::debug!("mcne_p epoch {epoch}: train {train_loss:.6} val {val_loss:.6} tau {tau}");
    }

    let (model, best_val_loss, best_epoch) = best;
    let codebook = model.export_codebook(table)?;
    Ok(McnePRun {
        codebook,
        model,
        log,
        initial_val_loss,
        best_val_loss,
        best_epoch,
        validation_rows: val_rows,
    })
}

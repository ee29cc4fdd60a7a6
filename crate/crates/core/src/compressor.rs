//! Multi-hot compressor.
//!
//! A latent vector is mapped to `t` positive categorical weight rows over `s`
//! shared basis vectors. During training each row is relaxed with Gumbel noise
//! and a temperature softmax; the selected (soft) basis vectors are summed to
//! reconstruct the input. At export the relaxation is replaced by an argmax,
//! yielding `t` integer codes per node that index into the shared basis.
//!
//! The KD-coding variant restricts code position `j` to block `j` of `K`
//! consecutive basis vectors.

use std::fmt;
use std::ops::Range;

use num_bigint::BigUint;
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::ops::{log_softplus, log_softplus_derivative, tau_softmax_backward, tau_softmax_in_place};
use crate::math::{affine, affine_backward, sample_standard_gumbel, softplus, DenseMatrix};
use crate::scalar::Scalar;

/// Code layout of a compressed table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodeFlavor {
    /// Any of the `s` basis vectors may appear at any code position, duplicates allowed.
    MultiHot,
    /// `blocks` blocks of `block_size` basis vectors; position `j` draws from block `j`.
    Kd { block_size: usize, blocks: usize },
}

impl CodeFlavor {
    /// Check that the flavor is consistent with `s` basis vectors and `t` codes per node.
    pub fn validate(&self, s: usize, t: usize) -> Result<()> {
        if s == 0 || t == 0 {
            return Err(Error::Config(format!("need s ≥ 1 and t ≥ 1, got s={s}, t={t}")));
        }
        match *self {
            CodeFlavor::MultiHot => Ok(()),
            CodeFlavor::Kd { block_size, blocks } => {
                if block_size * blocks != s {
                    Err(Error::Config(format!(
                        "KD coding needs s = K·D, got s={s}, K={block_size}, D={blocks}"
                    )))
                } else if blocks != t {
                    Err(Error::Config(format!(
                        "KD coding needs t = D, got t={t}, D={blocks}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Basis indices code position `row` may select.
    #[inline]
    pub fn support(&self, row: usize, s: usize) -> Range<usize> {
        match *self {
            CodeFlavor::MultiHot => 0..s,
            CodeFlavor::Kd { block_size, .. } => row * block_size..(row + 1) * block_size,
        }
    }
}

impl fmt::Display for CodeFlavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeFlavor::MultiHot => f.write_str("multi_hot"),
            CodeFlavor::Kd { block_size, blocks } => write!(f, "kd {block_size} {blocks}"),
        }
    }
}

/// Number of distinct code rows: `s^t` for multi-hot, `(⌊s/t⌋)^t` for KD.
pub fn code_space_size(flavor: CodeFlavor, s: usize, t: usize) -> BigUint {
    let base = match flavor {
        CodeFlavor::MultiHot => s,
        CodeFlavor::Kd { .. } => s / t.max(1),
    };
    BigUint::from(base).pow(t as u32)
}

/// Step temperature schedule: start at `init`, drop by `step` every `every` epochs, floor at `min`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TauSchedule {
    pub init: f64,
    pub min: f64,
    pub step: f64,
    pub every: usize,
}

impl Default for TauSchedule {
    fn default() -> Self {
        TauSchedule {
            init: 1.0,
            min: 0.5,
            step: 0.1,
            every: 100,
        }
    }
}

impl TauSchedule {
    pub fn at(&self, epoch: usize) -> f64 {
        let drops = (epoch / self.every.max(1)) as f64;
        let tau = self.init - self.step * drops;
        // snap away the representation error of repeated decimal steps
        let tau = (tau * 1e9).round() / 1e9;
        tau.max(self.min)
    }
}

/// Set the compressor temperature for `epoch`.
pub fn anneal_tau<T: Scalar>(params: &mut CompressorParams<T>, schedule: &TauSchedule, epoch: usize) -> T {
    params.tau = T::lit(schedule.at(epoch));
    params.tau
}

/// Trainable compressor state: latent→logit projection plus the shared basis.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressorParams<T> {
    /// `d_l × (s·t)`.
    pub weight: DenseMatrix<T>,
    /// `1 × (s·t)`.
    pub bias: DenseMatrix<T>,
    /// `s × d`.
    pub basis: DenseMatrix<T>,
    pub s: usize,
    pub t: usize,
    pub tau: T,
    pub flavor: CodeFlavor,
}

/// Gradients of the compressor parameters.
#[derive(Clone, Debug)]
pub struct CompressorGrad<T> {
    pub weight: DenseMatrix<T>,
    pub bias: DenseMatrix<T>,
    pub basis: DenseMatrix<T>,
}

/// Cached activations of a batched compressor + decoder forward pass.
#[derive(Clone, Debug)]
pub struct CompressorForward<T> {
    input: DenseMatrix<T>,
    /// Pre-softplus projection, `n × (s·t)`.
    pub pre: DenseMatrix<T>,
    /// Soft selections, `n × (t·s)`; row `i` of node `n` at `[n, i·s..(i+1)·s]`.
    pub h: DenseMatrix<T>,
    /// `Σ_i h_i` per node, `n × s`.
    pub h_sum: DenseMatrix<T>,
    /// Reconstructions `n × d`.
    pub output: DenseMatrix<T>,
}

impl<T: Scalar> CompressorParams<T> {
    /// Fresh parameters with uniform fan-based initialization.
    pub fn new<R: Rng + ?Sized>(
        latent_dim: usize,
        s: usize,
        t: usize,
        d: usize,
        flavor: CodeFlavor,
        rng: &mut R,
    ) -> Result<Self> {
        flavor.validate(s, t)?;
        Ok(CompressorParams {
            weight: DenseMatrix::glorot_uniform(latent_dim, s * t, rng),
            bias: DenseMatrix::zeros(1, s * t),
            basis: DenseMatrix::glorot_uniform(s, d, rng),
            s,
            t,
            tau: T::one(),
            flavor,
        })
    }

    #[inline]
    pub fn latent_dim(&self) -> usize {
        self.weight.rows()
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn tensors(&self) -> [&DenseMatrix<T>; 3] {
        [&self.weight, &self.bias, &self.basis]
    }

    pub fn tensors_mut(&mut self) -> [&mut DenseMatrix<T>; 3] {
        [&mut self.weight, &mut self.bias, &mut self.basis]
    }

    fn check_input(&self, x_l: &DenseMatrix<T>) -> Result<()> {
        if x_l.cols() != self.latent_dim() {
            return Err(Error::shape("compressor input", x_l.shape(), self.weight.shape()));
        }
        Ok(())
    }

    /// Batched soft forward through compressor and decoder.
    ///
    /// `noise` (same shape as `h`) is added to the log weights; `None` gives the
    /// noise-free relaxation.
    pub fn forward_batch(
        &self,
        x_l: &DenseMatrix<T>,
        noise: Option<&DenseMatrix<T>>,
    ) -> Result<CompressorForward<T>> {
        self.check_input(x_l)?;
        let (s, t) = (self.s, self.t);
        let n = x_l.rows();
        if let Some(g) = noise {
            if g.shape() != (n, s * t) {
                return Err(Error::shape("gumbel noise", g.shape(), (n, s * t)));
            }
        }
        let pre = affine(x_l, &self.weight, self.bias.data())?;
        let mut h = DenseMatrix::zeros(n, s * t);
        let mut h_sum = DenseMatrix::zeros(n, s);
        let mut buf = vec![T::zero(); s];
        for node in 0..n {
            for i in 0..t {
                let support = self.flavor.support(i, s);
                let offset = i * s;
                let buf = &mut buf[..support.len()];
                for (b, k) in buf.iter_mut().zip(support.clone()) {
                    let mut v = log_softplus(pre[(node, offset + k)]);
                    if let Some(g) = noise {
                        v += g[(node, offset + k)];
                    }
                    *b = v;
                }
                tau_softmax_in_place(buf, self.tau);
                for (&p, k) in buf.iter().zip(support) {
                    h[(node, offset + k)] = p;
                    h_sum[(node, k)] += p;
                }
            }
        }
        let output = h_sum.matmul(&self.basis)?;
        Ok(CompressorForward {
            input: x_l.clone(),
            pre,
            h,
            h_sum,
            output,
        })
    }

    /// Backpropagate `d_output` (gradient w.r.t. reconstructions).
    ///
    /// Returns the parameter gradients and the gradient w.r.t. the latent input.
    pub fn backward_batch(
        &self,
        fwd: &CompressorForward<T>,
        d_output: &DenseMatrix<T>,
    ) -> Result<(CompressorGrad<T>, DenseMatrix<T>)> {
        if d_output.shape() != fwd.output.shape() {
            return Err(Error::shape("compressor backward", d_output.shape(), fwd.output.shape()));
        }
        let (s, t) = (self.s, self.t);
        let d_basis = fwd.h_sum.t_matmul(d_output)?;
        // every code position receives the same upstream gradient
        let d_h = d_output.matmul_t(&self.basis)?;
        let mut d_pre = DenseMatrix::zeros(fwd.pre.rows(), s * t);
        for node in 0..fwd.pre.rows() {
            for i in 0..t {
                let offset = i * s;
                let h_row = &fwd.h.row(node)[offset..offset + s];
                let d_logit = tau_softmax_backward(h_row, d_h.row(node), self.tau);
                for (k, &dl) in d_logit.iter().enumerate() {
                    let z = fwd.pre[(node, offset + k)];
                    d_pre[(node, offset + k)] = dl * log_softplus_derivative(z);
                }
            }
        }
        let g = affine_backward(&fwd.input, &self.weight, &d_pre)?;
        Ok((
            CompressorGrad {
                weight: g.w,
                bias: g.b,
                basis: d_basis,
            },
            g.x,
        ))
    }

    /// Noise-free hard codes: per position, argmax of the log weights over its support.
    pub fn hard_codes(&self, x_l: &DenseMatrix<T>) -> Result<Vec<usize>> {
        self.check_input(x_l)?;
        let pre = affine(x_l, &self.weight, self.bias.data())?;
        let mut codes = Vec::with_capacity(x_l.rows() * self.t);
        for node in 0..x_l.rows() {
            for i in 0..self.t {
                let support = self.flavor.support(i, self.s);
                let offset = i * self.s;
                let slice = &pre.row(node)[offset + support.start..offset + support.end];
                // softplus is monotone, so the argmax of z is the argmax of log y
                codes.push(support.start + argmax(slice));
            }
        }
        Ok(codes)
    }
}

/// Positive categorical weights `t × s` for one latent vector.
pub fn compute_logits<T: Scalar>(x_l: &[T], params: &CompressorParams<T>) -> Result<DenseMatrix<T>> {
    let x = DenseMatrix::row_vector(x_l);
    params.check_input(&x)?;
    let z = affine(&x, &params.weight, params.bias.data())?;
    DenseMatrix::from_vec(params.t, params.s, z.data().iter().map(|&v| softplus(v)).collect())
}

/// Soft one-hot rows together with the weights and noise that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftAssignment<T> {
    /// `t × s`; each row a probability vector.
    pub h: DenseMatrix<T>,
    /// `t × s` positive categorical weights.
    pub y: DenseMatrix<T>,
    /// `t × s` Gumbel noise added to `ln y`.
    pub noise: DenseMatrix<T>,
}

/// Relax the categorical rows of `y` with the given noise; entries outside
/// each row's support get probability zero.
pub fn soft_assignment_with_noise<T: Scalar>(
    y: &DenseMatrix<T>,
    noise: &DenseMatrix<T>,
    tau: T,
    flavor: CodeFlavor,
) -> Result<SoftAssignment<T>> {
    if y.shape() != noise.shape() {
        return Err(Error::shape("soft assignment noise", y.shape(), noise.shape()));
    }
    let (t, s) = y.shape();
    flavor.validate(s, t)?;
    let mut h = DenseMatrix::zeros(t, s);
    for i in 0..t {
        let support = flavor.support(i, s);
        let mut logits: Vec<T> = support
            .clone()
            .map(|k| y[(i, k)].ln() + noise[(i, k)])
            .collect();
        tau_softmax_in_place(&mut logits, tau);
        for (p, k) in logits.into_iter().zip(support) {
            h[(i, k)] = p;
        }
    }
    Ok(SoftAssignment {
        h,
        y: y.clone(),
        noise: noise.clone(),
    })
}

/// Draw fresh Gumbel noise per row and relax: `h_i = τ-softmax(ln y_i + g_i)`.
pub fn sample_soft_assignment<T: Scalar, R: Rng + ?Sized>(
    y: &DenseMatrix<T>,
    tau: T,
    rng: &mut R,
) -> SoftAssignment<T> {
    let noise = sample_standard_gumbel(y.rows(), y.cols(), rng);
    soft_assignment_with_noise(y, &noise, tau, CodeFlavor::MultiHot)
        .expect("noise drawn with matching shape")
}

/// KD variant of [`sample_soft_assignment`]: row `j` is confined to block `j`.
pub fn kd_sample<T: Scalar, R: Rng + ?Sized>(
    y: &DenseMatrix<T>,
    tau: T,
    block_size: usize,
    blocks: usize,
    rng: &mut R,
) -> Result<SoftAssignment<T>> {
    let flavor = CodeFlavor::Kd { block_size, blocks };
    flavor.validate(y.cols(), y.rows())?;
    let noise = sample_standard_gumbel(y.rows(), y.cols(), rng);
    soft_assignment_with_noise(y, &noise, tau, flavor)
}

/// Convex combination `h_row · B`.
pub fn select_basis<T: Scalar>(h_row: &[T], basis: &DenseMatrix<T>) -> Result<Vec<T>> {
    if h_row.len() != basis.rows() {
        return Err(Error::shape("select_basis", (1, h_row.len()), basis.shape()));
    }
    let mut out = vec![T::zero(); basis.cols()];
    for (k, &w) in h_row.iter().enumerate() {
        if w == T::zero() {
            continue;
        }
        for (o, &b) in out.iter_mut().zip(basis.row(k)) {
            *o += w * b;
        }
    }
    Ok(out)
}

/// Elementwise sum of the selected basis vectors.
pub fn compose<T: Scalar, V: AsRef<[T]>>(selected: &[V]) -> Result<Vec<T>> {
    let Some(first) = selected.first() else {
        return Err(Error::Empty("compose needs at least one vector".into()));
    };
    let d = first.as_ref().len();
    let mut out = vec![T::zero(); d];
    for v in selected {
        let v = v.as_ref();
        if v.len() != d {
            return Err(Error::shape("compose", (1, d), (1, v.len())));
        }
        for (o, &x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    Ok(out)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One code per soft row.
pub fn harden<T: Scalar>(soft: &SoftAssignment<T>) -> Vec<usize> {
    soft.h.iter_rows().map(argmax).collect()
}

/// Shared basis plus per-node integer codes.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook<T> {
    basis: DenseMatrix<T>,
    codes: Vec<usize>,
    t: usize,
    flavor: CodeFlavor,
}

impl<T: Scalar> Codebook<T> {
    /// `codes` is row-major `|V| × t`.
    pub fn new(basis: DenseMatrix<T>, codes: Vec<usize>, t: usize, flavor: CodeFlavor) -> Result<Self> {
        let s = basis.rows();
        flavor.validate(s, t)?;
        if !codes.len().is_multiple_of(t) {
            return Err(Error::Format {
                expected: format!("a multiple of t={t} codes"),
                found: format!("{} codes", codes.len()),
            });
        }
        for (pos, &c) in codes.iter().enumerate() {
            let (node, i) = (pos / t, pos % t);
            if !flavor.support(i, s).contains(&c) {
                return Err(Error::Format {
                    expected: format!("code in {:?} at node {node} position {i}", flavor.support(i, s)),
                    found: c.to_string(),
                });
            }
        }
        Ok(Codebook {
            basis,
            codes,
            t,
            flavor,
        })
    }

    #[inline]
    pub fn basis(&self) -> &DenseMatrix<T> {
        &self.basis
    }

    #[inline]
    pub fn codes(&self) -> &[usize] {
        &self.codes
    }

    #[inline]
    pub fn s(&self) -> usize {
        self.basis.rows()
    }

    #[inline]
    pub fn t(&self) -> usize {
        self.t
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.basis.cols()
    }

    #[inline]
    pub fn flavor(&self) -> CodeFlavor {
        self.flavor
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.codes.len() / self.t
    }

    pub fn code_row(&self, node: usize) -> &[usize] {
        &self.codes[node * self.t..(node + 1) * self.t]
    }

    /// Sum of the basis rows named by the node's codes.
    pub fn reconstruct(&self, node: usize) -> Result<Vec<T>> {
        if node >= self.node_count() {
            return Err(Error::NodeOutOfRange {
                id: node,
                count: self.node_count(),
            });
        }
        let mut out = vec![T::zero(); self.d()];
        for &c in self.code_row(node) {
            for (o, &b) in out.iter_mut().zip(self.basis.row(c)) {
                *o += b;
            }
        }
        Ok(out)
    }

    /// Dense `|V| × d` table of every reconstruction.
    pub fn reconstruct_all(&self) -> DenseMatrix<T> {
        let mut data = Vec::with_capacity(self.node_count() * self.d());
        for node in 0..self.node_count() {
            data.extend(self.reconstruct(node).expect("node in range"));
        }
        DenseMatrix::from_vec(self.node_count(), self.d(), data).expect("shape")
    }
}

pub fn reconstruct_from_codebook<T: Scalar>(cb: &Codebook<T>, node: usize) -> Result<Vec<T>> {
    cb.reconstruct(node)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{flatten, grad_check, mse_grad, mse_loss, unflatten};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn params(latent: usize, s: usize, t: usize, d: usize, flavor: CodeFlavor) -> CompressorParams<f64> {
        CompressorParams::new(latent, s, t, d, flavor, &mut rng(17)).unwrap()
    }

    #[test]
    fn logits_constant_bias() {
        let mut p = params(3, 4, 2, 2, CodeFlavor::MultiHot);
        p.weight = DenseMatrix::zeros(3, 8);
        p.bias = DenseMatrix::filled(1, 8, 0.7);
        let y = compute_logits(&[1.0, -2.0, 3.0], &p).unwrap();
        assert_eq!(y.shape(), (2, 4));
        assert!(y.data().iter().all(|&v| v == softplus(0.7)));
        assert!(compute_logits(&[1.0], &p).is_err());
    }

    #[test]
    fn logits_reshape_is_row_major_t_by_s() {
        let mut p = params(2, 3, 2, 2, CodeFlavor::MultiHot);
        p.weight = DenseMatrix::zeros(2, 6);
        p.bias = DenseMatrix::row_vector(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = compute_logits(&[0.3, 0.4], &p).unwrap();
        let expect = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0].map(softplus::<f64>);
        assert_eq!(y.row(0), &expect[..3]);
        assert_eq!(y.row(1), &expect[3..]);
    }

    #[test]
    fn logits_positive_and_continuous() {
        let p = params(4, 8, 3, 2, CodeFlavor::MultiHot);
        let mut r = rng(2);
        let mut worst_ratio: f64 = 0.0;
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| r.gen_range(-5.0..5.0)).collect();
            let y = compute_logits(&x, &p).unwrap();
            assert!(y.data().iter().all(|&v| v > 0.0));
            let x2: Vec<f64> = x.iter().map(|v| v + r.gen_range(-1e-4..1e-4)).collect();
            let y2 = compute_logits(&x2, &p).unwrap();
            let dx: f64 = x.iter().zip(&x2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let dy: f64 = y.data().iter().zip(y2.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            worst_ratio = worst_ratio.max(dy / dx);
        }
        // softplus is 1-Lipschitz, so ‖Δy‖ ≤ ‖W‖_F ‖Δx‖
        let bound = p.weight.frobenius_sq().sqrt();
        assert!(worst_ratio <= bound + 1e-9, "{worst_ratio} > {bound}");
    }

    #[test]
    fn uniform_weights_give_uniform_expectation() {
        let y = DenseMatrix::filled(1, 4, 2.0);
        let mut r = rng(4);
        let mut mean = [0.0; 4];
        let draws = 20_000;
        for _ in 0..draws {
            let sa = sample_soft_assignment(&y, 1.0, &mut r);
            for (m, &v) in mean.iter_mut().zip(sa.h.row(0)) {
                *m += v / draws as f64;
            }
        }
        for m in mean {
            assert!((m - 0.25).abs() < 0.01, "{m}");
        }
    }

    #[test]
    fn low_temperature_is_one_hot() {
        let y = DenseMatrix::<f64>::from_rows(&[[1.0, 3.0, 2.0], [0.5, 0.2, 4.0]]).unwrap();
        let mut r = rng(5);
        let mut saturated = 0;
        let mut total = 0;
        for _ in 0..500 {
            let sa = sample_soft_assignment(&y, 0.01, &mut r);
            for i in 0..2 {
                let mut perturbed: Vec<f64> = (0..3).map(|k| sa.y[(i, k)].ln() + sa.noise[(i, k)]).collect();
                perturbed.sort_by(|a, b| b.partial_cmp(a).unwrap());
                total += 1;
                // a gap of 0.2 at τ = 0.01 leaves e^-20 mass on the runner-up
                if perturbed[0] - perturbed[1] < 0.2 {
                    continue;
                }
                saturated += 1;
                let row = sa.h.row(i);
                let k = argmax(row);
                for (j, &v) in row.iter().enumerate() {
                    let want: f64 = if j == k { 1.0 } else { 0.0 };
                    assert!((v - want).abs() < 1e-6);
                }
            }
        }
        assert!(saturated * 10 >= total * 8, "{saturated}/{total}");
    }

    #[test]
    fn soft_rows_are_probability_vectors() {
        let y = DenseMatrix::from_rows(&[[0.1, 3.0, 2.0, 0.7]]).unwrap();
        let mut r = rng(6);
        for &tau in &[0.01, 0.5, 1.0, 10.0] {
            let sa = sample_soft_assignment(&y, tau, &mut r);
            let sum: f64 = sa.h.row(0).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(sa.h.data().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn harden_examples() {
        let h = DenseMatrix::from_rows(&[[0.0, 1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0, 1.0]]).unwrap();
        let sa = SoftAssignment {
            y: h.clone(),
            noise: h.clone(),
            h,
        };
        assert_eq!(harden(&sa), vec![1, 4]);
        let u = DenseMatrix::filled(1, 3, 1.0 / 3.0);
        let sa = SoftAssignment {
            y: u.clone(),
            noise: u.clone(),
            h: u,
        };
        assert_eq!(harden(&sa), vec![0]);
    }

    #[test]
    fn harden_agrees_with_stored_noise() {
        let mut r = rng(7);
        let y = DenseMatrix::<f64>::uniform(3, 6, 1.0, &mut r).map(|v| v.abs() + 0.05);
        for _ in 0..200 {
            let sa = sample_soft_assignment(&y, 0.7, &mut r);
            let codes = harden(&sa);
            for i in 0..3 {
                let perturbed: Vec<f64> = (0..6).map(|k| sa.y[(i, k)].ln() + sa.noise[(i, k)]).collect();
                assert_eq!(codes[i], argmax(&perturbed));
            }
        }
    }

    #[test]
    fn select_and_compose() {
        let b = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        assert_eq!(select_basis(&[0.0, 0.0, 1.0], &b).unwrap(), vec![5.0, 6.0]);
        let b2 = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap();
        assert_eq!(select_basis(&[0.5, 0.5], &b2).unwrap(), vec![0.5, 1.0]);
        assert!(select_basis(&[1.0, 0.0], &b).is_err());

        let mut r = rng(8);
        let bb = DenseMatrix::<f64>::uniform(5, 3, 1.0, &mut r);
        let h: Vec<f64> = tau_softmax_vec(&[0.3, -1.0, 2.0, 0.0, 0.5]);
        let got = select_basis(&h, &bb).unwrap();
        let oracle = DenseMatrix::row_vector(&h).matmul(&bb).unwrap();
        for (a, b) in got.iter().zip(oracle.data()) {
            assert!((a - b).abs() < 1e-14);
        }

        assert_eq!(compose(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(), vec![4.0, 6.0]);
        assert_eq!(compose(&[vec![1.0, -1.0], vec![1.0, -1.0]]).unwrap(), vec![2.0, -2.0]);
        assert_eq!(compose(&[vec![7.0, 8.0]]).unwrap(), vec![7.0, 8.0]);
        assert!(compose::<f64, Vec<f64>>(&[]).is_err());
    }

    fn tau_softmax_vec(z: &[f64]) -> Vec<f64> {
        crate::math::tau_softmax(z, 1.0)
    }

    #[test]
    fn codebook_reconstruction() {
        let basis = DenseMatrix::from_rows(&[[1.0, 1.0], [0.0, 3.0]]).unwrap();
        let cb = Codebook::new(basis.clone(), vec![0, 0, 1, 0], 2, CodeFlavor::MultiHot).unwrap();
        assert_eq!(cb.reconstruct(0).unwrap(), vec![2.0, 2.0]);
        assert!(matches!(cb.reconstruct(2), Err(Error::NodeOutOfRange { .. })));
        // definitional identity against the soft machinery with one-hot rows
        let one_hot = |c: usize| {
            let mut v = vec![0.0; 2];
            v[c] = 1.0;
            v
        };
        let selected: Vec<_> = cb.code_row(1).iter().map(|&c| select_basis(&one_hot(c), &basis).unwrap()).collect();
        assert_eq!(compose(&selected).unwrap(), cb.reconstruct(1).unwrap());
        assert!(Codebook::new(basis.clone(), vec![0, 2], 2, CodeFlavor::MultiHot).is_err());
        assert!(Codebook::new(basis, vec![0, 1, 1], 2, CodeFlavor::MultiHot).is_err());
    }

    #[test]
    fn kd_block_masking() {
        let y = DenseMatrix::filled(2, 4, 1.0);
        let mut r = rng(9);
        for _ in 0..50 {
            let sa = kd_sample(&y, 1.0, 2, 2, &mut r).unwrap();
            assert_eq!(sa.h[(0, 2)], 0.0);
            assert_eq!(sa.h[(0, 3)], 0.0);
            assert_eq!(sa.h[(1, 0)], 0.0);
            assert_eq!(sa.h[(1, 1)], 0.0);
            let codes = harden(&sa);
            for (j, &c) in codes.iter().enumerate() {
                assert_eq!(c / 2, j);
            }
        }
        assert!(matches!(kd_sample(&y, 1.0, 3, 2, &mut r), Err(Error::Config(_))));
    }

    #[test]
    fn kd_codebook_rejects_out_of_block_codes() {
        let basis = DenseMatrix::<f64>::zeros(4, 2);
        let kd = CodeFlavor::Kd { block_size: 2, blocks: 2 };
        assert!(Codebook::new(basis.clone(), vec![1, 3], 2, kd).is_ok());
        assert!(Codebook::new(basis, vec![2, 3], 2, kd).is_err());
    }

    #[test]
    fn code_space_counts() {
        assert_eq!(code_space_size(CodeFlavor::MultiHot, 1, 1), BigUint::from(1u32));
        let multi = code_space_size(CodeFlavor::MultiHot, 128, 8);
        let kd = code_space_size(CodeFlavor::Kd { block_size: 16, blocks: 8 }, 128, 8);
        assert_eq!(multi, BigUint::from(72_057_594_037_927_936u64));
        assert_eq!(kd, BigUint::from(4_294_967_296u64));
        assert_eq!(multi / kd, BigUint::from(16_777_216u64));
    }

    #[test]
    fn tau_schedule_values() {
        let sched = TauSchedule::default();
        assert_eq!(sched.at(0), 1.0);
        assert_eq!(sched.at(99), 1.0);
        assert_eq!(sched.at(250), 0.8);
        assert_eq!(sched.at(300), 0.7);
        assert_eq!(sched.at(10_000), 0.5);
        let mut p = params(2, 2, 1, 2, CodeFlavor::MultiHot);
        assert_eq!(anneal_tau(&mut p, &sched, 420), 0.6);
    }

    #[test]
    fn hard_codes_match_noise_free_argmax() {
        let p = params(3, 5, 3, 2, CodeFlavor::MultiHot);
        let x = DenseMatrix::<f64>::uniform(4, 3, 2.0, &mut rng(3));
        let codes = p.hard_codes(&x).unwrap();
        for n in 0..4 {
            let y = compute_logits(x.row(n), &p).unwrap();
            for i in 0..3 {
                assert_eq!(codes[n * 3 + i], argmax(y.row(i)));
            }
        }
    }

    #[test]
    fn batched_forward_matches_single_row_ops() {
        let mut p = params(3, 4, 2, 3, CodeFlavor::MultiHot);
        p.tau = 0.8;
        let mut r = rng(10);
        let x = DenseMatrix::<f64>::uniform(2, 3, 1.0, &mut r);
        let noise = sample_standard_gumbel::<f64, _>(2, 8, &mut r);
        let fwd = p.forward_batch(&x, Some(&noise)).unwrap();
        for n in 0..2 {
            let y = compute_logits(x.row(n), &p).unwrap();
            let g = DenseMatrix::from_vec(2, 4, noise.row(n).to_vec()).unwrap();
            let sa = soft_assignment_with_noise(&y, &g, p.tau, p.flavor).unwrap();
            let selected: Vec<_> = sa.h.iter_rows().map(|h| select_basis(h, &p.basis).unwrap()).collect();
            let x_hat = compose(&selected).unwrap();
            for (a, b) in x_hat.iter().zip(fwd.output.row(n)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    fn check_compressor_gradients(flavor: CodeFlavor) {
        let (latent, s, t, d) = (3, 4, 2, 3);
        let mut p = params(latent, s, t, d, flavor);
        p.tau = 0.7;
        let mut r = rng(11);
        p.bias = DenseMatrix::uniform(1, s * t, 0.5, &mut r);
        let x = DenseMatrix::<f64>::uniform(5, latent, 1.0, &mut r);
        let target = DenseMatrix::<f64>::uniform(5, d, 1.0, &mut r);
        let noise = sample_standard_gumbel::<f64, _>(5, s * t, &mut r);

        let fwd = p.forward_batch(&x, Some(&noise)).unwrap();
        let d_out = mse_grad(&fwd.output, &target).unwrap();
        let (g, d_x) = p.backward_batch(&fwd, &d_out).unwrap();
        let mut analytic = flatten(&[&g.weight, &g.bias, &g.basis]);
        analytic.extend_from_slice(d_x.data());
        let mut point = flatten(&p.tensors());
        point.extend_from_slice(x.data());

        let n_params = point.len() - x.data().len();
        let loss = |v: &[f64]| {
            let mut q = p.clone();
            unflatten(&mut q.tensors_mut(), &v[..n_params]).unwrap();
            let xx = DenseMatrix::from_vec(5, latent, v[n_params..].to_vec()).unwrap();
            let out = q.forward_batch(&xx, Some(&noise)).unwrap().output;
            mse_loss(&out, &target).unwrap()
        };
        let err = grad_check(loss, &analytic, &point, 1e-5).unwrap();
        assert!(err < 1e-4, "{flavor:?}: {err}");
    }

    #[test]
    fn compressor_gradients_multi_hot() {
        check_compressor_gradients(CodeFlavor::MultiHot);
    }

    #[test]
    fn compressor_gradients_kd() {
        check_compressor_gradients(CodeFlavor::Kd { block_size: 2, blocks: 2 });
    }
}

//! Forward kernels and their hand-derived backward passes.

use rand::Rng;

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Uniform draws are clamped to `(UNIFORM_EPS, 1 - UNIFORM_EPS)` before the double log.
pub const UNIFORM_EPS: f64 = 1e-12;

/// `out = x·W + b` with `b` broadcast over rows.
pub fn affine<T: Scalar>(x: &DenseMatrix<T>, w: &DenseMatrix<T>, b: &[T]) -> Result<DenseMatrix<T>> {
    if b.len() != w.cols() {
        return Err(Error::shape("affine bias", w.shape(), (1, b.len())));
    }
    let mut out = x.matmul(w)?;
    for i in 0..out.rows() {
        for (o, &bj) in out.row_mut(i).iter_mut().zip(b) {
            *o += bj;
        }
    }
    Ok(out)
}

/// Gradients of [`affine`] with respect to its three inputs.
#[derive(Clone, Debug)]
pub struct AffineGrad<T> {
    pub x: DenseMatrix<T>,
    pub w: DenseMatrix<T>,
    pub b: DenseMatrix<T>,
}

pub fn affine_backward<T: Scalar>(
    x: &DenseMatrix<T>,
    w: &DenseMatrix<T>,
    d_out: &DenseMatrix<T>,
) -> Result<AffineGrad<T>> {
    Ok(AffineGrad {
        x: d_out.matmul_t(w)?,
        w: x.t_matmul(d_out)?,
        b: d_out.col_sums(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Softplus,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Softplus => softplus(x),
        }
    }

    /// Derivative with respect to the pre-activation input.
    #[inline]
    pub fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                T::one() - t * t
            }
            Activation::Softplus => sigmoid(x),
        }
    }
}

pub fn activation<T: Scalar>(x: &DenseMatrix<T>, kind: Activation) -> DenseMatrix<T> {
    x.map(|v| kind.apply(v))
}

/// Chain `d_out` through the activation evaluated at `pre`.
pub fn activation_backward<T: Scalar>(
    pre: &DenseMatrix<T>,
    d_out: &DenseMatrix<T>,
    kind: Activation,
) -> Result<DenseMatrix<T>> {
    pre.zip_map(d_out, |p, g| g * kind.derivative(p))
}

/// tanh backward expressed through the stored output `y = tanh(x)`.
pub fn tanh_backward_from_output<T: Scalar>(
    out: &DenseMatrix<T>,
    d_out: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    out.zip_map(d_out, |y, g| g * (T::one() - y * y))
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(softplus(x))`, finite even where `softplus(x)` underflows.
#[inline]
pub fn log_softplus<T: Scalar>(x: T) -> T {
    if x < T::lit(-30.0) {
        // softplus(x) = e^x (1 - e^x/2 + ...)
        x - x.exp() / T::lit(2.0)
    } else {
        softplus(x).ln()
    }
}

/// `d ln(softplus(x)) / dx = σ(x) / softplus(x)`.
#[inline]
pub fn log_softplus_derivative<T: Scalar>(x: T) -> T {
    if x < T::lit(-30.0) {
        T::one() + x.exp() / T::lit(2.0)
    } else {
        sigmoid(x) / softplus(x)
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln σ(x)` without overflow.
#[inline]
pub fn log_sigmoid<T: Scalar>(x: T) -> T {
    -softplus(-x)
}

/// Standard Gumbel sample by inverse transform of a uniform draw.
#[inline]
pub fn gumbel_from_uniform<T: Scalar>(u: f64) -> T {
    let u = u.clamp(UNIFORM_EPS, 1.0 - UNIFORM_EPS);
    T::lit(-(-u.ln()).ln())
}

pub fn sample_standard_gumbel<T: Scalar, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> DenseMatrix<T> {
    let data = (0..rows * cols)
        .map(|_| gumbel_from_uniform(rng.gen::<f64>()))
        .collect();
    DenseMatrix::from_vec(rows, cols, data).expect("length matches")
}

/// Temperature softmax `exp(z_i/τ) / Σ_j exp(z_j/τ)`.
pub fn tau_softmax<T: Scalar>(logits: &[T], tau: T) -> Vec<T> {
    let mut out = logits.to_vec();
    tau_softmax_in_place(&mut out, tau);
    out
}

pub fn tau_softmax_in_place<T: Scalar>(values: &mut [T], tau: T) {
    let max = values
        .iter()
        .copied()
        .fold(T::neg_infinity(), |m, v| if v > m { v } else { m });
    let mut total = T::zero();
    for v in values.iter_mut() {
        *v = ((*v - max) / tau).exp();
        total += *v;
    }
    for v in values.iter_mut() {
        *v /= total;
    }
}

/// Backward of [`tau_softmax`]: `dz_i = h_i (dh_i − Σ_j h_j dh_j) / τ`.
pub fn tau_softmax_backward<T: Scalar>(h: &[T], d_h: &[T], tau: T) -> Vec<T> {
    let inner: T = h.iter().zip(d_h).map(|(&p, &g)| p * g).sum();
    h.iter()
        .zip(d_h)
        .map(|(&p, &g)| p * (g - inner) / tau)
        .collect()
}

/// Mean over rows of the squared Euclidean row distance.
pub fn mse_loss<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<T> {
    if a.shape() != b.shape() {
        return Err(Error::shape("mse_loss", a.shape(), b.shape()));
    }
    if a.rows() == 0 {
        return Ok(T::zero());
    }
    let total: T = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(total / T::from_count(a.rows()))
}

/// Gradient of [`mse_loss`] with respect to `a`: `2(a − b)/rows`.
pub fn mse_grad<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let scale = T::lit(2.0) / T::from_count(a.rows().max(1));
    a.zip_map(b, |x, y| scale * (x - y))
}

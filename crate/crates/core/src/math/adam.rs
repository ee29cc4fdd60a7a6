//! Adaptive-moment optimizer with bias correction.

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for a fixed list of parameter matrices.
#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    pub first_moment: Vec<DenseMatrix<T>>,
    pub second_moment: Vec<DenseMatrix<T>>,
    pub step_count: u64,
    pub config: AdamConfig,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(shapes: &[(usize, usize)], config: AdamConfig) -> Self {
        let zeros = |&(r, c): &(usize, usize)| DenseMatrix::zeros(r, c);
        OptimizerState {
            first_moment: shapes.iter().map(zeros).collect(),
            second_moment: shapes.iter().map(zeros).collect(),
            step_count: 0,
            config,
        }
    }

    pub fn for_params(params: &[&DenseMatrix<T>], config: AdamConfig) -> Self {
        let shapes: Vec<_> = params.iter().map(|p| p.shape()).collect();
        Self::new(&shapes, config)
    }
}

/// Apply one update to every parameter; `step_count` advances by one.
pub fn adam_update<T: Scalar>(
    params: &mut [&mut DenseMatrix<T>],
    grads: &[&DenseMatrix<T>],
    state: &mut OptimizerState<T>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::shape(
            "adam_update parameter count",
            (params.len(), grads.len()),
            (state.first_moment.len(), 1),
        ));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.first_moment) {
        if p.shape() != g.shape() {
            return Err(Error::shape("adam_update", p.shape(), g.shape()));
        }
        if p.shape() != m.shape() {
            return Err(Error::shape("adam_update state", p.shape(), m.shape()));
        }
    }

    state.step_count += 1;
    let cfg = state.config;
    let t = state.step_count as i32;
    let lr = T::lit(cfg.learning_rate);
    let b1 = T::lit(cfg.beta1);
    let b2 = T::lit(cfg.beta2);
    let eps = T::lit(cfg.epsilon);
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);

    for (idx, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first_moment[idx].data_mut();
        let v = state.second_moment[idx].data_mut();
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = DenseMatrix::from_rows(&[[1.0, -2.0]]).unwrap();
        let before = p.clone();
        let g = DenseMatrix::zeros(1, 2);
        let mut state = OptimizerState::for_params(&[&p], AdamConfig::default());
        adam_update(&mut [&mut p], &[&g], &mut state).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = DenseMatrix::<f64>::from_rows(&[[0.5, 0.5, 0.5]]).unwrap();
        let g = DenseMatrix::from_rows(&[[3.0, -0.2, 100.0]]).unwrap();
        let cfg = AdamConfig::with_learning_rate(0.01);
        let mut state = OptimizerState::for_params(&[&p], cfg);
        adam_update(&mut [&mut p], &[&g], &mut state).unwrap();
        for (&after, &gi) in p.data().iter().zip(g.data()) {
            let moved = after - 0.5;
            assert!((moved + 0.01 * gi.signum()).abs() < 1e-6, "moved {moved}");
        }
    }

    #[test]
    fn quadratic_converges() {
        let mut theta = DenseMatrix::from_rows(&[[1.0f64]]).unwrap();
        let mut state = OptimizerState::for_params(&[&theta], AdamConfig::with_learning_rate(0.1));
        for _ in 0..100 {
            let g = theta.map(|v| 2.0 * v);
            adam_update(&mut [&mut theta], &[&g], &mut state).unwrap();
        }
        assert!(theta[(0, 0)].abs() < 0.1);
        assert_eq!(state.step_count, 100);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = DenseMatrix::<f64>::zeros(1, 2);
        let g = DenseMatrix::zeros(2, 1);
        let mut state = OptimizerState::for_params(&[&p], AdamConfig::default());
        assert!(adam_update(&mut [&mut p], &[&g], &mut state).is_err());
        assert_eq!(state.step_count, 0);
    }
}

//! Central finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Max over coordinates of `|analytic − central difference| / max(1, |analytic|)`.
pub fn grad_check<T, F>(mut f: F, analytic: &[T], point: &[T], h: T) -> Result<T>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    if analytic.len() != point.len() {
        return Err(Error::shape(
            "grad_check",
            (analytic.len(), 1),
            (point.len(), 1),
        ));
    }
    if !(h > T::zero()) {
        return Err(Error::Config(format!("finite-difference step must be > 0, got {h}")));
    }
    let mut x = point.to_vec();
    let mut worst = T::zero();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x);
        x[i] = orig - h;
        let down = f(&x);
        x[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        let numeric = (up - down) / (h + h);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(T::one());
        if err > worst {
            worst = err;
        }
    }
    Ok(worst)
}

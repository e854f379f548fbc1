//! Central finite-difference gradient oracle.
//!
//! Independent of the tape: it only re-evaluates the loss closure, so it is
//! a valid cross-check for [`super::Tape::backward`].

use super::params::ParamSet;

/// Central differences (f(p+h) − f(p−h)) / 2h for every scalar parameter.
///
/// Returns a gradient set aligned with `params`. `h` must be positive
/// (1e-4 is a good default for f64 losses of order one).
pub fn finite_difference_gradient(
    loss_fn: impl Fn(&ParamSet) -> f64,
    params: &ParamSet,
    h: f64,
) -> ParamSet {
    assert!(h > 0.0, "contract error: finite differences need h > 0, got {h}");
    let flat = params.flatten();
    let mut grad = vec![0.0; flat.len()];
    let mut probe = flat.clone();
    for i in 0..flat.len() {
        probe[i] = flat[i] + h;
        let plus = loss_fn(&params.unflatten(&probe));
        probe[i] = flat[i] - h;
        let minus = loss_fn(&params.unflatten(&probe));
        probe[i] = flat[i];
        grad[i] = (plus - minus) / (2.0 * h);
    }
    params.unflatten(&grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tensor;

    fn single(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("x", Tensor::scalar(v));
        p
    }

    #[test]
    fn quadratic() {
        let g = finite_difference_gradient(|p| p.get("x").scalar_value().powi(2), &single(3.0), 1e-4);
        assert!((g.get("x").scalar_value() - 6.0).abs() < 1e-7);
    }

    #[test]
    fn constant_loss_gives_zero() {
        let g = finite_difference_gradient(|_| 42.0, &single(3.0), 1e-4);
        assert_eq!(g.get("x").scalar_value(), 0.0);
    }

    #[test]
    fn exponential_at_zero() {
        let g = finite_difference_gradient(|p| p.get("x").scalar_value().exp(), &single(0.0), 1e-4);
        assert!((g.get("x").scalar_value() - 1.0).abs() < 1e-6);
    }
}

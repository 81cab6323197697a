//! Gradient verification against central finite differences.

use crate::error::{Error, Result};

/// Compares an analytic gradient against central finite differences.
///
/// `f` is a scalar-valued function of a flat parameter vector and `grad`
/// is its analytic gradient at the same point. Returns
/// `max_i |g_analytic_i - g_fd_i| / max(1e-8, |g_fd_i|)` where the finite
/// difference uses `(f(x + h e_i) - f(x - h e_i)) / (2 h)`.
pub fn finite_difference_check<F, G>(f: F, grad: G, point: &[f64], step: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Parameter(format!(
            "finite_difference_check: step must be positive, got {step}"
        )));
    }
    let analytic = grad(point)?;
    if analytic.len() != point.len() {
        return Err(Error::Input(format!(
            "finite_difference_check: gradient length {} does not match point length {}",
            analytic.len(),
            point.len()
        )));
    }
    let mut perturbed = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..point.len() {
        perturbed[i] = point[i] + step;
        let plus = f(&perturbed)?;
        perturbed[i] = point[i] - step;
        let minus = f(&perturbed)?;
        perturbed[i] = point[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Input(format!(
                "finite_difference_check: non-finite function value at coordinate {i}"
            )));
        }
        let fd = (plus - minus) / (2.0 * step);
        let rel = (analytic[i] - fd).abs() / f64::max(1e-8, fd.abs());
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact_up_to_rounding() {
        let f = |x: &[f64]| Ok(x[0] * x[0]);
        let g = |x: &[f64]| Ok(vec![2.0 * x[0]]);
        let err = finite_difference_check(f, g, &[3.0], 1e-5).unwrap();
        assert!(err < 1e-6, "error {err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let f = |_: &[f64]| Ok(7.5);
        let g = |x: &[f64]| Ok(vec![0.0; x.len()]);
        let err = finite_difference_check(f, g, &[1.0, 2.0, 3.0], 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn non_finite_value_is_an_input_error() {
        let f = |x: &[f64]| Ok(1.0 / (x[0] - 1.0 - 1e-5));
        let g = |_: &[f64]| Ok(vec![0.0]);
        // x + step hits the pole exactly, producing an infinity.
        let err = finite_difference_check(f, g, &[1.0], 1e-5);
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn rejects_non_positive_step() {
        let f = |_: &[f64]| Ok(0.0);
        let g = |x: &[f64]| Ok(vec![0.0; x.len()]);
        assert!(matches!(
            finite_difference_check(f, g, &[1.0], 0.0),
            Err(Error::Parameter(_))
        ));
    }
}

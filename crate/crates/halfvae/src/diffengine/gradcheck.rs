//! Finite-difference verification of analytic gradients.

use crate::{Error, Result};

/// Central-difference step. Near-optimal for f64: truncation and rounding
/// error balance around h ~ cbrt(machine eps).
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Worst relative disagreement between the analytic gradient of `f` at
/// `point` and central finite differences.
///
/// `f` returns the scalar value and its full analytic gradient; only the
/// value is used at the perturbed points. The per-coordinate error is
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn grad_check<F>(f: F, point: &[f64]) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (value, analytic) = f(point)?;
    if !value.is_finite() {
        return Err(Error::Numeric("objective is non-finite at base point".into()));
    }
    if analytic.len() != point.len() {
        return Err(Error::Shape(format!(
            "gradient length {} does not match point length {}",
            analytic.len(),
            point.len()
        )));
    }
    let mut worst = 0.0f64;
    let mut perturbed = point.to_vec();
    for i in 0..point.len() {
        perturbed[i] = point[i] + GRAD_CHECK_STEP;
        let (plus, _) = f(&perturbed)?;
        perturbed[i] = point[i] - GRAD_CHECK_STEP;
        let (minus, _) = f(&perturbed)?;
        perturbed[i] = point[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "objective is non-finite near coordinate {i}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
        let rel =
            (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

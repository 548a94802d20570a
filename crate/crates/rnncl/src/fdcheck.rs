//! Central-difference verification of analytic gradients. The one tool that
//! keeps every fused backward rule honest; the integration suite runs it
//! against each loss the crate can train with.

use crate::error::{Error, Result};

/// Compare an analytic gradient against central finite differences of `f`.
///
/// `f` must evaluate the scalar objective at an arbitrary parameter vector
/// (rebuilding whatever graph it needs); `analytic` is the gradient at
/// `params` as computed by the engine. Returns the maximum over entries of
///
/// `|g_i - ghat_i| / max(1, |g_i|, |ghat_i|)`
///
/// where `ghat_i = (f(x + h e_i) - f(x - h e_i)) / 2h`. Any non-finite
/// evaluation is an error, not a large score.
pub fn finite_diff_check(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    params: &[f64],
    step: f64,
    analytic: &[f64],
) -> Result<f64> {
    if analytic.len() != params.len() {
        return Err(Error::Shape(format!(
            "finite_diff_check: {} params, {} gradient entries",
            params.len(),
            analytic.len()
        )));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Invalid(format!("finite_diff_check: step {}", step)));
    }
    let mut x = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let fp = f(&x)?;
        x[i] = orig - step;
        let fm = f(&x)?;
        x[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("objective near parameter {}", i)));
        }
        let ghat = (fp - fm) / (2.0 * step);
        let g = analytic[i];
        let denom = 1.0f64.max(g.abs()).max(ghat.abs());
        worst = worst.max((g - ghat).abs() / denom);
    }
    Ok(worst)
}

//! Lattice-Gaussian (LGD) denoiser and the Tweedie score.
//!
//! For one component `x̄` and noise level `σ`, the posterior over the alphabet
//! is `p(q) ∝ exp(−(q − x̄)²/(2σ²))`. Its mean is the MMSE denoiser `D(x̄)`,
//! and `(D(x̄) − x̄)/σ²` is the exact score of the Gaussian-smoothed
//! alphabet density.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::Constellation;

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("denoiser sigma must be positive, got {sigma}")));
    }
    Ok(())
}

/// Normalised LGD weights of every point for a single component.
pub fn lgd_weights(x_bar: f64, sigma: f64, c: &Constellation) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    let mut w = vec![0.0; c.len()];
    weights_into(x_bar, sigma, c.points(), &mut w);
    Ok(w)
}

fn weights_into(x_bar: f64, sigma: f64, points: &[f64], w: &mut [f64]) {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut max_logit = f64::NEG_INFINITY;
    for (wi, &q) in w.iter_mut().zip(points) {
        let d = q - x_bar;
        *wi = -d * d * inv;
        max_logit = max_logit.max(*wi);
    }
    let mut total = 0.0;
    for wi in w.iter_mut() {
        *wi = (*wi - max_logit).exp();
        total += *wi;
    }
    for wi in w.iter_mut() {
        *wi /= total;
    }
}

/// Posterior mean of one component. Uses max-subtracted logits so tiny `σ`
/// cannot underflow every weight.
#[inline]
pub(crate) fn lgd_mean(x_bar: f64, sigma: f64, points: &[f64]) -> f64 {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut max_logit = f64::NEG_INFINITY;
    for &q in points {
        let d = q - x_bar;
        max_logit = max_logit.max(-d * d * inv);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &q in points {
        let d = q - x_bar;
        let w = (-d * d * inv - max_logit).exp();
        num += w * q;
        den += w;
    }
    let mean = num / den;
    // Guard against rounding past the hull of the alphabet.
    mean.clamp(points[0], points[points.len() - 1])
}

/// Componentwise LGD posterior mean `D_σ(x̄)`.
pub fn lgd_denoise(x_bar: &DVector<f64>, sigma: f64, c: &Constellation) -> Result<DVector<f64>> {
    check_sigma(sigma)?;
    Ok(x_bar.map(|v| lgd_mean(v, sigma, c.points())))
}

/// Tweedie score `(D − x̄)/σ²`.
pub fn tweedie_score(x_bar: &DVector<f64>, denoised: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
    check_sigma(sigma)?;
    if x_bar.len() != denoised.len() {
        return Err(Error::DimensionMismatch {
            context: "tweedie_score",
            expected: x_bar.len(),
            found: denoised.len(),
        });
    }
    let inv = 1.0 / (sigma * sigma);
    Ok((denoised - x_bar) * inv)
}

/// Writes the prior score `(D_σ(x) − x)/σ²` of every component into `out`.
pub(crate) fn prior_score_into(x: &DVector<f64>, sigma: f64, points: &[f64], out: &mut DVector<f64>) {
    let inv = 1.0 / (sigma * sigma);
    for (o, &v) in out.iter_mut().zip(x.iter()) {
        *o = (lgd_mean(v, sigma, points) - v) * inv;
    }
}

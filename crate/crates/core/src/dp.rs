//! Differential privacy primitives: Laplace and Gaussian noise, the
//! exponential mechanism, and calibration of the Gaussian mechanism by the
//! analytic (exact) condition rather than the classical tail bound.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::stats::normal_cdf;

#[derive(Debug, Error)]
pub enum DpError {
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("delta must be in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("sensitivity must be positive, got {0}")]
    InvalidSensitivity(f64),
    #[error("empty candidate list")]
    NoCandidates,
}

/// Laplace(0, scale) sample by inverse CDF.
pub fn laplace(scale: f64, rng: &mut (impl Rng + ?Sized)) -> f64 {
    loop {
        let u: f64 = rng.gen::<f64>() - 0.5;
        let a = 1.0 - 2.0 * u.abs();
        if a > 0.0 {
            return -scale * u.signum() * a.ln();
        }
        // u hit exactly -0.5; redraw instead of returning infinity.
    }
}

/// N(0, sigma^2) sample.
pub fn gaussian(sigma: f64, rng: &mut (impl Rng + ?Sized)) -> f64 {
    Normal::new(0.0, sigma)
        .expect("sigma is positive and finite")
        .sample(rng)
}

/// Exact delta achieved by the Gaussian mechanism with noise `sigma` on a
/// query of the given sensitivity at privacy parameter `epsilon`.
fn gaussian_delta(sensitivity: f64, epsilon: f64, sigma: f64) -> f64 {
    let a = sensitivity / (2.0 * sigma) - epsilon * sigma / sensitivity;
    let b = -sensitivity / (2.0 * sigma) - epsilon * sigma / sensitivity;
    normal_cdf(a) - epsilon.exp() * normal_cdf(b)
}

/// Smallest noise scale sigma such that adding N(0, sigma^2) to a query of
/// the given sensitivity is (epsilon, delta)-DP, found by bisection on the
/// exact Gaussian-mechanism delta.
pub fn analytic_gaussian_sigma(
    sensitivity: f64,
    epsilon: f64,
    delta: f64,
) -> Result<f64, DpError> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(DpError::InvalidEpsilon(epsilon));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(DpError::InvalidDelta(delta));
    }
    if !(sensitivity > 0.0) || !sensitivity.is_finite() {
        return Err(DpError::InvalidSensitivity(sensitivity));
    }
    // delta is decreasing in sigma; bracket then bisect.
    let mut hi = sensitivity * (2.0 * (1.25 / delta).ln()).sqrt() / epsilon + sensitivity;
    while gaussian_delta(sensitivity, epsilon, hi) > delta {
        hi *= 2.0;
    }
    let mut lo = hi * 1e-12;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gaussian_delta(sensitivity, epsilon, mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Normalized exponential-mechanism weights: w_i proportional to
/// exp(epsilon * score_i / (2 * sensitivity)).
pub fn exponential_mechanism_weights(
    scores: &[f64],
    epsilon: f64,
    sensitivity: f64,
) -> Result<Vec<f64>, DpError> {
    if scores.is_empty() {
        return Err(DpError::NoCandidates);
    }
    if !(epsilon > 0.0) {
        return Err(DpError::InvalidEpsilon(epsilon));
    }
    if !(sensitivity > 0.0) {
        return Err(DpError::InvalidSensitivity(sensitivity));
    }
    let factor = epsilon / (2.0 * sensitivity);
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|&s| ((s - max) * factor).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Samples a candidate index with probability proportional to
/// exp(epsilon * score / (2 * sensitivity)).
pub fn exponential_mechanism(
    scores: &[f64],
    epsilon: f64,
    sensitivity: f64,
    rng: &mut (impl Rng + ?Sized),
) -> Result<usize, DpError> {
    let weights = exponential_mechanism_weights(scores, epsilon, sensitivity)?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(weights.len() - 1)
}

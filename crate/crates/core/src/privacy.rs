//! Client-side update protection: L2 clipping, calibrated Gaussian noise,
//! and a per-round privacy budget ledger with basic (linear) composition.
//!
//! The noise scale follows the classical Gaussian-mechanism bound
//! `sigma = C * sqrt(2 ln(1.25/delta)) / epsilon`. The bound's derivation
//! assumes epsilon < 1; it is applied for all epsilon here, which is the
//! common engineering convention. Noise is added to the clipped update delta
//! rather than the raw weights, since only the clipped delta has a known
//! sensitivity.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParameterVector;
use crate::scalar::{cast, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyConfig {
    pub enabled: bool,
    pub epsilon: f64,
    pub delta: f64,
    pub clip_norm: f64,
    /// Derived noise scale sigma_dp; kept in sync with the other fields by
    /// the constructors and checked by `validate`.
    pub noise_scale: f64,
}

impl PrivacyConfig {
    /// Enabled config with the noise scale derived from (epsilon, delta, C).
    pub fn new(epsilon: f64, delta: f64, clip_norm: f64) -> Result<Self> {
        Ok(Self {
            enabled: true,
            epsilon,
            delta,
            clip_norm,
            noise_scale: calibrate_sigma(epsilon, delta, clip_norm)?,
        })
    }

    /// Pass-through config: updates are transmitted unmodified.
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            epsilon: 1.0,
            delta: 1e-5,
            clip_norm: 1.0,
            noise_scale: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        let expected = calibrate_sigma(self.epsilon, self.delta, self.clip_norm)?;
        if self.noise_scale.to_bits() != expected.to_bits() {
            return Err(Error::InvalidConfig(format!(
                "noise_scale {} does not match the calibrated value {} for (epsilon={}, delta={}, clip_norm={})",
                self.noise_scale, expected, self.epsilon, self.delta, self.clip_norm
            )));
        }
        Ok(())
    }
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        Self::disabled()
    }
}

/// Gaussian-mechanism noise scale: `C * sqrt(2 ln(1.25/delta)) / epsilon`.
pub fn calibrate_sigma(epsilon: f64, delta: f64, clip_norm: f64) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if !(clip_norm.is_finite() && clip_norm > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "clip_norm must be positive, got {clip_norm}"
        )));
    }
    Ok(clip_norm * (2.0 * (1.25 / delta).ln()).sqrt() / epsilon)
}

/// Scale `delta_params` down to L2 norm `clip_norm` if it exceeds it;
/// vectors inside the ball pass through untouched.
pub fn clip_update<F: Scalar>(
    delta_params: &ParameterVector<F>,
    clip_norm: F,
) -> Result<ParameterVector<F>> {
    if !(clip_norm.is_finite() && clip_norm > F::zero()) {
        return Err(Error::InvalidConfig(format!(
            "clip_norm must be positive, got {clip_norm}"
        )));
    }
    let norm = delta_params.l2_norm();
    if norm <= clip_norm {
        Ok(delta_params.clone())
    } else {
        delta_params.scale(clip_norm / norm)
    }
}

/// Add iid N(0, sigma_dp^2) noise per coordinate; `sigma_dp == 0` returns the
/// input bit-for-bit. Deterministic given the RNG state.
pub fn add_gaussian_noise<F, R>(
    v: &ParameterVector<F>,
    sigma_dp: F,
    rng: &mut R,
) -> Result<ParameterVector<F>>
where
    F: Scalar,
    R: Rng + ?Sized,
    StandardNormal: Distribution<F>,
{
    if sigma_dp < F::zero() || !sigma_dp.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "noise scale must be non-negative, got {sigma_dp}"
        )));
    }
    if sigma_dp == F::zero() {
        return Ok(v.clone());
    }
    let values = v
        .iter()
        .map(|x| {
            let z: F = StandardNormal.sample(rng);
            *x + sigma_dp * z
        })
        .collect();
    ParameterVector::new(values)
}

/// Full protection pipeline for an update about to leave the client:
/// clip the delta `w_new - w_base` to the configured norm, add calibrated
/// noise, and re-anchor at `w_base`. Disabled configs pass `w_new` through.
pub fn protect_update<F, R>(
    w_new: &ParameterVector<F>,
    w_base: &ParameterVector<F>,
    cfg: &PrivacyConfig,
    rng: &mut R,
) -> Result<ParameterVector<F>>
where
    F: Scalar,
    R: Rng + ?Sized,
    StandardNormal: Distribution<F>,
{
    if w_new.len() != w_base.len() {
        return Err(Error::DimensionMismatch {
            expected: w_base.len(),
            actual: w_new.len(),
        });
    }
    if !cfg.enabled {
        return Ok(w_new.clone());
    }
    let delta = w_new.sub(w_base)?;
    let clipped = clip_update(&delta, cast(cfg.clip_norm))?;
    let noisy = add_gaussian_noise(&clipped, cast(cfg.noise_scale), rng)?;
    ParameterVector::axpy(F::one(), &noisy, w_base)
}

/// Per-run privacy accounting under basic composition: after T rounds the
/// spent budget is exactly (T * epsilon, T * delta).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub rounds_run: u64,
    pub per_round_epsilon: f64,
    pub per_round_delta: f64,
    pub total_epsilon: f64,
    pub total_delta: f64,
}

impl BudgetLedger {
    pub fn new(per_round_epsilon: f64, per_round_delta: f64) -> Self {
        Self {
            rounds_run: 0,
            per_round_epsilon,
            per_round_delta,
            total_epsilon: 0.0,
            total_delta: 0.0,
        }
    }

    pub fn record_round(&mut self) {
        self.rounds_run += 1;
        // Recomputed as a product so the total is exactly T * epsilon.
        self.total_epsilon = self.rounds_run as f64 * self.per_round_epsilon;
        self.total_delta = self.rounds_run as f64 * self.per_round_delta;
    }
}

//! Server-side combination of client updates.
//!
//! The adaptive strategy weights each client by the product of its data
//! share `n_i / sum(n_j)` and the softmax of its negative reported loss,
//! renormalized so the weights sum to 1. Plain averaging and sample-count
//! weighting are the ablation baselines. The global step blends the weighted
//! update direction into the previous model through a momentum factor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParameterVector;
use crate::scalar::{cast, Scalar};

/// Opaque client identifier.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(pub String);

impl ClientId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for ClientId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClientId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// One client's contribution for a round: updated (possibly noise-protected)
/// parameters, its sample count, and its reported validation loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct ClientUpdate<F: Scalar> {
    pub client_id: ClientId,
    pub round: u64,
    pub params: ParameterVector<F>,
    pub num_samples: usize,
    pub val_loss: F,
}

impl<F: Scalar> ClientUpdate<F> {
    pub fn new(
        client_id: ClientId,
        round: u64,
        params: ParameterVector<F>,
        num_samples: usize,
        val_loss: F,
    ) -> Result<Self> {
        if num_samples == 0 {
            return Err(Error::InvalidConfig(
                "client update needs at least one sample".into(),
            ));
        }
        if !val_loss.is_finite() {
            return Err(Error::NonFinite { index: 0 });
        }
        Ok(Self {
            client_id,
            round,
            params,
            num_samples,
            val_loss,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::InvalidConfig(
                "client update needs at least one sample".into(),
            ));
        }
        if !self.val_loss.is_finite() {
            return Err(Error::NonFinite { index: 0 });
        }
        Ok(())
    }
}

/// Per-client aggregation weights, in the same order as the contributing
/// updates; they always sum to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct AggregationWeights<F: Scalar> {
    entries: Vec<(ClientId, F)>,
}

impl<F: Scalar> AggregationWeights<F> {
    pub fn entries(&self) -> &[(ClientId, F)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn alphas(&self) -> impl Iterator<Item = F> + '_ {
        self.entries.iter().map(|(_, a)| *a)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationStrategy {
    #[default]
    Adaptive,
    PlainAverage,
    SampleWeighted,
}

impl AggregationStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Adaptive => "adaptive",
            Self::PlainAverage => "plain_average",
            Self::SampleWeighted => "sample_weighted",
        }
    }
}

impl std::str::FromStr for AggregationStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(Self::Adaptive),
            "plain_average" => Ok(Self::PlainAverage),
            "sample_weighted" => Ok(Self::SampleWeighted),
            other => Err(Error::InvalidConfig(format!(
                "unknown aggregation strategy `{other}` (expected adaptive, plain_average or sample_weighted)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregationConfig {
    pub strategy: AggregationStrategy,
    /// Global momentum factor in (0, 1]; 1 reduces the update to the direct
    /// weighted average.
    pub momentum: f64,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            strategy: AggregationStrategy::Adaptive,
            momentum: 1.0,
        }
    }
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.momentum.is_finite() && self.momentum > 0.0 && self.momentum <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "momentum must lie in (0, 1], got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

fn check_updates<F: Scalar>(updates: &[ClientUpdate<F>]) -> Result<()> {
    let first = updates.first().ok_or(Error::Empty("client updates"))?;
    for u in updates {
        u.validate()?;
        if u.round != first.round {
            return Err(Error::MixedRounds {
                first: first.round,
                other: u.round,
            });
        }
    }
    Ok(())
}

/// Adaptive weights: `raw_i = (n_i / sum n_j) * softmax(-F)_i`, renormalized
/// to sum to 1.
///
/// The softmax is computed with the losses shifted by their minimum, which
/// makes the weights exactly invariant to adding a constant to every loss
/// and yields exact 1/N ties for equal losses.
pub fn compute_adaptive_weights<F: Scalar>(
    updates: &[ClientUpdate<F>],
) -> Result<AggregationWeights<F>> {
    check_updates(updates)?;
    let total_samples: usize = updates.iter().map(|u| u.num_samples).sum();
    let total = cast::<F>(total_samples as f64);

    let min_loss = updates
        .iter()
        .map(|u| u.val_loss)
        .fold(F::infinity(), F::min);
    let exps: Vec<F> = updates
        .iter()
        .map(|u| (-(u.val_loss - min_loss)).exp())
        .collect();
    let exp_sum: F = exps.iter().copied().sum();

    let raw: Vec<F> = updates
        .iter()
        .zip(&exps)
        .map(|(u, e)| cast::<F>(u.num_samples as f64) / total * (*e / exp_sum))
        .collect();
    let raw_sum: F = raw.iter().copied().sum();

    let entries = updates
        .iter()
        .zip(&raw)
        .map(|(u, r)| (u.client_id.clone(), *r / raw_sum))
        .collect();
    Ok(AggregationWeights { entries })
}

/// Uniform weights `1/N`, the simple-averaging ablation baseline.
pub fn compute_plain_weights<F: Scalar>(
    updates: &[ClientUpdate<F>],
) -> Result<AggregationWeights<F>> {
    check_updates(updates)?;
    let n = cast::<F>(updates.len() as f64);
    let entries = updates
        .iter()
        .map(|u| (u.client_id.clone(), F::one() / n))
        .collect();
    Ok(AggregationWeights { entries })
}

/// Sample-count weights `n_i / sum n_j`.
pub fn compute_sample_weights<F: Scalar>(
    updates: &[ClientUpdate<F>],
) -> Result<AggregationWeights<F>> {
    check_updates(updates)?;
    let total_samples: usize = updates.iter().map(|u| u.num_samples).sum();
    let total = cast::<F>(total_samples as f64);
    let entries = updates
        .iter()
        .map(|u| (u.client_id.clone(), cast::<F>(u.num_samples as f64) / total))
        .collect();
    Ok(AggregationWeights { entries })
}

pub fn compute_weights<F: Scalar>(
    strategy: AggregationStrategy,
    updates: &[ClientUpdate<F>],
) -> Result<AggregationWeights<F>> {
    match strategy {
        AggregationStrategy::Adaptive => compute_adaptive_weights(updates),
        AggregationStrategy::PlainAverage => compute_plain_weights(updates),
        AggregationStrategy::SampleWeighted => compute_sample_weights(updates),
    }
}

/// Momentum global step: `w_prev + gamma * sum_i alpha_i (w_i - w_prev)`.
///
/// At `gamma == 1` this is computed as the direct weighted average
/// `sum_i alpha_i w_i`, which the momentum form equals exactly in real
/// arithmetic because the weights sum to 1.
pub fn global_update<F: Scalar>(
    w_prev: &ParameterVector<F>,
    updates: &[ClientUpdate<F>],
    weights: &AggregationWeights<F>,
    gamma: F,
) -> Result<ParameterVector<F>> {
    check_updates(updates)?;
    if !(gamma.is_finite() && gamma > F::zero() && gamma <= F::one()) {
        return Err(Error::InvalidConfig(format!(
            "momentum must lie in (0, 1], got {gamma}"
        )));
    }
    if weights.len() != updates.len() {
        return Err(Error::WeightMismatch(format!(
            "{} weights for {} updates",
            weights.len(),
            updates.len()
        )));
    }
    for (u, (id, _)) in updates.iter().zip(weights.entries()) {
        if u.client_id != *id {
            return Err(Error::WeightMismatch(format!(
                "weight for {id} does not line up with update from {}",
                u.client_id
            )));
        }
        if u.params.len() != w_prev.len() {
            return Err(Error::DimensionMismatch {
                expected: w_prev.len(),
                actual: u.params.len(),
            });
        }
    }
    let weight_sum: F = weights.alphas().sum();
    if (weight_sum - F::one()).abs() > cast(1e-9) {
        return Err(Error::WeightMismatch(format!(
            "weights sum to {weight_sum}, expected 1"
        )));
    }

    let mut out = vec![F::zero(); w_prev.len()];
    if gamma == F::one() {
        for (u, alpha) in updates.iter().zip(weights.alphas()) {
            for (o, p) in out.iter_mut().zip(u.params.iter()) {
                *o = *o + alpha * *p;
            }
        }
    } else {
        for (u, alpha) in updates.iter().zip(weights.alphas()) {
            for ((o, p), w) in out.iter_mut().zip(u.params.iter()).zip(w_prev.iter()) {
                *o = *o + alpha * (*p - *w);
            }
        }
        for (o, w) in out.iter_mut().zip(w_prev.iter()) {
            *o = *w + gamma * *o;
        }
    }
    ParameterVector::new(out)
}

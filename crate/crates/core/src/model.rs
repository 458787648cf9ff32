//! Surrogate multi-label scorer: a frozen linear base plus a trainable
//! low-rank adapter.
//!
//! Logits are `(W0 + scale * B * A) * x`; the per-label loss is binary
//! cross-entropy on the sigmoid of each logit, averaged over labels and over
//! the batch. Only the adapter parameters carry gradient; `W0` is distributed
//! once and never updated.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{AdapterShape, LowRankAdapter, ParameterVector};
use crate::scalar::{cast, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    /// Feature dimension d_in.
    pub input_dim: usize,
    /// Number of rubric dimensions k.
    pub num_labels: usize,
    /// Adapter rank r; must not exceed min(d_in, k).
    pub rank: usize,
    /// Adapter scaling factor s (conventionally alpha / rank).
    pub adapter_scale: f64,
}

impl ScorerConfig {
    /// LoRA alpha such that `adapter_scale = alpha / rank` matches common
    /// fine-tuning setups.
    pub const DEFAULT_LORA_ALPHA: f64 = 16.0;

    pub fn new(input_dim: usize, num_labels: usize, rank: usize) -> Result<Self> {
        let cfg = Self {
            input_dim,
            num_labels,
            rank,
            adapter_scale: Self::DEFAULT_LORA_ALPHA / rank as f64,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_labels == 0 {
            return Err(Error::InvalidConfig(
                "input_dim and num_labels must be positive".into(),
            ));
        }
        if self.rank == 0 || self.rank > self.input_dim.min(self.num_labels) {
            return Err(Error::InvalidConfig(format!(
                "rank {} must be in 1..=min(d_in={}, k={})",
                self.rank, self.input_dim, self.num_labels
            )));
        }
        if !(self.adapter_scale.is_finite() && self.adapter_scale > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "adapter_scale must be a positive real, got {}",
                self.adapter_scale
            )));
        }
        Ok(())
    }

    pub fn adapter_shape(&self) -> AdapterShape {
        AdapterShape {
            d_in: self.input_dim,
            d_out: self.num_labels,
            rank: self.rank,
        }
    }

    pub fn adapter_param_count(&self) -> usize {
        self.adapter_shape().param_count()
    }
}

/// Deterministic frozen base `W0` (k x d_in), entries N(0, 1/d_in).
///
/// Every participant derives it from the same seed, standing in for a locked
/// pretrained model distributed once by the coordinator.
pub fn seeded_frozen_base<F: Scalar>(config: &ScorerConfig, seed: u64) -> Array2<F> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let sd = 1.0 / (config.input_dim as f64).sqrt();
    Array2::from_shape_fn((config.num_labels, config.input_dim), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        cast(z * sd)
    })
}

/// Deterministic initial adapter: A random N(0, 1/d_in), B zero.
///
/// B = 0 keeps the initial model equal to the frozen base while the non-zero
/// A lets gradients flow into B from the first step (A = B = 0 is a
/// stationary point of the bilinear factorization).
pub fn seeded_adapter_init<F: Scalar>(config: &ScorerConfig, seed: u64) -> Result<LowRankAdapter<F>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let sd = 1.0 / (config.input_dim as f64).sqrt();
    let a = Array2::from_shape_fn((config.rank, config.input_dim), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        cast::<F>(z * sd)
    });
    let b = Array2::zeros((config.num_labels, config.rank));
    LowRankAdapter::new(a, b, cast(config.adapter_scale))
}

/// Frozen linear base plus trainable low-rank adapter.
#[derive(Clone, Debug)]
pub struct Scorer<F: Scalar> {
    frozen: Arc<Array2<F>>,
    adapter: LowRankAdapter<F>,
    config: ScorerConfig,
}

impl<F: Scalar> Scorer<F> {
    pub fn new(
        frozen: Arc<Array2<F>>,
        adapter: LowRankAdapter<F>,
        config: ScorerConfig,
    ) -> Result<Self> {
        config.validate()?;
        if frozen.nrows() != config.num_labels || frozen.ncols() != config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: config.num_labels * config.input_dim,
                actual: frozen.len(),
            });
        }
        if adapter.shape() != config.adapter_shape() {
            return Err(Error::InvalidConfig(format!(
                "adapter shape {:?} does not match config {:?}",
                adapter.shape(),
                config.adapter_shape()
            )));
        }
        Ok(Self {
            frozen,
            adapter,
            config,
        })
    }

    /// Scorer with the adapter decoded from a flat parameter vector.
    pub fn with_adapter_params(
        frozen: Arc<Array2<F>>,
        config: ScorerConfig,
        params: &ParameterVector<F>,
    ) -> Result<Self> {
        let adapter =
            LowRankAdapter::unflatten(params, config.adapter_shape(), cast(config.adapter_scale))?;
        Self::new(frozen, adapter, config)
    }

    pub fn config(&self) -> &ScorerConfig {
        &self.config
    }

    pub fn frozen(&self) -> &Arc<Array2<F>> {
        &self.frozen
    }

    pub fn adapter(&self) -> &LowRankAdapter<F> {
        &self.adapter
    }

    pub fn adapter_params(&self) -> ParameterVector<F> {
        self.adapter.flatten()
    }

    pub fn set_adapter_params(&mut self, params: &ParameterVector<F>) -> Result<()> {
        self.adapter = LowRankAdapter::unflatten(
            params,
            self.config.adapter_shape(),
            cast(self.config.adapter_scale),
        )?;
        Ok(())
    }

    fn logits(&self, x: ArrayView1<'_, F>) -> Array1<F> {
        let mut z = self.frozen.dot(&x);
        z += &self.adapter.delta_apply(x);
        z
    }

    /// Logits `(W0 + s*B*A) * x`.
    pub fn forward(&self, x: &[F]) -> Result<Vec<F>> {
        self.check_features(x)?;
        Ok(self.logits(ArrayView1::from(x)).to_vec())
    }

    /// One bit per rubric dimension: 1 iff sigmoid(logit) >= 0.5,
    /// i.e. logit >= 0.
    pub fn predict_labels(&self, x: &[F]) -> Result<Vec<u8>> {
        self.check_features(x)?;
        Ok(self
            .logits(ArrayView1::from(x))
            .iter()
            .map(|z| u8::from(*z >= F::zero()))
            .collect())
    }

    pub fn predict_batch<'a, I>(&self, xs: I) -> Result<Vec<Vec<u8>>>
    where
        I: IntoIterator<Item = &'a [F]>,
    {
        xs.into_iter().map(|x| self.predict_labels(x)).collect()
    }

    /// Mean binary cross-entropy over a batch, averaged over the k labels,
    /// together with the gradient over the flattened adapter parameters.
    ///
    /// The gradient layout matches [`LowRankAdapter::flatten`]: A row-major,
    /// then B row-major.
    pub fn loss_and_grad<'a, I>(&self, batch: I) -> Result<(F, ParameterVector<F>)>
    where
        I: IntoIterator<Item = (&'a [F], &'a [u8])>,
    {
        let shape = self.config.adapter_shape();
        let mut grad_a: Array2<F> = Array2::zeros((shape.rank, shape.d_in));
        let mut grad_b: Array2<F> = Array2::zeros((shape.d_out, shape.rank));
        let mut total = F::zero();
        let mut count = 0usize;

        for (x, y) in batch {
            self.check_features(x)?;
            if y.len() != self.config.num_labels {
                return Err(Error::DimensionMismatch {
                    expected: self.config.num_labels,
                    actual: y.len(),
                });
            }
            let xv = ArrayView1::from(x);
            let ax = self.adapter.a().dot(&xv);
            let mut z = self.frozen.dot(&xv);
            z.scaled_add(self.adapter.scale(), &self.adapter.b().dot(&ax));

            // g_j = sigmoid(z_j) - y_j, accumulated unscaled; the 1/(m*k)
            // factor is applied once after the loop.
            let mut g = Array1::zeros(self.config.num_labels);
            for (j, (zj, yj)) in z.iter().zip(y).enumerate() {
                if *yj > 1 {
                    return Err(Error::NonBinaryLabel { sample: count, dim: j });
                }
                let yf = cast::<F>(f64::from(*yj));
                total = total + bce(*zj, yf);
                g[j] = sigmoid(*zj) - yf;
            }

            // dL/dB += s * g (Ax)^T ; dL/dA += s * (B^T g) x^T
            let s = self.adapter.scale();
            let btg = self.adapter.b().t().dot(&g);
            for (j, gj) in g.iter().enumerate() {
                let row_scale = s * *gj;
                grad_b
                    .row_mut(j)
                    .iter_mut()
                    .zip(ax.iter())
                    .for_each(|(out, axp)| *out = *out + row_scale * *axp);
            }
            for (p, bp) in btg.iter().enumerate() {
                let row_scale = s * *bp;
                grad_a
                    .row_mut(p)
                    .iter_mut()
                    .zip(x)
                    .for_each(|(out, xq)| *out = *out + row_scale * *xq);
            }
            count += 1;
        }

        if count == 0 {
            return Err(Error::Empty("loss_and_grad batch"));
        }
        let denom = cast::<F>((count * self.config.num_labels) as f64);
        let loss = total / denom;
        let mut values = Vec::with_capacity(shape.param_count());
        values.extend(grad_a.iter().map(|v| *v / denom));
        values.extend(grad_b.iter().map(|v| *v / denom));
        Ok((loss, ParameterVector::new(values)?))
    }

    /// Mean loss without gradients (validation / reporting path).
    pub fn mean_loss<'a, I>(&self, data: I) -> Result<F>
    where
        I: IntoIterator<Item = (&'a [F], &'a [u8])>,
    {
        let mut total = F::zero();
        let mut count = 0usize;
        for (x, y) in data {
            self.check_features(x)?;
            if y.len() != self.config.num_labels {
                return Err(Error::DimensionMismatch {
                    expected: self.config.num_labels,
                    actual: y.len(),
                });
            }
            let z = self.logits(ArrayView1::from(x));
            for (zj, yj) in z.iter().zip(y) {
                if *yj > 1 {
                    return Err(Error::NonBinaryLabel { sample: count, dim: 0 });
                }
                total = total + bce(*zj, cast(f64::from(*yj)));
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::Empty("mean_loss data"));
        }
        Ok(total / cast((count * self.config.num_labels) as f64))
    }

    fn check_features(&self, x: &[F]) -> Result<()> {
        if x.len() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                actual: x.len(),
            });
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(())
    }
}

fn sigmoid<F: Scalar>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

/// Numerically stable binary cross-entropy of a logit against a 0/1 target:
/// `max(z, 0) - z*y + ln(1 + exp(-|z|))`.
fn bce<F: Scalar>(z: F, y: F) -> F {
    z.max(F::zero()) - z * y + (-z.abs()).exp().ln_1p()
}

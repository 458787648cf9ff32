//! Dense parameter vectors and the low-rank adapter factorization.
//!
//! `ParameterVector` is the flat vector of trainable parameters exchanged
//! between clients and server. `LowRankAdapter` holds the trainable A/B
//! factors added on top of a frozen base matrix; only its flattened form
//! travels over the wire.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Immutable flat vector of model parameters.
///
/// Every constructor checks entries for NaN/Inf, so downstream arithmetic can
/// rely on finite data. All operations return new vectors; existing ones are
/// never mutated.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector<F: Scalar> {
    values: Vec<F>,
}

impl<F: Scalar> ParameterVector<F> {
    pub fn new(values: Vec<F>) -> Result<Self> {
        for (index, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index });
            }
        }
        Ok(Self { values })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![F::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[F] {
        &self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, F> {
        self.values.iter()
    }

    /// Euclidean norm; 0 exactly when all entries are 0.
    pub fn l2_norm(&self) -> F {
        self.values
            .iter()
            .map(|v| *v * *v)
            .sum::<F>()
            .sqrt()
    }

    /// `alpha * x + y` elementwise.
    pub fn axpy(alpha: F, x: &Self, y: &Self) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                actual: y.len(),
            });
        }
        let values = x
            .values
            .iter()
            .zip(&y.values)
            .map(|(xi, yi)| alpha * *xi + *yi)
            .collect();
        Self::new(values)
    }

    /// `self - other` elementwise.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        Self::axpy(-F::one(), other, self)
    }

    /// `self * c` elementwise.
    pub fn scale(&self, c: F) -> Result<Self> {
        Self::new(self.values.iter().map(|v| *v * c).collect())
    }
}

impl<F: Scalar> Serialize for ParameterVector<F> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.values.serialize(serializer)
    }
}

impl<'de, F: Scalar> Deserialize<'de> for ParameterVector<F> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<F>::deserialize(deserializer)?;
        ParameterVector::new(values).map_err(serde::de::Error::custom)
    }
}

/// Shape of a low-rank adapter: A is `rank x d_in`, B is `d_out x rank`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterShape {
    pub d_in: usize,
    pub d_out: usize,
    pub rank: usize,
}

impl AdapterShape {
    /// Number of trainable parameters: `rank * (d_in + d_out)`.
    pub fn param_count(&self) -> usize {
        self.rank * (self.d_in + self.d_out)
    }
}

/// Trainable low-rank factors. The effective weight delta is `scale * B * A`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankAdapter<F: Scalar> {
    a: Array2<F>,
    b: Array2<F>,
    scale: F,
}

impl<F: Scalar> LowRankAdapter<F> {
    pub fn new(a: Array2<F>, b: Array2<F>, scale: F) -> Result<Self> {
        if a.nrows() != b.ncols() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                actual: b.ncols(),
            });
        }
        if a.nrows() == 0 || a.ncols() == 0 || b.nrows() == 0 {
            return Err(Error::InvalidConfig(
                "adapter dimensions must be positive".into(),
            ));
        }
        if !(scale.is_finite() && scale > F::zero()) {
            return Err(Error::InvalidConfig(format!(
                "adapter scale must be a positive real, got {scale}"
            )));
        }
        for (index, v) in a.iter().chain(b.iter()).enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index });
            }
        }
        Ok(Self { a, b, scale })
    }

    pub fn zeros(shape: AdapterShape, scale: F) -> Result<Self> {
        Self::new(
            Array2::zeros((shape.rank, shape.d_in)),
            Array2::zeros((shape.d_out, shape.rank)),
            scale,
        )
    }

    pub fn a(&self) -> &Array2<F> {
        &self.a
    }

    pub fn b(&self) -> &Array2<F> {
        &self.b
    }

    pub fn scale(&self) -> F {
        self.scale
    }

    pub fn rank(&self) -> usize {
        self.a.nrows()
    }

    pub fn shape(&self) -> AdapterShape {
        AdapterShape {
            d_in: self.a.ncols(),
            d_out: self.b.nrows(),
            rank: self.a.nrows(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.shape().param_count()
    }

    /// Flatten to a parameter vector: all of A row-major, then B row-major.
    pub fn flatten(&self) -> ParameterVector<F> {
        let mut values = Vec::with_capacity(self.param_count());
        values.extend(self.a.iter().copied());
        values.extend(self.b.iter().copied());
        ParameterVector { values }
    }

    /// Inverse of [`flatten`](Self::flatten); exact bijection.
    pub fn unflatten(v: &ParameterVector<F>, shape: AdapterShape, scale: F) -> Result<Self> {
        if v.len() != shape.param_count() {
            return Err(Error::DimensionMismatch {
                expected: shape.param_count(),
                actual: v.len(),
            });
        }
        let split = shape.rank * shape.d_in;
        let a = Array2::from_shape_vec((shape.rank, shape.d_in), v.as_slice()[..split].to_vec())
            .expect("shape checked");
        let b = Array2::from_shape_vec((shape.d_out, shape.rank), v.as_slice()[split..].to_vec())
            .expect("shape checked");
        Self::new(a, b, scale)
    }

    /// `scale * B * (A * x)`: the adapter's contribution to the logits.
    pub fn delta_apply(&self, x: ArrayView1<'_, F>) -> Array1<F> {
        let ax = self.a.dot(&x);
        self.b.dot(&ax).mapv_into(|v| v * self.scale)
    }

    /// Materialized `scale * B * A`, mostly for tests.
    pub fn effective_delta(&self) -> Array2<F> {
        self.b.dot(&self.a).mapv_into(|v| v * self.scale)
    }
}

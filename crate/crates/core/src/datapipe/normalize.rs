//! Global feature normalization fitted once on a public calibration set and
//! applied unchanged by every participant.

use serde::{Deserialize, Serialize};

use super::schema::StudentRecord;
use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

/// Lower bound on the stored standard deviation; constant columns divide by
/// this floor instead of zero.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Per-coordinate mean and (floored) population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct NormalizationParams<F: Scalar> {
    pub mu: Vec<F>,
    pub sigma_norm: Vec<F>,
}

pub fn fit_normalization<F: Scalar>(
    calibration: &[StudentRecord<F>],
) -> Result<NormalizationParams<F>> {
    let first = calibration.first().ok_or(Error::Empty("calibration set"))?;
    let d = first.features.len();
    let n = cast::<F>(calibration.len() as f64);

    let mut mu = vec![F::zero(); d];
    for rec in calibration {
        if rec.features.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: rec.features.len(),
            });
        }
        for (m, x) in mu.iter_mut().zip(&rec.features) {
            *m = *m + *x;
        }
    }
    for m in &mut mu {
        *m = *m / n;
    }

    let floor = cast::<F>(SIGMA_FLOOR);
    let mut var = vec![F::zero(); d];
    for rec in calibration {
        for ((v, m), x) in var.iter_mut().zip(&mu).zip(&rec.features) {
            let diff = *x - *m;
            *v = *v + diff * diff;
        }
    }
    let sigma_norm = var
        .into_iter()
        .map(|v| (v / n).sqrt().max(floor))
        .collect();

    Ok(NormalizationParams { mu, sigma_norm })
}

/// `(features - mu) / sigma_norm` elementwise; labels and id unchanged.
pub fn normalize<F: Scalar>(
    rec: &StudentRecord<F>,
    params: &NormalizationParams<F>,
) -> Result<StudentRecord<F>> {
    if rec.features.len() != params.mu.len() {
        return Err(Error::DimensionMismatch {
            expected: params.mu.len(),
            actual: rec.features.len(),
        });
    }
    let features = rec
        .features
        .iter()
        .zip(&params.mu)
        .zip(&params.sigma_norm)
        .map(|((x, m), s)| (*x - *m) / *s)
        .collect();
    Ok(StudentRecord {
        prompt_id: rec.prompt_id.clone(),
        features,
        rubric_labels: rec.rubric_labels.clone(),
    })
}

pub fn normalize_dataset<F: Scalar>(
    recs: &[StudentRecord<F>],
    params: &NormalizationParams<F>,
) -> Result<Vec<StudentRecord<F>>> {
    recs.iter().map(|r| normalize(r, params)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(features: Vec<f64>) -> StudentRecord<f64> {
        StudentRecord {
            prompt_id: "p".into(),
            features,
            rubric_labels: vec![0],
        }
    }

    #[test]
    fn single_record_degenerates_to_floor() {
        let params = fit_normalization(&[rec(vec![2.0, -3.0])]).unwrap();
        assert_eq!(params.mu, vec![2.0, -3.0]);
        assert_eq!(params.sigma_norm, vec![SIGMA_FLOOR, SIGMA_FLOOR]);
    }

    #[test]
    fn two_point_hand_example() {
        let params = fit_normalization(&[rec(vec![0.0]), rec(vec![2.0])]).unwrap();
        assert_eq!(params.mu, vec![1.0]);
        assert_eq!(params.sigma_norm, vec![1.0]);
    }

    #[test]
    fn constant_column_hits_floor() {
        let params = fit_normalization(&[rec(vec![5.0, 1.0]), rec(vec![5.0, 3.0])]).unwrap();
        assert_eq!(params.sigma_norm[0], SIGMA_FLOOR);
        assert_eq!(params.sigma_norm[1], 1.0);
    }

    #[test]
    fn empty_calibration_rejected() {
        assert!(fit_normalization::<f64>(&[]).is_err());
    }

    #[test]
    fn identity_params_do_nothing() {
        let params = NormalizationParams {
            mu: vec![0.0, 0.0],
            sigma_norm: vec![1.0, 1.0],
        };
        let r = rec(vec![1.5, -2.5]);
        assert_eq!(normalize(&r, &params).unwrap(), r);
    }

    #[test]
    fn centering_zeroes_the_mean_point() {
        let params = NormalizationParams {
            mu: vec![1.5, -2.5],
            sigma_norm: vec![2.0, 4.0],
        };
        let r = rec(vec![1.5, -2.5]);
        assert_eq!(normalize(&r, &params).unwrap().features, vec![0.0, 0.0]);
    }

    #[test]
    fn hand_example() {
        let params = NormalizationParams {
            mu: vec![1.0],
            sigma_norm: vec![2.0],
        };
        assert_eq!(normalize(&rec(vec![3.0]), &params).unwrap().features, vec![1.0]);
    }

    #[test]
    fn arity_mismatch_rejected() {
        let params = NormalizationParams {
            mu: vec![0.0],
            sigma_norm: vec![1.0],
        };
        assert!(normalize(&rec(vec![1.0, 2.0]), &params).is_err());
    }

    #[test]
    fn self_fit_normalization_standardizes() {
        let recs: Vec<_> = (0..100)
            .map(|i| rec(vec![i as f64, 3.0 * i as f64 - 7.0]))
            .collect();
        let params = fit_normalization(&recs).unwrap();
        let normed = normalize_dataset(&recs, &params).unwrap();
        for d in 0..2 {
            let mean: f64 = normed.iter().map(|r| r.features[d]).sum::<f64>() / 100.0;
            let var: f64 = normed
                .iter()
                .map(|r| (r.features[d] - mean).powi(2))
                .sum::<f64>()
                / 100.0;
            assert!(mean.abs() < 1e-9, "mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-9, "std {}", var.sqrt());
        }
    }

    #[test]
    fn pipeline_is_deterministic() {
        let recs: Vec<_> = (0..50).map(|i| rec(vec![(i * i) as f64 * 0.1, -(i as f64)])).collect();
        let params = fit_normalization(&recs).unwrap();
        let a = normalize_dataset(&recs, &params).unwrap();
        let b = normalize_dataset(&recs, &params).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.features.iter().zip(&y.features) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }
}

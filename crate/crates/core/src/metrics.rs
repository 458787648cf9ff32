//! Scoring-quality metrics: exact-match accuracy, macro precision/recall/F1,
//! per-cell rubric match, total-score MAE, and the sample-weighted global
//! objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub rubric_match: f64,
    pub mae: f64,
}

impl MetricReport {
    pub fn compute(preds: &[Vec<u8>], truth: &[Vec<u8>]) -> Result<Self> {
        let (precision, recall, f1) = macro_prf(preds, truth)?;
        Ok(Self {
            accuracy: exact_match_accuracy(preds, truth)?,
            precision,
            recall,
            f1,
            rubric_match: rubric_match(preds, truth)?,
            mae: score_mae(preds, truth)?,
        })
    }
}

fn check_shapes(preds: &[Vec<u8>], truth: &[Vec<u8>]) -> Result<usize> {
    if preds.is_empty() || truth.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    if preds.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: preds.len(),
        });
    }
    let k = truth[0].len();
    if k == 0 {
        return Err(Error::Empty("label vector"));
    }
    for (sample, (p, t)) in preds.iter().zip(truth).enumerate() {
        if p.len() != k || t.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: if p.len() != k { p.len() } else { t.len() },
            });
        }
        for (dim, v) in p.iter().chain(t.iter()).enumerate() {
            if *v > 1 {
                return Err(Error::NonBinaryLabel {
                    sample,
                    dim: dim % k,
                });
            }
        }
    }
    Ok(k)
}

/// Fraction of samples whose full label vector matches exactly.
pub fn exact_match_accuracy(preds: &[Vec<u8>], truth: &[Vec<u8>]) -> Result<f64> {
    check_shapes(preds, truth)?;
    let hits = preds.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Per-label precision/recall/F1 macro-averaged over the k labels, with the
/// 0-convention for empty denominators.
pub fn macro_prf(preds: &[Vec<u8>], truth: &[Vec<u8>]) -> Result<(f64, f64, f64)> {
    let k = check_shapes(preds, truth)?;
    let mut psum = 0.0;
    let mut rsum = 0.0;
    let mut fsum = 0.0;
    for j in 0..k {
        let mut tp = 0u64;
        let mut fp = 0u64;
        let mut fn_ = 0u64;
        for (p, t) in preds.iter().zip(truth) {
            match (p[j], t[j]) {
                (1, 1) => tp += 1,
                (1, 0) => fp += 1,
                (0, 1) => fn_ += 1,
                _ => {}
            }
        }
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        psum += precision;
        rsum += recall;
        fsum += f1;
    }
    let kf = k as f64;
    Ok((psum / kf, rsum / kf, fsum / kf))
}

/// Fraction of individual (sample, rubric-dimension) cells scored correctly.
pub fn rubric_match(preds: &[Vec<u8>], truth: &[Vec<u8>]) -> Result<f64> {
    let k = check_shapes(preds, truth)?;
    let correct: usize = preds
        .iter()
        .zip(truth)
        .map(|(p, t)| p.iter().zip(t).filter(|(a, b)| a == b).count())
        .sum();
    Ok(correct as f64 / (preds.len() * k) as f64)
}

/// Mean over samples of |predicted total score - true total score|.
pub fn score_mae(preds: &[Vec<u8>], truth: &[Vec<u8>]) -> Result<f64> {
    check_shapes(preds, truth)?;
    let total: f64 = preds
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let ps: i64 = p.iter().map(|v| i64::from(*v)).sum();
            let ts: i64 = t.iter().map(|v| i64::from(*v)).sum();
            (ps - ts).abs() as f64
        })
        .sum();
    Ok(total / preds.len() as f64)
}

/// Sample-weighted global objective: sum of (n_i / n) * F_i.
pub fn evaluate_global_objective<F: Scalar>(models_losses: &[(usize, F)]) -> Result<F> {
    if models_losses.is_empty() {
        return Err(Error::Empty("objective contributions"));
    }
    let total: usize = models_losses.iter().map(|(n, _)| *n).sum();
    for (n, loss) in models_losses {
        if *n == 0 {
            return Err(Error::InvalidConfig("sample count must be positive".into()));
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite { index: 0 });
        }
    }
    let tf = cast::<F>(total as f64);
    Ok(models_losses
        .iter()
        .map(|(n, loss)| cast::<F>(*n as f64) / tf * *loss)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(rows: &[&[u8]]) -> Vec<Vec<u8>> {
        rows.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn exact_match_extremes() {
        let t = v(&[&[1, 0], &[0, 1]]);
        assert_eq!(exact_match_accuracy(&t, &t).unwrap(), 1.0);
        let flipped = v(&[&[0, 1], &[1, 0]]);
        assert_eq!(exact_match_accuracy(&flipped, &t).unwrap(), 0.0);
    }

    #[test]
    fn exact_match_counting() {
        let t = v(&[&[1], &[0], &[1], &[1]]);
        let p = v(&[&[1], &[0], &[1], &[0]]);
        assert_eq!(exact_match_accuracy(&p, &t).unwrap(), 0.75);
    }

    #[test]
    fn exact_match_rejects_mismatched_lengths() {
        let t = v(&[&[1], &[0]]);
        let p = v(&[&[1]]);
        assert!(exact_match_accuracy(&p, &t).is_err());
        assert!(exact_match_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn macro_prf_perfect() {
        let t = v(&[&[1, 0], &[0, 1]]);
        assert_eq!(macro_prf(&t, &t).unwrap(), (1.0, 1.0, 1.0));
    }

    #[test]
    fn macro_prf_degenerate_label_zero_convention() {
        // Second label never predicted and never true: contributes (0,0,0).
        let t = v(&[&[1, 0], &[1, 0]]);
        let p = v(&[&[1, 0], &[1, 0]]);
        let (precision, recall, f1) = macro_prf(&p, &t).unwrap();
        assert_eq!((precision, recall, f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn macro_prf_hand_confusion_matrix() {
        // label1: P=1, R=0.5, F1=2/3; label2: P=R=F1=1; macro F1 = 5/6.
        let t = v(&[&[1, 0], &[1, 1]]);
        let p = v(&[&[1, 0], &[0, 1]]);
        let (precision, recall, f1) = macro_prf(&p, &t).unwrap();
        assert!((precision - 1.0).abs() < 1e-15);
        assert!((recall - 0.75).abs() < 1e-15);
        assert!((f1 - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn rubric_match_examples() {
        let t = v(&[&[1, 1], &[0, 0], &[1, 0], &[0, 1], &[1, 1]]);
        assert_eq!(rubric_match(&t, &t).unwrap(), 1.0);
        // one wrong cell out of 10
        let mut p = t.clone();
        p[4][1] = 0;
        assert_eq!(rubric_match(&p, &t).unwrap(), 0.9);
        let all_wrong: Vec<Vec<u8>> = t
            .iter()
            .map(|r| r.iter().map(|b| 1 - b).collect())
            .collect();
        assert_eq!(rubric_match(&all_wrong, &t).unwrap(), 0.0);
    }

    #[test]
    fn score_mae_examples() {
        let t = v(&[&[1, 1, 1, 1, 1]]);
        assert_eq!(score_mae(&t, &t).unwrap(), 0.0);
        // pred sum 3, true sum 5 -> 2.0
        let p = v(&[&[1, 1, 1, 0, 0]]);
        assert_eq!(score_mae(&p, &t).unwrap(), 2.0);
        // deviations 1 and 0 -> 0.5
        let t2 = v(&[&[1, 0], &[1, 1]]);
        let p2 = v(&[&[1, 1], &[1, 1]]);
        assert_eq!(score_mae(&p2, &t2).unwrap(), 0.5);
    }

    #[test]
    fn global_objective_examples() {
        assert_eq!(evaluate_global_objective(&[(7, 0.42)]).unwrap(), 0.42);
        let equal = [(10usize, 0.2f64), (10, 0.4)];
        assert!((evaluate_global_objective(&equal).unwrap() - 0.3).abs() < 1e-15);
        let weighted = [(100usize, 0.5f64), (300, 1.0)];
        assert!((evaluate_global_objective(&weighted).unwrap() - 0.875).abs() < 1e-15);
        assert!(evaluate_global_objective::<f64>(&[]).is_err());
        assert!(evaluate_global_objective(&[(0, 0.5)]).is_err());
    }

    #[test]
    fn rubric_match_bounds_exact_match() {
        let t = v(&[&[1, 0, 1], &[0, 0, 1], &[1, 1, 1]]);
        let p = v(&[&[1, 1, 1], &[0, 0, 1], &[0, 1, 1]]);
        let rm = rubric_match(&p, &t).unwrap();
        let em = exact_match_accuracy(&p, &t).unwrap();
        assert!(rm >= em);
    }

    #[test]
    fn rejects_non_binary_labels() {
        let t = v(&[&[2]]);
        assert!(matches!(
            exact_match_accuracy(&t, &t),
            Err(Error::NonBinaryLabel { .. })
        ));
    }
}

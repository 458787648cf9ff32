//! Client-side local training: shuffled mini-batch SGD on the adapter
//! parameters with per-epoch validation and early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::datapipe::StudentRecord;
use crate::error::{Error, Result};
use crate::model::Scorer;
use crate::params::ParameterVector;
use crate::scalar::{cast, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    /// Epochs without a strict improvement of the best validation loss
    /// before local training stops.
    pub patience: usize,
    pub rng_seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            batch_size: 16,
            local_epochs: 5,
            patience: 2,
            rng_seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if self.local_epochs == 0 {
            return Err(Error::InvalidConfig("local_epochs must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, rng_seed: u64) -> Self {
        Self { rng_seed, ..*self }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport<F: Scalar> {
    pub final_params: ParameterVector<F>,
    pub train_loss: F,
    pub val_loss: F,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// One SGD step: `params - lr * grad`.
pub fn sgd_step<F: Scalar>(
    params: &ParameterVector<F>,
    grad: &ParameterVector<F>,
    lr: F,
) -> Result<ParameterVector<F>> {
    if !(lr.is_finite() && lr > F::zero()) {
        return Err(Error::InvalidConfig(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    ParameterVector::axpy(-lr, grad, params)
}

/// True iff the best (minimum) validation loss saw no strict improvement in
/// the last `patience` entries. Fewer than `patience + 1` entries never stop.
pub fn should_stop<F: Scalar>(val_losses: &[F], patience: usize) -> bool {
    if patience == 0 || val_losses.len() < patience + 1 {
        return false;
    }
    let cut = val_losses.len() - patience;
    let prior_best = val_losses[..cut]
        .iter()
        .copied()
        .fold(F::infinity(), F::min);
    !val_losses[cut..].iter().any(|l| *l < prior_best)
}

/// Local training loop: up to `local_epochs` epochs of shuffled mini-batch
/// SGD on the adapter parameters, validation loss after each epoch, early
/// stopping per [`should_stop`]. Deterministic given `cfg.rng_seed`.
pub fn local_train<F: Scalar>(
    scorer: &Scorer<F>,
    train: &[StudentRecord<F>],
    val: &[StudentRecord<F>],
    cfg: &TrainingConfig,
) -> Result<TrainReport<F>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation set"));
    }

    let mut work = scorer.clone();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.rng_seed);
    let lr = cast::<F>(cfg.learning_rate);
    let mut indices: Vec<usize> = (0..train.len()).collect();
    let mut val_losses: Vec<F> = Vec::with_capacity(cfg.local_epochs);
    let mut epochs_run = 0;
    let mut stopped_early = false;

    for _ in 0..cfg.local_epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(cfg.batch_size) {
            let batch = chunk
                .iter()
                .map(|&i| (train[i].features.as_slice(), train[i].rubric_labels.as_slice()));
            let (_, grad) = work.loss_and_grad(batch)?;
            let next = sgd_step(&work.adapter_params(), &grad, lr)?;
            work.set_adapter_params(&next)?;
        }
        epochs_run += 1;
        val_losses.push(work.mean_loss(record_pairs(val))?);
        if should_stop(&val_losses, cfg.patience) {
            stopped_early = true;
            break;
        }
    }

    Ok(TrainReport {
        final_params: work.adapter_params(),
        train_loss: work.mean_loss(record_pairs(train))?,
        val_loss: *val_losses.last().expect("at least one epoch ran"),
        epochs_run,
        stopped_early,
    })
}

pub fn record_pairs<F: Scalar>(
    records: &[StudentRecord<F>],
) -> impl Iterator<Item = (&[F], &[u8])> {
    records
        .iter()
        .map(|r| (r.features.as_slice(), r.rubric_labels.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{seeded_frozen_base, ScorerConfig};
    use crate::params::LowRankAdapter;
    use rand_distr::{Distribution, StandardNormal};
    use std::sync::Arc;

    fn toy_scorer(seed: u64) -> Scorer<f64> {
        let config = ScorerConfig::new(4, 2, 2).unwrap();
        let frozen = Arc::new(seeded_frozen_base(&config, seed));
        let adapter = crate::model::seeded_adapter_init(&config, seed + 1).unwrap();
        Scorer::new(frozen, adapter, config).unwrap()
    }

    fn toy_records(n: usize, seed: u64) -> Vec<StudentRecord<f64>> {
        // Linearly separable: labels from a fixed teacher sign rule.
        let teacher = [[1.0, -2.0, 0.5, 1.5], [-1.0, 0.5, 2.0, -0.5]];
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let x: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
                let labels = teacher
                    .iter()
                    .map(|t| u8::from(t.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() >= 0.0))
                    .collect();
                StudentRecord {
                    prompt_id: format!("r-{i}"),
                    features: x,
                    rubric_labels: labels,
                }
            })
            .collect()
    }

    #[test]
    fn sgd_step_hand_example() {
        let p = ParameterVector::new(vec![1.0]).unwrap();
        let g = ParameterVector::new(vec![0.5]).unwrap();
        assert_eq!(sgd_step(&p, &g, 0.1).unwrap().as_slice(), &[0.95]);
    }

    #[test]
    fn sgd_zero_grad_is_stationary() {
        let p = ParameterVector::new(vec![1.0, -2.0]).unwrap();
        let g = ParameterVector::zeros(2);
        assert_eq!(sgd_step(&p, &g, 0.1).unwrap(), p);
    }

    #[test]
    fn sgd_rejects_nonpositive_lr() {
        let p = ParameterVector::zeros(1);
        assert!(sgd_step(&p, &p, 0.0).is_err());
        assert!(sgd_step(&p, &p, -1.0).is_err());
    }

    #[test]
    fn should_stop_rule_trace() {
        // Best 0.9 not improved over the last 2 entries.
        assert!(should_stop(&[1.0, 0.9, 0.91, 0.92], 2));
        // 0.9 strictly improved the prior best 1.0 within the window.
        assert!(!should_stop(&[1.0, 0.9, 0.91], 2));
        assert!(!should_stop(&[1.0, 0.9], 2));
    }

    #[test]
    fn should_stop_never_on_strict_decrease() {
        let losses = [1.0, 0.9, 0.8, 0.7, 0.6];
        for p in 1..4 {
            assert!(!should_stop(&losses, p));
        }
    }

    #[test]
    fn should_stop_needs_history() {
        assert!(!should_stop(&[1.0, 1.0], 2));
        assert!(!should_stop::<f64>(&[], 1));
    }

    #[test]
    fn training_reduces_loss_on_separable_data() {
        let scorer = toy_scorer(5);
        let records = toy_records(64, 6);
        let (train, val) = records.split_at(51);
        let cfg = TrainingConfig {
            learning_rate: 0.3,
            batch_size: 16,
            local_epochs: 5,
            patience: 5,
            rng_seed: 1,
        };
        let initial = scorer.mean_loss(record_pairs(train)).unwrap();
        let report = local_train(&scorer, train, val, &cfg).unwrap();
        assert!(
            report.train_loss < initial,
            "train loss {} did not drop below {}",
            report.train_loss,
            initial
        );
        assert!(report.epochs_run <= cfg.local_epochs);
        assert!(report.val_loss.is_finite());
    }

    #[test]
    fn zero_epochs_config_invalid() {
        let cfg = TrainingConfig {
            local_epochs: 0,
            ..TrainingConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn saturated_dataset_leaves_params_unchanged() {
        // Labels already satisfied at saturation: gradients are exactly zero.
        let config = ScorerConfig {
            input_dim: 2,
            num_labels: 1,
            rank: 1,
            adapter_scale: 1.0,
        };
        let frozen = Arc::new(ndarray::array![[50.0, 0.0]]);
        let adapter = LowRankAdapter::zeros(config.adapter_shape(), 1.0).unwrap();
        let scorer = Scorer::new(frozen, adapter, config).unwrap();
        let records: Vec<StudentRecord<f64>> = (0..8)
            .map(|i| StudentRecord {
                prompt_id: format!("s-{i}"),
                features: vec![1.0, 0.0],
                rubric_labels: vec![1],
            })
            .collect();
        let cfg = TrainingConfig {
            learning_rate: 0.1,
            batch_size: 4,
            local_epochs: 2,
            patience: 3,
            rng_seed: 0,
        };
        let before = scorer.adapter_params();
        let report = local_train(&scorer, &records, &records, &cfg).unwrap();
        assert_eq!(report.final_params, before);
    }

    #[test]
    fn same_seed_gives_bit_identical_reports() {
        let scorer = toy_scorer(7);
        let records = toy_records(48, 8);
        let (train, val) = records.split_at(38);
        let cfg = TrainingConfig {
            learning_rate: 0.2,
            batch_size: 8,
            local_epochs: 3,
            patience: 2,
            rng_seed: 99,
        };
        let a = local_train(&scorer, train, val, &cfg).unwrap();
        let b = local_train(&scorer, train, val, &cfg).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.final_params.iter().zip(b.final_params.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn small_step_never_increases_batch_loss() {
        for seed in 0..20 {
            let scorer = toy_scorer(seed);
            let records = toy_records(8, seed + 100);
            let batch: Vec<(&[f64], &[u8])> = records
                .iter()
                .map(|r| (r.features.as_slice(), r.rubric_labels.as_slice()))
                .collect();
            let (before, grad) = scorer.loss_and_grad(batch.iter().copied()).unwrap();
            let stepped = sgd_step(&scorer.adapter_params(), &grad, 1e-3).unwrap();
            let after = Scorer::with_adapter_params(
                scorer.frozen().clone(),
                *scorer.config(),
                &stepped,
            )
            .unwrap()
            .mean_loss(batch.iter().copied())
            .unwrap();
            assert!(after <= before + 1e-9, "seed {seed}: {before} -> {after}");
        }
    }

    #[test]
    fn early_stopping_fires_on_plateau() {
        // Saturated data: gradients are exactly zero, so the validation loss
        // repeats bit-for-bit and stopping fires after patience + 1 epochs.
        let config = ScorerConfig {
            input_dim: 2,
            num_labels: 1,
            rank: 1,
            adapter_scale: 1.0,
        };
        let frozen = Arc::new(ndarray::array![[50.0, 0.0]]);
        let adapter = LowRankAdapter::zeros(config.adapter_shape(), 1.0).unwrap();
        let scorer = Scorer::new(frozen, adapter, config).unwrap();
        let records: Vec<StudentRecord<f64>> = (0..8)
            .map(|i| StudentRecord {
                prompt_id: format!("s-{i}"),
                features: vec![1.0, 0.0],
                rubric_labels: vec![1],
            })
            .collect();
        let cfg = TrainingConfig {
            learning_rate: 0.1,
            batch_size: 4,
            local_epochs: 50,
            patience: 2,
            rng_seed: 4,
        };
        let report = local_train(&scorer, &records, &records, &cfg).unwrap();
        assert!(report.stopped_early);
        assert_eq!(report.epochs_run, 3);
    }
}

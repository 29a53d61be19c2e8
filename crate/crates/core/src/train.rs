//! Mini-batch training of the scorer.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{augment, AugmentToggles};
use crate::error::{Error, Result};
use crate::features::MelSpectrogram;
use crate::nn::{huber_loss, Adam, AdamState, Architecture, ScorerModel, DEFAULT_DROPOUT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_floor: f64,
    pub lr_decay: f64,
    /// Epochs without a new best validation loss before the rate is cut.
    pub patience: usize,
    pub batch_size: usize,
    pub huber_delta: f64,
    /// Dropout after the dense layer.
    pub dropout: f64,
    /// Dropout after each convolution.
    pub conv_dropout: f64,
    pub seed: u64,
    pub augment: AugmentToggles,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr_start: 1e-4,
            lr_floor: 1e-6,
            lr_decay: 0.5,
            patience: 3,
            batch_size: 16,
            huber_delta: 1.0,
            dropout: DEFAULT_DROPOUT,
            conv_dropout: 0.0,
            seed: 42,
            augment: AugmentToggles::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "epochs and batch size must be positive",
            ));
        }
        if !(self.lr_floor > 0.0 && self.lr_floor <= self.lr_start) {
            return Err(Error::InvalidArgument(
                "learning rate floor must be in (0, start]",
            ));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) || self.huber_delta <= 0.0 {
            return Err(Error::InvalidArgument("invalid decay or huber delta"));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.conv_dropout) {
            return Err(Error::InvalidArgument("dropout must be in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: MelSpectrogram,
    pub label: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the lowest validation loss.
    pub model: ScorerModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub val_accuracy: f64,
}

pub fn train(
    arch: Architecture,
    train_set: &[Example],
    val_set: &[Example],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(arch, train_set, val_set, config, |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with(
    arch: Architecture,
    train_set: &[Example],
    val_set: &[Example],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.len() < 2 || val_set.len() < 2 {
        return Err(Error::TooFewExamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ScorerModel::init(arch, &mut rng)?
        .with_dropout(config.dropout)
        .with_conv_dropout(config.conv_dropout);
    for ex in train_set.iter().chain(val_set) {
        if ex.features.shape() != model.architecture().input {
            return Err(Error::ShapeMismatch {
                expected: model.architecture().input,
                got: ex.features.shape(),
            });
        }
    }
    let adam = Adam::default();
    let mut state = AdamState::new(model.param_count());
    let mut lr = config.lr_start;
    let mut best = (f64::INFINITY, 0, model.clone());
    let mut stale = 0;
    let mut log = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = vec![0.0f64; model.param_count()];
            for &i in batch {
                let ex = &train_set[i];
                let (x, _) = augment(&ex.features, &config.augment, &mut rng);
                let masks = model.sample_dropout(&mut rng);
                let (loss, g) =
                    model.loss_and_gradients(&x, ex.label, Some(masks), config.huber_delta)?;
                loss_sum += loss;
                for (a, b) in grads.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let k = 1.0 / batch.len() as f64;
            for g in grads.iter_mut() {
                *g *= k;
            }
            adam.step(model.params_mut(), &grads, &mut state, lr);
        }
        let train_loss = loss_sum / train_set.len() as f64;
        if !train_loss.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged(epoch));
        }
        let val_loss = evaluate(&model, val_set, config.huber_delta)?;
        let entry = EpochLog {
            epoch,
            train_loss,
            val_loss,
            lr,
        };
        on_epoch(&entry);
        log.push(entry);

        if val_loss < best.0 {
            best = (val_loss, epoch, model.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                lr = (lr * config.lr_decay).max(config.lr_floor);
                stale = 0;
            }
        }
    }
    let (best_val_loss, best_epoch, model) = best;
    let val_accuracy = accuracy(&model, val_set)?;
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        best_val_loss,
        val_accuracy,
    })
}

/// Mean inference-mode Huber loss.
pub fn evaluate(model: &ScorerModel, set: &[Example], delta: f64) -> Result<f64> {
    let mut sum = 0.0;
    for ex in set {
        sum += huber_loss(model.forward(&ex.features)?, ex.label, delta).0;
    }
    Ok(sum / set.len().max(1) as f64)
}

/// Share of examples where `score >= 0.5` agrees with `label >= 0.5`.
pub fn accuracy(model: &ScorerModel, set: &[Example]) -> Result<f64> {
    let mut hits = 0;
    for ex in set {
        if (model.forward(&ex.features)? >= 0.5) == (ex.label >= 0.5) {
            hits += 1;
        }
    }
    Ok(hits as f64 / set.len().max(1) as f64)
}

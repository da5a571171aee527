//! Mini-batch SGD with early stopping on validation loss.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{softmax, Dims, Network, Scalar};
use super::{AudioError, LabeledExample, VoiceModel};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self { learning_rate: 0.01, batch_size: 16, patience: 5, max_epochs: 100, seed: 0 }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<(), AudioError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(AudioError::InvalidParameter("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(AudioError::InvalidParameter("batch_size must be positive"));
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return Err(AudioError::InvalidParameter("patience and max_epochs must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Patience counter over validation losses. Epochs are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best_loss: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best_loss: f64::INFINITY, best_epoch: 0, since_best: 0 }
    }

    /// Records an epoch; returns true when this epoch is the new best.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best_loss {
            self.best_loss = val_loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }
}

fn input_of<T: Scalar>(e: &LabeledExample) -> Vec<T> {
    e.features.magnitudes().iter().map(|&v| T::from_f64(v)).collect()
}

/// Mean loss and accuracy of `net` over `data`.
pub fn evaluate<T: Scalar>(net: &Network<T>, data: &[LabeledExample]) -> (f64, f64) {
    if data.is_empty() {
        return (0.0, 0.0);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for e in data {
        let trace = net.forward(&input_of::<T>(e));
        let label = e.label.class_index();
        loss += super::model::cross_entropy(&trace.logits, label);
        let p = softmax(&trace.logits);
        let predicted = usize::from(p[1] > p[0]);
        correct += usize::from(predicted == label);
    }
    (loss / data.len() as f64, correct as f64 / data.len() as f64)
}

/// Accuracy of a trained model at the 0.5 decision point.
pub fn accuracy(model: &VoiceModel, data: &[LabeledExample]) -> f64 {
    evaluate(&model.network, data).1
}

/// Trains a fresh network. Each epoch shuffles the training set with a
/// stream derived from `(seed, epoch)`, so results depend only on the inputs.
/// The returned model carries the weights of the best validation epoch.
pub fn train_voice_model(
    train: &[LabeledExample],
    val: &[LabeledExample],
    hp: &TrainParams,
) -> Result<(VoiceModel, TrainingHistory), AudioError> {
    hp.validate()?;
    let first = train.first().ok_or(AudioError::EmptyDataset)?;
    if val.is_empty() {
        return Err(AudioError::EmptyDataset);
    }
    let dims = Dims::new(first.features.frames(), first.features.bins());
    for e in train.iter().chain(val) {
        if e.features.frames() != dims.h || e.features.bins() != dims.w {
            return Err(AudioError::ShapeMismatch {
                frames: dims.h,
                bins: dims.w,
                got_frames: e.features.frames(),
                got_bins: e.features.bins(),
            });
        }
    }
    let inputs: Vec<Vec<f32>> = train.iter().map(input_of::<f32>).collect();

    let mut net: Network<f32> = Network::init(dims, &mut seed::rng(hp.seed, &[0]));
    let mut best = net.clone();
    let mut stopper = EarlyStopping::new(hp.patience);
    let mut history = TrainingHistory::default();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=hp.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng(hp.seed, &[1, epoch as u64]));
        let mut total = 0.0;
        for batch in order.chunks(hp.batch_size) {
            let mut grads = Network::<f32>::zeros(dims);
            for &i in batch {
                let trace = net.forward(&inputs[i]);
                total += net.backward(&trace, train[i].label.class_index(), &mut grads);
            }
            let step = (hp.learning_rate / batch.len() as f64) as f32;
            for (p, g) in net.params.iter_mut().zip(&grads.params) {
                for (w, &d) in p.iter_mut().zip(g) {
                    *w -= step * d;
                }
            }
        }
        let train_loss = total / train.len() as f64;
        let (val_loss, val_accuracy) = evaluate(&net, val);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(AudioError::DivergedLoss { epoch });
        }
        history.epochs.push(EpochRecord { epoch, train_loss, val_loss, val_accuracy });
        log::debug!("epoch {epoch}: train {train_loss:.4} val {val_loss:.4} acc {val_accuracy:.3}");
        if stopper.observe(epoch, val_loss) {
            best = net.clone();
        }
        if stopper.should_stop() {
            history.stopped_early = true;
            break;
        }
    }
    history.best_epoch = stopper.best_epoch();
    Ok((VoiceModel::new(best), history))
}

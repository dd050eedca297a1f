use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{SwagConfig, Task};
use super::network::{LossParts, SwagModel};
use super::window::{feature_window, targets_at};
use super::ModelAnticipator;
use crate::data::{Dataset, Video};
use crate::error::{Result, SwagError};
use crate::metrics::{evaluate_run, EvalConfig};
use crate::numerics::{clip_grad_norm, Module, Sgd};
use crate::priors::TransitionPriorTensor;
use crate::rng::{derive_seed, rng_from};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub samples: usize,
    pub recognition_loss: f64,
    pub anticipation_loss: f64,
    pub grad_norm: f64,
    /// Higher is better: mean F1, or negated wMAE for regression.
    pub val_score: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_score: f64,
}

impl TrainLog {
    /// One tab-separated line per epoch.
    pub fn to_text(&self) -> String {
        let mut s = String::from("epoch\tlr\tsamples\trec_loss\tant_loss\tgrad_norm\tval_score\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                e.epoch, e.lr, e.samples, e.recognition_loss, e.anticipation_loss, e.grad_norm, e.val_score
            ));
        }
        s.push_str(&format!("best\t{}\t{}\n", self.best_epoch, self.best_score));
        s
    }
}

/// Learning rate for an epoch: linear warm-up, then cosine decay.
pub(crate) fn epoch_lr(config: &SwagConfig, epoch: usize) -> f64 {
    let warm = if config.warmup_epochs > 0 {
        ((epoch + 1) as f64 / (config.warmup_epochs + 1) as f64).min(1.0)
    } else {
        1.0
    };
    let progress = epoch as f64 / config.epochs.max(1) as f64;
    config.lr * warm * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// `(video, second)` pairs for one epoch: a random phase per video, then
/// every `stride` seconds, shuffled.
fn epoch_samples<R: Rng>(videos: &[Video], stride: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, v) in videos.iter().enumerate() {
        let offset = rng.random_range(0..stride.min(v.len()));
        out.extend((offset..v.len()).step_by(stride).map(|t| (i, t)));
    }
    out.shuffle(rng);
    out
}

/// Model-selection score on a split: mean weighted F1 for classification,
/// negated full-horizon wMAE for regression.
pub fn validation_score(model: &SwagModel, videos: &[Video]) -> Result<f64> {
    let method = ModelAnticipator::new(model.clone());
    let report = evaluate_run(&method, videos, &EvalConfig::new(model.num_phases()))?;
    Ok(match model.config().task {
        Task::Classification => report.mean_f1,
        Task::Regression => -report
            .horizons
            .last()
            .and_then(|r| r.mae)
            .map_or(f64::INFINITY, |m| m.wmae),
    })
}

/// Train on the dataset's training split and keep the weights that score best
/// on the validation split. Weights are rounded to `f32` before scoring, so
/// the returned model reproduces the logged best score exactly.
pub fn train(
    dataset: &Dataset,
    config: SwagConfig,
    priors: Option<TransitionPriorTensor>,
) -> Result<(SwagModel, TrainLog)> {
    let feature_dim = dataset
        .feature_dim()
        .ok_or_else(|| SwagError::Domain("dataset has no videos".into()))?;
    if dataset.train.is_empty() {
        return Err(SwagError::Domain("training split is empty".into()));
    }
    let mut model = SwagModel::new(config.clone(), dataset.num_phases, feature_dim, priors)?;
    let mut sgd = Sgd::new(config.lr, config.momentum, config.weight_decay);
    let mut rng = rng_from(derive_seed(config.seed, 20, 0));
    let mut log = TrainLog {
        best_score: f64::NEG_INFINITY,
        ..TrainLog::default()
    };
    let mut best = {
        let mut m = model.clone();
        m.round_to_f32();
        m.flat_values()
    };
    let mut step = 0;
    for epoch in 0..config.epochs {
        sgd.lr = epoch_lr(&config, epoch);
        let samples = epoch_samples(&dataset.train, config.train_stride, &mut rng);
        let mut totals = LossParts::default();
        let mut norm_sum = 0.0;
        let mut batches = 0;
        for batch in samples.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &(vi, t) in batch {
                let video = &dataset.train[vi];
                let x = feature_window(video, t, config.context_seconds);
                let targets = targets_at(video, t, &config);
                let parts = model
                    .accumulate_gradients(&x, &targets, scale)
                    .map_err(|e| SwagError::Divergence {
                        epoch,
                        step,
                        detail: format!("{} at {}s: {e}", video.id(), t),
                    })?;
                totals.recognition += parts.recognition;
                totals.anticipation += parts.anticipation;
            }
            norm_sum += clip_grad_norm(&mut model, config.grad_clip);
            sgd.step(&mut model);
            step += 1;
            batches += 1;
        }
        let n = samples.len().max(1) as f64;
        // Score the weights as they will be saved.
        let mut snapshot = model.clone();
        snapshot.round_to_f32();
        let val_score = if dataset.val.is_empty() {
            -(totals.recognition + totals.anticipation) / n
        } else {
            validation_score(&snapshot, &dataset.val)?
        };
        if val_score.is_nan() {
            return Err(SwagError::Divergence {
                epoch,
                step,
                detail: format!("validation score {val_score}"),
            });
        }
        if val_score > log.best_score {
            log.best_score = val_score;
            log.best_epoch = epoch;
            best = snapshot.flat_values();
        }
        log.epochs.push(EpochLog {
            epoch,
            lr: sgd.lr,
            samples: samples.len(),
            recognition_loss: totals.recognition / n,
            anticipation_loss: totals.anticipation / n,
            grad_norm: norm_sum / batches.max(1) as f64,
            val_score,
        });
    }
    model.set_flat_values(&best);
    Ok((model, log))
}

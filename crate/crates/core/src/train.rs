//! Supervised training loop over composed collages, plus the cross-entropy
//! loss with its analytic gradient.

use crate::collage::{compose_collage, select_single_view, CollageError, CollageLayout};
use crate::domain::Dataset;
use crate::model::{ModelError, ModelHandle};
use crate::nn::{Optimizer, OptimizerKind};
use crate::rng::{fisher_yates, seed_rng};
use ndarray::{Array2, Array3, Array4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {loss}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error(transparent)]
    Collage(#[from] CollageError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerChoice {
    /// SGD with momentum 0.9.
    SgdMomentum,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub optimizer: OptimizerChoice,
    pub weight_decay: f32,
    pub seed: u64,
    /// Retain only this view index before composing (ablation mode).
    pub single_view: Option<usize>,
    /// Write `epoch_{N}.weights` archives here after each epoch.
    pub checkpoint_dir: Option<PathBuf>,
    /// Weight the loss by inverse class frequency.
    pub class_weighted: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 8,
            learning_rate: 1e-3,
            optimizer: OptimizerChoice::Adam,
            weight_decay: 1e-4,
            seed: 0,
            single_view: None,
            checkpoint_dir: None,
            class_weighted: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(TrainError::InvalidConfig("weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

impl EpochStats {
    pub fn log_line(&self) -> String {
        format!("epoch={} loss={:.6} acc={:.4}", self.epoch, self.loss, self.accuracy)
    }
}

/// One entry per completed epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epochs: Vec<EpochStats>,
}

impl TrainRecord {
    pub fn log_text(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&e.log_line());
            out.push('\n');
        }
        out
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.accuracy)
    }
}

/// Mean cross-entropy of logit rows against class indices; computed through
/// a max-shifted log-sum-exp so large logits cannot overflow.
pub fn cross_entropy(logits: &Array2<f32>, targets: &[usize]) -> f64 {
    cross_entropy_with_grad(logits, targets, None).0
}

/// Loss plus gradient w.r.t. the logits: (softmax - one_hot) / batch, or the
/// weighted analogue when per-class weights are given.
pub fn cross_entropy_with_grad(
    logits: &Array2<f32>,
    targets: &[usize],
    class_weights: Option<&[f64; 3]>,
) -> (f64, Array2<f32>) {
    let (n, c) = logits.dim();
    assert_eq!(n, targets.len(), "one target per logit row");
    assert!(targets.iter().all(|&t| t < c), "target out of range");
    let mut grad = Array2::<f32>::zeros((n, c));
    let mut loss_sum = 0.0f64;
    let mut weight_sum = 0.0f64;
    for i in 0..n {
        let row: Vec<f64> = (0..c).map(|j| logits[(i, j)] as f64).collect();
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&l| (l - m).exp()).sum();
        let lse = m + sum_exp.ln();
        let w = class_weights.map_or(1.0, |cw| cw[targets[i]]);
        loss_sum += w * (lse - row[targets[i]]);
        weight_sum += w;
        for j in 0..c {
            let p = (row[j] - lse).exp();
            let indicator = if j == targets[i] { 1.0 } else { 0.0 };
            grad[(i, j)] = (w * (p - indicator)) as f32;
        }
    }
    let denom = if class_weights.is_some() { weight_sum } else { n as f64 };
    for g in grad.iter_mut() {
        *g /= denom as f32;
    }
    (loss_sum / denom, grad)
}

/// f64 twin of `cross_entropy_with_grad` (unweighted); the reference path for
/// finite-difference checks.
pub fn cross_entropy_with_grad_f64(logits: &Array2<f64>, targets: &[usize]) -> (f64, Array2<f64>) {
    let (n, c) = logits.dim();
    assert_eq!(n, targets.len());
    let mut grad = Array2::<f64>::zeros((n, c));
    let mut loss_sum = 0.0f64;
    for i in 0..n {
        let row: Vec<f64> = (0..c).map(|j| logits[(i, j)]).collect();
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&l| (l - m).exp()).sum::<f64>().ln();
        loss_sum += lse - row[targets[i]];
        for j in 0..c {
            let indicator = if j == targets[i] { 1.0 } else { 0.0 };
            grad[(i, j)] = ((row[j] - lse).exp() - indicator) / n as f64;
        }
    }
    (loss_sum / n as f64, grad)
}

pub fn cross_entropy_f64(logits: &Array2<f64>, targets: &[usize]) -> f64 {
    cross_entropy_with_grad_f64(logits, targets).0
}

/// Compose (and normalize) every sample's collage once up front. With
/// `single_view` set, only the selected view enters the pipeline.
pub fn prepare_inputs(
    dataset: &Dataset,
    layout: &CollageLayout,
    single_view: Option<usize>,
    model: &ModelHandle,
) -> Result<(Vec<Array3<f32>>, Vec<usize>), TrainError> {
    let inputs: Vec<Array3<f32>> = dataset
        .samples()
        .par_iter()
        .map(|sample| {
            let collage = match single_view {
                Some(index) => compose_collage(&select_single_view(sample, index)?, layout),
                None => compose_collage(sample, layout),
            };
            Ok(model.normalize_collage(&collage))
        })
        .collect::<Result<_, TrainError>>()?;
    let targets = dataset.samples().iter().map(|s| s.label.index()).collect();
    Ok((inputs, targets))
}

fn stack_batch(inputs: &[Array3<f32>], order: &[usize]) -> Array4<f32> {
    let (c, h, w) = inputs[order[0]].dim();
    let mut batch = Array4::zeros((order.len(), c, h, w));
    for (slot, &idx) in order.iter().enumerate() {
        batch.index_axis_mut(ndarray::Axis(0), slot).assign(&inputs[idx]);
    }
    batch
}

fn inverse_frequency_weights(targets: &[usize]) -> [f64; 3] {
    let mut counts = [0usize; 3];
    for &t in targets {
        counts[t] += 1;
    }
    let total = targets.len() as f64;
    let mut weights = [0.0f64; 3];
    for c in 0..3 {
        if counts[c] > 0 {
            weights[c] = total / (3.0 * counts[c] as f64);
        }
    }
    weights
}

/// Train for exactly `config.epochs` epochs and return the final-epoch model
/// with the per-epoch record. Identical inputs and seeds reproduce identical
/// records and parameters.
pub fn train(
    model: ModelHandle,
    train_set: &Dataset,
    layout: &CollageLayout,
    config: &TrainConfig,
) -> Result<(ModelHandle, TrainRecord), TrainError> {
    train_with_progress(model, train_set, layout, config, &mut |_| {})
}

pub fn train_with_progress(
    mut model: ModelHandle,
    train_set: &Dataset,
    layout: &CollageLayout,
    config: &TrainConfig,
    progress: &mut dyn FnMut(&EpochStats),
) -> Result<(ModelHandle, TrainRecord), TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    if let Some(dir) = &config.checkpoint_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| ModelError::Io(dir.clone(), e.to_string()))?;
    }

    let (inputs, targets) = prepare_inputs(train_set, layout, config.single_view, &model)?;
    let class_weights = config.class_weighted.then(|| inverse_frequency_weights(&targets));

    let kind = match config.optimizer {
        OptimizerChoice::SgdMomentum => OptimizerKind::sgd_momentum(),
        OptimizerChoice::Adam => OptimizerKind::adam(),
    };
    let mut optimizer = Optimizer::new(kind, config.learning_rate, config.weight_decay);
    model.seed_dropout(seed_rng(config.seed, "dropout", 0));

    let n = inputs.len();
    let mut record = TrainRecord::default();
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = seed_rng(config.seed, "epoch_shuffle", epoch as u64);
        fisher_yates(&mut order, &mut rng);

        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = stack_batch(&inputs, chunk);
            let batch_targets: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
            let logits = model.forward_train(batch)?;
            let (loss, dlogits) =
                cross_entropy_with_grad(&logits, &batch_targets, class_weights.as_ref());
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: batch_idx, loss });
            }
            loss_sum += loss * chunk.len() as f64;
            correct += count_correct(&logits, &batch_targets);
            model.zero_grad();
            model.backward(&dlogits);
            optimizer.begin_step();
            model.visit_tensors(&mut |_, mut t| optimizer.apply(&mut t));
        }

        let stats = EpochStats {
            epoch,
            loss: loss_sum / n as f64,
            accuracy: correct as f64 / n as f64,
        };
        progress(&stats);
        record.epochs.push(stats);

        if let Some(dir) = &config.checkpoint_dir {
            model.save(&dir.join(format!("epoch_{epoch}.weights")))?;
        }
    }
    Ok((model, record))
}

fn count_correct(logits: &Array2<f32>, targets: &[usize]) -> usize {
    let (n, c) = logits.dim();
    let mut correct = 0;
    for i in 0..n {
        let mut best = 0;
        for j in 1..c {
            if logits[(i, j)] > logits[(i, best)] {
                best = j;
            }
        }
        if best == targets[i] {
            correct += 1;
        }
    }
    correct
}

//! Cross-validated training with plateau LR reduction and early stopping.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::data::{stratified_kfold, Fold, Scaler};
use super::loss::scce_loss;
use super::model::{Architecture, NetworkModel, Optimizer};
use super::optim::AdamConfig;
use crate::error::{Error, Result};
use crate::numerics::{stream_id, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub early_stop_patience: usize,
    pub lr_patience: usize,
    pub lr_factor: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-3,
            max_epochs: 50,
            batch_size: 4096,
            early_stop_patience: 10,
            lr_patience: 4,
            lr_factor: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            folds: 5,
            seed: 0,
        }
    }
}

/// Minimum decrease of validation loss that counts as an improvement.
pub const MIN_DELTA: f64 = 1e-12;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.lr0 >= 0.0
            && self.max_epochs > 0
            && self.batch_size > 0
            && self.early_stop_patience > 0
            && self.lr_patience > 0
            && self.lr_factor > 0.0
            && self.lr_factor <= 1.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.folds >= 2;
        if positive && self.lr0.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training configuration {self:?}")))
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }
}

/// One logged epoch. `fold == None` marks the full-set retrain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub fold: Option<usize>,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs_run: usize,
    /// Learning rate used in each epoch, starting at epoch 1.
    pub lr_schedule: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub folds: Vec<FoldSummary>,
    pub best_fold: usize,
}

pub const HISTORY_CSV_HEADER: &str = "epoch,fold,train_loss,val_loss,lr";

impl TrainReport {
    pub fn history_csv(&self) -> String {
        let mut out = String::from(HISTORY_CSV_HEADER);
        out.push('\n');
        for r in &self.history {
            let fold = r.fold.map_or_else(|| "full".to_string(), |f| f.to_string());
            let val = r.val_loss.map_or_else(String::new, |v| format!("{v:.10e}"));
            let _ = writeln!(out, "{},{},{:.10e},{},{:e}", r.epoch, fold, r.train_loss, val, r.lr);
        }
        out
    }
}

/// Mean loss over a set, evaluated in chunks without caching.
pub fn evaluate_loss(model: &NetworkModel, features: &[[f64; 2]], labels: &[usize]) -> Result<f64> {
    const CHUNK: usize = 8192;
    let mut total = 0.0;
    for (x, y) in features.chunks(CHUNK).zip(labels.chunks(CHUNK)) {
        total += scce_loss(&model.logits(x)?, y)?.0 * y.len() as f64;
    }
    Ok(total / labels.len() as f64)
}

fn run_epoch(
    model: &mut NetworkModel,
    opt: &mut Optimizer,
    x: &[[f64; 2]],
    y: &[usize],
    lr: f64,
    cfg: &TrainConfig,
    rng: &mut Rng,
    fold: usize,
    epoch: usize,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..y.len()).collect();
    rng.shuffle(&mut order);
    let mut total = 0.0;
    for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
        let bx: Vec<[f64; 2]> = idx.iter().map(|&i| x[i]).collect();
        let by: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
        model.zero_grad();
        let logits = model.forward(&bx)?;
        let (loss, grad) = scce_loss(&logits, &by)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { fold, epoch, batch });
        }
        model.backward(&grad);
        opt.step(model, lr);
        total += loss * by.len() as f64;
    }
    model.clear_cache();
    Ok(total / y.len() as f64)
}

/// Trains one fold in place, leaving the best-validation parameters in `model`.
pub fn train_fold(
    model: &mut NetworkModel,
    train: (&[[f64; 2]], &[usize]),
    val: (&[[f64; 2]], &[usize]),
    cfg: &TrainConfig,
    fold: usize,
    history: &mut Vec<EpochRecord>,
) -> Result<FoldSummary> {
    cfg.validate()?;
    let mut opt = Optimizer::new(cfg.adam());
    let mut rng = Rng::new(cfg.seed, stream_id("shuffle", fold as u64));
    let mut lr = cfg.lr0;
    let mut best = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_params = model.parameters();
    let (mut stall_stop, mut stall_lr) = (0, 0);
    let mut schedule = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        schedule.push(lr);
        let train_loss = run_epoch(model, &mut opt, train.0, train.1, lr, cfg, &mut rng, fold, epoch)?;
        let val_loss = evaluate_loss(model, val.0, val.1)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { fold, epoch, batch: usize::MAX });
        }
        history.push(EpochRecord { fold: Some(fold), epoch, train_loss, val_loss: Some(val_loss), lr });
        if val_loss < best - MIN_DELTA {
            best = val_loss;
            best_epoch = epoch;
            best_params = model.parameters();
            stall_stop = 0;
            stall_lr = 0;
        } else {
            stall_stop += 1;
            stall_lr += 1;
            if stall_lr >= cfg.lr_patience {
                lr *= cfg.lr_factor;
                stall_lr = 0;
            }
            if stall_stop >= cfg.early_stop_patience {
                break;
            }
        }
    }
    model.set_parameters(&best_params)?;
    Ok(FoldSummary { fold, best_epoch, best_val_loss: best, epochs_run: schedule.len(), lr_schedule: schedule })
}

/// A trained network with the scaler fitted on its training data.
#[derive(Debug, Clone)]
pub struct TrainedDetector {
    pub model: NetworkModel,
    pub scaler: Scaler,
    pub seed: u64,
}

impl TrainedDetector {
    pub fn predict(&self, features: &[[f64; 2]]) -> Result<Vec<usize>> {
        predict(&self.model, &self.scaler, features)
    }
}

/// Standardizes with `scaler` and returns argmax classes.
pub fn predict(model: &NetworkModel, scaler: &Scaler, features: &[[f64; 2]]) -> Result<Vec<usize>> {
    if let Some(bad) = features.iter().position(|f| !f[0].is_finite() || !f[1].is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite features at sample {bad}")));
    }
    model.classify(&scaler.apply(features))
}

fn subset<T: Copy>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i]).collect()
}

/// Cross-validates on `folds`, then retrains a fresh model on the full set for
/// the best fold's best-epoch count with that fold's learning-rate schedule.
pub fn train(
    arch: Architecture,
    q: usize,
    features: &[[f64; 2]],
    labels: &[usize],
    folds: &[Fold],
    cfg: &TrainConfig,
) -> Result<(TrainedDetector, TrainReport)> {
    cfg.validate()?;
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::InvalidInput(format!("{} feature rows for {} labels", features.len(), labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= q) {
        return Err(Error::InvalidClass { class: bad, order: q });
    }
    let mut history = Vec::new();
    let mut summaries = Vec::new();
    for (f, fold) in folds.iter().enumerate() {
        let scaler = Scaler::fit_subset(features, &fold.train)?;
        let tx = scaler.apply(&subset(features, &fold.train));
        let vx = scaler.apply(&subset(features, &fold.validation));
        let ty = subset(labels, &fold.train);
        let vy = subset(labels, &fold.validation);
        let mut model = NetworkModel::build(arch, q, &mut Rng::new(cfg.seed, stream_id("init", f as u64)))?;
        summaries.push(train_fold(&mut model, (&tx, &ty), (&vx, &vy), cfg, f, &mut history)?);
    }
    let best_fold = summaries
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.best_val_loss.total_cmp(&b.1.best_val_loss))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidInput("no folds supplied".into()))?;

    let scaler = Scaler::fit(features)?;
    let x = scaler.apply(features);
    let full = folds.len() as u64;
    let mut model = NetworkModel::build(arch, q, &mut Rng::new(cfg.seed, stream_id("init", full)))?;
    let mut opt = Optimizer::new(cfg.adam());
    let mut rng = Rng::new(cfg.seed, stream_id("shuffle", full));
    let best = &summaries[best_fold];
    for epoch in 1..=best.best_epoch.max(1) {
        let lr = best.lr_schedule.get(epoch - 1).copied().unwrap_or(cfg.lr0);
        let train_loss = run_epoch(&mut model, &mut opt, &x, labels, lr, cfg, &mut rng, folds.len(), epoch)?;
        history.push(EpochRecord { fold: None, epoch, train_loss, val_loss: None, lr });
    }
    Ok((
        TrainedDetector { model, scaler, seed: cfg.seed },
        TrainReport { history, folds: summaries, best_fold },
    ))
}

/// [`train`] with stratified folds drawn from `cfg.seed`.
pub fn train_cv(
    arch: Architecture,
    q: usize,
    features: &[[f64; 2]],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(TrainedDetector, TrainReport)> {
    let folds = stratified_kfold(labels, cfg.folds, cfg.seed)?;
    train(arch, q, features, labels, &folds, cfg)
}

//! Losses, the attention sparsity penalty, optimizers, early stopping and the
//! mini-batch training loop.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Sample, SequenceDataset, Target};
use crate::error::{Error, Result};
use crate::model::{model_backward, LayerGrads, Model, ModelKind, OutputGrad};
use crate::rng::Rng;
use crate::tensor::{fmt_f64, Matrix};

/// Mean squared error over all entries and its gradient `2 (yhat - y) / count`.
pub fn mse_loss(yhat: &Matrix, y: &Matrix) -> Result<(f64, Matrix)> {
    let diff = yhat.sub(y)?;
    let count = diff.len() as f64;
    let loss = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / count;
    Ok((loss, diff.scale(2.0 / count)))
}

/// `-ln probs[label]` and the fused gradient w.r.t. the pre-softmax logits,
/// `probs - onehot(label)`.
pub fn cross_entropy_loss(probs: &Matrix, label: usize) -> Result<(f64, Matrix)> {
    if probs.rows() != 1 {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy_loss",
            left: probs.shape(),
            right: (1, probs.cols()),
        });
    }
    if label >= probs.cols() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            probs.cols()
        )));
    }
    let p = probs[(0, label)].max(f64::MIN_POSITIVE);
    let mut grad = probs.clone();
    grad[(0, label)] -= 1.0;
    Ok((-p.ln(), grad))
}

/// Negative L2 activity penalty on attention rows,
/// `lambda * (-sum_r sum_i A[r][i]^2) / m`, and its gradient `-2 lambda A / m`.
///
/// Per row the value lies in `[-lambda, -lambda/n]`: `-lambda` for a one-hot
/// row, `-lambda/n` for a uniform one.
pub fn sparsity_penalty(a: &Matrix, lambda: f64) -> (f64, Matrix) {
    let m = a.rows() as f64;
    let sq: f64 = a.as_slice().iter().map(|v| v * v).sum();
    (-lambda * sq / m, a.scale(-2.0 * lambda / m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    step: u64,
    moments: BTreeMap<String, (Matrix, Matrix)>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to every named parameter; each must have a gradient
    /// of identical shape.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = (&'a str, &'a mut Matrix)>, grads: &LayerGrads) -> Result<()> {
        self.step += 1;
        let lr = self.learning_rate;
        for (name, param) in params {
            let grad = grads
                .get(name)
                .ok_or_else(|| Error::InvalidArgument(format!("no gradient for parameter {name:?}")))?;
            if grad.shape() != param.shape() {
                return Err(Error::ShapeMismatch {
                    op: "optimizer_step",
                    left: param.shape(),
                    right: grad.shape(),
                });
            }
            match self.kind {
                OptimizerKind::Sgd => {
                    for (p, g) in param.as_mut_slice().iter_mut().zip(grad.as_slice()) {
                        *p -= lr * g;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let (m, v) = self
                        .moments
                        .entry(name.to_string())
                        .or_insert_with(|| (Matrix::zeros(grad.rows(), grad.cols()), Matrix::zeros(grad.rows(), grad.cols())));
                    let c1 = 1.0 - beta1.powi(self.step as i32);
                    let c2 = 1.0 - beta2.powi(self.step as i32);
                    let it = param
                        .as_mut_slice()
                        .iter_mut()
                        .zip(grad.as_slice())
                        .zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice()));
                    for ((p, &g), (mi, vi)) in it {
                        *mi = beta1 * *mi + (1.0 - beta1) * g;
                        *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                        let mhat = *mi / c1;
                        let vhat = *vi / c2;
                        *p -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Improvements within this distance of `min_delta` count as reaching it, so
/// a decimal boundary such as `0.99 -> 0.98` is not lost to rounding.
const DELTA_SLACK: f64 = 1e-12;

/// True iff each of the last `patience` epochs improved on the best loss seen
/// before it by less than `min_delta`. The first epoch only sets the baseline,
/// so at least `patience + 1` epochs are needed. `patience == 0` never stops.
pub fn early_stop_check(val_losses: &[f64], min_delta: f64, patience: usize) -> bool {
    if patience == 0 || val_losses.len() < patience + 1 {
        return false;
    }
    let mut best = val_losses[0];
    let mut small = Vec::with_capacity(val_losses.len());
    for &loss in &val_losses[1..] {
        small.push(best - loss < min_delta - DELTA_SLACK);
        best = best.min(loss);
    }
    small[small.len() - patience..].iter().all(|&s| s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub min_delta: f64,
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    pub sparsity_lambda: f64,
    pub early_stop: Option<EarlyStop>,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Record wall-clock seconds per epoch. Off by default so histories are
    /// reproducible byte for byte.
    pub record_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            max_epochs: 50,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::adam(),
            loss: LossKind::Mse,
            sparsity_lambda: 0.0,
            early_stop: None,
            seed: 0,
            validation_fraction: 0.1,
            record_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.sparsity_lambda >= 0.0 && self.sparsity_lambda.is_finite()) {
            return bad(format!("sparsity_lambda must be >= 0, got {}", self.sparsity_lambda));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!("validation_fraction must be in (0,1), got {}", self.validation_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn val_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_loss).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,seconds\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                e.epoch,
                fmt_f64(e.train_loss),
                fmt_f64(e.val_loss),
                fmt_f64(e.seconds)
            );
        }
        out
    }
}

/// Objective value of one sample: task loss plus sparsity penalty.
fn sample_objective(model: &Model, sample: &Sample, cfg: &TrainConfig, with_grads: bool) -> Result<(f64, Option<LayerGrads>)> {
    let out = model.forward(&sample.input, Some(&sample.mask))?;
    let (loss, grad) = match (&sample.target, cfg.loss) {
        (Target::Sequence(y), LossKind::Mse) => {
            let (l, g) = mse_loss(&out.output, y)?;
            (l, OutputGrad::Output(g))
        }
        (Target::Label(label), LossKind::CrossEntropy) => {
            let (l, g) = cross_entropy_loss(&out.output, *label)?;
            (l, OutputGrad::Logits(g))
        }
        (Target::Sequence(_), LossKind::CrossEntropy) | (Target::Label(_), LossKind::Mse) => {
            return Err(Error::InvalidArgument(format!(
                "loss {:?} does not fit the dataset targets",
                cfg.loss
            )))
        }
    };
    let (penalty, da) = if cfg.sparsity_lambda > 0.0 {
        let (p, da) = sparsity_penalty(&out.attention, cfg.sparsity_lambda);
        (p, Some(da))
    } else {
        (0.0, None)
    };
    let grads = if with_grads {
        Some(model_backward(model, &grad, da.as_ref(), &out.cache)?)
    } else {
        None
    };
    Ok((loss + penalty, grads))
}

/// Mean objective over `samples`, evaluated in parallel and summed in order.
pub fn mean_objective(model: &Model, samples: &[&Sample], cfg: &TrainConfig) -> Result<f64> {
    let losses: Vec<f64> = samples
        .par_iter()
        .map(|s| sample_objective(model, s, cfg, false).map(|(l, _)| l))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Mean objective and mean gradient over a batch. Per-sample work fans out
/// across threads; the reduction runs in sample order.
pub fn batch_gradients(model: &Model, batch: &[&Sample], cfg: &TrainConfig) -> Result<(f64, LayerGrads)> {
    let results: Vec<(f64, Option<LayerGrads>)> = batch
        .par_iter()
        .map(|s| sample_objective(model, s, cfg, true))
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut acc: Option<LayerGrads> = None;
    for (loss, grads) in results {
        total += loss;
        let grads = grads.expect("requested gradients");
        match acc.as_mut() {
            None => acc = Some(grads),
            Some(acc) => {
                for (name, g) in grads {
                    acc.get_mut(&name).expect("same registry").add_assign(&g)?;
                }
            }
        }
    }
    let mut acc = acc.ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    for g in acc.values_mut() {
        *g = g.scale(scale);
    }
    Ok((total * scale, acc))
}

fn check_compatible(model: &Model, data: &SequenceDataset, cfg: &TrainConfig) -> Result<()> {
    let mc = &model.config;
    if data.n != mc.n || data.f != mc.f {
        return Err(Error::InvalidArgument(format!(
            "dataset frames are {}x{}, model expects {}x{}",
            data.n, data.f, mc.n, mc.f
        )));
    }
    match (mc.kind, cfg.loss) {
        (ModelKind::Autoencoder, LossKind::Mse) if data.m == mc.m => Ok(()),
        (ModelKind::Classifier, LossKind::CrossEntropy) if data.num_classes == mc.num_classes => Ok(()),
        _ => Err(Error::InvalidArgument(format!(
            "model {:?} (m={}, classes={}) with loss {:?} does not fit dataset {:?} (m={}, classes={})",
            mc.kind, mc.m, mc.num_classes, cfg.loss, data.task, data.m, data.num_classes
        ))),
    }
}

/// Deterministic train/validation index split.
pub fn split_indices(len: usize, validation_fraction: f64, rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
    let perm = rng.permutation(len);
    let n_val = ((len as f64 * validation_fraction).round() as usize).clamp(1, len.saturating_sub(1).max(1));
    let (val, train) = perm.split_at(n_val.min(len));
    let (mut train, mut val) = (train.to_vec(), val.to_vec());
    if train.is_empty() {
        // A single sample both trains and validates.
        train = val.clone();
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Trains with mini-batches and per-epoch validation, returning the weights
/// with the lowest validation objective.
pub fn train(mut model: Model, data: &SequenceDataset, cfg: &TrainConfig) -> Result<(Model, TrainHistory)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }
    data.validate()?;
    check_compatible(&model, data, cfg)?;

    let mut rng = Rng::new(cfg.seed);
    let (train_idx, val_idx) = split_indices(data.len(), cfg.validation_fraction, &mut rng);
    let val: Vec<&Sample> = val_idx.iter().map(|&i| &data.samples[i]).collect();
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Model)> = None;

    for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        let mut order = train_idx.clone();
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data.samples[i]).collect();
            let (loss, grads) = batch_gradients(&model, &batch, cfg)?;
            if !loss.is_finite() || grads.values().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("training objective at epoch {epoch}, batch {bi}")));
            }
            loss_sum += loss * batch.len() as f64;
            optimizer.step(model.params_mut(), &grads)?;
        }
        let train_loss = loss_sum / order.len() as f64;
        let val_loss = mean_objective(&model, &val, cfg)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation objective at epoch {epoch}")));
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds: if cfg.record_time { started.elapsed().as_secs_f64() } else { 0.0 },
        });
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.clone()));
            history.best_epoch = epoch;
        }
        if let Some(es) = cfg.early_stop {
            if early_stop_check(&history.val_losses(), es.min_delta, es.patience) {
                history.stopped_early = true;
                break;
            }
        }
    }
    let model = best.map(|(_, m)| m).unwrap_or(model);
    Ok((model, history))
}

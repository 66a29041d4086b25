//! Task metrics and attention interpretability reports.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::synth::truth_index;
use crate::data::{Sample, SequenceDataset, Target};
use crate::error::{Error, Result};
use crate::model::{Model, ModelKind};
use crate::tensor::{argmax, fmt_f64, Matrix};

/// Tolerance on row sums accepted as row-stochastic.
const STOCHASTIC_TOL: f64 = 1e-6;

/// Mean squared error over sequences and features at each requested output
/// row.
pub fn mse_at_horizons(preds: &[Matrix], truths: &[Matrix], horizons: &[usize]) -> Result<Vec<f64>> {
    if preds.len() != truths.len() || preds.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} truths",
            preds.len(),
            truths.len()
        )));
    }
    let mut out = vec![0.0; horizons.len()];
    for (p, t) in preds.iter().zip(truths) {
        if p.shape() != t.shape() {
            return Err(Error::ShapeMismatch {
                op: "mse_at_horizons",
                left: p.shape(),
                right: t.shape(),
            });
        }
        for (o, &h) in out.iter_mut().zip(horizons) {
            if h >= p.rows() {
                return Err(Error::InvalidArgument(format!("horizon {h} outside {} output frames", p.rows())));
            }
            *o += p.row(h).iter().zip(t.row(h)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.cols() as f64;
        }
    }
    Ok(out.into_iter().map(|v| v / preds.len() as f64).collect())
}

/// Baseline for completion: every hole frame repeats the last visible frame.
pub fn hold_last_frame(input: &Matrix, hole_start: usize, hole_len: usize) -> Matrix {
    let mut out = input.clone();
    let source = hole_start.saturating_sub(1);
    let last = input.row(source).to_vec();
    for t in hole_start..(hole_start + hole_len).min(input.rows()) {
        out.row_mut(t).copy_from_slice(&last);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    /// Row = true label, column = predicted label.
    pub confusion: Vec<Vec<usize>>,
}

pub fn confusion_matrix(labels: &[usize], predicted: &[usize], classes: usize) -> Result<ClassificationReport> {
    if labels.len() != predicted.len() || labels.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} predictions",
            labels.len(),
            predicted.len()
        )));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&l, &p) in labels.iter().zip(predicted) {
        if l >= classes || p >= classes {
            return Err(Error::InvalidArgument(format!("label {l} or prediction {p} >= {classes}")));
        }
        confusion[l][p] += 1;
    }
    let trace: usize = (0..classes).map(|k| confusion[k][k]).sum();
    Ok(ClassificationReport {
        accuracy: trace as f64 / labels.len() as f64,
        confusion,
    })
}

/// Predicted class of every sample (argmax of probabilities).
pub fn predict_labels(model: &Model, data: &SequenceDataset) -> Result<Vec<usize>> {
    data.samples
        .iter()
        .map(|s| Ok(argmax(model.forward(&s.input, Some(&s.mask))?.output.row(0))))
        .collect()
}

pub fn classification_report(model: &Model, data: &SequenceDataset) -> Result<ClassificationReport> {
    if model.config.kind != ModelKind::Classifier {
        return Err(Error::InvalidArgument("classification_report needs a classifier".into()));
    }
    let labels: Vec<usize> = data
        .samples
        .iter()
        .map(|s| s.label().ok_or_else(|| Error::InvalidArgument("sample without a label".into())))
        .collect::<Result<_>>()?;
    confusion_matrix(&labels, &predict_labels(model, data)?, model.config.num_classes)
}

/// Shannon entropy of each row in nats, with `0 ln 0 = 0`.
pub fn attention_entropy(a: &Matrix) -> Result<Vec<f64>> {
    (0..a.rows())
        .map(|r| {
            let row = a.row(r);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL || row.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidArgument(format!("attention row {r} is not stochastic (sum {sum})")));
            }
            Ok(-row.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>())
        })
        .collect()
}

/// Ground truth for attention-based detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionTruth {
    Frame(usize),
    /// `[start, start + len)`
    Window(usize, usize),
}

impl DetectionTruth {
    pub fn hit(self, index: usize) -> bool {
        match self {
            DetectionTruth::Frame(f) => index == f,
            DetectionTruth::Window(s, l) => (s..s + l).contains(&index),
        }
    }

    /// Key-frame index or motif window recorded by the generators.
    pub fn from_sample(sample: &Sample) -> Option<Self> {
        if let Some(f) = truth_index(&sample.truth, "target_frame") {
            return Some(DetectionTruth::Frame(f));
        }
        let start = truth_index(&sample.truth, "motif_start")?;
        let len = truth_index(&sample.truth, "motif_len")?;
        Some(DetectionTruth::Window(start, len))
    }
}

#[derive(Debug, Clone)]
pub struct AttentionReport {
    pub attention: Vec<Matrix>,
    pub row_entropies: Vec<Vec<f64>>,
    /// Argmax of every row, ties to the lowest index.
    pub argmax_locations: Vec<Vec<usize>>,
    /// Present when every sample carries detection truth.
    pub detection_hits: Option<Vec<bool>>,
}

impl AttentionReport {
    pub fn all_entropies(&self) -> Vec<f64> {
        self.row_entropies.iter().flatten().copied().collect()
    }

    pub fn median_entropy(&self) -> f64 {
        median(&self.all_entropies())
    }

    pub fn detection_accuracy(&self) -> Option<f64> {
        let hits = self.detection_hits.as_ref()?;
        Some(hits.iter().filter(|&&h| h).count() as f64 / hits.len().max(1) as f64)
    }
}

pub fn attention_report(model: &Model, data: &SequenceDataset) -> Result<AttentionReport> {
    let mut report = AttentionReport {
        attention: Vec::with_capacity(data.len()),
        row_entropies: Vec::with_capacity(data.len()),
        argmax_locations: Vec::with_capacity(data.len()),
        detection_hits: None,
    };
    let truths: Option<Vec<DetectionTruth>> = data.samples.iter().map(DetectionTruth::from_sample).collect();
    for s in &data.samples {
        let a = model.forward(&s.input, Some(&s.mask))?.attention;
        report.row_entropies.push(attention_entropy(&a)?);
        report.argmax_locations.push((0..a.rows()).map(|r| a.row_argmax(r)).collect());
        report.attention.push(a);
    }
    if let Some(truths) = truths {
        if model.config.m == 1 {
            report.detection_hits = Some(
                truths
                    .iter()
                    .zip(&report.argmax_locations)
                    .map(|(t, loc)| t.hit(loc[0]))
                    .collect(),
            );
        }
    }
    Ok(report)
}

/// Fraction of single-row attention maps whose argmax equals the truth frame.
pub fn keyframe_detection_accuracy(attention: &[Matrix], truth: &[usize]) -> Result<f64> {
    if attention.len() != truth.len() || attention.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} attention maps for {} truth locations",
            attention.len(),
            truth.len()
        )));
    }
    let mut hits = 0;
    for (a, &t) in attention.iter().zip(truth) {
        if a.rows() != 1 {
            return Err(Error::InvalidArgument(format!("expected one attention row, got {}", a.rows())));
        }
        if a.row_argmax(0) == t {
            hits += 1;
        }
    }
    Ok(hits as f64 / truth.len() as f64)
}

/// Median; the mean of the two middle values for even lengths, NaN if empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// ASCII PGM (`P2`) with width `n`, height `m`, pixel `round(255 a / max(A))`.
pub fn heatmap_pgm(a: &Matrix) -> String {
    let max = a.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P2\n{} {}\n255\n", a.cols(), a.rows());
    for r in 0..a.rows() {
        let px: Vec<String> = a
            .row(r)
            .iter()
            .map(|&v| {
                let level = if max > 0.0 { (255.0 * v / max).round().clamp(0.0, 255.0) } else { 0.0 };
                (level as u8).to_string()
            })
            .collect();
        let _ = writeln!(out, "{}", px.join(" "));
    }
    out
}

pub fn export_heatmap(a: &Matrix, path: &Path) -> Result<()> {
    std::fs::write(path, heatmap_pgm(a)).map_err(|e| Error::io(path, e))
}

pub fn attention_csv(a: &Matrix) -> String {
    let mut out = String::new();
    for r in 0..a.rows() {
        let cells: Vec<String> = a.row(r).iter().map(|&v| fmt_f64(v)).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

pub fn export_attention_csv(a: &Matrix, path: &Path) -> Result<()> {
    std::fs::write(path, attention_csv(a)).map_err(|e| Error::io(path, e))
}

/// Summary written by `eval` as `report.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub sequences: usize,
    pub accuracy: Option<f64>,
    pub confusion: Option<Vec<Vec<usize>>>,
    pub median_entropy: f64,
    pub detection_accuracy: Option<f64>,
    /// Mean objective-free MSE over all output frames (sequence tasks).
    pub mse: Option<f64>,
    pub horizons: Option<Vec<usize>>,
    pub horizon_mse: Option<Vec<f64>>,
    pub baseline_horizon_mse: Option<Vec<f64>>,
}

/// Runs every metric that applies to the model/dataset pair. For completion
/// data (`hole_start` truth) horizons are offsets into the hole; otherwise they
/// index output frames directly.
pub fn evaluate(model: &Model, data: &SequenceDataset, horizons: &[usize]) -> Result<EvalReport> {
    let attention = attention_report(model, data)?;
    let mut report = EvalReport {
        task: data.task.clone(),
        sequences: data.len(),
        median_entropy: attention.median_entropy(),
        detection_accuracy: attention.detection_accuracy(),
        ..Default::default()
    };
    match model.config.kind {
        ModelKind::Classifier => {
            let cr = classification_report(model, data)?;
            report.accuracy = Some(cr.accuracy);
            report.confusion = Some(cr.confusion);
        }
        ModelKind::Autoencoder => {
            let mut preds = Vec::with_capacity(data.len());
            let mut truths = Vec::with_capacity(data.len());
            let mut baselines = Vec::new();
            let mut hole = None;
            for s in &data.samples {
                let Target::Sequence(t) = &s.target else {
                    return Err(Error::InvalidArgument("autoencoder evaluation needs sequence targets".into()));
                };
                preds.push(model.forward(&s.input, Some(&s.mask))?.output);
                truths.push(t.clone());
                if let (Some(start), Some(len)) = (truth_index(&s.truth, "hole_start"), truth_index(&s.truth, "hole_len")) {
                    baselines.push(hold_last_frame(&s.input, start, len));
                    hole = Some((start, len));
                }
            }
            let total: f64 = preds
                .iter()
                .zip(&truths)
                .map(|(p, t)| p.sub(t).map(|d| d.as_slice().iter().map(|v| v * v).sum::<f64>() / d.len() as f64))
                .sum::<Result<f64>>()?;
            report.mse = Some(total / preds.len().max(1) as f64);
            if !horizons.is_empty() {
                let rows: Vec<usize> = match hole {
                    Some((start, len)) if baselines.len() == preds.len() => {
                        if let Some(&bad) = horizons.iter().find(|&&h| h >= len) {
                            return Err(Error::InvalidArgument(format!("horizon {bad} outside the {len}-frame hole")));
                        }
                        horizons.iter().map(|h| start + h).collect()
                    }
                    _ => horizons.to_vec(),
                };
                report.horizons = Some(horizons.to_vec());
                report.horizon_mse = Some(mse_at_horizons(&preds, &truths, &rows)?);
                if baselines.len() == preds.len() {
                    report.baseline_horizon_mse = Some(mse_at_horizons(&baselines, &truths, &rows)?);
                }
            }
        }
    }
    Ok(report)
}

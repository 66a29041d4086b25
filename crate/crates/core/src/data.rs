//! Sequence datasets: the in-memory container plus CSV/JSON import and export.

pub mod csvio;
pub mod synth;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Sequence(Matrix),
    Label(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `n x f`, zero rows where `mask` is false.
    pub input: Matrix,
    pub target: Target,
    pub mask: Vec<bool>,
    /// Per-sequence ground truth (hole span, key-frame index, motif window, ...).
    pub truth: Value,
}

impl Sample {
    pub fn valid_len(&self) -> usize {
        self.mask.iter().filter(|&&k| k).count()
    }

    pub fn label(&self) -> Option<usize> {
        match self.target {
            Target::Label(l) => Some(l),
            Target::Sequence(_) => None,
        }
    }

    pub fn target_sequence(&self) -> Option<&Matrix> {
        match &self.target {
            Target::Sequence(m) => Some(m),
            Target::Label(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Sequence,
    Classification,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    /// Task name, e.g. `"keyframe"`.
    pub task: String,
    pub n: usize,
    pub f: usize,
    /// Output length for sequence targets; 1 for classification.
    pub m: usize,
    pub num_classes: usize,
    pub samples: Vec<Sample>,
    /// Generator arguments (or free-form provenance for loaded data).
    pub generator: Value,
}

impl SequenceDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn kind(&self) -> TaskKind {
        match self.samples.first().map(|s| &s.target) {
            Some(Target::Label(_)) => TaskKind::Classification,
            _ if self.num_classes > 0 => TaskKind::Classification,
            _ => TaskKind::Sequence,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.input.shape() != (self.n, self.f) {
                return Err(Error::InvalidArgument(format!(
                    "sequence {i} has shape {:?}, dataset declares ({}, {})",
                    s.input.shape(),
                    self.n,
                    self.f
                )));
            }
            if s.mask.len() != self.n || !s.mask.iter().any(|&k| k) {
                return Err(Error::InvalidArgument(format!("sequence {i} has an invalid mask")));
            }
            match &s.target {
                Target::Sequence(t) if t.shape() != (self.m, self.f) => {
                    return Err(Error::InvalidArgument(format!(
                        "sequence {i} target has shape {:?}, expected ({}, {})",
                        t.shape(),
                        self.m,
                        self.f
                    )))
                }
                Target::Label(l) if *l >= self.num_classes => {
                    return Err(Error::InvalidArgument(format!(
                        "sequence {i} label {l} out of range for {} classes",
                        self.num_classes
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Splits off the last `count` samples, e.g. a held-out test set generated
    /// together with the training set so both share class prototypes.
    pub fn split_tail(mut self, count: usize) -> (SequenceDataset, SequenceDataset) {
        let keep = self.samples.len().saturating_sub(count);
        let tail = self.samples.split_off(keep);
        let mut other = self.clone();
        other.samples = tail;
        (self, other)
    }

    pub fn subset(&self, indices: &[usize]) -> SequenceDataset {
        let mut out = self.clone();
        out.samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        out
    }
}

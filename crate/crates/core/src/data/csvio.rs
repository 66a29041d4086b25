//! Dataset directories: one `manifest.json` plus one CSV per sequence.
//!
//! ```json
//! {"task": "keyframe", "n": 10, "f": 32, "m": 1, "num_classes": 0,
//!  "sequences": [{"input": "seq_00000_input.csv", "target": "seq_00000_target.csv",
//!                 "mask_len": 10, "truth": {...}}, ...],
//!  "generator": {...}}
//! ```
//!
//! Classification sequences carry `"label": <int>` instead of `"target"`.
//! Input CSVs hold only the valid frames (rows = time, columns = features,
//! optional header line); shorter sequences are zero-padded to `n` on load.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Sample, SequenceDataset, Target};
use crate::error::{Error, Result};
use crate::tensor::{fmt_f64, Matrix};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub task: String,
    pub n: usize,
    pub f: usize,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub num_classes: Option<usize>,
    pub sequences: Vec<SequenceEntry>,
    #[serde(default)]
    pub generator: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_len: Option<usize>,
    #[serde(default)]
    pub truth: Value,
}

fn matrix_csv(rows: &[&[f64]]) -> String {
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes `m` as CSV with 17 significant digits per value.
pub fn write_matrix_csv(m: &Matrix, path: &Path) -> Result<()> {
    let rows: Vec<&[f64]> = (0..m.rows()).map(|r| m.row(r)).collect();
    fs::write(path, matrix_csv(&rows)).map_err(|e| Error::io(path, e))
}

/// Writes the dataset into `dir` (created if needed) and returns the manifest path.
pub fn export_dataset(ds: &SequenceDataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut sequences = Vec::with_capacity(ds.len());
    for (i, s) in ds.samples.iter().enumerate() {
        let input_name = format!("seq_{i:05}_input.csv");
        let valid = s.valid_len();
        let rows: Vec<&[f64]> = (0..valid).map(|r| s.input.row(r)).collect();
        let path = dir.join(&input_name);
        fs::write(&path, matrix_csv(&rows)).map_err(|e| Error::io(&path, e))?;
        let (target, label) = match &s.target {
            Target::Sequence(t) => {
                let name = format!("seq_{i:05}_target.csv");
                write_matrix_csv(t, &dir.join(&name))?;
                (Some(name), None)
            }
            Target::Label(l) => (None, Some(*l)),
        };
        sequences.push(SequenceEntry {
            input: input_name,
            target,
            label,
            mask_len: Some(valid),
            truth: s.truth.clone(),
        });
    }
    let manifest = Manifest {
        task: ds.task.clone(),
        n: ds.n,
        f: ds.f,
        m: Some(ds.m),
        num_classes: Some(ds.num_classes),
        sequences,
        generator: ds.generator.clone(),
    };
    let path = dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::format(&path, e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Reads a numeric CSV. A first line made entirely of non-numeric cells is
/// treated as a header; any other non-numeric cell is an error.
pub fn read_matrix_csv(path: &Path, expected_cols: usize) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: path.into(),
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 && record.iter().all(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        if record.len() != expected_cols {
            return Err(Error::RaggedRow {
                path: path.into(),
                line,
                expected: expected_cols,
                got: record.len(),
            });
        }
        let mut row = Vec::with_capacity(expected_cols);
        for cell in record.iter() {
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                path: path.into(),
                line,
                cell: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumeric {
                    path: path.into(),
                    line,
                    cell: cell.to_string(),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Loads a dataset from its manifest; file paths resolve relative to the
/// manifest's directory.
pub fn load_csv_dataset(manifest_path: &Path) -> Result<SequenceDataset> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: manifest_path.into(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    if manifest.n == 0 || manifest.f == 0 {
        return Err(Error::format(manifest_path, "n and f must be positive"));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let classification = manifest.sequences.iter().any(|s| s.label.is_some());
    let num_classes = match manifest.num_classes {
        Some(k) if k > 0 => k,
        _ if classification => manifest.sequences.iter().filter_map(|s| s.label).max().map_or(0, |l| l + 1),
        _ => 0,
    };
    let m = if classification { 1 } else { manifest.m.unwrap_or(manifest.n) };
    let mut samples = Vec::with_capacity(manifest.sequences.len());
    for (i, entry) in manifest.sequences.iter().enumerate() {
        let input_path = base.join(&entry.input);
        let rows = read_matrix_csv(&input_path, manifest.f)?;
        if rows.is_empty() || rows.len() > manifest.n {
            return Err(Error::format(
                &input_path,
                format!("has {} frames, expected 1..={}", rows.len(), manifest.n),
            ));
        }
        if let Some(len) = entry.mask_len {
            if len != rows.len() {
                return Err(Error::format(
                    &input_path,
                    format!("manifest mask_len {len} but file has {} frames", rows.len()),
                ));
            }
        }
        let valid = rows.len();
        let mut input = Matrix::zeros(manifest.n, manifest.f);
        for (r, row) in rows.iter().enumerate() {
            input.row_mut(r).copy_from_slice(row);
        }
        let target = match (&entry.target, entry.label) {
            (Some(t), None) => {
                let path = base.join(t);
                let rows = read_matrix_csv(&path, manifest.f)?;
                if rows.len() != m {
                    return Err(Error::format(&path, format!("target has {} frames, expected {m}", rows.len())));
                }
                Target::Sequence(Matrix::from_rows(&rows)?)
            }
            (None, Some(label)) if label < num_classes => Target::Label(label),
            (None, Some(label)) => {
                return Err(Error::format(
                    manifest_path,
                    format!("sequence {i} label {label} out of range for {num_classes} classes"),
                ))
            }
            _ => {
                return Err(Error::format(
                    manifest_path,
                    format!("sequence {i} needs exactly one of \"target\" or \"label\""),
                ))
            }
        };
        samples.push(Sample {
            input,
            target,
            mask: (0..manifest.n).map(|t| t < valid).collect(),
            truth: entry.truth.clone(),
        });
    }
    Ok(SequenceDataset {
        task: manifest.task,
        n: manifest.n,
        f: manifest.f,
        m,
        num_classes,
        samples,
        generator: manifest.generator,
    })
}

//! Deterministic synthetic analogues of the three experiments: motion-like
//! interpolation/extrapolation signals, key-frame videos of class prototypes,
//! and labelled action sequences with a class-specific motif.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Sample, SequenceDataset, Target};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Matrix;

/// Shape of the smooth multi-channel signals used by the completion tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    /// Period range of each sinusoid, in frames.
    pub min_period: f64,
    pub max_period: f64,
    pub noise_std: f64,
}

impl Default for SignalSpec {
    fn default() -> Self {
        Self {
            min_period: 80.0,
            max_period: 320.0,
            noise_std: 0.01,
        }
    }
}

/// One channel: a sum of sinusoids `sum_k amp_k sin(2 pi freq_k t + phase_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidMix {
    /// `(amplitude, cycles per frame, phase)` triples.
    pub components: Vec<(f64, f64, f64)>,
}

impl SinusoidMix {
    /// 2-4 components whose amplitudes sum to at most 0.9, so that the signal
    /// plus small noise stays inside `[-1, 1]`.
    pub fn random(rng: &mut Rng, spec: &SignalSpec) -> Self {
        let k = rng.int_in(2, 4);
        let raw: Vec<f64> = (0..k).map(|_| rng.uniform_in(0.2, 1.0)).collect();
        let total: f64 = raw.iter().sum();
        let components = raw
            .into_iter()
            .map(|a| {
                let period = rng.uniform_in(spec.min_period, spec.max_period);
                (0.9 * a / total, 1.0 / period, rng.uniform_in(0.0, 2.0 * PI))
            })
            .collect();
        Self { components }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.components
            .iter()
            .map(|&(a, f, p)| a * (2.0 * PI * f * t + p).sin())
            .sum()
    }

    /// Upper bound on `|s(t+1) - s(t)|`, from `|s'| <= sum |a| 2 pi f`.
    pub fn max_step(&self) -> f64 {
        self.components.iter().map(|&(a, f, _)| a.abs() * 2.0 * PI * f).sum()
    }
}

fn noisy_signal(rng: &mut Rng, channels: &[SinusoidMix], frames: usize, noise_std: f64) -> Matrix {
    let mut out = Matrix::zeros(frames, channels.len());
    for t in 0..frames {
        for (c, ch) in channels.iter().enumerate() {
            let v = ch.value(t as f64) + rng.normal(0.0, noise_std);
            out[(t, c)] = v.clamp(-1.0, 1.0);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationSpec {
    pub n: usize,
    pub hole_start: usize,
    pub hole_len: usize,
    pub f: usize,
    pub signal: SignalSpec,
}

impl Default for InterpolationSpec {
    fn default() -> Self {
        Self {
            n: 160,
            hole_start: 50,
            hole_len: 60,
            f: 6,
            signal: SignalSpec::default(),
        }
    }
}

/// Sequences with a zero-valued hole; targets are the complete sequences.
pub fn gen_interpolation(seed: u64, count: usize, spec: &InterpolationSpec) -> Result<SequenceDataset> {
    if spec.hole_len == 0 || spec.hole_start + spec.hole_len > spec.n || spec.f == 0 {
        return Err(Error::InvalidArgument(format!(
            "hole [{}, {}) does not fit in {} frames",
            spec.hole_start,
            spec.hole_start + spec.hole_len,
            spec.n
        )));
    }
    let mut rng = Rng::new(seed);
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let channels: Vec<SinusoidMix> = (0..spec.f).map(|_| SinusoidMix::random(&mut rng, &spec.signal)).collect();
        let target = noisy_signal(&mut rng, &channels, spec.n, spec.signal.noise_std);
        let mut input = target.clone();
        for t in spec.hole_start..spec.hole_start + spec.hole_len {
            input.row_mut(t).fill(0.0);
        }
        samples.push(Sample {
            input,
            target: Target::Sequence(target),
            mask: vec![true; spec.n],
            truth: json!({"hole_start": spec.hole_start, "hole_len": spec.hole_len}),
        });
    }
    Ok(SequenceDataset {
        task: "interpolation".into(),
        n: spec.n,
        f: spec.f,
        m: spec.n,
        num_classes: 0,
        samples,
        generator: json!({"task": "interpolation", "seed": seed, "count": count, "spec": spec}),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationSpec {
    pub prefix: usize,
    pub horizon: usize,
    pub f: usize,
    pub signal: SignalSpec,
}

impl Default for ExtrapolationSpec {
    fn default() -> Self {
        Self {
            prefix: 50,
            horizon: 60,
            f: 6,
            signal: SignalSpec::default(),
        }
    }
}

/// `prefix` frames as input, the next `horizon` frames of the same signal as
/// target. The per-channel components are kept in the truth annotation.
pub fn gen_extrapolation(seed: u64, count: usize, spec: &ExtrapolationSpec) -> Result<SequenceDataset> {
    if spec.prefix == 0 || spec.horizon == 0 || spec.f == 0 {
        return Err(Error::InvalidArgument("prefix, horizon and f must be positive".into()));
    }
    let mut rng = Rng::new(seed);
    let total = spec.prefix + spec.horizon;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let channels: Vec<SinusoidMix> = (0..spec.f).map(|_| SinusoidMix::random(&mut rng, &spec.signal)).collect();
        let full = noisy_signal(&mut rng, &channels, total, spec.signal.noise_std);
        let rows = full.to_rows();
        let input = Matrix::from_rows(&rows[..spec.prefix])?;
        let target = Matrix::from_rows(&rows[spec.prefix..])?;
        samples.push(Sample {
            input,
            target: Target::Sequence(target),
            mask: vec![true; spec.prefix],
            truth: json!({ "channels": channels }),
        });
    }
    Ok(SequenceDataset {
        task: "extrapolation".into(),
        n: spec.prefix,
        f: spec.f,
        m: spec.horizon,
        num_classes: 0,
        samples,
        generator: json!({"task": "extrapolation", "seed": seed, "count": count, "spec": spec}),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyframeSpec {
    pub frames: usize,
    pub classes: usize,
    pub f: usize,
    pub target_class: usize,
    /// Per-sequence deviation of each shown instance from its class prototype.
    pub style_std: f64,
    pub noise_std: f64,
}

impl Default for KeyframeSpec {
    fn default() -> Self {
        Self {
            frames: 10,
            classes: 10,
            f: 32,
            target_class: 2,
            style_std: 0.5,
            noise_std: 0.05,
        }
    }
}

/// Orthogonal class prototypes with RMS entry 0.5 (Gram-Schmidt on Gaussian
/// draws), one per row.
pub fn class_prototypes(rng: &mut Rng, classes: usize, f: usize) -> Result<Matrix> {
    if f < classes {
        return Err(Error::InvalidArgument(format!(
            "feature width {f} cannot hold {classes} orthogonal prototypes"
        )));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(classes);
    while basis.len() < classes {
        let mut v: Vec<f64> = (0..f).map(|_| rng.normal(0.0, 1.0)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let scale = 0.5 * (f as f64).sqrt();
    let rows: Vec<Vec<f64>> = basis.into_iter().map(|b| b.into_iter().map(|x| x * scale).collect()).collect();
    Matrix::from_rows(&rows)
}

/// Gaussian offset with per-entry std `std`, projected off the prototype span so
/// that it changes an instance's appearance but not its class evidence.
fn orthogonal_style(rng: &mut Rng, protos: &Matrix, std: f64) -> Vec<f64> {
    let f = protos.cols();
    let mut v: Vec<f64> = (0..f).map(|_| rng.normal(0.0, std)).collect();
    for c in 0..protos.rows() {
        let p = protos.row(c);
        let coef = v.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() / p.iter().map(|b| b * b).sum::<f64>();
        for (a, b) in v.iter_mut().zip(p) {
            *a -= coef * b;
        }
    }
    v
}

/// Videos of class instances in random order. Each instance is its class
/// prototype plus a per-sequence style offset; frames add observation noise.
/// The target is the noise-free instance of `target_class` shown in that
/// sequence and the truth records which frame shows it.
pub fn gen_keyframe(seed: u64, count: usize, spec: &KeyframeSpec) -> Result<SequenceDataset> {
    if spec.classes == 0 || spec.classes > spec.frames {
        return Err(Error::InvalidArgument(format!(
            "{} classes cannot each appear once in {} frames",
            spec.classes, spec.frames
        )));
    }
    if spec.target_class >= spec.classes {
        return Err(Error::InvalidArgument(format!(
            "target class {} out of range for {} classes",
            spec.target_class, spec.classes
        )));
    }
    let mut rng = Rng::new(seed);
    let protos = class_prototypes(&mut rng, spec.classes, spec.f)?;
    let others: Vec<usize> = (0..spec.classes).filter(|&c| c != spec.target_class).collect();
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let mut order: Vec<usize> = (0..spec.classes).collect();
        while order.len() < spec.frames {
            order.push(others[rng.int_in(0, others.len() - 1)]);
        }
        rng.shuffle(&mut order);
        let mut input = Matrix::zeros(spec.frames, spec.f);
        let mut target = Matrix::zeros(1, spec.f);
        for (t, &class) in order.iter().enumerate() {
            let style = orthogonal_style(&mut rng, &protos, spec.style_std);
            for (j, x) in input.row_mut(t).iter_mut().enumerate() {
                let clean = protos[(class, j)] + style[j];
                if class == spec.target_class {
                    target[(0, j)] = clean;
                }
                *x = clean + rng.normal(0.0, spec.noise_std);
            }
        }
        let target_frame = order.iter().position(|&c| c == spec.target_class).expect("target present");
        samples.push(Sample {
            input,
            target: Target::Sequence(target),
            mask: vec![true; spec.frames],
            truth: json!({"target_frame": target_frame, "order": order}),
        });
    }
    Ok(SequenceDataset {
        task: "keyframe".into(),
        n: spec.frames,
        f: spec.f,
        m: 1,
        num_classes: 0,
        samples,
        generator: json!({"task": "keyframe", "seed": seed, "count": count, "spec": spec}),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub classes: usize,
    /// Padded length.
    pub n: usize,
    pub f: usize,
    pub motif_len: usize,
    /// Shortest true (unpadded) length.
    pub min_len: usize,
    pub noise_std: f64,
}

impl Default for ActionSpec {
    fn default() -> Self {
        Self {
            classes: 9,
            n: 60,
            f: 8,
            motif_len: 12,
            min_len: 30,
            noise_std: 0.05,
        }
    }
}

/// Smooth Hann-windowed motif for one class, `motif_len x f`.
fn class_motif(rng: &mut Rng, motif_len: usize, f: usize) -> Matrix {
    let mut motif = Matrix::zeros(motif_len, f);
    for c in 0..f {
        let amp = rng.uniform_in(0.5, 1.0) * if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
        let cycles = rng.uniform_in(0.5, 2.0);
        let phase = rng.uniform_in(0.0, 2.0 * PI);
        for t in 0..motif_len {
            let tau = t as f64 / (motif_len - 1) as f64;
            let window = (PI * tau).sin().powi(2);
            motif[(t, c)] = amp * window * (2.0 * PI * cycles * tau + phase).sin();
        }
    }
    motif
}

/// Low-amplitude noise with one class motif at a random position, zero-padded
/// from a random true length up to `n`. Labels are balanced across classes.
pub fn gen_actions(seed: u64, count: usize, spec: &ActionSpec) -> Result<SequenceDataset> {
    if spec.motif_len < 2 || spec.motif_len >= spec.n {
        return Err(Error::InvalidArgument(format!(
            "motif length {} must be in [2, n={})",
            spec.motif_len, spec.n
        )));
    }
    if spec.min_len < spec.motif_len || spec.min_len > spec.n {
        return Err(Error::InvalidArgument(format!(
            "min_len {} must be in [motif_len={}, n={}]",
            spec.min_len, spec.motif_len, spec.n
        )));
    }
    if spec.classes < 2 || spec.f == 0 {
        return Err(Error::InvalidArgument("need at least 2 classes and 1 feature".into()));
    }
    let mut rng = Rng::new(seed);
    let motifs: Vec<Matrix> = (0..spec.classes).map(|_| class_motif(&mut rng, spec.motif_len, spec.f)).collect();
    // Stratified labels: every class appears floor(count/classes) or one more times.
    let mut labels: Vec<usize> = (0..count).map(|i| i % spec.classes).collect();
    rng.shuffle(&mut labels);
    let mut samples = Vec::with_capacity(count);
    for label in labels {
        let length = rng.int_in(spec.min_len, spec.n);
        let start = rng.int_in(0, length - spec.motif_len);
        let mut input = Matrix::zeros(spec.n, spec.f);
        for t in 0..length {
            for x in input.row_mut(t) {
                *x = rng.normal(0.0, spec.noise_std);
            }
        }
        for t in 0..spec.motif_len {
            for (x, m) in input.row_mut(start + t).iter_mut().zip(motifs[label].row(t)) {
                *x += m;
            }
        }
        samples.push(Sample {
            input,
            target: Target::Label(label),
            mask: (0..spec.n).map(|t| t < length).collect(),
            truth: json!({"motif_start": start, "motif_len": spec.motif_len, "length": length}),
        });
    }
    Ok(SequenceDataset {
        task: "actions".into(),
        n: spec.n,
        f: spec.f,
        m: 1,
        num_classes: spec.classes,
        samples,
        generator: json!({"task": "actions", "seed": seed, "count": count, "spec": spec}),
    })
}

/// Reads an integer truth annotation.
pub fn truth_index(truth: &Value, key: &str) -> Option<usize> {
    truth.get(key).and_then(Value::as_u64).map(|v| v as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hole_is_zero_and_rest_is_target() {
        let ds = gen_interpolation(0, 5, &InterpolationSpec::default()).unwrap();
        for s in &ds.samples {
            let target = s.target_sequence().unwrap();
            for t in 0..160 {
                if (50..110).contains(&t) {
                    assert!(s.input.row(t).iter().all(|&v| v == 0.0));
                } else {
                    assert_eq!(s.input.row(t), target.row(t));
                }
            }
            assert!(target.as_slice().iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn invalid_hole() {
        let spec = InterpolationSpec {
            hole_start: 120,
            ..Default::default()
        };
        assert!(gen_interpolation(0, 1, &spec).is_err());
    }

    #[test]
    fn extrapolation_shapes() {
        let ds = gen_extrapolation(1, 3, &ExtrapolationSpec::default()).unwrap();
        assert_eq!((ds.n, ds.m), (50, 60));
        for s in &ds.samples {
            assert_eq!(s.input.shape(), (50, 6));
            assert_eq!(s.target_sequence().unwrap().shape(), (60, 6));
        }
    }

    #[test]
    fn one_target_frame_per_video() {
        let spec = KeyframeSpec::default();
        let ds = gen_keyframe(0, 20, &spec).unwrap();
        for s in &ds.samples {
            let order: Vec<usize> = serde_json::from_value(s.truth["order"].clone()).unwrap();
            assert_eq!(order.iter().filter(|&&c| c == spec.target_class).count(), 1);
            assert_eq!(order[truth_index(&s.truth, "target_frame").unwrap()], spec.target_class);
        }
    }

    #[test]
    fn keyframe_rejects_narrow_features() {
        let spec = KeyframeSpec { f: 8, ..Default::default() };
        assert!(gen_keyframe(0, 1, &spec).is_err());
        let spec = KeyframeSpec { frames: 5, ..Default::default() };
        assert!(gen_keyframe(0, 1, &spec).is_err());
    }

    #[test]
    fn extra_frames_filled_with_distractors() {
        let spec = KeyframeSpec { frames: 14, ..Default::default() };
        let ds = gen_keyframe(3, 10, &spec).unwrap();
        for s in &ds.samples {
            let order: Vec<usize> = serde_json::from_value(s.truth["order"].clone()).unwrap();
            assert_eq!(order.len(), 14);
            assert_eq!(order.iter().filter(|&&c| c == 2).count(), 1);
        }
    }

    #[test]
    fn action_padding_and_window() {
        let ds = gen_actions(0, 50, &ActionSpec::default()).unwrap();
        for s in &ds.samples {
            let len = truth_index(&s.truth, "length").unwrap();
            let start = truth_index(&s.truth, "motif_start").unwrap();
            assert_eq!(s.valid_len(), len);
            assert!(start + 12 <= len);
            for t in len..60 {
                assert!(!s.mask[t]);
                assert!(s.input.row(t).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn action_motif_len_checked() {
        let spec = ActionSpec { motif_len: 60, ..Default::default() };
        assert!(gen_actions(0, 1, &spec).is_err());
    }
}

//! The autoencoder and classifier architectures.
//!
//! Both are `encoder -> attention -> head`:
//!
//! * a time-distributed dense encoder maps raw frames (`n x f`) to latents
//!   (`n x g`),
//! * an attention layer (temporal contextual by default) produces `m` context
//!   vectors,
//! * the head decodes each context vector back to `f` features (autoencoder)
//!   or maps the single context vector to class probabilities (classifier).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::ffatt::{ffatt_backward_with_attention_grad, ffatt_forward, FfAttCache, FfAttParams};
use crate::layers::{dense_backward, dense_backward_from_pre, dense_forward, Activation, DenseCache, DenseParams};
use crate::rng::Rng;
use crate::tcl::{tcl_backward_with_attention_grad, tcl_forward, tcl_param_count, TclCache, TclParams};
use crate::tensor::{fmt_f64, Matrix};

pub const FORMAT_VERSION: u64 = 1;

/// Gradients keyed by registry name (`"encoder.W"`, `"tcl.U"`, ...).
pub type LayerGrads = BTreeMap<String, Matrix>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Autoencoder,
    Classifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionKind {
    /// Temporal contextual layer.
    Temporal,
    /// Per-step feed-forward baseline; only defined for `m = 1`.
    FeedForward,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub attention: AttentionKind,
    pub n: usize,
    pub m: usize,
    pub f: usize,
    pub g: usize,
    pub num_classes: usize,
    /// Hidden width of the feed-forward baseline scorer.
    pub attention_hidden: usize,
    pub encoder_activation: Activation,
    pub decoder_activation: Activation,
    pub mask_enabled: bool,
}

impl ModelConfig {
    pub fn autoencoder(n: usize, m: usize, f: usize, g: usize) -> Self {
        Self {
            kind: ModelKind::Autoencoder,
            attention: AttentionKind::Temporal,
            n,
            m,
            f,
            g,
            num_classes: 0,
            attention_hidden: g,
            encoder_activation: Activation::Tanh,
            decoder_activation: Activation::Linear,
            mask_enabled: false,
        }
    }

    pub fn classifier(n: usize, f: usize, g: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::Classifier,
            attention: AttentionKind::Temporal,
            n,
            m: 1,
            f,
            g,
            num_classes,
            attention_hidden: g,
            encoder_activation: Activation::Tanh,
            decoder_activation: Activation::SoftmaxRows,
            mask_enabled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n == 0 || self.m == 0 || self.f == 0 || self.g == 0 {
            return bad(format!(
                "model dimensions must be positive, got n={} m={} f={} g={}",
                self.n, self.m, self.f, self.g
            ));
        }
        if self.kind == ModelKind::Classifier {
            if self.m != 1 {
                return bad(format!("classifier requires m = 1, got {}", self.m));
            }
            if self.num_classes < 2 {
                return bad(format!("classifier needs at least 2 classes, got {}", self.num_classes));
            }
            if self.decoder_activation != Activation::SoftmaxRows {
                return bad("classifier head must use softmax_rows".into());
            }
        }
        if self.attention == AttentionKind::FeedForward {
            if self.m != 1 {
                return bad(format!("feed-forward attention is defined for m = 1 only, got {}", self.m));
            }
            if self.attention_hidden == 0 {
                return bad("attention_hidden must be positive".into());
            }
        }
        Ok(())
    }

    pub fn output_width(&self) -> usize {
        match self.kind {
            ModelKind::Autoencoder => self.f,
            ModelKind::Classifier => self.num_classes,
        }
    }

    /// Trainable scalars implied by the configuration.
    pub fn param_count(&self) -> Result<usize> {
        let dense = |i: usize, o: usize| i * o + o;
        let attention = match self.attention {
            AttentionKind::Temporal => tcl_param_count(self.m, self.n, self.g)?,
            AttentionKind::FeedForward => dense(self.g, self.attention_hidden) + self.attention_hidden,
        };
        Ok(dense(self.f, self.g) + attention + dense(self.g, self.output_width()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttentionParams {
    Temporal(TclParams),
    FeedForward(FfAttParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub encoder: DenseParams,
    pub attention: AttentionParams,
    pub head: DenseParams,
}

#[derive(Debug, Clone)]
pub enum AttentionCache {
    Temporal(TclCache),
    FeedForward(FfAttCache),
}

#[derive(Debug, Clone)]
pub struct ModelCache {
    pub encoder: DenseCache,
    pub attention: AttentionCache,
    pub head: DenseCache,
}

impl ModelCache {
    /// Closest relu pre-activation to zero and the joint relu pattern.
    pub fn relu_pattern(&self) -> (f64, Vec<bool>) {
        let mut parts = vec![self.encoder.relu_pattern(), self.head.relu_pattern()];
        if let AttentionCache::Temporal(c) = &self.attention {
            parts.push(c.relu_pattern());
        }
        let margin = parts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        (margin, parts.into_iter().flat_map(|p| p.1).collect())
    }
}

#[derive(Debug, Clone)]
pub struct ModelOutput {
    /// `m x f` reconstruction or `1 x K` probabilities.
    pub output: Matrix,
    /// `m x n` attention matrix.
    pub attention: Matrix,
    pub cache: ModelCache,
}

/// Gradient arriving at the head.
#[derive(Debug, Clone)]
pub enum OutputGrad {
    /// W.r.t. the head output.
    Output(Matrix),
    /// W.r.t. the head pre-activation (fused softmax + cross-entropy).
    Logits(Matrix),
}

impl Model {
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let encoder = DenseParams::glorot(rng, config.f, config.g)?;
        let attention = match config.attention {
            AttentionKind::Temporal => AttentionParams::Temporal(TclParams::init(rng, config.m, config.n, config.g)?),
            AttentionKind::FeedForward => {
                AttentionParams::FeedForward(FfAttParams::init(rng, config.g, config.attention_hidden)?)
            }
        };
        let head = DenseParams::glorot(rng, config.g, config.output_width())?;
        Ok(Self {
            config,
            encoder,
            attention,
            head,
        })
    }

    /// Registry of every trainable matrix in a fixed order.
    pub fn params(&self) -> Vec<(&'static str, &Matrix)> {
        let mut out = vec![("encoder.W", &self.encoder.w), ("encoder.b", &self.encoder.b)];
        match &self.attention {
            AttentionParams::Temporal(p) => {
                out.extend([("tcl.U", &p.u), ("tcl.P", &p.p), ("tcl.V", &p.v), ("tcl.Q", &p.q)]);
            }
            AttentionParams::FeedForward(p) => {
                out.extend([("ffatt.W", &p.w), ("ffatt.b", &p.b), ("ffatt.w", &p.score)]);
            }
        }
        out.extend([("head.W", &self.head.w), ("head.b", &self.head.b)]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let mut out = vec![("encoder.W", &mut self.encoder.w), ("encoder.b", &mut self.encoder.b)];
        match &mut self.attention {
            AttentionParams::Temporal(p) => {
                out.extend([("tcl.U", &mut p.u), ("tcl.P", &mut p.p), ("tcl.V", &mut p.v), ("tcl.Q", &mut p.q)]);
            }
            AttentionParams::FeedForward(p) => {
                out.extend([("ffatt.W", &mut p.w), ("ffatt.b", &mut p.b), ("ffatt.w", &mut p.score)]);
            }
        }
        out.extend([("head.W", &mut self.head.w), ("head.b", &mut self.head.b)]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, m)| m.len()).sum()
    }

    pub fn forward(&self, x: &Matrix, mask: Option<&[bool]>) -> Result<ModelOutput> {
        model_forward(self, x, mask)
    }
}

pub fn model_forward(model: &Model, x: &Matrix, mask: Option<&[bool]>) -> Result<ModelOutput> {
    let cfg = &model.config;
    if x.shape() != (cfg.n, cfg.f) {
        return Err(Error::ShapeMismatch {
            op: "model_forward",
            left: x.shape(),
            right: (cfg.n, cfg.f),
        });
    }
    let mask = if cfg.mask_enabled { mask } else { None };
    let (h, enc_cache) = dense_forward(x, &model.encoder, cfg.encoder_activation)?;
    let (c, attention, att_cache) = match &model.attention {
        AttentionParams::Temporal(p) => {
            let (c, a, cache) = tcl_forward(&h, p, mask)?;
            (c, a, AttentionCache::Temporal(cache))
        }
        AttentionParams::FeedForward(p) => {
            let (c, a, cache) = ffatt_forward(&h, p, mask)?;
            (c, a, AttentionCache::FeedForward(cache))
        }
    };
    let (output, head_cache) = dense_forward(&c, &model.head, cfg.decoder_activation)?;
    Ok(ModelOutput {
        output,
        attention,
        cache: ModelCache {
            encoder: enc_cache,
            attention: att_cache,
            head: head_cache,
        },
    })
}

/// Gradients for every registry entry. `attention_grad`, when given, is an
/// extra gradient w.r.t. the attention matrix (sparsity regulariser).
pub fn model_backward(
    model: &Model,
    grad: &OutputGrad,
    attention_grad: Option<&Matrix>,
    cache: &ModelCache,
) -> Result<LayerGrads> {
    let mut grads = LayerGrads::new();
    let (dc, head) = match grad {
        OutputGrad::Output(dy) => dense_backward(dy, &cache.head, &model.head)?,
        OutputGrad::Logits(dz) => dense_backward_from_pre(dz, &cache.head, &model.head)?,
    };
    let dh = match (&model.attention, &cache.attention) {
        (AttentionParams::Temporal(p), AttentionCache::Temporal(c)) => {
            let (dh, g) = tcl_backward_with_attention_grad(&dc, attention_grad, c, p)?;
            grads.insert("tcl.U".into(), g.u);
            grads.insert("tcl.P".into(), g.p);
            grads.insert("tcl.V".into(), g.v);
            grads.insert("tcl.Q".into(), g.q);
            dh
        }
        (AttentionParams::FeedForward(p), AttentionCache::FeedForward(c)) => {
            let (dh, g) = ffatt_backward_with_attention_grad(&dc, attention_grad, c, p)?;
            grads.insert("ffatt.W".into(), g.w);
            grads.insert("ffatt.b".into(), g.b);
            grads.insert("ffatt.w".into(), g.score);
            dh
        }
        _ => return Err(Error::StaleCache("attention cache kind does not match model".into())),
    };
    let (_, enc) = dense_backward(&dh, &cache.encoder, &model.encoder)?;
    grads.insert("encoder.W".into(), enc.w);
    grads.insert("encoder.b".into(), enc.b);
    grads.insert("head.W".into(), head.w);
    grads.insert("head.b".into(), head.b);
    Ok(grads)
}

fn expected_shapes(cfg: &ModelConfig) -> Vec<(&'static str, (usize, usize))> {
    let mut out = vec![("encoder.W", (cfg.f, cfg.g)), ("encoder.b", (1, cfg.g))];
    match cfg.attention {
        AttentionKind::Temporal => out.extend([
            ("tcl.U", (cfg.m, cfg.n)),
            ("tcl.P", (cfg.m, cfg.g)),
            ("tcl.V", (cfg.g, cfg.n)),
            ("tcl.Q", (cfg.m, cfg.n)),
        ]),
        AttentionKind::FeedForward => out.extend([
            ("ffatt.W", (cfg.g, cfg.attention_hidden)),
            ("ffatt.b", (1, cfg.attention_hidden)),
            ("ffatt.w", (cfg.attention_hidden, 1)),
        ]),
    }
    out.extend([("head.W", (cfg.g, cfg.output_width())), ("head.b", (1, cfg.output_width()))]);
    out
}

/// Serialises a model as a checkpoint JSON document. Numbers carry 17
/// significant digits, so a reload is bit-exact.
pub fn checkpoint_json(model: &Model) -> Result<String> {
    let config = serde_json::to_string(&model.config).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut out = String::new();
    let _ = writeln!(out, "{{\"format_version\":{FORMAT_VERSION},");
    let _ = writeln!(out, "\"config\":{config},");
    out.push_str("\"params\":{");
    let params = model.params();
    for (i, (name, mat)) in params.iter().enumerate() {
        let _ = write!(out, "\n\"{name}\":[");
        for r in 0..mat.rows() {
            let row: Vec<String> = mat.row(r).iter().map(|&v| fmt_f64(v)).collect();
            let sep = if r + 1 < mat.rows() { "," } else { "" };
            let _ = write!(out, "\n[{}]{sep}", row.join(","));
        }
        out.push(']');
        if i + 1 < params.len() {
            out.push(',');
        }
    }
    out.push_str("\n}}\n");
    Ok(out)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text, path)
}

pub fn parse_checkpoint(text: &str, path: &Path) -> Result<Model> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.into(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let version = doc
        .get("format_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::format(path, "missing format_version"))?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let config: ModelConfig = serde_json::from_value(doc.get("config").cloned().unwrap_or(Value::Null))
        .map_err(|e| Error::format(path, format!("bad config: {e}")))?;
    config
        .validate()
        .map_err(|e| Error::format(path, format!("bad config: {e}")))?;
    let params = doc
        .get("params")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::format(path, "missing params object"))?;
    let expected = expected_shapes(&config);
    if let Some(extra) = params.keys().find(|k| !expected.iter().any(|(n, _)| n == k)) {
        return Err(Error::format(path, format!("unexpected parameter {extra:?}")));
    }
    let mut loaded = BTreeMap::new();
    for (name, (rows, cols)) in expected {
        let value = params
            .get(name)
            .ok_or_else(|| Error::format(path, format!("missing parameter {name:?}")))?;
        loaded.insert(name, parse_matrix(value, rows, cols, name, path)?);
    }
    let mut take = |name: &str| loaded.remove(name).expect("shape table covers every parameter");
    let encoder = DenseParams::new(take("encoder.W"), take("encoder.b"))?;
    let attention = match config.attention {
        AttentionKind::Temporal => {
            AttentionParams::Temporal(TclParams::new(take("tcl.U"), take("tcl.P"), take("tcl.V"), take("tcl.Q"))?)
        }
        AttentionKind::FeedForward => {
            AttentionParams::FeedForward(FfAttParams::new(take("ffatt.W"), take("ffatt.b"), take("ffatt.w"))?)
        }
    };
    let head = DenseParams::new(take("head.W"), take("head.b"))?;
    Ok(Model {
        config,
        encoder,
        attention,
        head,
    })
}

fn parse_matrix(value: &Value, rows: usize, cols: usize, name: &str, path: &Path) -> Result<Matrix> {
    let shape_err = |what: String| {
        Error::format(
            path,
            format!("parameter {name:?} declared {rows}x{cols} by the config but {what}"),
        )
    };
    let outer = value
        .as_array()
        .ok_or_else(|| Error::format(path, format!("parameter {name:?} is not an array of rows")))?;
    if outer.len() != rows {
        return Err(shape_err(format!("has {} rows", outer.len())));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (r, row) in outer.iter().enumerate() {
        let row = row
            .as_array()
            .ok_or_else(|| Error::format(path, format!("parameter {name:?} row {r} is not an array")))?;
        if row.len() != cols {
            return Err(shape_err(format!("row {r} has {} entries", row.len())));
        }
        for v in row {
            let x = v
                .as_f64()
                .ok_or_else(|| Error::format(path, format!("parameter {name:?} has a non-numeric entry")))?;
            data.push(x);
        }
    }
    Matrix::new(rows, cols, data)
}

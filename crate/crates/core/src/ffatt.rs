//! Per-step feed-forward attention, the comparison baseline.
//!
//! Each frame is scored on its own latent vector only,
//! `e_i = tanh(h_i W + b) w`, then `alpha = softmax(e)` and `c = alpha H`.
//! Unlike the temporal contextual layer no score sees the rest of the sequence.

use crate::error::{Error, Result};
use crate::rng::{rng_fill, Init, Rng};
use crate::tcl::{check_mask, MASKED_LOGIT};
use crate::tensor::{row_softmax_backward, softmax_in_place, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct FfAttParams {
    /// `g x a`
    pub w: Matrix,
    /// `1 x a`
    pub b: Matrix,
    /// `a x 1` scoring vector.
    pub score: Matrix,
}

impl FfAttParams {
    pub fn new(w: Matrix, b: Matrix, score: Matrix) -> Result<Self> {
        let a = w.cols();
        if b.shape() != (1, a) || score.shape() != (a, 1) {
            return Err(Error::InvalidArgument(format!(
                "feed-forward attention shapes W {:?}, b {:?}, w {:?} are inconsistent",
                w.shape(),
                b.shape(),
                score.shape()
            )));
        }
        Ok(Self { w, b, score })
    }

    pub fn zeros(g: usize, hidden: usize) -> Self {
        Self {
            w: Matrix::zeros(g, hidden),
            b: Matrix::zeros(1, hidden),
            score: Matrix::zeros(hidden, 1),
        }
    }

    pub fn init(rng: &mut Rng, g: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            w: rng_fill(rng, g, hidden, Init::Glorot { fan_in: g, fan_out: hidden })?,
            b: Matrix::zeros(1, hidden),
            score: rng_fill(rng, hidden, 1, Init::Glorot { fan_in: hidden, fan_out: 1 })?,
        })
    }

    pub fn g(&self) -> usize {
        self.w.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w.cols()
    }

    pub fn scalar_count(&self) -> usize {
        self.w.len() + self.b.len() + self.score.len()
    }
}

#[derive(Debug, Clone)]
pub struct FfAttCache {
    pub h: Matrix,
    /// `tanh(H W + b)`, `n x a`.
    pub hidden: Matrix,
    pub alpha: Matrix,
    pub mask: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfAttGrads {
    pub w: Matrix,
    pub b: Matrix,
    pub score: Matrix,
}

/// Returns `(c, alpha, cache)` with `c: 1 x g` and `alpha: 1 x n`.
pub fn ffatt_forward(h: &Matrix, p: &FfAttParams, mask: Option<&[bool]>) -> Result<(Matrix, Matrix, FfAttCache)> {
    if h.cols() != p.g() {
        return Err(Error::ShapeMismatch {
            op: "ffatt_forward",
            left: h.shape(),
            right: p.w.shape(),
        });
    }
    check_mask(mask, h.rows())?;
    let hidden = h.matmul(&p.w)?.add_row(&p.b)?.map(f64::tanh);
    let scores = hidden.matmul(&p.score)?;
    let mut alpha = scores.transpose();
    if let Some(mask) = mask {
        for (v, &keep) in alpha.row_mut(0).iter_mut().zip(mask) {
            if !keep {
                *v = MASKED_LOGIT;
            }
        }
    }
    softmax_in_place(alpha.row_mut(0));
    let c = alpha.matmul(h)?;
    let cache = FfAttCache {
        h: h.clone(),
        hidden,
        alpha: alpha.clone(),
        mask: mask.map(<[bool]>::to_vec),
    };
    Ok((c, alpha, cache))
}

pub fn ffatt_backward(dc: &Matrix, cache: &FfAttCache, p: &FfAttParams) -> Result<(Matrix, FfAttGrads)> {
    ffatt_backward_with_attention_grad(dc, None, cache, p)
}

pub fn ffatt_backward_with_attention_grad(
    dc: &Matrix,
    extra_dalpha: Option<&Matrix>,
    cache: &FfAttCache,
    p: &FfAttParams,
) -> Result<(Matrix, FfAttGrads)> {
    let n = cache.h.rows();
    if cache.h.cols() != p.g() || cache.hidden.cols() != p.hidden() {
        return Err(Error::StaleCache("feed-forward attention cache does not match parameters".into()));
    }
    if dc.shape() != (1, p.g()) {
        return Err(Error::ShapeMismatch {
            op: "ffatt_backward",
            left: dc.shape(),
            right: (1, p.g()),
        });
    }
    let mut dalpha = dc.matmul_t(&cache.h)?;
    if let Some(extra) = extra_dalpha {
        dalpha.add_assign(extra)?;
    }
    let mut de = row_softmax_backward(&cache.alpha, &dalpha)?;
    if let Some(mask) = &cache.mask {
        for (v, &keep) in de.row_mut(0).iter_mut().zip(mask) {
            if !keep {
                *v = 0.0;
            }
        }
    }
    // n x 1
    let de_col = Matrix::new(n, 1, de.into_vec())?;
    let dscore = cache.hidden.t_matmul(&de_col)?;
    let dhidden = de_col.matmul_t(&p.score)?;
    let dz = cache.hidden.zip_map(&dhidden, "tanh_backward", |t, d| d * (1.0 - t * t))?;
    let dw = cache.h.t_matmul(&dz)?;
    let db = dz.column_sums();
    let mut dh = cache.alpha.t_matmul(dc)?;
    dh.add_assign(&dz.matmul_t(&p.w)?)?;
    Ok((
        dh,
        FfAttGrads {
            w: dw,
            b: db,
            score: dscore,
        },
    ))
}

//! Temporal contextual layer.
//!
//! Maps an encoded sequence `H` (`n x g`) to `m` context vectors `C` (`m x g`)
//! through an attention matrix computed from the *whole* input sequence:
//!
//! ```text
//! E = relu(tanh(U H + P) V + Q)      U: m x n, P: m x g, V: g x n, Q: m x n
//! A = row_softmax(E)                 A: m x n, row-stochastic
//! C = A H
//! ```
//!
//! Because every row of `A` is a probability vector, each context vector is a
//! convex combination of input frames and `A` can be read directly as an
//! attention map. Note that relu keeps every unmasked logit `>= 0`, so no
//! weight can fall below `1 / (n * exp(max E))`.

use crate::error::{Error, Result};
use crate::layers::relu;
use crate::rng::{rng_fill, Init, Rng};
use crate::tensor::{row_softmax_backward, softmax_in_place, Matrix};

/// Logit written into masked columns before the softmax.
pub const MASKED_LOGIT: f64 = -1e30;

#[derive(Debug, Clone, PartialEq)]
pub struct TclParams {
    pub u: Matrix,
    pub p: Matrix,
    pub v: Matrix,
    pub q: Matrix,
}

impl TclParams {
    pub fn new(u: Matrix, p: Matrix, v: Matrix, q: Matrix) -> Result<Self> {
        let (m, n) = u.shape();
        let g = p.cols();
        let expect = [
            ("P", p.shape(), (m, g)),
            ("V", v.shape(), (g, n)),
            ("Q", q.shape(), (m, n)),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::InvalidArgument(format!(
                    "TCL {name} has shape {got:?}, expected {want:?} for (m,n,g)=({m},{n},{g})"
                )));
            }
        }
        Ok(Self { u, p, v, q })
    }

    pub fn zeros(m: usize, n: usize, g: usize) -> Self {
        Self {
            u: Matrix::zeros(m, n),
            p: Matrix::zeros(m, g),
            v: Matrix::zeros(g, n),
            q: Matrix::zeros(m, n),
        }
    }

    /// Glorot-uniform `U` and `V`, zero `P` and `Q`.
    pub fn init(rng: &mut Rng, m: usize, n: usize, g: usize) -> Result<Self> {
        let u = rng_fill(rng, m, n, Init::Glorot { fan_in: n, fan_out: m })?;
        let v = rng_fill(rng, g, n, Init::Glorot { fan_in: g, fan_out: n })?;
        Ok(Self {
            u,
            p: Matrix::zeros(m, g),
            v,
            q: Matrix::zeros(m, n),
        })
    }

    pub fn m(&self) -> usize {
        self.u.rows()
    }

    pub fn n(&self) -> usize {
        self.u.cols()
    }

    pub fn g(&self) -> usize {
        self.p.cols()
    }

    pub fn scalar_count(&self) -> usize {
        self.u.len() + self.p.len() + self.v.len() + self.q.len()
    }
}

/// `2mn + gm + gn`.
pub fn tcl_param_count(m: usize, n: usize, g: usize) -> Result<usize> {
    if m == 0 || n == 0 || g == 0 {
        return Err(Error::InvalidArgument(format!(
            "TCL dimensions must be positive, got (m,n,g)=({m},{n},{g})"
        )));
    }
    Ok(2 * m * n + g * m + g * n)
}

#[derive(Debug, Clone)]
pub struct TclCache {
    pub h: Matrix,
    pub z1: Matrix,
    pub t1: Matrix,
    pub z2: Matrix,
    /// `relu(z2)` before masking.
    pub e: Matrix,
    pub a: Matrix,
    pub mask: Option<Vec<bool>>,
}

impl TclCache {
    pub fn relu_pattern(&self) -> (f64, Vec<bool>) {
        let z = self.z2.as_slice();
        (
            z.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min),
            z.iter().map(|&v| v > 0.0).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TclGrads {
    pub u: Matrix,
    pub p: Matrix,
    pub v: Matrix,
    pub q: Matrix,
}

pub(crate) fn check_mask(mask: Option<&[bool]>, n: usize) -> Result<()> {
    if let Some(mask) = mask {
        if mask.len() != n {
            return Err(Error::InvalidArgument(format!(
                "mask has length {}, sequence has {n} frames",
                mask.len()
            )));
        }
        if !mask.iter().any(|&k| k) {
            return Err(Error::InvalidArgument("mask excludes every frame".into()));
        }
    }
    Ok(())
}

/// Returns `(C, A, cache)`. Where `mask[i]` is false, column `i` of `E` is
/// overwritten with [`MASKED_LOGIT`] so the frame receives no attention.
pub fn tcl_forward(h: &Matrix, p: &TclParams, mask: Option<&[bool]>) -> Result<(Matrix, Matrix, TclCache)> {
    if h.rows() != p.n() || h.cols() != p.g() {
        return Err(Error::ShapeMismatch {
            op: "tcl_forward",
            left: h.shape(),
            right: (p.n(), p.g()),
        });
    }
    check_mask(mask, p.n())?;
    let z1 = p.u.matmul(h)?.add(&p.p)?;
    let t1 = z1.map(f64::tanh);
    let z2 = t1.matmul(&p.v)?.add(&p.q)?;
    let e = z2.map(relu);
    let mut a = e.clone();
    for r in 0..a.rows() {
        let row = a.row_mut(r);
        if let Some(mask) = mask {
            for (v, &keep) in row.iter_mut().zip(mask) {
                if !keep {
                    *v = MASKED_LOGIT;
                }
            }
        }
        softmax_in_place(row);
    }
    let c = a.matmul(h)?;
    let cache = TclCache {
        h: h.clone(),
        z1,
        t1,
        z2,
        e,
        a: a.clone(),
        mask: mask.map(<[bool]>::to_vec),
    };
    Ok((c, a, cache))
}

pub fn tcl_backward(dc: &Matrix, cache: &TclCache, p: &TclParams) -> Result<(Matrix, TclGrads)> {
    tcl_backward_with_attention_grad(dc, None, cache, p)
}

/// Backward pass with an optional extra gradient arriving directly at `A`
/// (e.g. from an attention regulariser).
///
/// `C` depends on `H` twice: through the value path `A H` and through the
/// attention logits `U H`. Both contributions are summed into `dH`.
pub fn tcl_backward_with_attention_grad(
    dc: &Matrix,
    extra_da: Option<&Matrix>,
    cache: &TclCache,
    p: &TclParams,
) -> Result<(Matrix, TclGrads)> {
    let (m, n, g) = (p.m(), p.n(), p.g());
    if cache.h.shape() != (n, g) || cache.a.shape() != (m, n) {
        return Err(Error::StaleCache("TCL cache does not match parameters".into()));
    }
    if dc.shape() != (m, g) {
        return Err(Error::ShapeMismatch {
            op: "tcl_backward",
            left: dc.shape(),
            right: (m, g),
        });
    }
    let mut da = dc.matmul_t(&cache.h)?;
    if let Some(extra) = extra_da {
        da.add_assign(extra)?;
    }
    let mut de = row_softmax_backward(&cache.a, &da)?;
    if let Some(mask) = &cache.mask {
        for r in 0..m {
            for (v, &keep) in de.row_mut(r).iter_mut().zip(mask) {
                if !keep {
                    *v = 0.0;
                }
            }
        }
    }
    let dz2 = cache.z2.zip_map(&de, "relu_backward", |z, d| if z > 0.0 { d } else { 0.0 })?;
    let dv = cache.t1.t_matmul(&dz2)?;
    let dt1 = dz2.matmul_t(&p.v)?;
    let dz1 = cache.t1.zip_map(&dt1, "tanh_backward", |t, d| d * (1.0 - t * t))?;
    let du = dz1.matmul_t(&cache.h)?;
    let mut dh = cache.a.t_matmul(dc)?;
    dh.add_assign(&p.u.t_matmul(&dz1)?)?;
    Ok((
        dh,
        TclGrads {
            u: du,
            p: dz1,
            v: dv,
            q: dz2,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn zero_params_give_column_means() {
        let h = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let (c, a, _) = tcl_forward(&h, &TclParams::zeros(2, 2, 2), None).unwrap();
        assert_eq!(a, Matrix::filled(2, 2, 0.5));
        assert_eq!(c, m(&[&[2.0, 3.0], &[2.0, 3.0]]));
    }

    #[test]
    fn peaked_bias_returns_inputs() {
        let h = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let mut p = TclParams::zeros(2, 2, 2);
        p.q = m(&[&[100.0, 0.0], &[0.0, 100.0]]);
        let (c, a, _) = tcl_forward(&h, &p, None).unwrap();
        assert!(a.max_abs_diff(&Matrix::identity(2)).unwrap() < 1e-40);
        assert!(c.max_abs_diff(&h).unwrap() < 1e-40);
    }

    #[test]
    fn param_counts() {
        assert_eq!(tcl_param_count(2, 3, 4).unwrap(), 32);
        assert_eq!(tcl_param_count(1, 10, 100).unwrap(), 1120);
        assert_eq!(tcl_param_count(1, 227, 16).unwrap(), 4102);
        assert_eq!(TclParams::zeros(1, 227, 16).scalar_count(), 4102);
        assert!(tcl_param_count(0, 3, 4).is_err());
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let mut rng = Rng::new(2);
        let p = TclParams::init(&mut rng, 3, 4, 2).unwrap();
        let h = rng_fill(&mut rng, 4, 2, Init::Normal { mu: 0.0, sigma: 1.0 }).unwrap();
        let (_, _, cache) = tcl_forward(&h, &p, None).unwrap();
        let (dh, g) = tcl_backward(&Matrix::zeros(3, 2), &cache, &p).unwrap();
        for mat in [&dh, &g.u, &g.p, &g.v, &g.q] {
            assert!(mat.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn uniform_attention_value_path_share() {
        // All-zero parameters: Z2 = 0 so the relu kills the logit path and dH
        // is exactly the value-path share A^T dC = 1/n per frame.
        let n = 4;
        let h = m(&[&[1.0, -1.0], &[0.5, 2.0], &[3.0, 0.0], &[-2.0, 1.0]]);
        let p = TclParams::zeros(1, n, 2);
        let (_, _, cache) = tcl_forward(&h, &p, None).unwrap();
        let (dh, _) = tcl_backward(&m(&[&[1.0, 0.0]]), &cache, &p).unwrap();
        for i in 0..n {
            assert_eq!(dh.row(i), &[0.25, 0.0]);
        }
    }

    #[test]
    fn masked_columns_get_no_attention() {
        let mut rng = Rng::new(11);
        let p = TclParams::init(&mut rng, 3, 5, 2).unwrap();
        let h = rng_fill(&mut rng, 5, 2, Init::Normal { mu: 0.0, sigma: 1.0 }).unwrap();
        let mask = [true, true, false, true, false];
        let (_, a, _) = tcl_forward(&h, &p, Some(&mask)).unwrap();
        for r in 0..3 {
            assert_eq!(a[(r, 2)], 0.0);
            assert_eq!(a[(r, 4)], 0.0);
            assert!((a.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_inputs() {
        let p = TclParams::zeros(2, 3, 2);
        assert!(tcl_forward(&Matrix::zeros(4, 2), &p, None).is_err());
        assert!(tcl_forward(&Matrix::zeros(3, 2), &p, Some(&[false; 3])).is_err());
        assert!(tcl_forward(&Matrix::zeros(3, 2), &p, Some(&[true; 2])).is_err());
        assert!(TclParams::new(Matrix::zeros(2, 3), Matrix::zeros(2, 2), Matrix::zeros(3, 3), Matrix::zeros(2, 3)).is_err());
    }
}

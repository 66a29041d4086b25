//! Time-distributed dense layers and elementwise activations.
//!
//! A dense layer maps every row (time step) of its input through the same
//! affine map, `Y = act(X W + b)`, so one parameter set encodes a whole
//! sequence frame by frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_fill, Init, Rng};
use crate::tensor::{row_softmax, row_softmax_backward, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Tanh,
    Relu,
    SoftmaxRows,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::SoftmaxRows => "softmax_rows",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Activation::Linear),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "softmax_rows" | "softmax" => Ok(Activation::SoftmaxRows),
            other => Err(Error::InvalidArgument(format!("unknown activation {other:?}"))),
        }
    }

    pub fn apply(self, z: &Matrix) -> Matrix {
        match self {
            Activation::Linear => z.clone(),
            Activation::Tanh => z.map(f64::tanh),
            Activation::Relu => z.map(relu),
            Activation::SoftmaxRows => row_softmax(z),
        }
    }

    /// Gradient w.r.t. the pre-activation `z`, given the output `y = act(z)`
    /// and the upstream gradient `dy`.
    pub fn backward(self, z: &Matrix, y: &Matrix, dy: &Matrix) -> Result<Matrix> {
        match self {
            Activation::Linear => Ok(dy.clone()),
            Activation::Tanh => y.zip_map(dy, "tanh_backward", |t, g| g * (1.0 - t * t)),
            Activation::Relu => z.zip_map(dy, "relu_backward", |z, g| if z > 0.0 { g } else { 0.0 }),
            Activation::SoftmaxRows => row_softmax_backward(y, dy),
        }
    }
}

/// `max(z, 0)`; the derivative at exactly zero is taken to be zero.
pub fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub w: Matrix,
    pub b: Matrix,
}

impl DenseParams {
    pub fn new(w: Matrix, b: Matrix) -> Result<Self> {
        if b.rows() != 1 || b.cols() != w.cols() {
            return Err(Error::ShapeMismatch {
                op: "dense_params",
                left: w.shape(),
                right: b.shape(),
            });
        }
        Ok(Self { w, b })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(rng: &mut Rng, d_in: usize, d_out: usize) -> Result<Self> {
        let w = rng_fill(rng, d_in, d_out, Init::Glorot { fan_in: d_in, fan_out: d_out })?;
        Ok(Self {
            w,
            b: Matrix::zeros(1, d_out),
        })
    }

    pub fn d_in(&self) -> usize {
        self.w.rows()
    }

    pub fn d_out(&self) -> usize {
        self.w.cols()
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    pub act: Activation,
    pub input: Matrix,
    pub pre: Matrix,
    pub output: Matrix,
}

impl DenseCache {
    /// Distance of the closest relu pre-activation to its kink and the
    /// activity pattern; empty for smooth activations.
    pub fn relu_pattern(&self) -> (f64, Vec<bool>) {
        if self.act != Activation::Relu {
            return (f64::INFINITY, Vec::new());
        }
        let margin = self.pre.as_slice().iter().map(|z| z.abs()).fold(f64::INFINITY, f64::min);
        (margin, self.pre.as_slice().iter().map(|&z| z > 0.0).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub w: Matrix,
    pub b: Matrix,
}

pub fn dense_forward(x: &Matrix, p: &DenseParams, act: Activation) -> Result<(Matrix, DenseCache)> {
    if x.cols() != p.d_in() {
        return Err(Error::ShapeMismatch {
            op: "dense_forward",
            left: x.shape(),
            right: p.w.shape(),
        });
    }
    let pre = x.matmul(&p.w)?.add_row(&p.b)?;
    let output = act.apply(&pre);
    let cache = DenseCache {
        act,
        input: x.clone(),
        pre,
        output: output.clone(),
    };
    Ok((output, cache))
}

/// Returns `(dX, grads)` with `dW = X^T (dY . act')`, `db` the column sums of
/// `dY . act'` and `dX = (dY . act') W^T`.
pub fn dense_backward(dy: &Matrix, cache: &DenseCache, p: &DenseParams) -> Result<(Matrix, DenseGrads)> {
    if dy.shape() != cache.output.shape() {
        return Err(Error::ShapeMismatch {
            op: "dense_backward",
            left: dy.shape(),
            right: cache.output.shape(),
        });
    }
    if cache.input.cols() != p.d_in() || cache.pre.cols() != p.d_out() {
        return Err(Error::StaleCache("dense cache does not match parameters".into()));
    }
    let dz = cache.act.backward(&cache.pre, &cache.output, dy)?;
    dense_backward_from_pre(&dz, cache, p)
}

/// Backward from a gradient already taken w.r.t. the pre-activation; used by
/// the fused softmax + cross-entropy path.
pub fn dense_backward_from_pre(dz: &Matrix, cache: &DenseCache, p: &DenseParams) -> Result<(Matrix, DenseGrads)> {
    if dz.shape() != cache.pre.shape() {
        return Err(Error::ShapeMismatch {
            op: "dense_backward",
            left: dz.shape(),
            right: cache.pre.shape(),
        });
    }
    let w = cache.input.t_matmul(dz)?;
    let b = dz.column_sums();
    let dx = dz.matmul_t(&p.w)?;
    Ok((dx, DenseGrads { w, b }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_linear_layer() {
        let x = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let p = DenseParams::new(Matrix::identity(2), Matrix::zeros(1, 2)).unwrap();
        let (y, _) = dense_forward(&x, &p, Activation::Linear).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn relu_kills_negative() {
        let x = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let p = DenseParams::new(
            Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap(),
            Matrix::from_rows(&[vec![-2.0]]).unwrap(),
        )
        .unwrap();
        let (y, _) = dense_forward(&x, &p, Activation::Relu).unwrap();
        assert_eq!(y.as_slice(), &[0.0]);
    }

    #[test]
    fn relu_derivative_zero_at_kink() {
        let z = Matrix::from_rows(&[vec![0.0, 1.0, -1.0]]).unwrap();
        let y = Activation::Relu.apply(&z);
        let g = Activation::Relu.backward(&z, &y, &Matrix::filled(1, 3, 1.0)).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let mut rng = Rng::new(5);
        let p = DenseParams::glorot(&mut rng, 3, 2).unwrap();
        let x = rng_fill(&mut rng, 4, 3, Init::Normal { mu: 0.0, sigma: 1.0 }).unwrap();
        let (_, cache) = dense_forward(&x, &p, Activation::Linear).unwrap();
        let (dx, g) = dense_backward(&Matrix::zeros(4, 2), &cache, &p).unwrap();
        assert!(dx.as_slice().iter().chain(g.w.as_slice()).chain(g.b.as_slice()).all(|&v| v == 0.0));
    }

    #[test]
    fn single_row_weight_grad_is_outer_product() {
        let x = Matrix::from_rows(&[vec![2.0, -1.0, 0.5]]).unwrap();
        let dy = Matrix::from_rows(&[vec![0.25, -3.0]]).unwrap();
        let mut rng = Rng::new(1);
        let p = DenseParams::glorot(&mut rng, 3, 2).unwrap();
        let (_, cache) = dense_forward(&x, &p, Activation::Linear).unwrap();
        let (_, g) = dense_backward(&dy, &cache, &p).unwrap();
        assert_eq!(g.w, x.transpose().matmul(&dy).unwrap());
        assert_eq!(g.b, dy);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = Rng::new(9);
        let p = DenseParams::glorot(&mut rng, 4, 6).unwrap();
        let x = rng_fill(&mut rng, 5, 4, Init::Normal { mu: 0.0, sigma: 3.0 }).unwrap();
        let (y, _) = dense_forward(&x, &p, Activation::SoftmaxRows).unwrap();
        for r in 0..y.rows() {
            assert!((y.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        let p = DenseParams::new(Matrix::zeros(3, 2), Matrix::zeros(1, 2)).unwrap();
        assert!(dense_forward(&Matrix::zeros(4, 2), &p, Activation::Tanh).is_err());
        let (_, cache) = dense_forward(&Matrix::zeros(4, 3), &p, Activation::Tanh).unwrap();
        assert!(dense_backward(&Matrix::zeros(4, 3), &cache, &p).is_err());
        assert!(DenseParams::new(Matrix::zeros(3, 2), Matrix::zeros(1, 3)).is_err());
    }
}

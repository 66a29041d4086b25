//! Test-side helpers: random instances and scalar-loop reference
//! implementations written without the library's matrix routines.
#![allow(dead_code)]

use tempattn::rng::Rng;
use tempattn::Matrix;

pub type Grid = Vec<Vec<f64>>;

pub const MASKED: f64 = -1e30;

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, sigma: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.normal(0.0, sigma)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

pub fn grid(m: &Matrix) -> Grid {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn max_diff(a: &Grid, b: &Matrix) -> f64 {
    assert_eq!((a.len(), a[0].len()), b.shape());
    let mut worst: f64 = 0.0;
    for (r, row) in a.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            worst = worst.max((v - b[(r, c)]).abs());
        }
    }
    worst
}

pub fn matmul(a: &Grid, b: &Grid) -> Grid {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn softmax_row(row: &[f64]) -> Vec<f64> {
    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Time-distributed dense layer: `act(x W + b)` row by row.
pub fn dense(x: &Grid, w: &Grid, b: &[f64], act: &str) -> Grid {
    let mut out = Vec::new();
    for row in x {
        let mut z = vec![0.0; b.len()];
        for (j, zj) in z.iter_mut().enumerate() {
            *zj = b[j];
            for (k, xk) in row.iter().enumerate() {
                *zj += xk * w[k][j];
            }
        }
        let y = match act {
            "linear" => z,
            "tanh" => z.iter().map(|v| v.tanh()).collect(),
            "relu" => z.iter().map(|v| v.max(0.0)).collect(),
            "softmax_rows" => softmax_row(&z),
            other => panic!("unknown activation {other}"),
        };
        out.push(y);
    }
    out
}

/// Temporal contextual layer, returning (C, A).
pub fn tcl(h: &Grid, u: &Grid, p: &Grid, v: &Grid, q: &Grid, mask: Option<&[bool]>) -> (Grid, Grid) {
    let (n, g, m) = (h.len(), h[0].len(), u.len());
    let mut a = vec![vec![0.0; n]; m];
    let mut c = vec![vec![0.0; g]; m];
    for i in 0..m {
        let mut t1 = vec![0.0; g];
        for k in 0..g {
            let mut z = p[i][k];
            for t in 0..n {
                z += u[i][t] * h[t][k];
            }
            t1[k] = z.tanh();
        }
        let mut e = vec![0.0; n];
        for t in 0..n {
            let mut z = q[i][t];
            for k in 0..g {
                z += t1[k] * v[k][t];
            }
            e[t] = if mask.is_some_and(|mk| !mk[t]) { MASKED } else { z.max(0.0) };
        }
        a[i] = softmax_row(&e);
        for k in 0..g {
            c[i][k] = (0..n).map(|t| a[i][t] * h[t][k]).sum();
        }
    }
    (c, a)
}

/// Per-step feed-forward attention, returning (c, alpha).
pub fn ffatt(h: &Grid, w: &Grid, b: &[f64], score: &[f64], mask: Option<&[bool]>) -> (Vec<f64>, Vec<f64>) {
    let (n, g) = (h.len(), h[0].len());
    let mut s = vec![0.0; n];
    for t in 0..n {
        let mut e = 0.0;
        for j in 0..b.len() {
            let mut z = b[j];
            for k in 0..g {
                z += h[t][k] * w[k][j];
            }
            e += z.tanh() * score[j];
        }
        s[t] = if mask.is_some_and(|mk| !mk[t]) { MASKED } else { e };
    }
    let alpha = softmax_row(&s);
    let c = (0..g).map(|k| (0..n).map(|t| alpha[t] * h[t][k]).sum()).collect();
    (c, alpha)
}

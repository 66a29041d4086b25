//! The finite-difference gradient suite behind `tempattn gradcheck`.
//!
//! Every differentiable piece is checked on random small shapes: each layer
//! under a random linear read-out `sum(R . Y)`, both losses, the sparsity
//! penalty and the full architectures end to end.

use crate::error::Result;
use crate::ffatt::{ffatt_backward, ffatt_forward, FfAttParams};
use crate::gradcheck::{grad_check, GradCheckReport, Probe, DEFAULT_EPS};
use crate::layers::{dense_backward, dense_forward, Activation, DenseParams};
use crate::model::{model_backward, AttentionKind, Model, ModelConfig, OutputGrad};
use crate::rng::{rng_fill, Init, Rng};
use crate::tcl::{tcl_backward, tcl_forward, TclParams};
use crate::tensor::{row_softmax, Matrix};
use crate::train::{cross_entropy_loss, mse_loss, sparsity_penalty};

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: String,
    pub report: GradCheckReport,
}

fn normal(rng: &mut Rng, rows: usize, cols: usize, sigma: f64) -> Result<Matrix> {
    rng_fill(rng, rows, cols, Init::Normal { mu: 0.0, sigma })
}

fn readout(y: &Matrix, r: &Matrix) -> f64 {
    y.as_slice().iter().zip(r.as_slice()).map(|(a, b)| a * b).sum()
}

fn dense_case(rng: &mut Rng, act: Activation, eps: f64) -> Result<GradCheckReport> {
    let (n, d_in, d_out) = (rng.int_in(1, 6), rng.int_in(1, 6), rng.int_in(1, 6));
    let x = normal(rng, n, d_in, 1.0)?;
    let p = DenseParams::new(normal(rng, d_in, d_out, 0.4)?, normal(rng, 1, d_out, 0.3)?)?;
    let r = normal(rng, n, d_out, 1.0)?;
    let (_, cache) = dense_forward(&x, &p, act)?;
    let (dx, g) = dense_backward(&r, &cache, &p)?;
    let mut params = vec![p.w.clone(), p.b.clone(), x];
    grad_check(&mut params, &[g.w, g.b, dx], eps, |ps| {
        let p = DenseParams::new(ps[0].clone(), ps[1].clone())?;
        let (y, cache) = dense_forward(&ps[2], &p, act)?;
        let (relu_margin, relu_active) = cache.relu_pattern();
        Ok(Probe {
            loss: readout(&y, &r),
            relu_margin,
            relu_active,
        })
    })
}

fn tcl_case(rng: &mut Rng, masked: bool, eps: f64) -> Result<GradCheckReport> {
    let (n, g, m) = (rng.int_in(2, 6), rng.int_in(1, 6), rng.int_in(1, 6));
    let h = normal(rng, n, g, 1.0)?;
    let p = TclParams::new(
        normal(rng, m, n, 0.4)?,
        normal(rng, m, g, 0.3)?,
        normal(rng, g, n, 0.4)?,
        normal(rng, m, n, 0.3)?,
    )?;
    let mask: Option<Vec<bool>> = masked.then(|| {
        let mut mask: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.7).collect();
        mask[0] = true;
        mask
    });
    let r = normal(rng, m, g, 1.0)?;
    let (_, _, cache) = tcl_forward(&h, &p, mask.as_deref())?;
    let (dh, gr) = tcl_backward(&r, &cache, &p)?;
    let mut params = vec![p.u.clone(), p.p.clone(), p.v.clone(), p.q.clone(), h];
    grad_check(&mut params, &[gr.u, gr.p, gr.v, gr.q, dh], eps, |ps| {
        let p = TclParams::new(ps[0].clone(), ps[1].clone(), ps[2].clone(), ps[3].clone())?;
        let (c, _, cache) = tcl_forward(&ps[4], &p, mask.as_deref())?;
        let (relu_margin, relu_active) = cache.relu_pattern();
        Ok(Probe {
            loss: readout(&c, &r),
            relu_margin,
            relu_active,
        })
    })
}

fn ffatt_case(rng: &mut Rng, eps: f64) -> Result<GradCheckReport> {
    let (n, g, a) = (rng.int_in(1, 6), rng.int_in(1, 6), rng.int_in(1, 6));
    let h = normal(rng, n, g, 1.0)?;
    let p = FfAttParams::new(normal(rng, g, a, 0.4)?, normal(rng, 1, a, 0.3)?, normal(rng, a, 1, 0.4)?)?;
    let r = normal(rng, 1, g, 1.0)?;
    let (_, _, cache) = ffatt_forward(&h, &p, None)?;
    let (dh, gr) = ffatt_backward(&r, &cache, &p)?;
    let mut params = vec![p.w.clone(), p.b.clone(), p.score.clone(), h];
    grad_check(&mut params, &[gr.w, gr.b, gr.score, dh], eps, |ps| {
        let p = FfAttParams::new(ps[0].clone(), ps[1].clone(), ps[2].clone())?;
        let (c, _, _) = ffatt_forward(&ps[3], &p, None)?;
        Ok(Probe::smooth(readout(&c, &r)))
    })
}

fn mse_case(rng: &mut Rng, eps: f64) -> Result<GradCheckReport> {
    let (rows, cols) = (rng.int_in(1, 6), rng.int_in(1, 6));
    let y = normal(rng, rows, cols, 1.0)?;
    let yhat = normal(rng, rows, cols, 1.0)?;
    let (_, g) = mse_loss(&yhat, &y)?;
    let mut params = vec![yhat];
    grad_check(&mut params, &[g], eps, |ps| Ok(Probe::smooth(mse_loss(&ps[0], &y)?.0)))
}

fn cross_entropy_case(rng: &mut Rng, eps: f64) -> Result<GradCheckReport> {
    let k = rng.int_in(2, 9);
    let label = rng.int_in(0, k - 1);
    let logits = normal(rng, 1, k, 1.5)?;
    let (_, g) = cross_entropy_loss(&row_softmax(&logits), label)?;
    let mut params = vec![logits];
    grad_check(&mut params, &[g], eps, |ps| {
        Ok(Probe::smooth(cross_entropy_loss(&row_softmax(&ps[0]), label)?.0))
    })
}

fn sparsity_case(rng: &mut Rng, eps: f64) -> Result<GradCheckReport> {
    let (m, n) = (rng.int_in(1, 6), rng.int_in(1, 8));
    let lambda = rng.uniform_in(0.1, 2.0);
    let a = row_softmax(&normal(rng, m, n, 1.0)?);
    let (_, g) = sparsity_penalty(&a, lambda);
    let mut params = vec![a];
    grad_check(&mut params, &[g], eps, |ps| Ok(Probe::smooth(sparsity_penalty(&ps[0], lambda).0)))
}

/// Model with its registry replaced by `values` (registry order).
pub fn with_params(model: &Model, values: &[Matrix]) -> Model {
    let mut out = model.clone();
    for ((_, slot), v) in out.params_mut().into_iter().zip(values) {
        *slot = v.clone();
    }
    out
}

fn perturb_init(model: &mut Model, rng: &mut Rng) -> Result<()> {
    // Zero-initialised entries (biases, P, Q) would leave paths unexercised.
    for (_, p) in model.params_mut() {
        if p.as_slice().iter().all(|v| *v == 0.0) {
            *p = normal(rng, p.rows(), p.cols(), 0.3)?;
        }
    }
    Ok(())
}

fn model_probe(model: &Model, x: &Matrix, mask: Option<&[bool]>, target: &ModelTarget, lambda: f64) -> Result<(Probe, OutputGrad, Option<Matrix>, crate::model::ModelCache)> {
    let out = model.forward(x, mask)?;
    let (loss, grad) = match target {
        ModelTarget::Sequence(y) => {
            let (l, g) = mse_loss(&out.output, y)?;
            (l, OutputGrad::Output(g))
        }
        ModelTarget::Label(k) => {
            let (l, g) = cross_entropy_loss(&out.output, *k)?;
            (l, OutputGrad::Logits(g))
        }
    };
    let (pen, da) = if lambda > 0.0 {
        let (p, da) = sparsity_penalty(&out.attention, lambda);
        (p, Some(da))
    } else {
        (0.0, None)
    };
    let (relu_margin, relu_active) = out.cache.relu_pattern();
    Ok((
        Probe {
            loss: loss + pen,
            relu_margin,
            relu_active,
        },
        grad,
        da,
        out.cache,
    ))
}

enum ModelTarget {
    Sequence(Matrix),
    Label(usize),
}

fn model_case(rng: &mut Rng, config: ModelConfig, lambda: f64, masked: bool, eps: f64) -> Result<GradCheckReport> {
    let mut model = Model::init(config.clone(), rng)?;
    perturb_init(&mut model, rng)?;
    let x = normal(rng, config.n, config.f, 1.0)?;
    let mask: Option<Vec<bool>> = masked.then(|| {
        let valid = rng.int_in(1, config.n);
        (0..config.n).map(|t| t < valid).collect()
    });
    let target = match config.kind {
        crate::model::ModelKind::Autoencoder => ModelTarget::Sequence(normal(rng, config.m, config.f, 1.0)?),
        crate::model::ModelKind::Classifier => ModelTarget::Label(rng.int_in(0, config.num_classes - 1)),
    };
    let (_, grad, da, cache) = model_probe(&model, &x, mask.as_deref(), &target, lambda)?;
    let grads = model_backward(&model, &grad, da.as_ref(), &cache)?;
    let names: Vec<&str> = model.params().iter().map(|(n, _)| *n).collect();
    let analytic: Vec<Matrix> = names.iter().map(|n| grads[*n].clone()).collect();
    let mut params: Vec<Matrix> = model.params().into_iter().map(|(_, m)| m.clone()).collect();
    grad_check(&mut params, &analytic, eps, |ps| {
        let candidate = with_params(&model, ps);
        Ok(model_probe(&candidate, &x, mask.as_deref(), &target, lambda)?.0)
    })
}

/// Runs every case for one seed at the default step.
pub fn run_suite(seed: u64) -> Result<Vec<SuiteEntry>> {
    run_suite_with_step(seed, DEFAULT_EPS)
}

pub fn run_suite_with_step(seed: u64, eps: f64) -> Result<Vec<SuiteEntry>> {
    let mut rng = Rng::new(seed);
    let mut out = Vec::new();
    let mut push = |name: &str, report: GradCheckReport| {
        out.push(SuiteEntry {
            name: name.to_string(),
            report,
        })
    };
    for act in [Activation::Linear, Activation::Tanh, Activation::Relu, Activation::SoftmaxRows] {
        push(&format!("dense/{}", act.name()), dense_case(&mut rng, act, eps)?);
    }
    push("tcl", tcl_case(&mut rng, false, eps)?);
    push("tcl/masked", tcl_case(&mut rng, true, eps)?);
    push("ffatt", ffatt_case(&mut rng, eps)?);
    push("loss/mse", mse_case(&mut rng, eps)?);
    push("loss/cross_entropy", cross_entropy_case(&mut rng, eps)?);
    push("penalty/sparsity", sparsity_case(&mut rng, eps)?);

    let (n, f, g) = (rng.int_in(2, 6), rng.int_in(1, 4), rng.int_in(1, 4));
    let m = rng.int_in(1, 6);
    push("model/autoencoder+mse", model_case(&mut rng, ModelConfig::autoencoder(n, m, f, g), 0.0, false, eps)?);
    push(
        "model/autoencoder+mse+sparsity",
        model_case(&mut rng, ModelConfig::autoencoder(n, 1, f, g), 0.5, false, eps)?,
    );
    let k = rng.int_in(2, 5);
    push(
        "model/classifier+ce+sparsity",
        model_case(&mut rng, ModelConfig::classifier(n, f, g, k), 0.5, true, eps)?,
    );
    let ff = ModelConfig {
        attention: AttentionKind::FeedForward,
        ..ModelConfig::classifier(n, f, g, k)
    };
    push("model/ffatt-classifier+ce+sparsity", model_case(&mut rng, ff, 0.5, true, eps)?);
    Ok(out)
}

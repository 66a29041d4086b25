//! Central finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Perturbation used by the gradient suite.
pub const DEFAULT_EPS: f64 = 1e-5;
/// Tolerance every analytic gradient must meet.
pub const GRAD_TOL: f64 = 1e-6;
/// Entries whose relu pre-activations sit this close to zero are skipped.
pub const KINK_TOL: f64 = 1e-6;

/// One evaluation of the scalar objective.
#[derive(Debug, Clone, Default)]
pub struct Probe {
    pub loss: f64,
    /// Smallest `|z|` over all relu pre-activations (infinite if none).
    pub relu_margin: f64,
    /// Relu on/off pattern; a change between `theta+eps` and `theta-eps` means
    /// the difference quotient straddles a kink.
    pub relu_active: Vec<bool>,
}

impl Probe {
    pub fn smooth(loss: f64) -> Self {
        Self {
            loss,
            relu_margin: f64::INFINITY,
            relu_active: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Max relative error per parameter, in input order.
    pub per_param: Vec<f64>,
    pub checked: usize,
    pub skipped_kinks: usize,
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `f` for every entry of
/// every matrix in `params`. `params` is restored before returning.
pub fn grad_check<F>(params: &mut [Matrix], analytic: &[Matrix], eps: f64, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&[Matrix]) -> Result<Probe>,
{
    if params.len() != analytic.len() {
        return Err(Error::InvalidArgument(format!(
            "{} parameters but {} gradients",
            params.len(),
            analytic.len()
        )));
    }
    for (p, g) in params.iter().zip(analytic) {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "grad_check",
                left: p.shape(),
                right: g.shape(),
            });
        }
    }
    let base = eval(&mut f, params)?;
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        per_param: vec![0.0; params.len()],
        checked: 0,
        skipped_kinks: 0,
    };
    for pi in 0..params.len() {
        for k in 0..params[pi].len() {
            let orig = params[pi].as_slice()[k];
            params[pi].as_mut_slice()[k] = orig + eps;
            let plus = eval(&mut f, params);
            params[pi].as_mut_slice()[k] = orig - eps;
            let minus = eval(&mut f, params);
            params[pi].as_mut_slice()[k] = orig;
            let (plus, minus) = (plus?, minus?);
            if base.relu_margin < KINK_TOL || plus.relu_active != minus.relu_active {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus.loss - minus.loss) / (2.0 * eps);
            let err = relative_error(analytic[pi].as_slice()[k], numeric);
            report.per_param[pi] = report.per_param[pi].max(err);
            report.max_rel_err = report.max_rel_err.max(err);
            report.checked += 1;
        }
    }
    Ok(report)
}

fn eval<F>(f: &mut F, params: &[Matrix]) -> Result<Probe>
where
    F: FnMut(&[Matrix]) -> Result<Probe>,
{
    let probe = f(params)?;
    if !probe.loss.is_finite() {
        return Err(Error::NonFinite("grad_check objective".into()));
    }
    Ok(probe)
}

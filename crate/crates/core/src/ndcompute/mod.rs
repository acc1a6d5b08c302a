//! Minimal dense tensors with tape-based reverse-mode differentiation.

mod tape;
mod tensor;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use tape::{Axis, Gradients, OpKind, Tape, Var, LAYER_NORM_EPS};
pub use tensor::Tensor;

/// Smallest denominator used when turning gradient differences into relative errors.
pub const GRADCHECK_FLOOR: f64 = 1e-2;

/// Weighted binary cross-entropy, accumulated in `f64`.
pub fn wce_value(p: &[f32], labels: &[bool], w0: f64, w1: f64, eps: f64) -> f64 {
    let mut total = 0.0f64;
    for (&pi, &y) in p.iter().zip(labels) {
        let pc = (pi as f64).clamp(eps, 1.0 - eps);
        total += if y { w1 * pc.ln() } else { w0 * (1.0 - pc).ln() };
    }
    -total / labels.len() as f64
}

/// Plain SGD: `param -= lr * grad` for every pair.
pub fn sgd_step(params: &mut [Tensor], grads: &[Tensor], lr: f32) -> Result<()> {
    if lr <= 0.0 || !lr.is_finite() {
        return Err(Error::Argument(format!("learning rate must be positive, got {lr}")));
    }
    if params.len() != grads.len() {
        return Err(Error::shape(
            "sgd_step",
            format!("{} params vs {} grads", params.len(), grads.len()),
        ));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::shape("sgd_step", format!("{:?} vs {:?}", p.shape(), g.shape())));
        }
    }
    for (p, g) in params.iter_mut().zip(grads) {
        sgd_update(p, g, lr);
    }
    Ok(())
}

pub(crate) fn sgd_update(p: &mut Tensor, g: &Tensor, lr: f32) {
    for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
        *x -= lr * d;
    }
}

/// Result of comparing tape gradients to central differences.
#[derive(Debug, Clone, Copy)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub coords_checked: usize,
}

/// Compare the tape gradient of the scalar `f(theta)` with central finite
/// differences on up to `max_coords` randomly chosen coordinates.
///
/// Relative error per coordinate is `|a - n| / max(|a|, |n|, GRADCHECK_FLOOR)`.
pub fn gradcheck<F>(
    f: F,
    theta: &Tensor,
    eps: f64,
    max_coords: usize,
    seed: u64,
) -> Result<GradcheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(1e-4..=1e-2).contains(&eps) {
        return Err(Error::Argument(format!("gradcheck eps {eps} outside [1e-4, 1e-2]")));
    }
    let mut tape = Tape::new();
    let x = tape.leaf(theta.clone())?;
    let out = f(&mut tape, x)?;
    let grads = tape.backward(out)?;
    let analytic = grads.get_or_zeros(x, theta.shape());

    let eval = |t: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.leaf(t)?;
        let out = f(&mut tape, x)?;
        let v = tape.scalar(out);
        if !v.is_finite() {
            return Err(Error::Numeric("gradcheck".into()));
        }
        Ok(v)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = theta.len();
    let coords = sample(&mut rng, n, max_coords.min(n));
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        coords_checked: 0,
    };
    for i in coords.iter() {
        let mut plus = theta.clone();
        plus.data_mut()[i] += eps as f32;
        let mut minus = theta.clone();
        minus.data_mut()[i] -= eps as f32;
        // the perturbation actually applied after f32 rounding
        let h = plus.data()[i] as f64 - minus.data()[i] as f64;
        let numeric = (eval(plus)? - eval(minus)?) / h;
        let a = analytic.data()[i] as f64;
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.coords_checked += 1;
    }
    Ok(report)
}

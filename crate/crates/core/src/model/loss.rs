use crate::error::{Error, Result};
use crate::ndcompute::wce_value;

use super::state::LossWeights;

/// Probabilities are clamped to `[PROB_CLAMP_EPS, 1 - PROB_CLAMP_EPS]` inside the loss.
pub const PROB_CLAMP_EPS: f64 = 1e-7;

/// Weighted binary cross-entropy averaged over all terms (natural log).
pub fn wce_loss(p: &[f32], y: &[bool], w: &LossWeights) -> Result<f64> {
    if p.len() != y.len() {
        return Err(Error::Argument(format!(
            "{} probabilities vs {} labels",
            p.len(),
            y.len()
        )));
    }
    if p.is_empty() {
        return Err(Error::Argument("empty loss batch".into()));
    }
    Ok(wce_value(p, y, w.w0, w.w1, PROB_CLAMP_EPS))
}

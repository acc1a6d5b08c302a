//! Prime/non-prime sequence classifier and its loss.

mod checkpoint;
mod forward;
mod loss;
mod state;

use std::collections::BTreeMap;

use crate::encoding::SequenceSample;
use crate::error::Result;
use crate::ndcompute::{gradcheck, GradcheckReport, OpKind, Tape, Tensor};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use forward::{
    attention_maps, embed_sparse, feature_extract, predict_batch, predict_window,
    transform_sequence, Bound,
};
pub use loss::{wce_loss, PROB_CLAMP_EPS};
pub use state::{LossWeights, ModelConfig, ModelState, EMBED_INIT_STD};

fn batch_labels(samples: &[SequenceSample]) -> Vec<bool> {
    samples.iter().flat_map(|s| s.labels.iter().copied()).collect()
}

/// Batch loss and the gradient of every parameter, keyed by name.
pub fn loss_and_gradients(
    state: &ModelState,
    samples: &[SequenceSample],
    weights: &LossWeights,
) -> Result<(f64, BTreeMap<String, Tensor>)> {
    weights.validate()?;
    let labels = batch_labels(samples);
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, state)?;
    let p = bound.forward(&mut tape, samples)?;
    let loss = tape.wce(p, &labels, weights.w0, weights.w1, PROB_CLAMP_EPS)?;
    let mut grads = tape.backward(loss)?;
    let mut out = BTreeMap::new();
    for (name, var) in bound.vars() {
        let g = grads
            .take(var)
            .unwrap_or_else(|| Tensor::zeros(state.get(name).shape()));
        out.insert(name.to_string(), g);
    }
    Ok((tape.scalar(loss), out))
}

/// Finite-difference check of the batch loss against every parameter tensor.
///
/// `fault` negates the backward rule of one primitive, for mutation testing.
pub fn model_gradcheck(
    state: &ModelState,
    samples: &[SequenceSample],
    weights: &LossWeights,
    eps: f64,
    coords_per_param: usize,
    seed: u64,
    fault: Option<OpKind>,
) -> Result<BTreeMap<String, GradcheckReport>> {
    let labels = batch_labels(samples);
    let mut out = BTreeMap::new();
    for (i, (name, theta)) in state.params().enumerate() {
        let report = gradcheck(
            |tape, x| {
                if let Some(kind) = fault {
                    tape.negate_backward(kind);
                }
                let bound = Bound::with_override(tape, state, name, x)?;
                let p = bound.forward(tape, samples)?;
                tape.wce(p, &labels, weights.w0, weights.w1, PROB_CLAMP_EPS)
            },
            theta,
            eps,
            coords_per_param,
            seed.wrapping_add(i as u64),
        )?;
        out.insert(name.to_string(), report);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;

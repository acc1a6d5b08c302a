use std::collections::BTreeSet;

use crate::analysis::{classification_metrics, roc_auc, MetricsReport};
use crate::dataset::{enumerate_windows, load_window, subsample_windows, LabelStore, RangeSpec};
use crate::encoding::EncodingShape;
use crate::error::{Error, Result};
use crate::model::{predict_batch, ModelState};

/// Windows scored per forward pass.
pub const EVAL_CHUNK: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub metrics: MetricsReport,
    /// Composites predicted prime, as absolute integers.
    pub false_positives: BTreeSet<u64>,
    /// Integers scored.
    pub scored: u64,
}

/// Score the given windows of `store`'s range.
pub fn evaluate_windows(
    state: &ModelState,
    store: &mut LabelStore,
    shape: &EncodingShape,
    window_ids: &[u64],
    threshold: f64,
) -> Result<EvalResult> {
    if window_ids.is_empty() {
        return Err(Error::Argument("no windows to evaluate".into()));
    }
    if shape != &state.config().shape {
        return Err(Error::Argument("evaluation shape differs from model shape".into()));
    }
    let n = window_ids.len() * shape.seq_len;
    let mut scores = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut pred = Vec::with_capacity(n);
    let mut false_positives = BTreeSet::new();
    for chunk in window_ids.chunks(EVAL_CHUNK) {
        let windows = chunk
            .iter()
            .map(|&id| load_window(store, shape, 0, id))
            .collect::<Result<Vec<_>>>()?;
        let probs = predict_batch(&windows, state)?;
        for (w, p) in windows.iter().zip(&probs) {
            for ((&v, &y), &p) in w.values.iter().zip(&w.labels).zip(p) {
                let yes = p as f64 >= threshold;
                if yes && !y && v >= 4 {
                    false_positives.insert(v);
                }
                scores.push(p as f64);
                truth.push(y);
                pred.push(yes);
            }
        }
    }
    let mut metrics = classification_metrics(&pred, &truth)?;
    metrics.auc = roc_auc(&scores, &truth)?;
    Ok(EvalResult {
        metrics,
        false_positives,
        scored: n as u64,
    })
}

/// Score a `subsample` fraction of the windows tiling `range` (all of them at 1.0).
/// Integers past the last whole window are not scored.
pub fn evaluate(
    state: &ModelState,
    range: &RangeSpec,
    subsample: f64,
    threshold: f64,
    seed: u64,
) -> Result<EvalResult> {
    let shape = state.config().shape;
    range.validate(&shape)?;
    let total = enumerate_windows(range, shape.seq_len)?;
    let ids = subsample_windows(total, subsample, seed)?;
    let mut store = LabelStore::new(*range);
    evaluate_windows(state, &mut store, &shape, &ids, threshold)
}

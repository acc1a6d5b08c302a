//! Resampled-epoch SGD training with recall-driven learning-rate decay.
//!
//! Run directory layout (when an output directory is given):
//!
//! ```text
//! runlog.csv                 periodic evaluations on the (sub)sampled test range
//! full_evals.csv             end-of-epoch evaluations on the whole test range
//! metrics/epoch-<e>.csv      metric,value for each full evaluation
//! fp/epoch-<e>.txt           sorted false positives of each full evaluation
//! checkpoints/epoch-<e>/     parameters after epoch e
//! checkpoints/best/          parameters at the best monitored mean recall
//! labels/                    cached primality bitmaps
//! ```

mod eval;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{fmt_opt, hash_line, integer_list, metrics_csv, write_atomic, MetricsReport};
use crate::dataset::{enumerate_windows, epoch_seed, make_batches, sample_epoch, subsample_windows, LabelStore, SplitConfig};
use crate::error::{Error, Result};
use crate::model::{loss_and_gradients, save_checkpoint, CheckpointMeta, LossWeights, ModelConfig, ModelState};
use crate::ndcompute::sgd_update;

pub use eval::{evaluate, evaluate_windows, EvalResult, EVAL_CHUNK};

/// Column header of `runlog.csv` and `full_evals.csv`.
pub const RUNLOG_HEADER: &str = "iteration,epoch,lr,loss,recall_prime,recall_nonprime,precision_prime,precision_nonprime,f1_prime,f1_nonprime,accuracy,auc";

/// Stream ids reserved for seeds that are not per-epoch draws.
const INIT_STREAM: u64 = u64::MAX;
const EVAL_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub weights: LossWeights,
    pub lr0: f64,
    pub decay_factor: f64,
    /// Evaluations without improvement before the learning rate decays.
    pub patience: u32,
    pub batch_size: usize,
    pub epochs: u64,
    /// Iterations between periodic evaluations.
    pub eval_every: u64,
    /// Fraction of test windows scored by periodic evaluations.
    pub eval_subsample: f64,
    /// `p >= threshold` is predicted prime.
    pub threshold: f64,
    pub master_seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.model.validate()?;
        self.weights.validate()?;
        if self.model.shape != self.split.shape {
            return Err(Error::Config("model shape differs from split shape".into()));
        }
        let checks = [
            (self.lr0 > 0.0 && self.lr0.is_finite(), "lr0 must be positive"),
            (self.decay_factor > 0.0 && self.decay_factor < 1.0, "decay_factor must be in (0, 1)"),
            (self.patience >= 1, "patience must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.epochs >= 1, "epochs must be >= 1"),
            (self.eval_every >= 1, "eval_every must be >= 1"),
            (self.eval_subsample > 0.0 && self.eval_subsample <= 1.0, "eval_subsample must be in (0, 1]"),
            (self.threshold > 0.0 && self.threshold < 1.0, "threshold must be in (0, 1)"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        Ok(())
    }

    /// Seed of the initial parameters.
    pub fn init_seed(&self) -> u64 {
        epoch_seed(self.master_seed, INIT_STREAM)
    }

    /// Seed of the fixed test-window subset used by periodic evaluations.
    pub fn eval_seed(&self) -> u64 {
        epoch_seed(self.master_seed, EVAL_STREAM)
    }
}

/// One evaluation, periodic or end-of-epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub iteration: u64,
    pub epoch: u64,
    pub lr: f64,
    /// Mean training loss since the previous record of the same kind.
    pub loss: f64,
    pub metrics: MetricsReport,
    pub full: bool,
}

impl EvalRecord {
    pub fn csv_row(&self) -> String {
        let m = &self.metrics;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.epoch,
            self.lr,
            self.loss,
            fmt_opt(m.recall_prime),
            fmt_opt(m.recall_nonprime),
            fmt_opt(m.precision_prime),
            fmt_opt(m.precision_nonprime),
            fmt_opt(m.f1_prime),
            fmt_opt(m.f1_nonprime),
            m.accuracy,
            fmt_opt(m.auc),
        )
    }
}

/// Periodic records in iteration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub records: Vec<EvalRecord>,
}

impl RunLog {
    pub fn to_csv(&self, config_hash: Option<&str>) -> String {
        let mut out = hash_line(config_hash);
        out.push_str(RUNLOG_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }
}

/// End-of-epoch evaluation on the full test range.
#[derive(Debug, Clone, PartialEq)]
pub struct FullEval {
    pub record: EvalRecord,
    pub false_positives: std::collections::BTreeSet<u64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: ModelState,
    pub log: RunLog,
    pub full_evals: Vec<FullEval>,
    pub iterations: u64,
    pub best_mean_recall: f64,
}

impl TrainOutcome {
    pub fn final_eval(&self) -> &FullEval {
        self.full_evals.last().expect("at least one epoch")
    }
}

/// Where and how to persist a run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub config_hash: Option<String>,
    /// Shared primality cache; defaults to `<out_dir>/labels`.
    pub label_cache: Option<PathBuf>,
}

struct Sink<'a> {
    dir: Option<&'a Path>,
    hash: Option<&'a str>,
}

impl Sink<'_> {
    fn start(&self) -> Result<()> {
        let Some(dir) = self.dir else { return Ok(()) };
        fs::create_dir_all(dir)?;
        for name in ["runlog.csv", "full_evals.csv"] {
            let mut head = hash_line(self.hash);
            head.push_str(RUNLOG_HEADER);
            head.push('\n');
            write_atomic(&dir.join(name), &head)?;
        }
        Ok(())
    }

    fn append(&self, name: &str, record: &EvalRecord) -> Result<()> {
        let Some(dir) = self.dir else { return Ok(()) };
        let mut f = OpenOptions::new().append(true).open(dir.join(name))?;
        // one write per record keeps appends whole
        f.write_all(format!("{}\n", record.csv_row()).as_bytes())?;
        Ok(())
    }

    fn checkpoint(&self, name: &str, state: &ModelState, meta: &CheckpointMeta) -> Result<()> {
        let Some(dir) = self.dir else { return Ok(()) };
        save_checkpoint(&dir.join("checkpoints").join(name), state, meta)
    }

    fn full_eval(&self, eval: &FullEval) -> Result<()> {
        let Some(dir) = self.dir else { return Ok(()) };
        let e = eval.record.epoch;
        write_atomic(
            &dir.join("metrics").join(format!("epoch-{e}.csv")),
            &metrics_csv(&eval.record.metrics, self.hash),
        )?;
        let mut fp = hash_line(self.hash);
        fp.push_str(&integer_list(eval.false_positives.iter().copied()));
        write_atomic(&dir.join("fp").join(format!("epoch-{e}.txt")), &fp)
    }
}

fn apply_sgd(
    state: &mut ModelState,
    grads: &std::collections::BTreeMap<String, crate::ndcompute::Tensor>,
    lr: f32,
) {
    for (name, p) in state.params_mut() {
        sgd_update(p, &grads[name], lr);
    }
}

/// Train from a seeded initialization. Returns a numeric error on divergence;
/// checkpoints already written stay intact.
pub fn train_run(cfg: &TrainConfig, opts: &RunOptions) -> Result<TrainOutcome> {
    train_run_with(cfg, opts, &mut |_| {})
}

/// [`train_run`] with a callback invoked after every evaluation.
pub fn train_run_with(
    cfg: &TrainConfig,
    opts: &RunOptions,
    progress: &mut dyn FnMut(&EvalRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let sink = Sink {
        dir: opts.out_dir.as_deref(),
        hash: opts.config_hash.as_deref(),
    };
    sink.start()?;
    let cache = opts
        .label_cache
        .clone()
        .or_else(|| opts.out_dir.as_ref().map(|d| d.join("labels")));
    let store_for = |range| {
        let s = LabelStore::new(range);
        match &cache {
            Some(dir) => s.with_cache_dir(dir),
            None => s,
        }
    };
    let mut train_store = store_for(cfg.split.train);
    let mut test_store = store_for(cfg.split.test);

    let shape = cfg.split.shape;
    let test_windows = enumerate_windows(&cfg.split.test, shape.seq_len)?;
    let periodic_ids = subsample_windows(test_windows, cfg.eval_subsample, cfg.eval_seed())?;
    let all_ids: Vec<u64> = (0..test_windows).collect();

    let mut state = ModelState::init(cfg.model, cfg.init_seed())?;
    let mut lr = cfg.lr0;
    let mut log = RunLog::default();
    let mut full_evals = Vec::new();
    let mut iteration = 0u64;
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0u32;
    let (mut period_loss, mut period_steps) = (0.0f64, 0u64);

    for epoch in 1..=cfg.epochs {
        let sample = sample_epoch(&cfg.split, epoch, cfg.master_seed)?;
        let (mut epoch_loss, mut epoch_steps) = (0.0f64, 0u64);
        let batches = make_batches(&sample, &shape, &mut train_store, cfg.batch_size)?;
        for batch in batches {
            let batch = batch?;
            let (loss, grads) = loss_and_gradients(&state, &batch, &cfg.weights)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("loss diverged at iteration {}", iteration + 1)));
            }
            apply_sgd(&mut state, &grads, lr as f32);
            if !state.is_finite() {
                return Err(Error::Numeric(format!(
                    "parameters diverged at iteration {}",
                    iteration + 1
                )));
            }
            iteration += 1;
            epoch_loss += loss;
            epoch_steps += 1;
            period_loss += loss;
            period_steps += 1;

            if iteration.is_multiple_of(cfg.eval_every) {
                let res = evaluate_windows(&state, &mut test_store, &shape, &periodic_ids, cfg.threshold)?;
                let record = EvalRecord {
                    iteration,
                    epoch,
                    lr,
                    loss: period_loss / period_steps as f64,
                    metrics: res.metrics,
                    full: false,
                };
                (period_loss, period_steps) = (0.0, 0);
                sink.append("runlog.csv", &record)?;
                progress(&record);

                let monitored = record.metrics.mean_recall();
                if monitored > best {
                    best = monitored;
                    stale = 0;
                    let meta = meta_for(cfg, opts, epoch, iteration, record.loss);
                    sink.checkpoint("best", &state, &meta)?;
                } else {
                    stale += 1;
                    if stale >= cfg.patience {
                        lr *= cfg.decay_factor;
                        stale = 0;
                    }
                }
                log.records.push(record);
            }
        }

        let res = evaluate_windows(&state, &mut test_store, &shape, &all_ids, cfg.threshold)?;
        let record = EvalRecord {
            iteration,
            epoch,
            lr,
            loss: epoch_loss / epoch_steps.max(1) as f64,
            metrics: res.metrics,
            full: true,
        };
        let meta = meta_for(cfg, opts, epoch, iteration, record.loss);
        sink.checkpoint(&format!("epoch-{epoch}"), &state, &meta)?;
        sink.append("full_evals.csv", &record)?;
        progress(&record);
        let eval = FullEval {
            record,
            false_positives: res.false_positives,
        };
        sink.full_eval(&eval)?;
        full_evals.push(eval);
    }

    Ok(TrainOutcome {
        state,
        log,
        full_evals,
        iterations: iteration,
        best_mean_recall: best,
    })
}

fn meta_for(cfg: &TrainConfig, opts: &RunOptions, epoch: u64, iteration: u64, loss: f64) -> CheckpointMeta {
    CheckpointMeta {
        seed: cfg.master_seed,
        epoch,
        iteration,
        loss,
        config_hash: opts.config_hash.clone().unwrap_or_else(|| "none".into()),
    }
}

/// Optimizer steps in one epoch: `ceil(round(fraction * windows) / batch_size)`.
pub fn steps_per_epoch(split: &SplitConfig, batch_size: usize) -> Result<u64> {
    let total = enumerate_windows(&split.train, split.shape.seq_len)?;
    let k = crate::dataset::sample_size(total, split.sample_fraction);
    Ok(k.div_ceil(batch_size as u64))
}

#[cfg(test)]
mod tests;

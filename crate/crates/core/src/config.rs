//! TOML run configuration: parse, validate, canonical echo and content hash.
//!
//! ```toml
//! master_seed = 1
//!
//! [split]
//! sample_fraction = 0.05   # optional
//! random_tiling = false    # optional
//! train = { offset = 0, start = 0, end = 100000 }
//! test = { offset = 0, start = 100000, end = 300000 }
//!
//! [shape]
//! m = 70
//! n = 70
//! o = 70
//! seq_len = 15
//!
//! [model]    # optional, every key defaulted
//! [loss]     # optional: w0 = 1.0, w1 = 20.0
//! [train]    # optional, every key defaulted
//! ```
//!
//! Unknown keys are rejected everywhere.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{RangeSpec, SplitConfig};
use crate::encoding::EncodingShape;
use crate::error::{Error, Result};
use crate::model::{LossWeights, ModelConfig};
use crate::training::TrainConfig;

/// Lowercase hex SHA-256 of `text`.
pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn default_seed() -> u64 {
    1
}

fn default_fraction() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train: RangeSpec,
    pub test: RangeSpec,
    #[serde(default = "default_fraction")]
    pub sample_fraction: f64,
    #[serde(default)]
    pub random_tiling: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_res_blocks: usize,
    pub n_tx_layers: usize,
    pub n_heads: usize,
    pub ff_mult: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            d_model: 64,
            n_res_blocks: 2,
            n_tx_layers: 2,
            n_heads: 4,
            ff_mult: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub w0: f64,
    pub w1: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection { w0: 1.0, w1: 20.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr0: f64,
    pub decay_factor: f64,
    pub patience: u32,
    pub batch_size: usize,
    pub epochs: u64,
    pub eval_every: u64,
    pub eval_subsample: f64,
    pub threshold: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            lr0: 0.01,
            decay_factor: 0.5,
            patience: 5,
            batch_size: 1,
            epochs: 10,
            eval_every: 200,
            eval_subsample: 0.05,
            threshold: 0.5,
        }
    }
}

/// On-disk form of a [`TrainConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    pub split: SplitSection,
    pub shape: EncodingShape,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub train: TrainSection,
}

impl RunConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
    }

    /// Canonical TOML: every key present, fixed order.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`RunConfigFile::canonical`].
    pub fn hash(&self) -> String {
        sha256_hex(&self.canonical())
    }

    pub fn to_train_config(&self) -> Result<TrainConfig> {
        let shape = self.shape;
        let m = self.model;
        let t = self.train;
        let cfg = TrainConfig {
            split: SplitConfig {
                train: self.split.train,
                test: self.split.test,
                shape,
                sample_fraction: self.split.sample_fraction,
                random_tiling: self.split.random_tiling,
            },
            model: ModelConfig {
                d_model: m.d_model,
                n_res_blocks: m.n_res_blocks,
                n_tx_layers: m.n_tx_layers,
                n_heads: m.n_heads,
                ff_mult: m.ff_mult,
                shape,
            },
            weights: LossWeights {
                w0: self.loss.w0,
                w1: self.loss.w1,
            },
            lr0: t.lr0,
            decay_factor: t.decay_factor,
            patience: t.patience,
            batch_size: t.batch_size,
            epochs: t.epochs,
            eval_every: t.eval_every,
            eval_subsample: t.eval_subsample,
            threshold: t.threshold,
            master_seed: self.master_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A grid of runs: every combination of the listed overrides applied to a base config.
///
/// ```toml
/// base = "desk.toml"            # relative to the sweep file
/// [grid]
/// "shape.seq_len" = [1, 5, 15]
/// "loss.w1" = [1.0, 20.0]
/// ```
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub base: String,
    pub grid: BTreeMap<String, Vec<toml::Value>>,
}

/// One expanded sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub index: usize,
    pub overrides: Vec<(String, toml::Value)>,
    pub config: RunConfigFile,
}

fn set_path(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut table = doc;
    for p in parents {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("sweep key {key}: {p} is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl SweepFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Cartesian product of the grid in key order (last key varies fastest).
    pub fn expand(&self, base_text: &str) -> Result<Vec<SweepCell>> {
        let base: toml::Table = toml::from_str(base_text)
            .map_err(|e| Error::Config(format!("sweep base: {}", e.message())))?;
        let axes: Vec<(&String, &Vec<toml::Value>)> = self.grid.iter().collect();
        if axes.iter().any(|(_, v)| v.is_empty()) {
            return Err(Error::Config("sweep axis without values".into()));
        }
        let total: usize = axes.iter().map(|(_, v)| v.len()).product();
        let mut cells = Vec::with_capacity(total);
        for index in 0..total {
            let mut rest = index;
            let mut overrides = Vec::with_capacity(axes.len());
            for (key, values) in axes.iter().rev() {
                overrides.push(((*key).clone(), values[rest % values.len()].clone()));
                rest /= values.len();
            }
            overrides.reverse();
            let mut doc = base.clone();
            for (k, v) in &overrides {
                set_path(&mut doc, k, v.clone())?;
            }
            let text = toml::to_string(&doc).expect("table serializes");
            let config = RunConfigFile::parse(&text)
                .map_err(|e| Error::Config(format!("sweep cell {index}: {e}")))?;
            config.to_train_config()?;
            cells.push(SweepCell {
                index,
                overrides,
                config,
            });
        }
        Ok(cells)
    }
}

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::EncodingShape;
use crate::error::{Error, Result};
use crate::ndcompute::Tensor;

/// Architecture hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_res_blocks: usize,
    pub n_tx_layers: usize,
    pub n_heads: usize,
    pub ff_mult: usize,
    pub shape: EncodingShape,
}

impl ModelConfig {
    /// Desk-scale defaults around the given encoding shape.
    pub fn with_shape(shape: EncodingShape) -> Self {
        ModelConfig {
            d_model: 64,
            n_res_blocks: 2,
            n_tx_layers: 2,
            n_heads: 4,
            ff_mult: 4,
            shape,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        let fields = [
            ("d_model", self.d_model),
            ("n_res_blocks", self.n_res_blocks),
            ("n_tx_layers", self.n_tx_layers),
            ("n_heads", self.n_heads),
            ("ff_mult", self.ff_mult),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be >= 1")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "model.d_model {} not divisible by model.n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Name and shape of every parameter tensor, in canonical order.
    pub fn parameter_shapes(&self) -> Vec<(String, [usize; 2])> {
        let d = self.d_model;
        let f = d * self.ff_mult;
        let s = self.shape;
        let mut out: Vec<(String, [usize; 2])> = vec![
            ("embed.m".into(), [s.m, d]),
            ("embed.n".into(), [s.n, d]),
            ("embed.o".into(), [s.o, d]),
            ("embed.bias".into(), [1, d]),
        ];
        for i in 0..self.n_res_blocks {
            let p = format!("res{i}");
            out.extend([
                (format!("{p}.ln1.g"), [1, d]),
                (format!("{p}.ln1.b"), [1, d]),
                (format!("{p}.w1"), [d, d]),
                (format!("{p}.b1"), [1, d]),
                (format!("{p}.ln2.g"), [1, d]),
                (format!("{p}.ln2.b"), [1, d]),
                (format!("{p}.w2"), [d, d]),
                (format!("{p}.b2"), [1, d]),
            ]);
        }
        out.push(("pos".into(), [s.seq_len, d]));
        for i in 0..self.n_tx_layers {
            let p = format!("tx{i}");
            out.extend([
                (format!("{p}.ln1.g"), [1, d]),
                (format!("{p}.ln1.b"), [1, d]),
                (format!("{p}.wq"), [d, d]),
                (format!("{p}.bq"), [1, d]),
                (format!("{p}.wk"), [d, d]),
                (format!("{p}.bk"), [1, d]),
                (format!("{p}.wv"), [d, d]),
                (format!("{p}.bv"), [1, d]),
                (format!("{p}.wo"), [d, d]),
                (format!("{p}.bo"), [1, d]),
                (format!("{p}.ln2.g"), [1, d]),
                (format!("{p}.ln2.b"), [1, d]),
                (format!("{p}.ff1"), [d, f]),
                (format!("{p}.ff1b"), [1, f]),
                (format!("{p}.ff2"), [f, d]),
                (format!("{p}.ff2b"), [1, d]),
            ]);
        }
        out.extend([
            ("final_ln.g".into(), [1, d]),
            ("final_ln.b".into(), [1, d]),
            ("head.w".into(), [d, 1]),
            ("head.b".into(), [1, 1]),
        ]);
        out
    }
}

/// Class weights of the weighted cross-entropy: `w0` non-prime, `w1` prime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub w0: f64,
    pub w1: f64,
}

impl LossWeights {
    pub fn new(w0: f64, w1: f64) -> Result<Self> {
        let w = LossWeights { w0, w1 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w0 > 0.0 && self.w1 > 0.0 && self.w0.is_finite() && self.w1.is_finite()) {
            return Err(Error::Config(format!(
                "loss weights must be positive, got w0={} w1={}",
                self.w0, self.w1
            )));
        }
        Ok(())
    }
}

/// Standard deviation of the coordinate and positional embedding init.
pub const EMBED_INIT_STD: f32 = 0.02;

/// All trainable tensors of the classifier, keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    config: ModelConfig,
    params: BTreeMap<String, Tensor>,
}

impl ModelState {
    /// Seeded initialization. Residual output projections start at zero, so the
    /// feature tower is the identity until trained.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        for (name, [r, c]) in config.parameter_shapes() {
            let leaf = name.rsplit('.').next().unwrap_or(&name);
            let t = if name.starts_with("embed.") && name != "embed.bias" || name == "pos" {
                Tensor::normal(&[r, c], EMBED_INIT_STD, &mut rng)
            } else if leaf == "g" {
                Tensor::full(&[r, c], 1.0)
            } else if name.starts_with("res") && leaf == "w2" {
                Tensor::zeros(&[r, c])
            } else if r > 1 {
                Tensor::xavier(r, c, &mut rng)
            } else {
                Tensor::zeros(&[r, c])
            };
            params.insert(name, t);
        }
        Ok(ModelState { config, params })
    }

    /// Every parameter zero: all predictions are exactly 0.5.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = config
            .parameter_shapes()
            .into_iter()
            .map(|(name, [r, c])| (name, Tensor::zeros(&[r, c])))
            .collect();
        Ok(ModelState { config, params })
    }

    /// Assemble from named tensors, checking names and shapes against `config`.
    pub fn from_params(config: ModelConfig, mut params: BTreeMap<String, Tensor>) -> Result<Self> {
        config.validate()?;
        let expected = config.parameter_shapes();
        if params.len() != expected.len() {
            return Err(Error::Argument(format!(
                "expected {} parameters, got {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, [r, c]) in &expected {
            let t = params
                .get_mut(name)
                .ok_or_else(|| Error::Argument(format!("missing parameter {name}")))?;
            if t.shape() != [*r, *c] {
                return Err(Error::shape(
                    "from_params",
                    format!("{name}: expected {r}x{c}, got {:?}", t.shape()),
                ));
            }
            if !t.is_finite() {
                return Err(Error::Numeric(format!("parameter {name}")));
            }
        }
        Ok(ModelState { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_parameters(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params.values().all(Tensor::is_finite)
    }
}

//! Forward graph of the classifier:
//! sparse coordinate embedding -> residual feature tower -> positional
//! embedding -> pre-norm transformer encoder -> per-token sigmoid head.

use std::collections::BTreeMap;

use crate::encoding::{SequenceSample, SparseCode};
use crate::error::{Error, Result};
use crate::ndcompute::{Axis, Tape, Tensor, Var};

use super::state::{ModelConfig, ModelState};

/// Parameters of a [`ModelState`] registered as leaves on one tape.
pub struct Bound {
    config: ModelConfig,
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn new(tape: &mut Tape, state: &ModelState) -> Result<Self> {
        let mut vars = BTreeMap::new();
        for (name, t) in state.params() {
            vars.insert(name.to_string(), tape.leaf(t.clone())?);
        }
        Ok(Bound {
            config: *state.config(),
            vars,
        })
    }

    /// Like [`Bound::new`], but parameter `name` is the existing node `var`.
    pub fn with_override(
        tape: &mut Tape,
        state: &ModelState,
        name: &str,
        var: Var,
    ) -> Result<Self> {
        let mut vars = BTreeMap::new();
        for (n, t) in state.params() {
            let v = if n == name {
                if tape.value(var).shape() != t.shape() {
                    return Err(Error::shape(
                        "with_override",
                        format!("{name}: {:?} vs {:?}", tape.value(var).shape(), t.shape()),
                    ));
                }
                var
            } else {
                tape.leaf(t.clone())?
            };
            vars.insert(n.to_string(), v);
        }
        if !vars.contains_key(name) {
            return Err(Error::Argument(format!("unknown parameter {name}")));
        }
        Ok(Bound {
            config: *state.config(),
            vars,
        })
    }

    pub fn var(&self, name: &str) -> Var {
        self.vars[name]
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn linear(&self, tape: &mut Tape, x: Var, w: &str, b: &str) -> Result<Var> {
        let y = tape.matmul(x, self.var(w))?;
        tape.add_row(y, self.var(b))
    }

    fn norm(&self, tape: &mut Tape, x: Var, prefix: &str) -> Result<Var> {
        tape.layer_norm(
            x,
            self.var(&format!("{prefix}.g")),
            self.var(&format!("{prefix}.b")),
        )
    }

    /// `E_m[m] + E_n[n] + E_o[o] + bias` for each code, one row per code.
    pub fn embed(&self, tape: &mut Tape, codes: &[SparseCode]) -> Result<Var> {
        let shape = self.config.shape;
        for c in codes {
            if c.m >= shape.m || c.n >= shape.n || c.o >= shape.o {
                return Err(Error::Argument(format!(
                    "code ({}, {}, {}) outside volume {}x{}x{}",
                    c.m, c.n, c.o, shape.m, shape.n, shape.o
                )));
            }
        }
        let ms: Vec<usize> = codes.iter().map(|c| c.m).collect();
        let ns: Vec<usize> = codes.iter().map(|c| c.n).collect();
        let os: Vec<usize> = codes.iter().map(|c| c.o).collect();
        let em = tape.embedding(self.var("embed.m"), &ms)?;
        let en = tape.embedding(self.var("embed.n"), &ns)?;
        let eo = tape.embedding(self.var("embed.o"), &os)?;
        let x = tape.add(em, en)?;
        let x = tape.add(x, eo)?;
        tape.add_row(x, self.var("embed.bias"))
    }

    /// Pre-activation residual blocks `x + W2 act(norm(W1 norm(x)))`, row-wise.
    pub fn residual_tower(&self, tape: &mut Tape, mut x: Var) -> Result<Var> {
        for i in 0..self.config.n_res_blocks {
            let p = format!("res{i}");
            let h = self.norm(tape, x, &format!("{p}.ln1"))?;
            let h = self.linear(tape, h, &format!("{p}.w1"), &format!("{p}.b1"))?;
            let h = self.norm(tape, h, &format!("{p}.ln2"))?;
            let h = tape.gelu(h)?;
            let h = self.linear(tape, h, &format!("{p}.w2"), &format!("{p}.b2"))?;
            x = tape.add(x, h)?;
        }
        Ok(x)
    }

    /// Encoder layers over `n_windows` stacked windows of `seq_len` rows each.
    /// Attention never crosses window boundaries.
    pub fn transformer(
        &self,
        tape: &mut Tape,
        x: Var,
        n_windows: usize,
        mut attention: Option<&mut Vec<Var>>,
    ) -> Result<Var> {
        let len = self.config.shape.seq_len;
        let (rows, _) = tape.value(x).dims2()?;
        if rows != n_windows * len {
            return Err(Error::shape(
                "transformer",
                format!("{rows} tokens is not {n_windows} windows of length {len}"),
            ));
        }
        let positions: Vec<usize> = (0..n_windows).flat_map(|_| 0..len).collect();
        let pos = tape.embedding(self.var("pos"), &positions)?;
        let mut x = tape.add(x, pos)?;

        let heads = self.config.n_heads;
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f32).sqrt();
        for layer in 0..self.config.n_tx_layers {
            let p = format!("tx{layer}");
            let a = self.norm(tape, x, &format!("{p}.ln1"))?;
            let q = self.linear(tape, a, &format!("{p}.wq"), &format!("{p}.bq"))?;
            let k = self.linear(tape, a, &format!("{p}.wk"), &format!("{p}.bk"))?;
            let v = self.linear(tape, a, &format!("{p}.wv"), &format!("{p}.bv"))?;

            let mut windows = Vec::with_capacity(n_windows);
            for w in 0..n_windows {
                let qw = tape.slice(q, Axis::Rows, w * len, len)?;
                let kw = tape.slice(k, Axis::Rows, w * len, len)?;
                let vw = tape.slice(v, Axis::Rows, w * len, len)?;
                let mut per_head = Vec::with_capacity(heads);
                for h in 0..heads {
                    let qh = tape.slice(qw, Axis::Cols, h * dh, dh)?;
                    let kh = tape.slice(kw, Axis::Cols, h * dh, dh)?;
                    let vh = tape.slice(vw, Axis::Cols, h * dh, dh)?;
                    let scores = tape.matmul_nt(qh, kh)?;
                    let scores = tape.scale(scores, scale)?;
                    let weights = tape.softmax(scores, Axis::Cols)?;
                    if let Some(sink) = attention.as_deref_mut() {
                        sink.push(weights);
                    }
                    per_head.push(tape.matmul(weights, vh)?);
                }
                windows.push(if heads == 1 {
                    per_head[0]
                } else {
                    tape.concat(&per_head, Axis::Cols)?
                });
            }
            let merged = if n_windows == 1 {
                windows[0]
            } else {
                tape.concat(&windows, Axis::Rows)?
            };
            let attn = self.linear(tape, merged, &format!("{p}.wo"), &format!("{p}.bo"))?;
            x = tape.add(x, attn)?;

            let f = self.norm(tape, x, &format!("{p}.ln2"))?;
            let f = self.linear(tape, f, &format!("{p}.ff1"), &format!("{p}.ff1b"))?;
            let f = tape.gelu(f)?;
            let f = self.linear(tape, f, &format!("{p}.ff2"), &format!("{p}.ff2b"))?;
            x = tape.add(x, f)?;
        }
        Ok(x)
    }

    /// Final norm, scalar projection and sigmoid: one probability per row.
    pub fn head(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let x = self.norm(tape, x, "final_ln")?;
        let logits = self.linear(tape, x, "head.w", "head.b")?;
        tape.sigmoid(logits)
    }

    /// Full pipeline over a batch of windows; returns a `(B*L) x 1` probability column.
    pub fn forward(&self, tape: &mut Tape, samples: &[SequenceSample]) -> Result<Var> {
        let len = self.config.shape.seq_len;
        if samples.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        if let Some(bad) = samples.iter().find(|s| s.len() != len) {
            return Err(Error::shape(
                "forward",
                format!("window of length {} for sequence length {len}", bad.len()),
            ));
        }
        let codes: Vec<SparseCode> = samples.iter().flat_map(|s| s.codes.iter().copied()).collect();
        let x = self.embed(tape, &codes)?;
        let x = self.residual_tower(tape, x)?;
        let x = self.transformer(tape, x, samples.len(), None)?;
        self.head(tape, x)
    }
}

/// Dense `d_model` feature of a single code.
pub fn embed_sparse(code: &SparseCode, state: &ModelState) -> Result<Vec<f32>> {
    let mut tape = Tape::new();
    let b = Bound::new(&mut tape, state)?;
    let x = b.embed(&mut tape, std::slice::from_ref(code))?;
    Ok(tape.value(x).data().to_vec())
}

/// Residual feature tower applied to one `d_model` vector.
pub fn feature_extract(x: &[f32], state: &ModelState) -> Result<Vec<f32>> {
    let d = state.config().d_model;
    let mut tape = Tape::new();
    let b = Bound::new(&mut tape, state)?;
    let x = tape.leaf(Tensor::from_vec(&[1, d], x.to_vec())?)?;
    let y = b.residual_tower(&mut tape, x)?;
    Ok(tape.value(y).data().to_vec())
}

/// Transformer stage over one window of `L x d_model` tokens.
pub fn transform_sequence(tokens: &Tensor, state: &ModelState) -> Result<Tensor> {
    let mut tape = Tape::new();
    let b = Bound::new(&mut tape, state)?;
    let x = tape.leaf(tokens.clone())?;
    let y = b.transformer(&mut tape, x, 1, None)?;
    Ok(tape.value(y).clone())
}

/// Attention matrices (one per layer and head) for one window of tokens.
pub fn attention_maps(tokens: &Tensor, state: &ModelState) -> Result<Vec<Tensor>> {
    let mut tape = Tape::new();
    let b = Bound::new(&mut tape, state)?;
    let x = tape.leaf(tokens.clone())?;
    let mut maps = Vec::new();
    b.transformer(&mut tape, x, 1, Some(&mut maps))?;
    Ok(maps.into_iter().map(|v| tape.value(v).clone()).collect())
}

/// Prime probability for each position of the window.
pub fn predict_window(sample: &SequenceSample, state: &ModelState) -> Result<Vec<f32>> {
    Ok(predict_batch(std::slice::from_ref(sample), state)?.remove(0))
}

/// Prime probabilities for several windows at once.
pub fn predict_batch(samples: &[SequenceSample], state: &ModelState) -> Result<Vec<Vec<f32>>> {
    let mut tape = Tape::new();
    let b = Bound::new(&mut tape, state)?;
    let p = b.forward(&mut tape, samples)?;
    let len = state.config().shape.seq_len;
    Ok(tape
        .value(p)
        .data()
        .chunks(len)
        .map(<[f32]>::to_vec)
        .collect())
}

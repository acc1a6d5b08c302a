//! Checkpoint directories: `manifest.txt` (key = value lines) plus one raw
//! little-endian `f32` file per parameter under `params/`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::encoding::EncodingShape;
use crate::error::{Error, Result};
use crate::ndcompute::Tensor;

use super::state::{ModelConfig, ModelState};

const FORMAT: &str = "primeclass-checkpoint";
const VERSION: u32 = 1;

/// Run metadata stored next to the parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub iteration: u64,
    pub epoch: u64,
    pub loss: f64,
    pub config_hash: String,
}

fn param_file(name: &str) -> String {
    format!("{name}.f32")
}

/// Write `state` to `dir`, replacing any existing checkpoint there.
///
/// The files are staged in a sibling directory and swapped in afterwards, so a
/// failure part-way leaves the previous checkpoint untouched.
pub fn save_checkpoint(dir: &Path, state: &ModelState, meta: &CheckpointMeta) -> Result<()> {
    let staging = dir.with_extension("partial");
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(staging.join("params"))?;

    let cfg = state.config();
    let mut manifest = String::new();
    let mut line = |k: &str, v: String| {
        manifest.push_str(k);
        manifest.push_str(" = ");
        manifest.push_str(&v);
        manifest.push('\n');
    };
    line("format", FORMAT.into());
    line("version", VERSION.to_string());
    line("model.d_model", cfg.d_model.to_string());
    line("model.n_res_blocks", cfg.n_res_blocks.to_string());
    line("model.n_tx_layers", cfg.n_tx_layers.to_string());
    line("model.n_heads", cfg.n_heads.to_string());
    line("model.ff_mult", cfg.ff_mult.to_string());
    line("model.shape.m", cfg.shape.m.to_string());
    line("model.shape.n", cfg.shape.n.to_string());
    line("model.shape.o", cfg.shape.o.to_string());
    line("model.shape.seq_len", cfg.shape.seq_len.to_string());
    line("seed", meta.seed.to_string());
    line("epoch", meta.epoch.to_string());
    line("iteration", meta.iteration.to_string());
    line("loss", format!("{:?}", meta.loss));
    line("config_hash", meta.config_hash.clone());
    for (name, t) in state.params() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        line(&format!("param.{name}"), dims.join("x"));
        let mut bytes = Vec::with_capacity(t.len() * 4);
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(staging.join("params").join(param_file(name)), bytes)?;
    }
    fs::write(staging.join("manifest.txt"), manifest)?;

    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::rename(&staging, dir)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(ModelState, CheckpointMeta)> {
    let manifest_path = dir.join("manifest.txt");
    let text = fs::read_to_string(&manifest_path)?;
    let mut kv = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let (k, v) = raw.split_once(" = ").ok_or_else(|| {
            Error::format(&manifest_path, format!("line {}: expected `key = value`", i + 1))
        })?;
        kv.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| -> Result<&str> {
        kv.get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::format(&manifest_path, format!("missing key {k}")))
    };
    let num = |k: &str| -> Result<u64> {
        get(k)?
            .parse()
            .map_err(|_| Error::format(&manifest_path, format!("{k} is not an integer")))
    };
    if get("format")? != FORMAT || num("version")? != VERSION as u64 {
        return Err(Error::format(&manifest_path, "unsupported checkpoint format"));
    }

    let shape = EncodingShape {
        m: num("model.shape.m")? as usize,
        n: num("model.shape.n")? as usize,
        o: num("model.shape.o")? as usize,
        seq_len: num("model.shape.seq_len")? as usize,
    };
    let config = ModelConfig {
        d_model: num("model.d_model")? as usize,
        n_res_blocks: num("model.n_res_blocks")? as usize,
        n_tx_layers: num("model.n_tx_layers")? as usize,
        n_heads: num("model.n_heads")? as usize,
        ff_mult: num("model.ff_mult")? as usize,
        shape,
    };
    let meta = CheckpointMeta {
        seed: num("seed")?,
        epoch: num("epoch")?,
        iteration: num("iteration")?,
        loss: get("loss")?
            .parse()
            .map_err(|_| Error::format(&manifest_path, "loss is not a number"))?,
        config_hash: get("config_hash")?.to_string(),
    };

    let mut params = BTreeMap::new();
    for (key, dims) in kv.iter().filter(|(k, _)| k.starts_with("param.")) {
        let name = &key["param.".len()..];
        let shape: Vec<usize> = dims
            .split('x')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(&manifest_path, format!("bad shape for {name}")))?;
        let path = dir.join("params").join(param_file(name));
        let bytes = fs::read(&path)?;
        if bytes.len() % 4 != 0 {
            return Err(Error::format(&path, "length is not a multiple of 4"));
        }
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let t = Tensor::from_vec(&shape, data)
            .map_err(|e| Error::format(&path, e.to_string()))?;
        params.insert(name.to_string(), t);
    }
    Ok((ModelState::from_params(config, params)?, meta))
}

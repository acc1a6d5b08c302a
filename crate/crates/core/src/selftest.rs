//! Built-in correctness checks, runnable from a release binary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::roc_auc;
use crate::encoding::{decode_index, encode_index, encode_window, sparse_code, EncodingShape};
use crate::error::Result;
use crate::model::{embed_sparse, model_gradcheck, LossWeights, ModelConfig, ModelState};
use crate::ndcompute::{gradcheck, Axis, OpKind, Tape, Tensor, Var};
use crate::numtheory::sieve_range;

pub const PRIMITIVE_TOLERANCE: f64 = 1e-3;
pub const MODEL_TOLERANCE: f64 = 1e-2;
pub const DENSE_TOLERANCE: f32 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `decode(encode(s)) = s` for every `s` below the capacity of a `side`-cube.
pub fn encoding_bijection(side: usize) -> Result<CheckResult> {
    let shape = EncodingShape::cube(side, 1)?;
    let mut bad = 0u64;
    for s in 0..shape.capacity() {
        let (m, n, o) = encode_index(s, &shape)?;
        if decode_index(m, n, o, &shape)? != s {
            bad += 1;
        }
    }
    Ok(CheckResult {
        name: "encoding bijection",
        passed: bad == 0,
        detail: format!("{} indices, {bad} mismatches", shape.capacity()),
    })
}

fn project(tape: &mut Tape, v: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(v).shape().to_vec();
    let w = tape.leaf(Tensor::uniform(&shape, 1.0, &mut rng(seed)))?;
    let prod = tape.mul(v, w)?;
    let m = tape.mean(prod)?;
    tape.scale(m, shape.iter().product::<usize>() as f32)
}

type Primitive = (&'static str, f64, fn(&mut Tape, Var) -> Result<Var>, [usize; 2]);

fn primitives() -> Vec<Primitive> {
    fn leaf(tp: &mut Tape, r: usize, c: usize, seed: u64) -> Result<Var> {
        tp.leaf(Tensor::uniform(&[r, c], 1.0, &mut rng(seed)))
    }
    vec![
        ("matmul", 1e-2, |tp, x| {
            let w = leaf(tp, 4, 3, 1)?;
            let y = tp.matmul(x, w)?;
            project(tp, y, 2)
        }, [5, 4]),
        ("matmul_nt", 1e-2, |tp, x| {
            let w = leaf(tp, 6, 4, 3)?;
            let y = tp.matmul_nt(x, w)?;
            project(tp, y, 4)
        }, [3, 4]),
        ("add_row", 3e-3, |tp, x| {
            let base = leaf(tp, 4, 5, 5)?;
            let y = tp.add_row(base, x)?;
            let z = tp.mul(y, y)?;
            project(tp, z, 6)
        }, [1, 5]),
        ("gelu", 3e-3, |tp, x| {
            let y = tp.gelu(x)?;
            project(tp, y, 7)
        }, [4, 4]),
        ("sigmoid", 3e-3, |tp, x| {
            let y = tp.sigmoid(x)?;
            project(tp, y, 8)
        }, [4, 4]),
        ("layer_norm", 3e-3, |tp, x| {
            let g = leaf(tp, 1, 6, 9)?;
            let b = leaf(tp, 1, 6, 10)?;
            let y = tp.layer_norm(x, g, b)?;
            project(tp, y, 11)
        }, [3, 6]),
        ("softmax", 3e-3, |tp, x| {
            let y = tp.softmax(x, Axis::Cols)?;
            project(tp, y, 12)
        }, [3, 5]),
        ("embedding", 1e-2, |tp, table| {
            let y = tp.embedding(table, &[2, 0, 2, 3])?;
            project(tp, y, 13)
        }, [5, 3]),
        ("concat_slice", 1e-2, |tp, x| {
            let other = leaf(tp, 2, 3, 14)?;
            let rows = tp.concat(&[x, other, x], Axis::Rows)?;
            let a = tp.slice(rows, Axis::Rows, 1, 3)?;
            project(tp, a, 15)
        }, [2, 3]),
        ("wce", 3e-3, |tp, x| {
            let p = tp.sigmoid(x)?;
            tp.wce(p, &[true, false, true, false, false, true], 1.0, 3.0, 1e-7)
        }, [2, 3]),
    ]
}

/// Finite-difference check of each primitive's backward rule in isolation.
pub fn primitive_gradcheck(fault: Option<OpKind>) -> Result<CheckResult> {
    let mut worst = (0.0f64, "");
    for (i, (name, eps, f, [r, c])) in primitives().into_iter().enumerate() {
        let theta = Tensor::uniform(&[r, c], 1.0, &mut rng(100 + i as u64));
        let report = gradcheck(
            |tp, x| {
                if let Some(kind) = fault {
                    tp.negate_backward(kind);
                }
                f(tp, x)
            },
            &theta,
            eps,
            64,
            11,
        )?;
        if report.max_rel_error >= worst.0 {
            worst = (report.max_rel_error, name);
        }
    }
    Ok(CheckResult {
        name: "primitive gradcheck",
        passed: worst.0 < PRIMITIVE_TOLERANCE,
        detail: format!("worst relative error {:.3e} ({})", worst.0, worst.1),
    })
}

fn random_state(config: ModelConfig, seed: u64, std: f32) -> Result<ModelState> {
    let mut r = rng(seed);
    let mut s = ModelState::init(config, seed)?;
    for (_, t) in s.params_mut() {
        let shape = t.shape().to_vec();
        *t = Tensor::normal(&shape, std, &mut r);
    }
    Ok(s)
}

fn small_model(side: usize, seq_len: usize) -> Result<ModelConfig> {
    Ok(ModelConfig {
        d_model: 8,
        n_res_blocks: 2,
        n_tx_layers: 1,
        n_heads: 2,
        ff_mult: 2,
        shape: EncodingShape::cube(side, seq_len)?,
    })
}

/// Full-model gradient check at d_model 8, L 4, on one batch of two windows.
pub fn model_gradient(fault: Option<OpKind>) -> Result<CheckResult> {
    let cfg = small_model(5, 4)?;
    let state = random_state(cfg, 12, 0.3)?;
    let bm = sieve_range(0, cfg.shape.capacity())?;
    let windows = [3u64, 60]
        .iter()
        .map(|&s| encode_window(s, &cfg.shape, 0, &bm))
        .collect::<Result<Vec<_>>>()?;
    let weights = LossWeights::new(1.0, 3.0)?;
    let reports = model_gradcheck(&state, &windows, &weights, 1e-3, 6, 5, fault)?;
    let (name, worst) = reports
        .iter()
        .map(|(n, r)| (n.as_str(), r.max_rel_error))
        .fold(("", 0.0f64), |a, b| if b.1 >= a.1 { b } else { a });
    Ok(CheckResult {
        name: "model gradcheck",
        passed: worst < MODEL_TOLERANCE,
        detail: format!("worst relative error {worst:.3e} ({name})"),
    })
}

/// Sparse embedding against a materialised one-hot product, on random states.
pub fn sparse_dense(states: usize, side: usize) -> Result<CheckResult> {
    let cfg = small_model(side, 2)?;
    let tables = ["embed.m", "embed.n", "embed.o"];
    let mut r = rng(77);
    let mut worst = 0.0f32;
    for k in 0..states {
        let state = random_state(cfg, 1000 + k as u64, 1.0)?;
        let idx = r.gen_range(0..cfg.shape.capacity());
        let code = sparse_code(idx, &cfg.shape)?;
        let mut input = vec![0.0f32; 3 * side];
        input[code.m] = 1.0;
        input[side + code.n] = 1.0;
        input[2 * side + code.o] = 1.0;
        let mut dense = state.get("embed.bias").data().to_vec();
        for (i, &x) in input.iter().enumerate() {
            let table = state.get(tables[i / side]);
            for (j, d) in dense.iter_mut().enumerate() {
                *d += x * table.at(i % side, j);
            }
        }
        let sparse = embed_sparse(&code, &state)?;
        for (a, b) in dense.iter().zip(&sparse) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(CheckResult {
        name: "sparse/dense equivalence",
        passed: worst < DENSE_TOLERANCE,
        detail: format!("{states} states, max abs diff {worst:.3e}"),
    })
}

/// Quadratic pair-count AUC; ties count one half.
pub fn pair_count_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0u64;
    for (sp, _) in scores.iter().zip(labels).filter(|(_, &l)| l) {
        for (sn, _) in scores.iter().zip(labels).filter(|(_, &l)| !l) {
            pairs += 1;
            if sp > sn {
                wins += 1.0;
            } else if sp == sn {
                wins += 0.5;
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

/// Rank AUC against the pair-count oracle on random tied cases.
pub fn auc_oracle(cases: usize) -> Result<CheckResult> {
    let mut r = rng(5);
    let mut worst = 0.0f64;
    let mut bad = 0;
    for _ in 0..cases {
        let n = r.gen_range(2..=500);
        let levels = r.gen_range(2..=20);
        let scores: Vec<f64> = (0..n).map(|_| r.gen_range(0..levels) as f64 / levels as f64).collect();
        let labels: Vec<bool> = (0..n).map(|_| r.gen_bool(0.3)).collect();
        match (roc_auc(&scores, &labels)?, pair_count_auc(&scores, &labels)) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (None, None) => {}
            _ => bad += 1,
        }
    }
    Ok(CheckResult {
        name: "AUC oracle",
        passed: bad == 0 && worst < 1e-12,
        detail: format!("{cases} cases, max diff {worst:.1e}, {bad} definedness mismatches"),
    })
}

/// Run every check. `fault` negates one primitive's backward rule before gradchecks.
pub fn run(fault: Option<OpKind>) -> Result<SelftestReport> {
    Ok(SelftestReport {
        checks: vec![
            encoding_bijection(100)?,
            primitive_gradcheck(fault)?,
            model_gradient(fault)?,
            sparse_dense(100, 16)?,
            auc_oracle(100)?,
        ],
    })
}

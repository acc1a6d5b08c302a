use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::encoding::{encode_window, sparse_code, EncodingShape, SparseCode};
use crate::numtheory::sieve_range;

fn tiny_config(d: usize, heads: usize, side: usize, len: usize) -> ModelConfig {
    ModelConfig {
        d_model: d,
        n_res_blocks: 2,
        n_tx_layers: 1,
        n_heads: heads,
        ff_mult: 2,
        shape: EncodingShape::cube(side, len).unwrap(),
    }
}

/// Every parameter drawn at random, so no block is trivially the identity.
fn random_state(config: ModelConfig, seed: u64, std: f32) -> ModelState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ModelState::init(config, seed).unwrap();
    for (_, t) in s.params_mut() {
        let shape = t.shape().to_vec();
        *t = Tensor::normal(&shape, std, &mut rng);
    }
    s
}

fn windows(shape: &EncodingShape, starts: &[u64]) -> Vec<SequenceSample> {
    let bm = sieve_range(0, shape.capacity()).unwrap();
    starts
        .iter()
        .map(|&s| encode_window(s, shape, 0, &bm).unwrap())
        .collect()
}

#[test]
fn zero_tables_embed_to_zero() {
    let cfg = tiny_config(8, 2, 5, 3);
    let s = ModelState::zeros(cfg).unwrap();
    let v = embed_sparse(&sparse_code(17, &cfg.shape).unwrap(), &s).unwrap();
    assert_eq!(v, vec![0.0; 8]);
}

#[test]
fn sparse_front_end_matches_dense_one_hot() {
    for side in [3usize, 7, 16] {
        let cfg = tiny_config(8, 2, side, 2);
        let s = random_state(cfg, side as u64, 1.0);
        // dense weights: columns are embedding rows, over [onehot_m | onehot_n | onehot_o]
        let tables = ["embed.m", "embed.n", "embed.o"];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let idx = rng.gen_range(0..cfg.shape.capacity());
            let code = sparse_code(idx, &cfg.shape).unwrap();
            let mut input = vec![0.0f32; 3 * side];
            input[code.m] = 1.0;
            input[side + code.n] = 1.0;
            input[2 * side + code.o] = 1.0;
            let mut dense = s.get("embed.bias").data().to_vec();
            for (k, &x) in input.iter().enumerate() {
                let table = s.get(tables[k / side]);
                for (j, v) in dense.iter_mut().enumerate() {
                    *v += x * table.at(k % side, j);
                }
            }
            let sparse = embed_sparse(&code, &s).unwrap();
            let diff = dense
                .iter()
                .zip(&sparse)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            assert!(diff < 1e-6, "side {side}: {diff}");
        }
    }
}

#[test]
fn codes_differing_in_o_differ_by_table_rows() {
    let cfg = tiny_config(8, 2, 6, 2);
    let s = random_state(cfg, 3, 1.0);
    let a = SparseCode { s: 0, m: 2, n: 4, o: 1 };
    let b = SparseCode { o: 5, ..a };
    let (ea, eb) = (embed_sparse(&a, &s).unwrap(), embed_sparse(&b, &s).unwrap());
    let eo = s.get("embed.o");
    for j in 0..8 {
        let want = eo.at(1, j) - eo.at(5, j);
        assert!((ea[j] - eb[j] - want).abs() < 1e-6);
    }
}

#[test]
fn out_of_volume_code_rejected() {
    let cfg = tiny_config(8, 2, 4, 2);
    let s = ModelState::init(cfg, 0).unwrap();
    let bad = SparseCode { s: 0, m: 4, n: 0, o: 0 };
    assert!(embed_sparse(&bad, &s).is_err());
}

#[test]
fn fresh_tower_is_identity() {
    let cfg = tiny_config(8, 2, 4, 2);
    let s = ModelState::init(cfg, 11).unwrap();
    let x: Vec<f32> = (0..8).map(|i| i as f32 * 0.37 - 1.1).collect();
    assert_eq!(feature_extract(&x, &s).unwrap(), x);
    let r = random_state(cfg, 11, 0.5);
    let y = feature_extract(&x, &r).unwrap();
    assert_eq!(y.len(), 8);
    assert_ne!(y, x);
}

#[test]
fn single_position_window_runs() {
    let cfg = tiny_config(8, 2, 6, 1);
    let s = random_state(cfg, 4, 0.5);
    let w = windows(&cfg.shape, &[7]);
    let p = predict_window(&w[0], &s).unwrap();
    assert_eq!(p.len(), 1);
    assert!(p[0] > 0.0 && p[0] < 1.0);
    let maps = attention_maps(&Tensor::full(&[1, 8], 0.3), &s).unwrap();
    assert!(maps.iter().all(|m| m.data() == [1.0]));
}

#[test]
fn attention_rows_sum_to_one() {
    let cfg = ModelConfig {
        n_tx_layers: 2,
        ..tiny_config(8, 4, 6, 5)
    };
    let s = random_state(cfg, 5, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let tokens = Tensor::normal(&[5, 8], 1.0, &mut rng);
    let maps = attention_maps(&tokens, &s).unwrap();
    assert_eq!(maps.len(), 2 * 4);
    for m in &maps {
        for r in 0..5 {
            let sum: f32 = m.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-5);
        }
    }
}

#[test]
fn positional_embedding_breaks_permutation_symmetry() {
    let cfg = tiny_config(8, 2, 6, 3);
    let s = random_state(cfg, 8, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tokens = Tensor::normal(&[3, 8], 1.0, &mut rng);
    let mut swapped = tokens.clone();
    let (r0, r1) = (tokens.row(0).to_vec(), tokens.row(1).to_vec());
    swapped.data_mut()[..8].copy_from_slice(&r1);
    swapped.data_mut()[8..16].copy_from_slice(&r0);
    let a = transform_sequence(&tokens, &s).unwrap();
    let b = transform_sequence(&swapped, &s).unwrap();
    let diff = a.row(0).iter().zip(b.row(1)).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max);
    assert!(diff > 1e-4);

    // without positions, self-attention is permutation-equivariant
    let mut flat = s.clone();
    *flat.get_mut("pos") = Tensor::zeros(&[3, 8]);
    let a = transform_sequence(&tokens, &flat).unwrap();
    let b = transform_sequence(&swapped, &flat).unwrap();
    let diff = a.row(0).iter().zip(b.row(1)).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max);
    assert!(diff < 1e-5);
}

#[test]
fn wrong_window_length_rejected() {
    let cfg = tiny_config(8, 2, 6, 3);
    let s = ModelState::init(cfg, 0).unwrap();
    assert!(transform_sequence(&Tensor::zeros(&[4, 8]), &s).is_err());
    let mut w = windows(&cfg.shape, &[0]);
    w[0].codes.pop();
    assert!(predict_window(&w[0], &s).is_err());
}

#[test]
fn zero_state_predicts_one_half() {
    let cfg = tiny_config(8, 2, 6, 4);
    let s = ModelState::zeros(cfg).unwrap();
    let p = predict_batch(&windows(&cfg.shape, &[0, 4, 8]), &s).unwrap();
    assert!(p.iter().flatten().all(|&v| v == 0.5));
}

#[test]
fn batch_prediction_matches_per_window() {
    let cfg = tiny_config(8, 2, 6, 4);
    let s = random_state(cfg, 21, 0.5);
    let w = windows(&cfg.shape, &[0, 4, 100]);
    let batch = predict_batch(&w, &s).unwrap();
    for (i, sample) in w.iter().enumerate() {
        let single = predict_window(sample, &s).unwrap();
        for (a, b) in single.iter().zip(&batch[i]) {
            assert!((a - b).abs() < 1e-6);
        }
    }
    assert_eq!(batch, predict_batch(&w, &s).unwrap());
}

// Independent f64 re-implementation of one forward pass over a single window.
mod reference {
    use super::*;

    type Mat = Vec<Vec<f64>>;

    fn param(s: &ModelState, name: &str) -> Mat {
        let t = s.get(name);
        let (r, c) = t.dims2().unwrap();
        (0..r)
            .map(|i| (0..c).map(|j| t.at(i, j) as f64).collect())
            .collect()
    }

    fn matmul(a: &Mat, b: &Mat) -> Mat {
        let k = b.len();
        let c = b[0].len();
        a.iter()
            .map(|row| {
                (0..c)
                    .map(|j| (0..k).map(|t| row[t] * b[t][j]).sum())
                    .collect()
            })
            .collect()
    }

    fn add_bias(mut a: Mat, b: &Mat) -> Mat {
        for row in &mut a {
            for (x, y) in row.iter_mut().zip(&b[0]) {
                *x += y;
            }
        }
        a
    }

    fn add(a: &Mat, b: &Mat) -> Mat {
        a.iter()
            .zip(b)
            .map(|(r, q)| r.iter().zip(q).map(|(x, y)| x + y).collect())
            .collect()
    }

    fn layer_norm(a: &Mat, s: &ModelState, prefix: &str) -> Mat {
        let g = param(s, &format!("{prefix}.g"));
        let b = param(s, &format!("{prefix}.b"));
        a.iter()
            .map(|row| {
                let n = row.len() as f64;
                let mean = row.iter().sum::<f64>() / n;
                let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                let inv = 1.0 / (var + 1e-5).sqrt();
                row.iter()
                    .enumerate()
                    .map(|(j, x)| g[0][j] * (x - mean) * inv + b[0][j])
                    .collect()
            })
            .collect()
    }

    fn gelu(a: Mat) -> Mat {
        let c = (2.0 / std::f64::consts::PI).sqrt();
        a.into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|x| 0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh()))
                    .collect()
            })
            .collect()
    }

    fn linear(a: &Mat, s: &ModelState, w: &str, b: &str) -> Mat {
        add_bias(matmul(a, &param(s, w)), &param(s, b))
    }

    pub fn forward(s: &ModelState, sample: &SequenceSample) -> Vec<f64> {
        let cfg = s.config();
        let (em, en, eo) = (param(s, "embed.m"), param(s, "embed.n"), param(s, "embed.o"));
        let bias = param(s, "embed.bias");
        let mut x: Mat = sample
            .codes
            .iter()
            .map(|c| {
                (0..cfg.d_model)
                    .map(|j| em[c.m][j] + en[c.n][j] + eo[c.o][j] + bias[0][j])
                    .collect()
            })
            .collect();
        for i in 0..cfg.n_res_blocks {
            let p = format!("res{i}");
            let h = layer_norm(&x, s, &format!("{p}.ln1"));
            let h = linear(&h, s, &format!("{p}.w1"), &format!("{p}.b1"));
            let h = gelu(layer_norm(&h, s, &format!("{p}.ln2")));
            let h = linear(&h, s, &format!("{p}.w2"), &format!("{p}.b2"));
            x = add(&x, &h);
        }
        let pos = param(s, "pos");
        x = add(&x, &pos);
        let len = x.len();
        let dh = cfg.head_dim();
        for l in 0..cfg.n_tx_layers {
            let p = format!("tx{l}");
            let a = layer_norm(&x, s, &format!("{p}.ln1"));
            let q = linear(&a, s, &format!("{p}.wq"), &format!("{p}.bq"));
            let k = linear(&a, s, &format!("{p}.wk"), &format!("{p}.bk"));
            let v = linear(&a, s, &format!("{p}.wv"), &format!("{p}.bv"));
            let mut merged = vec![vec![0.0; cfg.d_model]; len];
            for h in 0..cfg.n_heads {
                let cols = h * dh..(h + 1) * dh;
                for i in 0..len {
                    let scores: Vec<f64> = (0..len)
                        .map(|j| {
                            cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>()
                                / (dh as f64).sqrt()
                        })
                        .collect();
                    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = scores.iter().map(|z| (z - max).exp()).collect();
                    let total: f64 = e.iter().sum();
                    for c in cols.clone() {
                        merged[i][c] = (0..len).map(|j| e[j] / total * v[j][c]).sum();
                    }
                }
            }
            let o = linear(&merged, s, &format!("{p}.wo"), &format!("{p}.bo"));
            x = add(&x, &o);
            let f = layer_norm(&x, s, &format!("{p}.ln2"));
            let f = gelu(linear(&f, s, &format!("{p}.ff1"), &format!("{p}.ff1b")));
            let f = linear(&f, s, &format!("{p}.ff2"), &format!("{p}.ff2b"));
            x = add(&x, &f);
        }
        let x = layer_norm(&x, s, "final_ln");
        linear(&x, s, "head.w", "head.b")
            .into_iter()
            .map(|r| 1.0 / (1.0 + (-r[0]).exp()))
            .collect()
    }
}

#[test]
fn forward_matches_scalar_reference() {
    let cfg = ModelConfig {
        n_tx_layers: 2,
        ..tiny_config(8, 2, 5, 4)
    };
    for seed in 0..5 {
        let s = random_state(cfg, seed, 0.4);
        for w in windows(&cfg.shape, &[0, 37, 120]) {
            let got = predict_window(&w, &s).unwrap();
            let want = reference::forward(&s, &w);
            for (g, r) in got.iter().zip(&want) {
                assert!((*g as f64 - r).abs() < 1e-5, "{g} vs {r}");
            }
        }
    }
}

#[test]
fn wce_hand_values() {
    let w = LossWeights::new(1.0, 20.0).unwrap();
    let l = wce_loss(&[0.5], &[true], &w).unwrap();
    assert!((l - 20.0 * std::f64::consts::LN_2).abs() < 1e-6);
    assert!((l - 13.862_943_611_198_906).abs() < 1e-6);

    let near = wce_loss(&[1.0, 0.0], &[true, false], &w).unwrap();
    assert!(near <= 20.0 * (1.0f64 / (1.0 - 1e-7)).ln() + 1e-12);

    assert!(wce_loss(&[0.5], &[true, false], &w).is_err());
    assert!(wce_loss(&[], &[], &w).is_err());
    assert!(LossWeights::new(0.0, 1.0).is_err());
}

#[test]
fn wce_unit_weights_is_bce() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let p: Vec<f32> = (0..200).map(|_| rng.gen_range(0.01f32..0.99)).collect();
    let y: Vec<bool> = (0..200).map(|_| rng.gen_bool(0.3)).collect();
    let bce = p
        .iter()
        .zip(&y)
        .map(|(&p, &y)| {
            let p = p as f64;
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / 200.0;
    let got = wce_loss(&p, &y, &LossWeights::new(1.0, 1.0).unwrap()).unwrap();
    assert!((got - bce).abs() < 1e-12);
}

#[test]
fn wce_monotonicity() {
    let y = [true, false, true];
    let w = LossWeights::new(1.0, 5.0).unwrap();
    let mut last = f64::INFINITY;
    for k in 1..10 {
        let p = [k as f32 / 10.0, 0.3, 0.6];
        let l = wce_loss(&p, &y, &w).unwrap();
        assert!(l < last);
        last = l;
    }

    // heavier prime weight pulls harder on prime terms
    let slope = |w1: f64| {
        let w = LossWeights::new(1.0, w1).unwrap();
        let h = 1e-3f32;
        let a = wce_loss(&[0.4 + h, 0.3, 0.6], &y, &w).unwrap();
        let b = wce_loss(&[0.4 - h, 0.3, 0.6], &y, &w).unwrap();
        ((a - b) / (2.0 * h as f64)).abs()
    };
    assert!(slope(20.0) > slope(5.0));
    assert!(slope(5.0) > slope(1.0));
}

#[test]
fn loss_gradients_cover_every_parameter() {
    let cfg = tiny_config(8, 2, 6, 4);
    let s = ModelState::init(cfg, 1).unwrap();
    let w = windows(&cfg.shape, &[0, 20]);
    let (loss, grads) = loss_and_gradients(&s, &w, &LossWeights::new(1.0, 20.0).unwrap()).unwrap();
    assert!(loss.is_finite() && loss > 0.0);
    assert_eq!(grads.len(), cfg.parameter_shapes().len());
    for (name, t) in s.params() {
        assert_eq!(grads[name].shape(), t.shape(), "{name}");
    }
    // a fresh model updates at least its head and the zero-initialised projections
    assert!(grads["head.b"].data()[0] != 0.0);
    assert!(grads["res0.w2"].data().iter().any(|&g| g != 0.0));
}

#[test]
fn full_model_gradcheck() {
    let cfg = tiny_config(8, 2, 5, 4);
    let s = random_state(cfg, 12, 0.3);
    let w = windows(&cfg.shape, &[3, 60]);
    let weights = LossWeights::new(1.0, 3.0).unwrap();
    let reports = model_gradcheck(&s, &w, &weights, 1e-3, 6, 5, None).unwrap();
    let worst = reports
        .iter()
        .max_by(|a, b| a.1.max_rel_error.total_cmp(&b.1.max_rel_error))
        .unwrap();
    assert!(worst.1.max_rel_error < 1e-2, "{}: {:?}", worst.0, worst.1);
}

#[test]
fn gradcheck_catches_flipped_backward_rule() {
    let cfg = tiny_config(8, 2, 5, 4);
    let s = random_state(cfg, 12, 0.3);
    let w = windows(&cfg.shape, &[3, 60]);
    let weights = LossWeights::new(1.0, 3.0).unwrap();
    let reports =
        model_gradcheck(&s, &w, &weights, 1e-3, 6, 5, Some(crate::ndcompute::OpKind::Softmax))
            .unwrap();
    let worst = reports.values().map(|r| r.max_rel_error).fold(0.0, f64::max);
    assert!(worst > 0.1, "{worst}");
}

#[test]
fn init_is_seeded() {
    let cfg = tiny_config(8, 2, 5, 4);
    let a = ModelState::init(cfg, 3).unwrap();
    assert_eq!(a, ModelState::init(cfg, 3).unwrap());
    assert_ne!(a, ModelState::init(cfg, 4).unwrap());
    assert!(a.is_finite());
    let expected: usize = cfg.parameter_shapes().iter().map(|(_, [r, c])| r * c).sum();
    assert_eq!(a.num_parameters(), expected);
}

#[test]
fn invalid_config_rejected() {
    let mut cfg = tiny_config(8, 3, 5, 4);
    assert!(ModelState::init(cfg, 0).is_err());
    cfg.n_heads = 2;
    cfg.n_res_blocks = 0;
    assert!(ModelState::init(cfg, 0).is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(8, 2, 5, 4);
    let s = random_state(cfg, 31, 1.0);
    let meta = CheckpointMeta {
        seed: 31,
        epoch: 2,
        iteration: 105,
        loss: 0.1 + 0.2,
        config_hash: "abc123".into(),
    };
    let path = dir.path().join("ckpt");
    save_checkpoint(&path, &s, &meta).unwrap();
    let (back, m) = load_checkpoint(&path).unwrap();
    assert_eq!(m, meta);
    for ((na, ta), (nb, tb)) in s.params().zip(back.params()) {
        assert_eq!(na, nb);
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(ta), bits(tb));
    }
    assert_eq!(back.config(), s.config());

    // overwriting keeps a loadable checkpoint
    save_checkpoint(&path, &ModelState::zeros(cfg).unwrap(), &meta).unwrap();
    let (z, _) = load_checkpoint(&path).unwrap();
    assert!(z.params().all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
}

#[test]
fn corrupt_checkpoint_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(8, 2, 5, 4);
    let path = dir.path().join("ckpt");
    save_checkpoint(&path, &ModelState::init(cfg, 0).unwrap(), &CheckpointMeta::default()).unwrap();
    std::fs::write(path.join("params").join("head.b.f32"), [0u8; 3]).unwrap();
    assert!(load_checkpoint(&path).is_err());
    std::fs::write(path.join("manifest.txt"), "nonsense\n").unwrap();
    assert!(load_checkpoint(&path).is_err());
}

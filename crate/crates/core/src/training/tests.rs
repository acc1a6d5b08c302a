use super::*;
use crate::dataset::RangeSpec;
use crate::encoding::EncodingShape;
use crate::numtheory::is_prime;

fn small_config() -> TrainConfig {
    let shape = EncodingShape::cube(20, 5).unwrap();
    let model = ModelConfig {
        d_model: 8,
        n_res_blocks: 1,
        n_tx_layers: 1,
        n_heads: 2,
        ff_mult: 2,
        shape,
    };
    TrainConfig {
        split: SplitConfig {
            train: RangeSpec::new(0, 0, 2000).unwrap(),
            test: RangeSpec::new(0, 2000, 2600).unwrap(),
            shape,
            sample_fraction: 0.1,
            random_tiling: false,
        },
        model,
        weights: LossWeights::new(1.0, 5.0).unwrap(),
        lr0: 0.01,
        decay_factor: 0.5,
        patience: 1,
        batch_size: 8,
        epochs: 3,
        eval_every: 2,
        eval_subsample: 0.5,
        threshold: 0.5,
        master_seed: 17,
    }
}

#[test]
fn steps_per_epoch_arithmetic() {
    let mut split = small_config().split;
    assert_eq!(steps_per_epoch(&split, 8).unwrap(), 5); // 400 windows, 40 drawn
    split.shape = EncodingShape::cube(150, 15).unwrap();
    split.train = RangeSpec::new(0, 0, 1_000_000).unwrap();
    split.test = RangeSpec::new(0, 1_000_000, 3_000_000).unwrap();
    split.sample_fraction = 0.05;
    assert_eq!(steps_per_epoch(&split, 32).unwrap(), 105);
}

#[test]
fn run_is_logged_and_deterministic() {
    let cfg = small_config();
    let a = train_run(&cfg, &RunOptions::default()).unwrap();
    let b = train_run(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(a.iterations, 15);
    assert_eq!(a.log.records.len(), 7);
    assert_eq!(a.full_evals.len(), 3);
    assert_eq!(a.log, b.log);
    assert_eq!(a.state, b.state);
    assert!(a.log.records.windows(2).all(|w| w[0].iteration < w[1].iteration));
    let fin = &a.final_eval().record;
    assert_eq!(fin.metrics.total(), 600);
    assert!(fin.full);

    let other = train_run(&TrainConfig { master_seed: 18, ..cfg }, &RunOptions::default()).unwrap();
    assert_ne!(other.log, a.log);
}

#[test]
fn lr_decays_by_factor_per_trigger() {
    let cfg = TrainConfig {
        eval_every: 1,
        ..small_config()
    };
    let out = train_run(&cfg, &RunOptions::default()).unwrap();
    let lrs: Vec<f64> = out.log.records.iter().map(|r| r.lr).collect();
    // every value is lr0 * 0.5^k with k non-decreasing
    let ks: Vec<i32> = lrs.iter().map(|lr| (cfg.lr0 / lr).log2().round() as i32).collect();
    for (lr, k) in lrs.iter().zip(&ks) {
        assert!((lr - cfg.lr0 * 0.5f64.powi(*k)).abs() < 1e-15);
    }
    assert!(ks.windows(2).all(|w| w[1] >= w[0] && w[1] - w[0] <= 1));
    assert_eq!(0.01 * 0.5 * 0.5, 0.0025);
}

#[test]
fn run_directory_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let opts = RunOptions {
        out_dir: Some(dir.path().join("run")),
        config_hash: Some("cafe".into()),
        label_cache: None,
    };
    let out = train_run(&cfg, &opts).unwrap();
    let run = dir.path().join("run");
    let log = std::fs::read_to_string(run.join("runlog.csv")).unwrap();
    assert_eq!(log, out.log.to_csv(Some("cafe")));
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("# config_hash: cafe"));
    assert_eq!(lines.next(), Some(RUNLOG_HEADER));
    assert_eq!(lines.count(), out.log.records.len());

    let full = std::fs::read_to_string(run.join("full_evals.csv")).unwrap();
    assert_eq!(full.lines().count(), 2 + 3);
    for e in 1..=3 {
        assert!(run.join(format!("checkpoints/epoch-{e}/manifest.txt")).exists());
        assert!(run.join(format!("metrics/epoch-{e}.csv")).exists());
        let fp = std::fs::read_to_string(run.join(format!("fp/epoch-{e}.txt"))).unwrap();
        let values: Vec<u64> = fp
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.parse().unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[0] < w[1]));
        assert!(values.iter().all(|&v| (2000..2600).contains(&v) && !is_prime(v).unwrap()));
        assert_eq!(values.len() as u64, out.full_evals[e as usize - 1].record.metrics.fp);
    }
    assert!(run.join("checkpoints/best/manifest.txt").exists());
    assert!(run.join("labels").read_dir().unwrap().count() >= 2);

    // the stored final checkpoint scores exactly like the in-memory state
    let (loaded, meta) = crate::model::load_checkpoint(&run.join("checkpoints/epoch-3")).unwrap();
    assert_eq!(meta.iteration, 15);
    let a = evaluate(&out.state, &cfg.split.test, 1.0, 0.5, 0).unwrap();
    let b = evaluate(&loaded, &cfg.split.test, 1.0, 0.5, 0).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.metrics, out.final_eval().record.metrics);
}

#[test]
fn zero_state_predicts_everything_prime() {
    let cfg = small_config();
    let zero = ModelState::zeros(cfg.model).unwrap();
    let r = evaluate(&zero, &cfg.split.test, 1.0, 0.5, 0).unwrap();
    assert_eq!(r.metrics.recall_prime, Some(1.0));
    assert_eq!(r.metrics.recall_nonprime, Some(0.0));
    assert_eq!(r.metrics.auc, Some(0.5));
    assert_eq!(r.false_positives.len() as u64, r.metrics.fp);
}

#[test]
fn thirty_integer_hand_confusion() {
    let shape = EncodingShape::cube(4, 5).unwrap();
    let cfg = ModelConfig {
        d_model: 4,
        n_res_blocks: 1,
        n_tx_layers: 1,
        n_heads: 1,
        ff_mult: 1,
        shape,
    };
    let range = RangeSpec::new(0, 0, 30).unwrap();
    // primes below 30: 2 3 5 7 11 13 17 19 23 29
    let mut s = ModelState::zeros(cfg).unwrap();
    let all = evaluate(&s, &range, 1.0, 0.5, 0).unwrap();
    assert_eq!((all.metrics.tp, all.metrics.fp, all.metrics.tn, all.metrics.fn_), (10, 20, 0, 0));
    // 0 and 1 are non-prime but not composite
    assert_eq!(all.false_positives.len(), 18);
    s.get_mut("head.b").data_mut()[0] = -1.0;
    let none = evaluate(&s, &range, 1.0, 0.5, 0).unwrap();
    assert_eq!((none.metrics.tp, none.metrics.fp, none.metrics.tn, none.metrics.fn_), (0, 0, 20, 10));
    assert!(none.false_positives.is_empty());
}

#[test]
fn invalid_configs() {
    let base = small_config();
    let bad = [
        TrainConfig { lr0: 0.0, ..base },
        TrainConfig { decay_factor: 1.0, ..base },
        TrainConfig { epochs: 0, ..base },
        TrainConfig { batch_size: 0, ..base },
        TrainConfig { eval_subsample: 0.0, ..base },
        TrainConfig { patience: 0, ..base },
    ];
    for cfg in bad {
        assert!(matches!(train_run(&cfg, &RunOptions::default()), Err(Error::Config(_))));
    }
}

#[test]
fn divergence_is_reported() {
    let cfg = TrainConfig {
        lr0: 1e30,
        ..small_config()
    };
    assert!(matches!(train_run(&cfg, &RunOptions::default()), Err(Error::Numeric(_))));
}

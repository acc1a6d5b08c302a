use primeclass::analysis::{fp_consistency, fpr_by_factor_count};
use primeclass::config::RunConfigFile;
use primeclass::model::load_checkpoint;
use primeclass::numtheory::is_prime;
use primeclass::training::{evaluate, train_run, RunOptions};

const SMALL: &str = r#"
master_seed = 3

[split]
train = { offset = 0, start = 0, end = 3000 }
test = { offset = 0, start = 3000, end = 4500 }
sample_fraction = 0.2

[shape]
m = 20
n = 20
o = 20
seq_len = 5

[model]
d_model = 8
n_res_blocks = 1
n_tx_layers = 1
n_heads = 2
ff_mult = 2

[train]
batch_size = 4
epochs = 3
eval_every = 20
eval_subsample = 0.5
"#;

#[test]
fn config_to_checkpoint_to_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let file = RunConfigFile::parse(SMALL).unwrap();
    let cfg = file.to_train_config().unwrap();
    let opts = RunOptions {
        out_dir: Some(dir.path().to_path_buf()),
        config_hash: Some(file.hash()),
        label_cache: None,
    };
    let out = train_run(&cfg, &opts).unwrap();
    assert_eq!(out.iterations, 3 * 30);

    let (state, meta) = load_checkpoint(&dir.path().join("checkpoints/epoch-3")).unwrap();
    assert_eq!(meta.config_hash, file.hash());
    assert_eq!((meta.epoch, meta.iteration), (3, 90));
    let again = evaluate(&state, &cfg.split.test, 1.0, cfg.threshold, 0).unwrap();
    assert_eq!(again.metrics, out.final_eval().record.metrics);
    assert_eq!(again.false_positives, out.final_eval().false_positives);

    let table = fpr_by_factor_count(&again.false_positives, &cfg.split.test).unwrap();
    let composites = (3000..4500u64).filter(|&v| !is_prime(v).unwrap()).count() as u64;
    assert_eq!(table.total_composites(), composites);
    let misclassified: u64 = table.rows.values().map(|r| r.misclassified).sum();
    assert_eq!(misclassified, again.false_positives.len() as u64);

    let sets: Vec<_> = out.full_evals.iter().map(|e| e.false_positives.clone()).collect();
    if let Some(c) = fp_consistency(&sets).unwrap() {
        assert!((0.0..=1.0).contains(&c.intersection_over_union));
        assert!(c.intersection_over_union <= c.mean_pairwise_jaccard + 1e-12);
    }
}

#[test]
fn best_checkpoint_tracks_monitored_recall() {
    let dir = tempfile::tempdir().unwrap();
    let file = RunConfigFile::parse(SMALL).unwrap();
    let cfg = file.to_train_config().unwrap();
    let opts = RunOptions {
        out_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let out = train_run(&cfg, &opts).unwrap();
    let best = out
        .log
        .records
        .iter()
        .map(|r| r.metrics.mean_recall())
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best, out.best_mean_recall);
    let (_, meta) = load_checkpoint(&dir.path().join("checkpoints/best")).unwrap();
    let first_best = out
        .log
        .records
        .iter()
        .find(|r| r.metrics.mean_recall() == best)
        .unwrap();
    assert_eq!(meta.iteration, first_best.iteration);
}

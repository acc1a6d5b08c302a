use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use primeclass::analysis::{
    block_counts_csv, compare_ranges, comparison_csv, csv_document, fmt_opt, fp_consistency,
    fpr_by_factor_count, fpr_csv, metrics_csv, pnt_csv, write_atomic, MetricsReport,
};
use primeclass::config::{sha256_hex, RunConfigFile, SweepFile};
use primeclass::dataset::{write_bitmap_file, RangeSpec};
use primeclass::model::load_checkpoint;
use primeclass::ndcompute::OpKind;
use primeclass::numtheory::sieve_range;
use primeclass::selftest;
use primeclass::training::{evaluate, train_run_with, EvalRecord, RunOptions, TrainOutcome};
use primeclass::Error;
use serde_json::{json, Map, Value};

use crate::RUNS_ENV;

#[derive(Debug)]
pub enum Failure {
    Lib(Error),
    Usage(String),
    Checks(usize),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Checks(n) => write!(f, "{n} self-test check(s) failed"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Lib(Error::Numeric(_)) => 3,
            Failure::Lib(Error::Shape { .. }) | Failure::Checks(_) => 1,
            Failure::Lib(_) | Failure::Usage(_) => 2,
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn runs_root() -> PathBuf {
    std::env::var_os(RUNS_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn default_dir(prefix: &str, path: &Path, hash: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    runs_root().join(format!("{prefix}{stem}-{}", &hash[..12]))
}

pub fn primes_scan(lo: u64, hi: u64, offset: u64, bitmap: Option<&Path>) -> Outcome {
    let range = RangeSpec::new(offset, lo, hi)?;
    let bm = sieve_range(range.abs_lo(), range.abs_hi())?;
    if let Some(path) = bitmap {
        write_bitmap_file(path, &range, &bm)?;
    }
    println!("{}", bm.count_primes());
    Ok(())
}

/// Reads only the `split` ranges of the config; the rest need not describe a valid run.
pub fn dataset_stats(config: &Path, block: u64, out: Option<PathBuf>) -> Outcome {
    let cfg = RunConfigFile::load(config)?;
    let hash = cfg.hash();
    let dir = out.unwrap_or_else(|| default_dir("stats-", config, &hash));
    let h = Some(hash.as_str());
    let stats = compare_ranges(&cfg.split.train, &cfg.split.test, block)?;
    let files = [
        ("train_blocks.csv", block_counts_csv(&stats.blocks_a, h)),
        ("test_blocks.csv", block_counts_csv(&stats.blocks_b, h)),
        ("train_pnt.csv", pnt_csv(&stats.blocks_a, h)?),
        ("test_pnt.csv", pnt_csv(&stats.blocks_b, h)?),
        ("comparison.csv", comparison_csv(&stats.comparison, h)),
    ];
    for (name, text) in &files {
        write_atomic(&dir.join(name), text)?;
    }
    let c = &stats.comparison;
    println!("out {}", dir.display());
    println!("mean_count_train {}", c.mean_count_a);
    println!("mean_count_test {}", c.mean_count_b);
    println!("wasserstein1 {:.4}", c.wasserstein1);
    println!("js_divergence_base2 {:.4}", c.js_divergence_bits);
    println!("js_distance_base2 {:.4}", c.js_distance_bits);
    Ok(())
}

fn progress_line(r: &EvalRecord) -> String {
    let m = &r.metrics;
    format!(
        "{} iter {} epoch {} lr {} loss {:.4} recall_prime {} recall_nonprime {} auc {}",
        if r.full { "full" } else { "eval" },
        r.iteration,
        r.epoch,
        r.lr,
        r.loss,
        fmt_opt(m.recall_prime),
        fmt_opt(m.recall_nonprime),
        fmt_opt(m.auc),
    )
}

fn run_one(cfg: &RunConfigFile, dir: &Path, label_cache: Option<PathBuf>, quiet: bool) -> Result<TrainOutcome, Error> {
    let train_cfg = cfg.to_train_config()?;
    let hash = cfg.hash();
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join("config.toml"), &cfg.canonical())?;
    let opts = RunOptions {
        out_dir: Some(dir.to_path_buf()),
        config_hash: Some(hash),
        label_cache,
    };
    train_run_with(&train_cfg, &opts, &mut |r| {
        if !quiet {
            eprintln!("{}", progress_line(r));
        }
    })
}

pub fn train(config: &Path, out: Option<PathBuf>, quiet: bool) -> Outcome {
    let cfg = RunConfigFile::load(config)?;
    cfg.to_train_config()?;
    let dir = out.unwrap_or_else(|| default_dir("", config, &cfg.hash()));
    let outcome = run_one(&cfg, &dir, None, quiet)?;
    println!("run {}", dir.display());
    println!("iterations {}", outcome.iterations);
    for (k, v) in outcome.final_eval().record.metrics.entries() {
        println!("{k} {}", fmt_opt(v));
    }
    Ok(())
}

pub fn train_sweep(sweep_path: &Path, out: Option<PathBuf>, quiet: bool) -> Outcome {
    let text = fs::read_to_string(sweep_path)?;
    let sweep = SweepFile::parse(&text)?;
    let base_path = sweep_path.parent().unwrap_or(Path::new(".")).join(&sweep.base);
    let base = fs::read_to_string(&base_path)?;
    let cells = sweep.expand(&base)?;
    let hash = sha256_hex(&format!("{text}\n{base}"));
    let root = out.unwrap_or_else(|| default_dir("sweep-", sweep_path, &hash));
    let cache = root.join("labels");

    let mut header: Vec<&str> = vec!["cell"];
    header.extend(sweep.grid.keys().map(String::as_str));
    header.extend([
        "config_hash",
        "status",
        "iterations",
        "recall_prime",
        "recall_nonprime",
        "precision_prime",
        "accuracy",
        "auc",
    ]);
    let mut rows = Vec::new();
    let mut diverged = 0;
    for cell in &cells {
        let name = format!("cell-{:03}", cell.index);
        if !quiet {
            let desc: Vec<String> = cell.overrides.iter().map(|(k, v)| format!("{k}={v}")).collect();
            eprintln!("{name} {}", desc.join(" "));
        }
        let mut row = vec![name.clone()];
        row.extend(cell.overrides.iter().map(|(_, v)| v.to_string()));
        row.push(cell.config.hash());
        match run_one(&cell.config, &root.join(&name), Some(cache.clone()), quiet) {
            Ok(o) => {
                let m = &o.final_eval().record.metrics;
                row.push("ok".into());
                row.push(o.iterations.to_string());
                row.extend(
                    [m.recall_prime, m.recall_nonprime, m.precision_prime, Some(m.accuracy), m.auc]
                        .map(fmt_opt),
                );
            }
            Err(Error::Numeric(msg)) => {
                eprintln!("{name}: {msg}");
                diverged += 1;
                row.push("diverged".into());
                row.extend(std::iter::repeat_n(fmt_opt(None), 6));
            }
            Err(e) => return Err(e.into()),
        }
        rows.push(row);
    }
    write_atomic(&root.join("summary.csv"), &csv_document(Some(&hash), &header, rows))?;
    println!("sweep {}", root.display());
    println!("cells {}", cells.len());
    if diverged > 0 {
        return Err(Error::Numeric(format!("{diverged} sweep cell(s) diverged")).into());
    }
    Ok(())
}

pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub lo: u64,
    pub hi: u64,
    pub offset: u64,
    pub threshold: f64,
    pub subsample: f64,
    pub csv: bool,
    pub out: Option<PathBuf>,
}

fn metrics_json(m: &MetricsReport) -> Value {
    let mut map = Map::new();
    for (k, v) in m.entries() {
        let v = match k {
            "tp" => json!(m.tp),
            "fp" => json!(m.fp),
            "tn" => json!(m.tn),
            "fn" => json!(m.fn_),
            _ => v.map_or(Value::Null, |x| json!(x)),
        };
        map.insert(k.into(), v);
    }
    Value::Object(map)
}

pub fn eval(a: &EvalArgs) -> Outcome {
    let range = RangeSpec::new(a.offset, a.lo, a.hi)?;
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(Failure::Usage(format!("threshold {} not in [0, 1]", a.threshold)));
    }
    let (state, meta) = load_checkpoint(&a.checkpoint)?;
    let res = evaluate(&state, &range, a.subsample, a.threshold, 0)?;
    let text = if a.csv {
        metrics_csv(&res.metrics, Some(&meta.config_hash))
    } else {
        let v = json!({
            "checkpoint_config_hash": meta.config_hash,
            "hi": a.hi,
            "lo": a.lo,
            "metrics": metrics_json(&res.metrics),
            "offset": a.offset,
            "scored": res.scored,
            "subsample": a.subsample,
            "threshold": a.threshold,
        });
        format!("{}\n", serde_json::to_string_pretty(&v).expect("json serializes"))
    };
    if let Some(path) = &a.out {
        write_atomic(path, &text)?;
    }
    print!("{text}");
    Ok(())
}

fn read_fp_file(path: &Path) -> Result<BTreeSet<u64>, Error> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse()
                .map_err(|_| Error::format(path, format!("not an integer: {l:?}")))
        })
        .collect()
}

/// `fp/epoch-<e>.txt` files of a run, by epoch.
fn fp_files(run: &Path) -> Result<Vec<(u64, PathBuf)>, Error> {
    let mut files = Vec::new();
    for entry in fs::read_dir(run.join("fp"))? {
        let path = entry?.path();
        let epoch = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("epoch-")?.strip_suffix(".txt")?.parse().ok());
        if let Some(e) = epoch {
            files.push((e, path));
        }
    }
    files.sort();
    Ok(files)
}

pub fn analyze_fp(run: &Path, last: usize) -> Outcome {
    let cfg = RunConfigFile::load(&run.join("config.toml"))?;
    let hash = cfg.hash();
    let h = Some(hash.as_str());
    let files = fp_files(run)?;
    let Some((final_epoch, final_path)) = files.last() else {
        return Err(Failure::Usage(format!("{} has no fp/epoch-*.txt files", run.display())));
    };
    let out = run.join("analysis");
    let table = fpr_by_factor_count(&read_fp_file(final_path)?, &cfg.split.test)?;
    write_atomic(&out.join("fpr_by_omega.csv"), &fpr_csv(&table, h))?;

    let tail = &files[files.len().saturating_sub(last.max(2))..];
    let consistency = if tail.len() >= 2 {
        let sets = tail
            .iter()
            .map(|(_, p)| read_fp_file(p))
            .collect::<Result<Vec<_>, _>>()?;
        fp_consistency(&sets)?
    } else {
        None
    };
    if tail.len() >= 2 {
        let c = consistency;
        let rows = [
            ["evaluations".to_string(), tail.len().to_string()],
            ["first_epoch".into(), tail[0].0.to_string()],
            ["last_epoch".into(), final_epoch.to_string()],
            ["intersection_over_union".into(), fmt_opt(c.map(|c| c.intersection_over_union))],
            ["mean_pairwise_jaccard".into(), fmt_opt(c.map(|c| c.mean_pairwise_jaccard))],
        ];
        write_atomic(&out.join("consistency.csv"), &csv_document(h, &["metric", "value"], rows))?;
    }

    let verdict = |a: u32, b: u32| match (table.fpr(a), table.fpr(b)) {
        (Some(x), Some(y)) if x > y => "pass",
        (Some(_), Some(_)) => "fail",
        _ => "NA",
    };
    let checks = [
        ["fpr2_gt_fpr3".to_string(), verdict(2, 3).to_string()],
        ["fpr3_gt_fpr4".into(), verdict(3, 4).to_string()],
        ["decreasing_2_3_4".into(), if table.decreasing_2_3_4() { "pass" } else { "fail" }.into()],
    ];
    write_atomic(
        &out.join("summary.csv"),
        &csv_document(h, &["check", "result"], checks.clone()),
    )?;

    println!("epoch {final_epoch}");
    println!("omega,total,misclassified,fpr");
    for (o, r) in &table.rows {
        println!("{o},{},{},{}", r.total, r.misclassified, r.fpr);
    }
    match consistency {
        Some(c) => println!(
            "consistency over {} evaluations: intersection/union {:.4}, mean pairwise jaccard {:.4}",
            tail.len(),
            c.intersection_over_union,
            c.mean_pairwise_jaccard
        ),
        None => println!("consistency: NA"),
    }
    for [k, v] in &checks {
        println!("{k} {v}");
    }
    Ok(())
}

pub fn selftest(fault: Option<&str>) -> Outcome {
    let fault = match fault {
        Some(name) => Some(OpKind::from_name(name).ok_or_else(|| {
            let known: Vec<&str> = OpKind::ALL.iter().map(|k| k.name()).collect();
            Failure::Usage(format!("unknown op {name:?}; one of {}", known.join(", ")))
        })?),
        None => None,
    };
    let report = selftest::run(fault)?;
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Checks(failed));
    }
    Ok(())
}

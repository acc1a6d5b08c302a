//! Plain CSV emission. Every document may start with a `# config_hash: <hex>`
//! comment line, followed by the header row.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dataset::RangeSpec;
use crate::error::Result;
use crate::numtheory::{pnt_expected_count, prime_block_counts, BlockCounts};

use super::distribution::{js_distance, js_divergence, wasserstein1, CountDistribution};
use super::fp::FprByOmega;
use super::metrics::MetricsReport;

/// Marker written for undefined metric values.
pub const UNDEFINED: &str = "NA";

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| x.to_string())
}

/// Comment line carrying the producing config hash, or empty without one.
pub fn hash_line(config_hash: Option<&str>) -> String {
    config_hash.map_or_else(String::new, |h| format!("# config_hash: {h}\n"))
}

pub fn csv_document<I, R>(config_hash: Option<&str>, header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut out = hash_line(config_hash);
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Write `contents` through a temporary file and rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(tmp, path)?;
    Ok(())
}

/// `metric,value` rows.
pub fn metrics_csv(m: &MetricsReport, config_hash: Option<&str>) -> String {
    csv_document(
        config_hash,
        &["metric", "value"],
        m.entries()
            .into_iter()
            .map(|(k, v)| [k.to_string(), fmt_opt(v)]),
    )
}

/// `omega,total,misclassified,fpr` rows.
pub fn fpr_csv(t: &FprByOmega, config_hash: Option<&str>) -> String {
    csv_document(
        config_hash,
        &["omega", "total", "misclassified", "fpr"],
        t.rows.iter().map(|(k, r)| {
            [
                k.to_string(),
                r.total.to_string(),
                r.misclassified.to_string(),
                r.fpr.to_string(),
            ]
        }),
    )
}

/// `block_start,count` rows.
pub fn block_counts_csv(b: &BlockCounts, config_hash: Option<&str>) -> String {
    csv_document(
        config_hash,
        &["block_start", "count"],
        b.block_starts()
            .zip(&b.counts)
            .map(|(s, c)| [s.to_string(), c.to_string()]),
    )
}

/// `block_mid,expected` rows of the prime-number-theorem density curve.
pub fn pnt_csv(b: &BlockCounts, config_hash: Option<&str>) -> Result<String> {
    let mut rows = Vec::with_capacity(b.counts.len());
    for start in b.block_starts() {
        let mid = (start + b.block_size / 2).max(2);
        rows.push([mid.to_string(), pnt_expected_count(mid, b.block_size)?.to_string()]);
    }
    Ok(csv_document(config_hash, &["block_mid", "expected"], rows))
}

/// Block-count comparison of two ranges.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RangeComparison {
    pub block_size: u64,
    pub mean_count_a: f64,
    pub mean_count_b: f64,
    pub wasserstein1: f64,
    pub js_divergence_bits: f64,
    pub js_distance_bits: f64,
}

pub struct RangeStats {
    pub blocks_a: BlockCounts,
    pub blocks_b: BlockCounts,
    pub comparison: RangeComparison,
}

/// Per-block prime counts of both ranges and the distances between their distributions.
pub fn compare_ranges(a: &RangeSpec, b: &RangeSpec, block_size: u64) -> Result<RangeStats> {
    let blocks_a = prime_block_counts(a.abs_lo(), a.abs_hi(), block_size)?;
    let blocks_b = prime_block_counts(b.abs_lo(), b.abs_hi(), block_size)?;
    let da = CountDistribution::from_counts(&blocks_a.counts)?;
    let db = CountDistribution::from_counts(&blocks_b.counts)?;
    let comparison = RangeComparison {
        block_size,
        mean_count_a: blocks_a.mean(),
        mean_count_b: blocks_b.mean(),
        wasserstein1: wasserstein1(&da, &db),
        js_divergence_bits: js_divergence(&da, &db),
        js_distance_bits: js_distance(&da, &db),
    };
    Ok(RangeStats {
        blocks_a,
        blocks_b,
        comparison,
    })
}

/// `metric,value` summary of a [`RangeComparison`].
pub fn comparison_csv(c: &RangeComparison, config_hash: Option<&str>) -> String {
    let mut rows = Vec::new();
    let mut push = |k: &str, v: f64| rows.push([k.to_string(), v.to_string()]);
    push("block_size", c.block_size as f64);
    push("mean_count_train", c.mean_count_a);
    push("mean_count_test", c.mean_count_b);
    push("wasserstein1", c.wasserstein1);
    push("js_divergence_base2", c.js_divergence_bits);
    push("js_distance_base2", c.js_distance_bits);
    csv_document(config_hash, &["metric", "value"], rows)
}

/// Sorted integers, one per line.
pub fn integer_list(values: impl IntoIterator<Item = u64>) -> String {
    let mut out = String::new();
    for v in values {
        let _ = writeln!(out, "{v}");
    }
    out
}

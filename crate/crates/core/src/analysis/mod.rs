//! Classification metrics, block-count distributions and false-positive structure.

mod distribution;
mod fp;
mod metrics;
mod report;

pub use distribution::{js_distance, js_divergence, wasserstein1, CountDistribution};
pub use fp::{
    format_percent, fp_consistency, fpr_by_factor_count, Consistency, FprByOmega, OmegaRow,
};
pub use metrics::{classification_metrics, roc_auc, MetricsReport};
pub use report::{
    block_counts_csv, compare_ranges, comparison_csv, csv_document, fmt_opt, fpr_csv,
    hash_line, integer_list, metrics_csv, pnt_csv, write_atomic, RangeComparison, RangeStats,
    UNDEFINED,
};

#[cfg(test)]
mod tests;

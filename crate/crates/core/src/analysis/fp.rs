use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::dataset::RangeSpec;
use crate::error::{Error, Result};
use crate::numtheory::{omega_range, sieve_range};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmegaRow {
    pub total: u64,
    pub misclassified: u64,
    pub fpr: f64,
}

/// False-positive rate of composites bucketed by Ω (prime factors with multiplicity).
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct FprByOmega {
    pub rows: BTreeMap<u32, OmegaRow>,
}

impl FprByOmega {
    pub fn fpr(&self, omega: u32) -> Option<f64> {
        self.rows.get(&omega).map(|r| r.fpr)
    }

    pub fn total_composites(&self) -> u64 {
        self.rows.values().map(|r| r.total).sum()
    }

    /// `FPR(2) > FPR(3) > FPR(4)`; false if a bucket is missing.
    pub fn decreasing_2_3_4(&self) -> bool {
        match (self.fpr(2), self.fpr(3), self.fpr(4)) {
            (Some(a), Some(b), Some(c)) => a > b && b > c,
            _ => false,
        }
    }
}

/// Bucket every composite of `range` by Ω and count how many of each are in `fp_set`.
///
/// Only integers `>= 4` that are not prime count as composites.
pub fn fpr_by_factor_count(fp_set: &BTreeSet<u64>, range: &RangeSpec) -> Result<FprByOmega> {
    let (lo, hi) = (range.abs_lo(), range.abs_hi());
    let primes = sieve_range(lo, hi)?;
    for &v in fp_set {
        if !primes.covers(v) {
            return Err(Error::Argument(format!("false positive {v} outside [{lo}, {hi})")));
        }
        if v < 4 || primes.get(v)? {
            return Err(Error::Argument(format!("false positive {v} is not composite")));
        }
    }
    let omega = omega_range(lo, hi)?;
    let mut rows: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
    for n in primes.composites() {
        let row = rows.entry(omega[(n - lo) as usize]).or_default();
        row.0 += 1;
        if fp_set.contains(&n) {
            row.1 += 1;
        }
    }
    Ok(FprByOmega {
        rows: rows
            .into_iter()
            .map(|(k, (total, mis))| {
                let row = OmegaRow {
                    total,
                    misclassified: mis,
                    fpr: mis as f64 / total as f64,
                };
                (k, row)
            })
            .collect(),
    })
}

/// Agreement between false-positive sets from several evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Consistency {
    /// `|intersection| / |union|` over all sets.
    pub intersection_over_union: f64,
    /// Mean Jaccard index over pairs whose union is non-empty.
    pub mean_pairwise_jaccard: f64,
}

/// `None` when every set is empty.
pub fn fp_consistency(sets: &[BTreeSet<u64>]) -> Result<Option<Consistency>> {
    if sets.len() < 2 {
        return Err(Error::Argument(format!(
            "consistency needs at least 2 sets, got {}",
            sets.len()
        )));
    }
    let union: BTreeSet<u64> = sets.iter().flatten().copied().collect();
    if union.is_empty() {
        return Ok(None);
    }
    let inter = union
        .iter()
        .filter(|v| sets.iter().all(|s| s.contains(v)))
        .count();
    let mut jaccard = Vec::new();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            let u = sets[i].union(&sets[j]).count();
            if u > 0 {
                jaccard.push(sets[i].intersection(&sets[j]).count() as f64 / u as f64);
            }
        }
    }
    Ok(Some(Consistency {
        intersection_over_union: inter as f64 / union.len() as f64,
        mean_pairwise_jaccard: jaccard.iter().sum::<f64>() / jaccard.len() as f64,
    }))
}

/// Percentage with two decimals, e.g. `97.94%`.
pub fn format_percent(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

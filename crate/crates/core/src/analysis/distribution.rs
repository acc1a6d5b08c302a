use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Empirical distribution of per-block prime counts, one bin per count value.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDistribution {
    support: Vec<u64>,
    probabilities: Vec<f64>,
}

impl CountDistribution {
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Argument("no block counts".into()));
        }
        let mut freq: BTreeMap<u64, u64> = BTreeMap::new();
        for &c in counts {
            *freq.entry(c).or_default() += 1;
        }
        let n = counts.len() as f64;
        Ok(CountDistribution {
            support: freq.keys().copied().collect(),
            probabilities: freq.values().map(|&f| f as f64 / n).collect(),
        })
    }

    pub fn support(&self) -> &[u64] {
        &self.support
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn mean(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.probabilities)
            .map(|(&k, p)| k as f64 * p)
            .sum()
    }

    fn prob(&self, k: u64) -> f64 {
        match self.support.binary_search(&k) {
            Ok(i) => self.probabilities[i],
            Err(_) => 0.0,
        }
    }
}

fn union_support(p: &CountDistribution, q: &CountDistribution) -> Vec<u64> {
    let mut s: Vec<u64> = p.support.iter().chain(&q.support).copied().collect();
    s.sort_unstable();
    s.dedup();
    s
}

/// Jensen–Shannon divergence in bits: `KL(P||A)/2 + KL(Q||A)/2`, `A = (P+Q)/2`.
pub fn js_divergence(p: &CountDistribution, q: &CountDistribution) -> f64 {
    let kl = |a: f64, m: f64| if a > 0.0 { a * (a / m).log2() } else { 0.0 };
    let mut total = 0.0;
    for k in union_support(p, q) {
        let (a, b) = (p.prob(k), q.prob(k));
        let m = 0.5 * (a + b);
        total += 0.5 * kl(a, m) + 0.5 * kl(b, m);
    }
    total.clamp(0.0, 1.0)
}

/// Square root of [`js_divergence`].
pub fn js_distance(p: &CountDistribution, q: &CountDistribution) -> f64 {
    js_divergence(p, q).sqrt()
}

/// Earth mover's distance on the integers: `sum_k |CDF_p(k) - CDF_q(k)|`.
pub fn wasserstein1(p: &CountDistribution, q: &CountDistribution) -> f64 {
    let support = union_support(p, q);
    let (mut cp, mut cq, mut total) = (0.0, 0.0, 0.0);
    for w in support.windows(2) {
        cp += p.prob(w[0]);
        cq += q.prob(w[0]);
        total += (cp - cq).abs() * (w[1] - w[0]) as f64;
    }
    total
}

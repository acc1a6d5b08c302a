use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dataset::RangeSpec;
use crate::numtheory::{count_prime_factors, is_prime};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn perfect_and_degenerate_predictions() {
    let truth = [true, false, false, true, false];
    let m = classification_metrics(&truth, &truth).unwrap();
    assert_eq!(m.recall_prime, Some(1.0));
    assert_eq!(m.recall_nonprime, Some(1.0));
    assert_eq!(m.accuracy, 1.0);

    let all_prime = classification_metrics(&[true; 5], &truth).unwrap();
    assert_eq!(all_prime.recall_prime, Some(1.0));
    assert_eq!(all_prime.recall_nonprime, Some(0.0));
    assert_eq!(all_prime.precision_nonprime, None);
    assert_eq!(all_prime.f1_nonprime, None);

    let no_primes = classification_metrics(&[false; 3], &[false; 3]).unwrap();
    assert_eq!(no_primes.recall_prime, None);
    assert!(classification_metrics(&[true], &[true, false]).is_err());
    assert!(classification_metrics(&[], &[]).is_err());
}

#[test]
fn ten_element_hand_case() {
    let t = true;
    let f = false;
    let pred = [t, t, f, f, t, f, t, f, f, t];
    let truth = [t, f, f, t, t, f, t, f, f, f];
    let m = classification_metrics(&pred, &truth).unwrap();
    assert_eq!((m.tp, m.fp, m.tn, m.fn_), (3, 2, 4, 1));
    assert_eq!(m.recall_prime, Some(0.75));
    assert!(close(m.recall_nonprime.unwrap(), 4.0 / 6.0, 1e-15));
    assert_eq!(m.precision_prime, Some(0.6));
    assert_eq!(m.precision_nonprime, Some(0.8));
    assert!(close(m.f1_prime.unwrap(), 2.0 / 3.0, 1e-15));
    assert!(close(m.f1_nonprime.unwrap(), 8.0 / 11.0, 1e-15));
    assert_eq!(m.accuracy, 0.7);
    assert_eq!(m.total(), 10);
}

fn auc_by_pairs(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let (mut twice, mut pairs) = (0u128, 0u128);
    for (i, &ti) in truth.iter().enumerate() {
        if !ti {
            continue;
        }
        for (j, &tj) in truth.iter().enumerate() {
            if tj {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                twice += 2;
            } else if scores[i] == scores[j] {
                twice += 1;
            }
        }
    }
    (pairs > 0).then(|| twice as f64 / (2 * pairs) as f64)
}

#[test]
fn auc_simple_cases() {
    assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), Some(1.0));
    assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &[false, false, true, true]).unwrap(), Some(0.0));
    assert_eq!(roc_auc(&[0.5; 6], &[true, false, true, false, false, false]).unwrap(), Some(0.5));
    assert_eq!(roc_auc(&[0.3, 0.4], &[true, true]).unwrap(), None);
    assert!(roc_auc(&[0.3], &[true, false]).is_err());
    assert!(roc_auc(&[f64::NAN, 0.1], &[true, false]).is_err());
}

#[test]
fn auc_matches_pair_counting_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let n = rng.gen_range(2..=500);
        // coarse scores force plenty of ties
        let levels = if case % 2 == 0 { 7 } else { 1000 };
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect();
        let truth: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        assert_eq!(roc_auc(&scores, &truth).unwrap(), auc_by_pairs(&scores, &truth), "case {case}");
    }
}

fn dist(counts: &[u64]) -> CountDistribution {
    CountDistribution::from_counts(counts).unwrap()
}

#[test]
fn distribution_basics() {
    let d = dist(&[3, 1, 3, 2]);
    assert_eq!(d.support(), [1, 2, 3]);
    assert_eq!(d.probabilities(), [0.25, 0.25, 0.5]);
    assert!(close(d.probabilities().iter().sum(), 1.0, 1e-12));
    assert_eq!(d.mean(), 2.25);
    assert!(CountDistribution::from_counts(&[]).is_err());
}

#[test]
fn js_properties() {
    let p = dist(&[1, 2, 2, 3]);
    let q = dist(&[2, 3, 3, 4, 5]);
    assert_eq!(js_divergence(&p, &p), 0.0);
    assert!(close(js_divergence(&dist(&[1, 1]), &dist(&[9])), 1.0, 1e-12));
    let (a, b) = (js_divergence(&p, &q), js_divergence(&q, &p));
    assert!(close(a, b, 1e-15));
    assert!(a > 0.0 && a < 1.0);
    assert!(close(js_distance(&p, &q), a.sqrt(), 1e-15));

    // half/half vs point mass: H(1/4, 3/4) - H(1/2, 1/2)/2 in bits
    let mixed = dist(&[0, 1]);
    let point = dist(&[0]);
    let h = |x: f64| -x * x.log2();
    let expected = h(0.25) + h(0.75) - 0.5;
    assert!(close(js_divergence(&mixed, &point), expected, 1e-12));
}

#[test]
fn wasserstein_properties() {
    assert_eq!(wasserstein1(&dist(&[4]), &dist(&[11])), 7.0);
    let p = dist(&[1, 2, 2, 6]);
    let q = dist(&[3, 3, 4]);
    let r = dist(&[0, 9, 9]);
    assert_eq!(wasserstein1(&p, &p), 0.0);
    assert!(close(wasserstein1(&p, &q), wasserstein1(&q, &p), 1e-12));
    assert!(wasserstein1(&p, &r) <= wasserstein1(&p, &q) + wasserstein1(&q, &r) + 1e-12);
    // shifted copy moves by exactly the shift
    assert!(close(wasserstein1(&dist(&[1, 5, 7]), &dist(&[4, 8, 10])), 3.0, 1e-12));
}

#[test]
fn block_distributions_track_mean_counts() {
    let a = RangeSpec::new(0, 0, 100_000).unwrap();
    let b = RangeSpec::new(0, 1_000_000, 1_200_000).unwrap();
    let stats = compare_ranges(&a, &b, 1000).unwrap();
    let c = stats.comparison;
    assert_eq!(stats.blocks_a.total(), 9592);
    assert!(close(c.mean_count_a, 95.92, 1e-12));
    // denser low range dominates, so W1 is the mean gap
    assert!(close(c.wasserstein1, c.mean_count_a - c.mean_count_b, 1e-9));
    let same = compare_ranges(&a, &a, 1000).unwrap().comparison;
    assert_eq!((same.wasserstein1, same.js_divergence_bits), (0.0, 0.0));
    assert!(compare_ranges(&a, &RangeSpec::new(0, 0, 1500).unwrap(), 1000).is_err());
}

#[test]
fn fpr_buckets_partition_composites() {
    let range = RangeSpec::new(0, 0, 1000).unwrap();
    let composites: BTreeSet<u64> = (4..1000).filter(|&n| !is_prime(n).unwrap()).collect();

    let none = fpr_by_factor_count(&BTreeSet::new(), &range).unwrap();
    assert_eq!(none.total_composites(), composites.len() as u64);
    assert!(none.rows.values().all(|r| r.fpr == 0.0));
    assert!(!none.rows.contains_key(&1));

    let all = fpr_by_factor_count(&composites, &range).unwrap();
    assert!(all.rows.values().all(|r| r.fpr == 1.0));

    let semis: BTreeSet<u64> = composites
        .iter()
        .copied()
        .filter(|&n| count_prime_factors(n).unwrap() == 2)
        .collect();
    let t = fpr_by_factor_count(&semis, &range).unwrap();
    assert_eq!(t.fpr(2), Some(1.0));
    assert_eq!(t.fpr(3), Some(0.0));
    assert!(!t.decreasing_2_3_4());

    let mut mixed = semis.clone();
    mixed.extend(composites.iter().filter(|&&n| count_prime_factors(n).unwrap() == 3).step_by(2));
    assert!(fpr_by_factor_count(&mixed, &range).unwrap().decreasing_2_3_4());

    assert!(fpr_by_factor_count(&BTreeSet::from([7]), &range).is_err());
    assert!(fpr_by_factor_count(&BTreeSet::from([1]), &range).is_err());
    assert!(fpr_by_factor_count(&BTreeSet::from([5000]), &range).is_err());

    let csv = fpr_csv(&t, Some("h"));
    assert!(csv.starts_with("# config_hash: h\nomega,total,misclassified,fpr\n2,"));
}

#[test]
fn fpr_trend_detection() {
    let range = RangeSpec::new(1_000_000, 0, 3000).unwrap();
    let composites: Vec<u64> = (1_000_000..1_003_000).filter(|&n| !is_prime(n).unwrap()).collect();
    let mut fp = BTreeSet::new();
    for &n in &composites {
        let keep = match count_prime_factors(n).unwrap() {
            2 => n % 10 < 7,
            3 => n % 10 < 3,
            4 => n % 10 < 1,
            _ => false,
        };
        if keep {
            fp.insert(n);
        }
    }
    let t = fpr_by_factor_count(&fp, &range).unwrap();
    assert!(t.decreasing_2_3_4(), "{:?}", t.rows);
    assert_eq!(t.total_composites(), composites.len() as u64);
}

#[test]
fn consistency_cases() {
    let a = BTreeSet::from([1, 2, 3]);
    let b = BTreeSet::from([2, 3, 4]);
    let c = fp_consistency(&[a.clone(), b.clone()]).unwrap().unwrap();
    assert_eq!(c.intersection_over_union, 0.5);
    assert_eq!(c.mean_pairwise_jaccard, 0.5);
    let same = fp_consistency(&[a.clone(), a.clone(), a.clone()]).unwrap().unwrap();
    assert_eq!((same.intersection_over_union, same.mean_pairwise_jaccard), (1.0, 1.0));
    let disjoint = fp_consistency(&[a.clone(), BTreeSet::from([7, 8])]).unwrap().unwrap();
    assert_eq!((disjoint.intersection_over_union, disjoint.mean_pairwise_jaccard), (0.0, 0.0));
    assert_eq!(fp_consistency(&[BTreeSet::new(), BTreeSet::new()]).unwrap(), None);
    assert!(fp_consistency(&[a]).is_err());
    assert_eq!(format_percent(0.97944), "97.94%");
}

#[test]
fn csv_layouts() {
    let m = classification_metrics(&[true, true], &[true, false]).unwrap();
    let csv = metrics_csv(&m, None);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "metric,value");
    assert_eq!(lines.len(), 13);
    assert!(lines.contains(&"precision_nonprime,NA"));
    assert!(lines.contains(&"auc,NA"));

    let b = crate::numtheory::prime_block_counts(0, 3000, 1000).unwrap();
    assert_eq!(block_counts_csv(&b, None), "block_start,count\n0,168\n1000,135\n2000,127\n");
    let pnt = pnt_csv(&b, Some("x")).unwrap();
    assert!(pnt.starts_with("# config_hash: x\nblock_mid,expected\n500,"));
    assert_eq!(integer_list([3, 9]), "3\n9\n");
}

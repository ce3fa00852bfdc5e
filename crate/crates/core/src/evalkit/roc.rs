use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>=` this value are called positive; infinite for the origin.
    pub threshold: f64,
}

fn check(labels: &[bool], scores: &[f64]) -> Result<(usize, usize), EvalError> {
    if labels.len() != scores.len() {
        return Err(EvalError::LengthMismatch {
            labels: labels.len(),
            scores: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::NonFiniteScore);
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::SingleClass { positives, negatives });
    }
    Ok((positives, negatives))
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half (Mann-Whitney with average ranks).
pub fn auroc(labels: &[bool], scores: &[f64]) -> Result<f64, EvalError> {
    let (pos, neg) = check(labels, scores)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of average ranks (1-based) of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg_rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// ROC points from (0, 0) to (1, 1), one per distinct score threshold.
pub fn roc_curve(labels: &[bool], scores: &[f64]) -> Result<Vec<RocPoint>, EvalError> {
    let (pos, neg) = check(labels, scores)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut pts = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let thr = scores[order[i]];
        while i < order.len() && scores[order[i]] == thr {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: thr,
        });
    }
    Ok(pts)
}

/// Trapezoidal area under a curve ordered by increasing fpr.
pub fn trapezoid_area(curve: &[RocPoint]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * 0.5 * (w[0].tpr + w[1].tpr))
        .sum()
}

/// Mean ROC over folds on a uniform fpr grid, with the per-point standard
/// deviation across folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedRoc {
    pub fpr: Vec<f64>,
    pub tpr_mean: Vec<f64>,
    pub tpr_std: Vec<f64>,
}

/// tpr at `x`; on a vertical segment the highest tpr at that fpr is used.
fn interpolate(curve: &[RocPoint], x: f64) -> f64 {
    let i = curve.partition_point(|p| p.fpr <= x);
    if i == 0 {
        return curve[0].tpr;
    }
    if i == curve.len() {
        return curve[i - 1].tpr;
    }
    let (a, b) = (&curve[i - 1], &curve[i]);
    a.tpr + (x - a.fpr) / (b.fpr - a.fpr) * (b.tpr - a.tpr)
}

pub fn average_roc(curves: &[Vec<RocPoint>], grid_points: usize) -> Result<AveragedRoc, EvalError> {
    if curves.is_empty() || curves.iter().any(|c| c.is_empty()) {
        return Err(EvalError::NoCurves);
    }
    let n = grid_points.max(2);
    let fpr: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let k = curves.len() as f64;
    let mut tpr_mean = Vec::with_capacity(n);
    let mut tpr_std = Vec::with_capacity(n);
    for &x in &fpr {
        let vals: Vec<f64> = curves.iter().map(|c| interpolate(c, x)).collect();
        let m = vals.iter().sum::<f64>() / k;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / k;
        tpr_mean.push(m);
        tpr_std.push(var.sqrt());
    }
    Ok(AveragedRoc { fpr, tpr_mean, tpr_std })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_ranking() {
        assert_eq!(auroc(&[true, false], &[0.9, 0.1]).unwrap(), 1.0);
        let c = roc_curve(&[true, false], &[0.9, 0.1]).unwrap();
        assert!(c.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
    }

    #[test]
    fn all_ties_is_half() {
        assert_eq!(auroc(&[true, false, true, false], &[0.3; 4]).unwrap(), 0.5);
    }

    #[test]
    fn three_of_four_pairs() {
        let a = auroc(&[true, true, false, false], &[0.8, 0.4, 0.6, 0.2]).unwrap();
        assert_eq!(a, 0.75);
    }

    #[test]
    fn single_class_and_length_errors() {
        assert!(matches!(auroc(&[true, true], &[0.1, 0.2]), Err(EvalError::SingleClass { .. })));
        assert!(matches!(auroc(&[true], &[0.1, 0.2]), Err(EvalError::LengthMismatch { .. })));
        assert!(roc_curve(&[false, false], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn curve_endpoints() {
        let c = roc_curve(&[true, false, true], &[0.2, 0.5, 0.9]).unwrap();
        assert_eq!((c[0].fpr, c[0].tpr), (0.0, 0.0));
        let last = c.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }

    #[test]
    fn averaging_identical_curves() {
        let c = roc_curve(&[true, false, true, false, true], &[0.9, 0.7, 0.6, 0.3, 0.2]).unwrap();
        let avg = average_roc(&[c.clone(), c.clone(), c.clone()], 101).unwrap();
        assert_eq!(avg.fpr.len(), 101);
        assert_eq!(avg.tpr_mean.len(), 101);
        assert!(avg.tpr_std.iter().all(|&s| s == 0.0));
        for (x, m) in avg.fpr.iter().zip(&avg.tpr_mean) {
            assert_eq!(*m, interpolate(&c, *x));
        }
        assert!(average_roc(&[], 101).is_err());
    }

    fn brute_force(labels: &[bool], scores: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..labels.len() {
            for j in 0..labels.len() {
                if labels[i] && !labels[j] {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    proptest! {
        #[test]
        fn matches_pair_counting(data in proptest::collection::vec((any::<bool>(), 0u8..6), 2..40)) {
            let labels: Vec<bool> = data.iter().map(|d| d.0).collect();
            let scores: Vec<f64> = data.iter().map(|d| d.1 as f64).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            prop_assert_eq!(auroc(&labels, &scores).unwrap(), brute_force(&labels, &scores));
            let area = trapezoid_area(&roc_curve(&labels, &scores).unwrap());
            prop_assert!((area - brute_force(&labels, &scores)).abs() < 1e-12);
        }

        #[test]
        fn invariant_under_increasing_transform(data in proptest::collection::vec((any::<bool>(), -5.0f64..5.0), 2..40)) {
            let labels: Vec<bool> = data.iter().map(|d| d.0).collect();
            let scores: Vec<f64> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let warped: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 3.0).collect();
            prop_assert_eq!(auroc(&labels, &scores).unwrap(), auroc(&labels, &warped).unwrap());
        }
    }
}

//! Classification metrics: ROC AUC, accuracy, ROC curve points.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_dim(scores.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Argument("AUC is undefined when labels contain a single class".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks over tied groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64 * midrank;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Fraction of rows where `score > threshold` agrees with the label.
pub fn accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    check_dim(scores.len(), labels.len())?;
    if scores.is_empty() {
        return Err(Error::Argument("accuracy of an empty sample".into()));
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|&(&s, &l)| u8::from(s > threshold) == l)
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve points from the strictest threshold (+inf, nothing flagged)
/// down to the loosest, one point per distinct score.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>> {
    check_dim(scores.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::Argument("ROC curve needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: s,
            fpr: fp / neg,
            tpr: tp / pos,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute force over all (positive, negative) pairs.
    fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li == 1 && lj == 0 {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 5], &[0, 1, 0, 1, 1]).unwrap(), 0.5);
        let s = [0.1, 0.4, 0.35, 0.8];
        let l = [0, 0, 1, 1];
        assert_eq!(pairwise_auc(&s, &l), 0.75);
        assert_eq!(roc_auc(&s, &l).unwrap(), 0.75);
        assert!(roc_auc(&[0.1, 0.2], &[1, 1]).is_err());
    }

    #[test]
    fn accuracy_at_threshold() {
        assert_eq!(accuracy(&[0.2, 0.7, 0.6, 0.4], &[0, 1, 0, 0], 0.5).unwrap(), 0.75);
        assert!(accuracy(&[0.2], &[0, 1], 0.5).is_err());
    }

    #[test]
    fn curve_endpoints() {
        let pts = roc_curve(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap();
        assert_eq!((pts[0].fpr, pts[0].tpr), (0.0, 0.0));
        let last = pts.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert_eq!(pts.len(), 5);
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_count(raw in prop::collection::vec((0u8..6, any::<bool>()), 2..40)) {
            let scores: Vec<f64> = raw.iter().map(|&(s, _)| s as f64 / 5.0).collect();
            let labels: Vec<u8> = raw.iter().map(|&(_, l)| l as u8).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let fast = roc_auc(&scores, &labels).unwrap();
            prop_assert!((fast - pairwise_auc(&scores, &labels)).abs() < 1e-12);
        }

        #[test]
        fn curve_is_monotone(raw in prop::collection::vec((0u8..10, any::<bool>()), 2..40)) {
            let scores: Vec<f64> = raw.iter().map(|&(s, _)| s as f64).collect();
            let labels: Vec<u8> = raw.iter().map(|&(_, l)| l as u8).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let pts = roc_curve(&scores, &labels).unwrap();
            for w in pts.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            }
        }
    }
}

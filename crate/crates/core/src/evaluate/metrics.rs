//! Ranking metrics with default as the positive class.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::stats::fractional_ranks;

fn class_counts(labels: &[bool]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&d| d).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::single_class("AUC labels"));
    }
    Ok((pos, neg))
}

/// P(score of a defaulter > score of a non-defaulter) + half the tie
/// probability, from the Mann-Whitney rank sum.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = class_counts(labels)?;
    let ranks = fractional_ranks(scores);
    // Twice the rank sum is an integer, so this stays exact.
    let twice: f64 = ranks.iter().zip(labels).filter(|(_, &d)| d).map(|(r, _)| 2.0 * r).sum();
    let twice_u = twice - (pos * (pos + 1)) as f64;
    Ok(twice_u / (2 * pos * neg) as f64)
}

/// ROC points from the strictest threshold to the loosest, including (0, 0)
/// and ending at (1, 1).
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Row order by ascending score; ties keep row order.
fn ascending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order
}

/// Default rate among the ⌊q·n⌋ lowest-risk rows for q = 1/grid, ..., 1.
/// Grid points that accept nobody are omitted.
pub fn acceptance_curve(scores: &[f64], labels: &[bool], grid: usize) -> Result<Vec<(f64, f64)>> {
    class_counts(labels)?;
    let n = scores.len();
    let order = ascending(scores);
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0usize);
    for &i in &order {
        cum.push(cum.last().unwrap() + usize::from(labels[i]));
    }
    Ok((1..=grid)
        .filter_map(|k| {
            let m = k * n / grid;
            (m > 0).then(|| (k as f64 / grid as f64, cum[m] as f64 / m as f64))
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuintileTable {
    /// Default rate per score quintile, lowest risk first.
    pub rates: [f64; 5],
    pub counts: [usize; 5],
    /// Top over bottom quintile rate; `None` when the bottom rate is zero.
    pub ratio: Option<f64>,
}

pub fn quintile_ratio(scores: &[f64], labels: &[bool]) -> Result<QuintileTable> {
    let n = scores.len();
    if n < 5 {
        return Err(Error::InvalidInput(format!("quintiles need at least 5 rows, got {n}")));
    }
    let order = ascending(scores);
    let mut defaults = [0usize; 5];
    let mut counts = [0usize; 5];
    for (pos, &i) in order.iter().enumerate() {
        let q = 5 * pos / n;
        counts[q] += 1;
        defaults[q] += usize::from(labels[i]);
    }
    let rates = std::array::from_fn(|q| defaults[q] as f64 / counts[q] as f64);
    Ok(QuintileTable {
        rates,
        counts,
        ratio: (rates[0] > 0.0).then(|| rates[4] / rates[0]),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupAuc {
    pub group: String,
    pub n: usize,
    /// `None` when the group lacks one of the classes.
    pub auc: Option<f64>,
}

pub fn subgroup_auc(scores: &[f64], labels: &[bool], groups: &[String]) -> Vec<SubgroupAuc> {
    let mut rows: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        rows.entry(g.as_str()).or_default().push(i);
    }
    rows.into_iter()
        .map(|(g, idx)| {
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
            SubgroupAuc {
                group: g.to_string(),
                n: idx.len(),
                auc: auc(&s, &l).ok(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_counting_example() {
        let a = auc(&[0.9, 0.4, 0.5, 0.3], &[true, true, false, false]).unwrap();
        assert_eq!(a, 0.75);
        assert_eq!(auc(&[1.0; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn binary_scores_give_three_points() {
        let pts = roc_points(&[1.0, 0.0, 1.0, 0.0], &[true, false, false, true]).unwrap();
        assert_eq!(pts, vec![(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)]);
        let perfect = roc_points(&[0.9, 0.1], &[true, false]).unwrap();
        assert!(perfect.contains(&(0.0, 1.0)));
    }

    #[test]
    fn full_acceptance_is_base_rate() {
        let labels = [true, false, false, true, false, false, false];
        let c = acceptance_curve(&[0.3, 0.1, 0.2, 0.9, 0.4, 0.5, 0.6], &labels, 100).unwrap();
        let last = c.last().unwrap();
        assert_eq!(*last, (1.0, 2.0 / 7.0));
        assert!(c.iter().all(|p| p.0 >= 1.0 / 7.0 - 1e-12));
    }

    #[test]
    fn quintile_example() {
        // Ten rows, two per quintile; bottom quintile 1 of 2, top 2 of 2.
        let scores: Vec<f64> = (0..10).map(f64::from).collect();
        let labels = [true, false, false, false, true, false, false, true, true, true];
        let q = quintile_ratio(&scores, &labels).unwrap();
        assert_eq!(q.rates[0], 0.5);
        assert_eq!(q.rates[4], 1.0);
        assert_eq!(q.ratio, Some(2.0));
        let none = quintile_ratio(&scores, &[false, false, true, true, true, true, true, true, true, true]).unwrap();
        assert_eq!(none.ratio, None);
    }

    #[test]
    fn tiny_group_is_unreportable() {
        let g: Vec<String> = ["a", "a", "a", "b"].iter().map(|s| s.to_string()).collect();
        let r = subgroup_auc(&[0.9, 0.1, 0.5, 0.3], &[true, false, false, true], &g);
        assert_eq!(r[0].auc, Some(1.0));
        assert_eq!(r[1].auc, None);
    }
}

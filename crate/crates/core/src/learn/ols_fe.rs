//! Linear probability model with week-group fixed effects, fitted by the
//! within transformation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::linalg::Cholesky;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OlsFeFit {
    pub features: Vec<String>,
    pub coefficients: Vec<f64>,
    /// One effect per week group.
    pub effects: Vec<f64>,
    /// Loan share per week group, used to average effects at prediction.
    pub weights: Vec<f64>,
    pub rss: f64,
    pub log_likelihood: f64,
    pub n: usize,
    /// Features absorbed by the fixed effects or collinear with earlier
    /// features; their coefficient is fixed at 0.
    pub dropped: Vec<String>,
}

impl OlsFeFit {
    pub fn bic(&self) -> f64 {
        let k = self.features.len() - self.dropped.len() + self.effects.len();
        k as f64 * (self.n as f64).ln() - 2.0 * self.log_likelihood
    }

    /// x'b plus the weighted average fixed effect; unclamped.
    pub fn score_row(&self, x: impl Fn(usize) -> f64) -> f64 {
        let fe: f64 = self.effects.iter().zip(&self.weights).map(|(e, w)| e * w).sum();
        fe + self
            .coefficients
            .iter()
            .enumerate()
            .map(|(j, b)| if *b == 0.0 { 0.0 } else { b * x(j) })
            .sum::<f64>()
    }
}

fn group_means(v: &[f64], groups: &[usize], n_groups: usize) -> Vec<f64> {
    let mut sum = vec![0.0; n_groups];
    let mut cnt = vec![0usize; n_groups];
    for (x, &g) in v.iter().zip(groups) {
        sum[g] += x;
        cnt[g] += 1;
    }
    sum.iter()
        .zip(&cnt)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect()
}

fn demean(v: &[f64], groups: &[usize], n_groups: usize) -> Vec<f64> {
    let m = group_means(v, groups, n_groups);
    v.iter().zip(groups).map(|(x, &g)| x - m[g]).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fit `y = x'b + FE_group + e`. `groups[i]` indexes `weights`.
pub fn fit_ols_fe(
    names: &[String],
    columns: &[&[f64]],
    y: &[f64],
    groups: &[usize],
    weights: &[f64],
) -> Result<OlsFeFit> {
    let n = y.len();
    let g = weights.len();
    if n == 0 || g == 0 {
        return Err(Error::InvalidInput("fixed-effects fit on empty data".into()));
    }
    let yt = demean(y, groups, g);
    let xt: Vec<Vec<f64>> = columns.iter().map(|c| demean(c, groups, g)).collect();

    // Keep features one at a time while the within design stays full rank.
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..columns.len() {
        let own = dot(&xt[j], &xt[j]);
        let raw: f64 = {
            let m = columns[j].iter().sum::<f64>() / n as f64;
            columns[j].iter().map(|v| (v - m) * (v - m)).sum()
        };
        let mut trial = kept.clone();
        trial.push(j);
        let full_rank = own > 1e-12 * raw.max(f64::MIN_POSITIVE) && own > 0.0 && gram(&xt, &trial).is_some();
        if full_rank {
            kept = trial;
        } else {
            tracing::warn!(feature = %names[j], "feature collinear with week effects or other features; dropped");
            dropped.push(names[j].clone());
        }
    }

    let mut coefficients = vec![0.0; columns.len()];
    if !kept.is_empty() {
        let chol = gram(&xt, &kept).expect("checked full rank");
        let rhs: Vec<f64> = kept.iter().map(|&j| dot(&xt[j], &yt)).collect();
        for (b, &j) in chol.solve(&rhs).into_iter().zip(&kept) {
            coefficients[j] = b;
        }
    }
    let fitted_x: Vec<f64> = (0..n)
        .map(|i| kept.iter().map(|&j| coefficients[j] * columns[j][i]).sum())
        .collect();
    let resid_y: Vec<f64> = y.iter().zip(&fitted_x).map(|(a, b)| a - b).collect();
    let effects = group_means(&resid_y, groups, g);
    let rss: f64 = resid_y
        .iter()
        .zip(groups)
        .map(|(r, &gi)| (r - effects[gi]).powi(2))
        .sum();
    let sigma2 = (rss / n as f64).max(1e-300);
    let log_likelihood = -0.5 * n as f64 * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
    Ok(OlsFeFit {
        features: names.to_vec(),
        coefficients,
        effects,
        weights: weights.to_vec(),
        rss,
        log_likelihood,
        n,
        dropped,
    })
}

fn gram(xt: &[Vec<f64>], idx: &[usize]) -> Option<Cholesky> {
    let p = idx.len();
    let mut a = vec![0.0; p * p];
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate().take(r + 1) {
            let v = dot(&xt[i], &xt[j]);
            a[r * p + c] = v;
            a[c * p + r] = v;
        }
    }
    Cholesky::new(&a, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_group_is_ols_with_intercept() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let fit = fit_ols_fe(&["x".into()], &[&x], &y, &[0; 4], &[1.0]).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((fit.effects[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_effect_prediction() {
        let fit = OlsFeFit {
            features: vec!["x".into()],
            coefficients: vec![0.0],
            effects: vec![0.1, 0.2],
            weights: vec![0.6, 0.4],
            rss: 0.0,
            log_likelihood: 0.0,
            n: 2,
            dropped: vec![],
        };
        assert!((fit.score_row(|_| 5.0) - 0.14).abs() < 1e-15);
    }

    #[test]
    fn week_constant_feature_is_dropped() {
        let wk = [1.0, 1.0, 2.0, 2.0];
        let x = [0.3, 0.1, 0.7, 0.2];
        let y = [0.0, 1.0, 1.0, 0.0];
        let fit = fit_ols_fe(&["wk".into(), "x".into()], &[&wk, &x], &y, &[0, 0, 1, 1], &[0.5, 0.5]).unwrap();
        assert_eq!(fit.dropped, vec!["wk"]);
        assert_eq!(fit.coefficients[0], 0.0);
    }
}

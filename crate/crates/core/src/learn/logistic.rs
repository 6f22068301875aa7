//! Maximum-likelihood logistic regression by iteratively reweighted least
//! squares, fitted on internally standardized columns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::linalg::{weighted_normal_equations, Cholesky};

pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE: f64 = 1e-8;
pub const RIDGE: f64 = 1e-8;
/// Standardized coefficients beyond this size mean the likelihood has no
/// finite maximum.
const DIVERGENCE: f64 = 50.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub features: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Standard errors, intercept first.
    pub standard_errors: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// L2 penalty applied to stabilize a singular design, if any.
    pub ridge: Option<f64>,
    pub n: usize,
}

impl LogisticFit {
    pub fn bic(&self) -> f64 {
        bic(self.log_likelihood, self.coefficients.len() + 1, self.n)
    }

    pub fn linear_predictor(&self, row: impl Fn(usize) -> f64) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .enumerate()
                .map(|(j, b)| b * row(j))
                .sum::<f64>()
    }
}

pub fn bic(log_likelihood: f64, k: usize, n: usize) -> f64 {
    k as f64 * (n as f64).ln() - 2.0 * log_likelihood
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood of labels under linear predictors `eta`.
pub fn log_likelihood(eta: &[f64], y: &[bool]) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| if yi { e - softplus(e) } else { -softplus(e) })
        .sum()
}

fn linear(z: &[Vec<f64>], beta: &[f64], n: usize) -> Vec<f64> {
    let mut eta = vec![beta[0]; n];
    for (col, b) in z.iter().zip(&beta[1..]) {
        for (e, x) in eta.iter_mut().zip(col) {
            *e += b * x;
        }
    }
    eta
}

/// Fit P(y = 1) = sigmoid(b0 + x'b). `columns` are complete (no missing).
pub fn fit_logistic(names: &[String], columns: &[&[f64]], y: &[bool]) -> Result<LogisticFit> {
    let n = y.len();
    let p = columns.len();
    if n == 0 {
        return Err(Error::InvalidInput("logistic fit on zero rows".into()));
    }
    // Standardize; a constant column keeps scale 1 and is left to the ridge.
    let mut center = Vec::with_capacity(p);
    let mut scale = Vec::with_capacity(p);
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(p);
    for col in columns {
        let m = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        let s = if var > 0.0 { var.sqrt() } else { 1.0 };
        center.push(m);
        scale.push(s);
        z.push(col.iter().map(|v| (v - m) / s).collect());
    }

    let mut beta = vec![0.0; p + 1];
    let mut ridge: Option<f64> = None;
    let mut eta = linear(&z, &beta, n);
    let mut ll = log_likelihood(&eta, y);
    let mut converged = false;
    let mut iterations = 0;
    let mut last_step = vec![0.0; p + 1];

    let system = |eta: &[f64], beta: &[f64], ridge: Option<f64>| {
        let prob: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let w: Vec<f64> = prob.iter().map(|q| q * (1.0 - q)).collect();
        let resid: Vec<f64> = prob.iter().zip(y).map(|(q, &yi)| f64::from(u8::from(yi)) - q).collect();
        let ones = vec![1.0; n];
        let (mut h, _) = weighted_normal_equations(&z, &w, &ones, true);
        let (_, mut g) = weighted_normal_equations(&z, &ones, &resid, true);
        if let Some(l) = ridge {
            for j in 1..=p {
                h[j * (p + 1) + j] += l;
                g[j] -= l * beta[j];
            }
        }
        (h, g)
    };

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (h, g) = system(&eta, &beta, ridge);
        let Some(chol) = Cholesky::new(&h, p + 1) else {
            if ridge.is_none() && p > 0 {
                ridge = Some(RIDGE);
                tracing::warn!("singular logistic design; adding ridge penalty {RIDGE}");
                continue;
            }
            return Err(separation(names, &beta, &last_step));
        };
        let step = chol.solve(&g);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let cand_eta = linear(&z, &cand, n);
            let cand_ll = log_likelihood(&cand_eta, y);
            if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                accepted = Some((cand, cand_eta, cand_ll));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cand_eta, cand_ll)) = accepted else {
            converged = true;
            break;
        };
        last_step = step.iter().map(|s| s * t).collect();
        beta = cand;
        eta = cand_eta;
        ll = cand_ll;
        if last_step.iter().all(|s| s.abs() < TOLERANCE) {
            converged = true;
            break;
        }
        if beta[1..].iter().any(|b| b.abs() > DIVERGENCE) {
            break;
        }
    }
    if !converged || beta[1..].iter().any(|b| b.abs() > DIVERGENCE) {
        return Err(separation(names, &beta, &last_step));
    }

    let (h, _) = system(&eta, &beta, ridge);
    let cov = Cholesky::new(&h, p + 1)
        .map(|c| c.inverse())
        .ok_or_else(|| separation(names, &beta, &last_step))?;

    // Back to the original scale: b_j = b*_j / s_j, b0 = b*_0 - sum b*_j m_j / s_j.
    let a: Vec<f64> = (0..p).map(|j| center[j] / scale[j]).collect();
    let coefficients: Vec<f64> = (0..p).map(|j| beta[j + 1] / scale[j]).collect();
    let intercept = beta[0] - (0..p).map(|j| beta[j + 1] * a[j]).sum::<f64>();
    let q = p + 1;
    let mut var0 = cov[0];
    for j in 0..p {
        var0 -= 2.0 * a[j] * cov[j + 1];
        for k in 0..p {
            var0 += a[j] * a[k] * cov[(j + 1) * q + k + 1];
        }
    }
    let mut standard_errors = vec![var0.max(0.0).sqrt()];
    standard_errors.extend((0..p).map(|j| cov[(j + 1) * q + j + 1].max(0.0).sqrt() / scale[j]));

    Ok(LogisticFit {
        features: names.to_vec(),
        intercept,
        coefficients,
        standard_errors,
        log_likelihood: ll,
        iterations,
        ridge,
        n,
    })
}

fn separation(names: &[String], beta: &[f64], step: &[f64]) -> Error {
    let worst = (1..beta.len())
        .max_by(|&i, &j| {
            (beta[i].abs() + step[i].abs())
                .total_cmp(&(beta[j].abs() + step[j].abs()))
                .then(j.cmp(&i))
        })
        .map(|j| names[j - 1].clone())
        .unwrap_or_else(|| "(intercept)".into());
    Error::QuasiSeparation { feature: worst }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intercept_only_matches_log_odds() {
        let y: Vec<bool> = (0..100).map(|i| i < 30).collect();
        let fit = fit_logistic(&[], &[], &y).unwrap();
        assert!((fit.intercept - (0.3f64 / 0.7).ln()).abs() < 1e-10);
        assert!((fit.intercept + 0.8473).abs() < 1e-4);
    }

    #[test]
    fn bic_arithmetic() {
        let ll = 100.0 * 0.5f64.ln();
        assert!((bic(ll, 1, 100) - 143.235).abs() < 1e-3);
        assert_eq!(bic(0.0, 0, 10), 0.0);
        assert!((bic(-5.0, 3, 50) - bic(-5.0, 2, 50) - 50f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn perfect_separation_is_named() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let noise = [0.3, 0.1, 0.4, 0.1, 0.5, 0.9];
        let y = [false, false, false, true, true, true];
        let err = fit_logistic(&["sep".into(), "noise".into()], &[&x, &noise], &y).unwrap_err();
        match err {
            Error::QuasiSeparation { feature } => assert_eq!(feature, "sep"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sign_flip_symmetry() {
        let x = [0.5, 1.5, -0.3, 2.0, -1.0, 0.1, 0.7, -0.6];
        let y = [true, true, false, true, false, false, false, true];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let a = fit_logistic(&["x".into()], &[&x], &y).unwrap();
        let b = fit_logistic(&["x".into()], &[&neg], &y).unwrap();
        assert!((a.coefficients[0] + b.coefficients[0]).abs() < 1e-9);
        assert!((a.intercept - b.intercept).abs() < 1e-9);
    }

    #[test]
    fn duplicate_column_triggers_ridge() {
        let x = [0.5, 1.5, -0.3, 2.0, -1.0, 0.1, 0.7, -0.6];
        let y = [true, true, false, true, false, false, false, true];
        let fit = fit_logistic(&["x".into(), "x2".into()], &[&x, &x], &y).unwrap();
        assert_eq!(fit.ridge, Some(RIDGE));
        assert!((fit.coefficients[0] - fit.coefficients[1]).abs() < 1e-6);
    }
}

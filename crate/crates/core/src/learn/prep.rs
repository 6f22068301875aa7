//! Shared preprocessing: median imputation and univariate screening.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::featurize::stats::{pearson, quantile_sorted};
use crate::featurize::FeatureMatrix;

/// Per-column fill values learned on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Imputation {
    pub features: Vec<String>,
    pub constants: Vec<f64>,
}

/// Training medians of every column; an all-missing column gets 0 and a
/// warning.
pub fn fit_imputation(m: &FeatureMatrix, warnings: &mut Vec<String>) -> Imputation {
    let constants = m
        .names
        .iter()
        .zip(&m.columns)
        .map(|(name, col)| {
            let mut present: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
            if present.is_empty() {
                warnings.push(format!("column {name} is entirely missing in training; imputed as 0"));
                return 0.0;
            }
            present.sort_by(f64::total_cmp);
            quantile_sorted(&present, 0.5).expect("nonempty")
        })
        .collect();
    Imputation {
        features: m.names.clone(),
        constants,
    }
}

impl Imputation {
    /// Select the imputation's columns from `m` and fill missing cells.
    pub fn apply(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        let mut out = m.select(&self.features)?;
        for (col, &c) in out.columns.iter_mut().zip(&self.constants) {
            col.iter_mut().filter(|v| v.is_nan()).for_each(|v| *v = c);
        }
        Ok(out)
    }

    pub fn restrict(&self, names: &[String]) -> Imputation {
        let constants = names
            .iter()
            .map(|n| {
                let i = self
                    .features
                    .iter()
                    .position(|f| f == n)
                    .expect("feature known to imputation");
                self.constants[i]
            })
            .collect();
        Imputation {
            features: names.to_vec(),
            constants,
        }
    }
}

/// `fit_imputation` followed by `apply` on the same matrix.
pub fn impute(
    m: &FeatureMatrix,
    constants: Option<&Imputation>,
    warnings: &mut Vec<String>,
) -> Result<(FeatureMatrix, Imputation)> {
    let imp = match constants {
        Some(c) => c.clone(),
        None => fit_imputation(m, warnings),
    };
    Ok((imp.apply(m)?, imp))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreenedFeature {
    pub name: String,
    /// Point-biserial correlation with repayment (1 - default).
    pub r: Option<f64>,
    pub t: Option<f64>,
    pub infinite_t: bool,
}

impl ScreenedFeature {
    fn strength(&self) -> f64 {
        match (self.infinite_t, self.t) {
            (true, _) => f64::INFINITY,
            (false, Some(t)) => t.abs(),
            (false, None) => -1.0,
        }
    }
}

/// Rank features by |t| of their correlation with repayment over each
/// column's non-missing rows. Degenerate columns come last; ties keep name
/// order.
pub fn screen_univariate(m: &FeatureMatrix, default: &[bool]) -> Vec<ScreenedFeature> {
    let mut out: Vec<ScreenedFeature> = m
        .names
        .iter()
        .zip(&m.columns)
        .map(|(name, col)| {
            let (x, y): (Vec<f64>, Vec<f64>) = col
                .iter()
                .zip(default)
                .filter(|(v, _)| !v.is_nan())
                .map(|(v, d)| (*v, if *d { 0.0 } else { 1.0 }))
                .unzip();
            let n = x.len() as f64;
            let r = if x.len() >= 3 { pearson(&x, &y) } else { None };
            let (t, infinite_t) = match r {
                Some(r) if r.abs() >= 1.0 => (None, true),
                Some(r) => (Some(r * ((n - 2.0) / (1.0 - r * r)).sqrt()), false),
                None => (None, false),
            };
            ScreenedFeature {
                name: name.clone(),
                r,
                t,
                infinite_t,
            }
        })
        .collect();
    out.sort_by(|a, b| b.strength().total_cmp(&a.strength()).then_with(|| a.name.cmp(&b.name)));
    out
}

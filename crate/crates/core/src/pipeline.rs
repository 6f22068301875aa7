//! Glue between the stages: clip, featurize, label and split.

use crate::cdr::{clip_to_loan, EventStore, LoanTable};
use crate::error::{Error, Result};
use crate::featurize::{assemble_matrix, AssembleOptions, Assembled, FeatureMatrix, FeatureTaxonomy};
use crate::learn::{week_of, TrainingSet};

/// Feature matrix with the labels and loan weeks of its rows.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub features: Assembled,
    pub y: Vec<bool>,
    pub weeks: Vec<i64>,
}

impl Prepared {
    pub fn from_matrix(features: Assembled, loans: &LoanTable) -> Result<Prepared> {
        let (y, weeks) = labels_and_weeks(&features.matrix, loans)?;
        Ok(Prepared { features, y, weeks })
    }

    pub fn set(&self) -> TrainingSet<'_> {
        TrainingSet {
            x: &self.features.matrix,
            y: &self.y,
            weeks: &self.weeks,
        }
    }

    /// Rows restricted to covariate columns (and their missing flags).
    pub fn covariates_only(&self) -> Prepared {
        let mut features = self.features.clone();
        let keep: Vec<bool> = features.matrix.names.iter().map(|n| n.starts_with("Ext.")).collect();
        features.matrix.retain(&keep);
        features.meta.columns = features.matrix.n_cols();
        Prepared {
            features,
            y: self.y.clone(),
            weeks: self.weeks.clone(),
        }
    }
}

/// Default label and loan week of each matrix row.
pub fn labels_and_weeks(matrix: &FeatureMatrix, loans: &LoanTable) -> Result<(Vec<bool>, Vec<i64>)> {
    matrix
        .subscribers
        .iter()
        .map(|id| {
            loans
                .get(id)
                .map(|l| (l.default, week_of(l.loan_date)))
                .ok_or_else(|| Error::InvalidInput(format!("no loan record for subscriber {id}")))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().unzip())
}

/// Clip every history to before its loan and build the full matrix with
/// constant columns dropped.
pub fn featurize(
    taxonomy: &FeatureTaxonomy,
    store: &EventStore,
    loans: &LoanTable,
    permissive: bool,
) -> Result<Prepared> {
    let clipped = clip_to_loan(store, loans, permissive)?;
    let opts = AssembleOptions {
        drop_constant: true,
        universe: None,
    };
    Prepared::from_matrix(assemble_matrix(taxonomy, &clipped, loans, &opts)?, loans)
}

/// Usage quartile ("Q1".."Q4") of each row by pre-loan event count; ties
/// share the lower quartile.
pub fn usage_quartiles(store: &EventStore, matrix: &FeatureMatrix) -> Vec<String> {
    let counts: Vec<usize> = matrix
        .subscribers
        .iter()
        .map(|id| store.history(id).map_or(0, |h| h.events.len()))
        .collect();
    let mut sorted = counts.clone();
    sorted.sort_unstable();
    let n = sorted.len();
    counts
        .iter()
        .map(|c| {
            let below = sorted.partition_point(|v| v < c);
            format!("Q{}", 4 * below / n.max(1) + 1)
        })
        .collect()
}

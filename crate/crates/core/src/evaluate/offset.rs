//! Early/late split of loans and phone data for out-of-time evaluation.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::NaiveDate;

use crate::cdr::{midnight, EventStore, LoanTable, ObservationWindow, SECONDS_PER_DAY};
use crate::error::{Error, Result};
use crate::featurize::{assemble_matrix, AssembleOptions, Assembled, FeatureTaxonomy, Universe};

#[derive(Clone, Debug, PartialEq)]
pub struct OffsetPlan {
    /// Lower median of the loan dates.
    pub median: NaiveDate,
    /// True when median ties could not go early because every loan would
    /// have been early; the split then uses `date < median`.
    pub strict_split: bool,
    pub early: Vec<Arc<str>>,
    pub late: Vec<Arc<str>>,
    /// Unix seconds: span start, midpoint and end.
    pub span_start: i64,
    pub midpoint: i64,
    pub span_end: i64,
    /// Per-subscriber `[from, until)` window in unix seconds.
    pub windows: BTreeMap<Arc<str>, (i64, i64)>,
    /// Late loans dated on or before the midpoint.
    pub empty_late: Vec<Arc<str>>,
}

impl OffsetPlan {
    pub fn is_early(&self, id: &str) -> bool {
        self.early.binary_search_by(|e| e.as_ref().cmp(id)).is_ok()
    }
}

/// Split loans at the median date (ties early) and the phone data at the
/// midpoint of the observation span.
pub fn build_offset(loans: &LoanTable, window: ObservationWindow) -> Result<OffsetPlan> {
    let mut dates: Vec<NaiveDate> = loans.iter().map(|l| l.loan_date).collect();
    dates.sort();
    dates.dedup();
    if dates.len() < 2 {
        return Err(Error::InvalidInput(
            "offset split needs at least 2 distinct loan dates".into(),
        ));
    }
    let mut all: Vec<NaiveDate> = loans.iter().map(|l| l.loan_date).collect();
    all.sort();
    let median = all[(all.len() - 1) / 2];
    let strict_split = loans.iter().all(|l| l.loan_date <= median);
    let goes_early = |d: NaiveDate| if strict_split { d < median } else { d <= median };

    let span_start = window.start.timestamp();
    let span_end = window.end.timestamp();
    let days = (span_end - span_start).div_euclid(SECONDS_PER_DAY);
    let midpoint = span_start + days / 2 * SECONDS_PER_DAY;

    let mut plan = OffsetPlan {
        median,
        strict_split,
        early: Vec::new(),
        late: Vec::new(),
        span_start,
        midpoint,
        span_end,
        windows: BTreeMap::new(),
        empty_late: Vec::new(),
    };
    for loan in loans.iter() {
        let cutoff = midnight(loan.loan_date).timestamp();
        let id = loan.subscriber_id.clone();
        let win = if goes_early(loan.loan_date) {
            plan.early.push(id.clone());
            (span_start, cutoff.min(midpoint))
        } else {
            plan.late.push(id.clone());
            if cutoff <= midpoint {
                plan.empty_late.push(id.clone());
            }
            (midpoint, cutoff.min(span_end))
        };
        plan.windows.insert(id, (win.0, win.1.max(win.0)));
    }
    if !plan.empty_late.is_empty() {
        tracing::warn!(
            count = plan.empty_late.len(),
            "late loans dated before the phone-data midpoint have empty offset windows"
        );
    }
    Ok(plan)
}

fn subset(loans: &LoanTable, ids: &[Arc<str>]) -> Result<LoanTable> {
    let records = ids.iter().filter_map(|id| loans.get(id).cloned()).collect();
    LoanTable::from_records(records, loans.covariate_names().to_vec())
}

/// Early and late feature matrices sharing one column layout.
#[derive(Clone, Debug)]
pub struct OffsetFeatures {
    pub early: Assembled,
    pub late: Assembled,
    pub early_loans: LoanTable,
    pub late_loans: LoanTable,
}

/// Featurize each loan on its own offset window. Categories are observed
/// across both halves; constant columns are judged on the early half only
/// and the late half is projected onto the surviving columns.
pub fn offset_features(
    taxonomy: &FeatureTaxonomy,
    clipped: &EventStore,
    loans: &LoanTable,
    plan: &OffsetPlan,
    drop_constant: bool,
) -> Result<OffsetFeatures> {
    let store = clipped.restrict(|h| {
        plan.windows
            .get(&h.id)
            .copied()
            .unwrap_or((plan.span_start, plan.span_start))
    });
    let universe = Universe::observe(taxonomy, &store);
    let opts = AssembleOptions {
        drop_constant: false,
        universe: Some(universe),
    };
    let early_loans = subset(loans, &plan.early)?;
    let late_loans = subset(loans, &plan.late)?;
    let mut early = assemble_matrix(taxonomy, &store, &early_loans, &opts)?;
    let mut late = assemble_matrix(taxonomy, &store, &late_loans, &opts)?;
    if drop_constant {
        let dropped = early.matrix.drop_constant_columns();
        let gone: std::collections::HashSet<&String> = dropped.iter().collect();
        let keep: Vec<bool> = late.matrix.names.iter().map(|n| !gone.contains(n)).collect();
        late.matrix.retain(&keep);
        for a in [&mut early, &mut late] {
            a.meta.dropped = dropped.clone();
            a.meta.columns = a.matrix.n_cols();
        }
    }
    Ok(OffsetFeatures {
        early,
        late,
        early_loans,
        late_loans,
    })
}

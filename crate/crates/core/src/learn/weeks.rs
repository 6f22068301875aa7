//! Loan-week bookkeeping for the week-aware model families.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Monday-aligned week number (weeks since the Monday before 1970-01-01).
pub fn week_of(date: NaiveDate) -> i64 {
    let epoch_monday = NaiveDate::from_ymd_opt(1969, 12, 29).expect("valid date");
    date.signed_duration_since(epoch_monday).num_days().div_euclid(7)
}

/// Consecutive loan weeks merged into groups of adequate size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeekGroups {
    /// Week numbers in each group, ascending; groups are in time order.
    pub weeks: Vec<Vec<i64>>,
    pub counts: Vec<usize>,
}

impl WeekGroups {
    pub fn len(&self) -> usize {
        self.weeks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weeks.is_empty()
    }

    /// Group holding `week`; weeks outside every group map to the nearest
    /// group in time.
    pub fn group_of(&self, week: i64) -> usize {
        if let Some(g) = self.weeks.iter().position(|ws| ws.contains(&week)) {
            return g;
        }
        self.weeks
            .iter()
            .enumerate()
            .min_by_key(|(_, ws)| ws.iter().map(|w| (w - week).abs()).min().unwrap_or(i64::MAX))
            .map_or(0, |(g, _)| g)
    }

    /// Merge group `g` into its successor (or predecessor for the last).
    pub fn merge_with_neighbour(&mut self, g: usize) {
        if self.weeks.len() < 2 {
            return;
        }
        let other = if g + 1 < self.weeks.len() { g + 1 } else { g - 1 };
        let (lo, hi) = (g.min(other), g.max(other));
        let moved = self.weeks.remove(hi);
        let c = self.counts.remove(hi);
        self.weeks[lo].extend(moved);
        self.counts[lo] += c;
    }

    /// Loan share of each group, optionally decayed toward older groups:
    /// weight_g ∝ share_g · gamma^(last - g).
    pub fn weights(&self, gamma: f64) -> Vec<f64> {
        let last = self.counts.len().saturating_sub(1);
        let raw: Vec<f64> = self
            .counts
            .iter()
            .enumerate()
            .map(|(g, &c)| c as f64 * gamma.powi((last - g) as i32))
            .collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|r| r / total).collect()
    }
}

/// Group loan weeks left to right. A week below `min_loans` joins the group
/// before it; leading small weeks accumulate forward until the minimum is
/// met. Fewer than `min_loans` loans overall gives a single group.
pub fn merge_weeks(row_weeks: &[i64], min_loans: usize) -> WeekGroups {
    let mut tally: std::collections::BTreeMap<i64, usize> = Default::default();
    for &w in row_weeks {
        *tally.entry(w).or_default() += 1;
    }
    let mut groups = WeekGroups {
        weeks: Vec::new(),
        counts: Vec::new(),
    };
    let mut pending: (Vec<i64>, usize) = (Vec::new(), 0);
    for (week, count) in tally {
        if !pending.0.is_empty() || (groups.is_empty() && count < min_loans) {
            pending.0.push(week);
            pending.1 += count;
            if pending.1 >= min_loans {
                let (ws, c) = std::mem::take(&mut pending);
                groups.weeks.push(ws);
                groups.counts.push(c);
            }
        } else if count < min_loans {
            let last = groups.weeks.len() - 1;
            groups.weeks[last].push(week);
            groups.counts[last] += count;
        } else {
            groups.weeks.push(vec![week]);
            groups.counts.push(count);
        }
    }
    if !pending.0.is_empty() {
        groups.weeks.push(pending.0);
        groups.counts.push(pending.1);
    }
    groups
}

//! Summary statistics over bucketed series. Every function returns `None`
//! where the statistic is undefined for the input; nothing here fails.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

pub fn mean(x: &[f64]) -> Option<f64> {
    (!x.is_empty()).then(|| x.iter().sum::<f64>() / x.len() as f64)
}

fn is_constant(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(x: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    if is_constant(x) {
        return Some(0.0);
    }
    let m = mean(x)?;
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (x.len() - 1) as f64).sqrt())
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CentralDispersion {
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub sd: Option<f64>,
    pub max: Option<f64>,
    pub min: Option<f64>,
    /// One entry per requested percentile.
    pub quantiles: Vec<Option<f64>>,
    /// One entry per requested (upper, lower) percentile pair.
    pub spreads: Vec<Option<f64>>,
    /// Mean divided by SD; missing when SD is zero or missing.
    pub mean_over_sd: Option<f64>,
}

pub fn central_dispersion(x: &[f64], percentiles: &[u32], spreads: &[(u32, u32)]) -> CentralDispersion {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: u32| quantile_sorted(&sorted, p as f64 / 100.0);
    let mean = mean(x);
    let sd = sample_sd(x);
    CentralDispersion {
        mean,
        median: q(50),
        sd,
        max: sorted.last().copied(),
        min: sorted.first().copied(),
        quantiles: percentiles.iter().map(|&p| q(p)).collect(),
        spreads: spreads.iter().map(|&(a, b)| Some((q(a)? - q(b)?).max(0.0))).collect(),
        mean_over_sd: match (mean, sd) {
            (Some(m), Some(s)) if s > 0.0 => Some(m / s),
            _ => None,
        },
    }
}

/// OLS slope of value on bucket index 0, 1, 2, ...
pub fn slope(x: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let t_mean = (n - 1) as f64 / 2.0;
    let y_mean = mean(x)?;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in x.iter().enumerate() {
        let dt = i as f64 - t_mean;
        sxy += dt * (y - y_mean);
        sxx += dt * dt;
    }
    Some(sxy / sxx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CorrMethod {
    Pearson,
    Spearman,
}

impl CorrMethod {
    pub const ALL: [CorrMethod; 2] = [CorrMethod::Pearson, CorrMethod::Spearman];

    pub fn label(self) -> &'static str {
        match self {
            CorrMethod::Pearson => "Pearson",
            CorrMethod::Spearman => "Spearman",
        }
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 || is_constant(a) || is_constant(b) {
        return None;
    }
    let (ma, mb) = (mean(a)?, mean(b)?);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let denom = (saa * sbb).sqrt();
    (denom > 0.0).then(|| (sab / denom).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn correlation(a: &[f64], b: &[f64], method: CorrMethod) -> Option<f64> {
    match method {
        CorrMethod::Pearson => pearson(a, b),
        CorrMethod::Spearman => {
            if is_constant(a) || is_constant(b) {
                return None;
            }
            pearson(&fractional_ranks(a), &fractional_ranks(b))
        }
    }
}

/// Correlation of `a[t]` with `b[t - lag]` over the overlapping range;
/// requires at least three overlapping points.
pub fn lagged_correlation(a: &[f64], b: &[f64], lag: usize, method: CorrMethod) -> Option<f64> {
    let n = a.len().min(b.len());
    if n < lag + 3 {
        return None;
    }
    correlation(&a[lag..n], &b[..n - lag], method)
}

pub fn autocorrelation(x: &[f64], lag: usize, method: CorrMethod) -> Option<f64> {
    lagged_correlation(x, x, lag, method)
}

/// Ratio of totals; missing when the denominator total is zero.
pub fn ratio_of_totals(a: &[f64], b: &[f64]) -> Option<f64> {
    let sb: f64 = b.iter().sum();
    (sb != 0.0).then(|| a.iter().sum::<f64>() / sb)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Periodicity {
    /// Magnitude of the (r+1)-th largest non-DC bin, r = 0..ranks.
    pub magnitudes: Vec<Option<f64>>,
    pub ratio_rank0_rank2: Option<f64>,
    pub ratio_rank0_all_other: Option<f64>,
    pub ratio_weekly_all_other: Option<f64>,
    pub difference_rank0_rank1: Option<f64>,
}

pub const MIN_PERIODICITY_LEN: usize = 8;

/// Magnitudes at or below this fraction of the largest count as zero.
pub const SPECTRAL_NOISE: f64 = 1e-10;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

/// Magnitudes |X_k| for k = 1..=n/2 of the mean-removed series.
pub fn spectrum(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = mean(x).unwrap_or(0.0);
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - m, 0.0)).collect();
    plan(n).process(&mut buf);
    buf[1..=n / 2].iter().map(|c| c.norm()).collect()
}

/// Frequency-domain features. `weekly` enables the period-7 ratio, which is
/// only meaningful for daily buckets.
pub fn periodicity(x: &[f64], ranks: usize, weekly: bool) -> Periodicity {
    let missing = Periodicity {
        magnitudes: vec![None; ranks],
        ..Periodicity::default()
    };
    if x.len() < MIN_PERIODICITY_LEN || is_constant(x) {
        return missing;
    }
    let mut mags = spectrum(x);
    // Bins that are zero in exact arithmetic come out of the transform as
    // rounding noise; snap them so ratios against them stay undefined.
    let peak = mags.iter().copied().fold(0.0, f64::max);
    for m in &mut mags {
        if *m <= SPECTRAL_NOISE * peak {
            *m = 0.0;
        }
    }
    if mags.iter().all(|&m| m == 0.0) {
        return missing;
    }
    let mut order: Vec<usize> = (0..mags.len()).collect();
    // Descending magnitude; lower frequency first among equals.
    order.sort_by(|&i, &j| mags[j].total_cmp(&mags[i]).then(i.cmp(&j)));
    let rank = |r: usize| order.get(r).map(|&k| mags[k]);
    let others_than = |skip: usize| -> f64 {
        mags.iter()
            .enumerate()
            .filter(|&(k, _)| k != skip)
            .map(|(_, m)| m)
            .sum()
    };
    let div = |num: Option<f64>, den: Option<f64>| match (num, den) {
        (Some(a), Some(b)) if b != 0.0 => Some(a / b),
        _ => None,
    };

    let top = order[0];
    let weekly_ratio = weekly.then(|| {
        let n = x.len() as f64;
        let k = ((n / 7.0).round() as usize).clamp(1, mags.len());
        div(Some(mags[k - 1]), Some(others_than(k - 1)))
    });
    Periodicity {
        magnitudes: (0..ranks).map(rank).collect(),
        ratio_rank0_rank2: div(rank(0), rank(2)),
        ratio_rank0_all_other: div(rank(0), Some(others_than(top))),
        ratio_weekly_all_other: weekly_ratio.flatten(),
        difference_rank0_rank1: match (rank(0), rank(1)) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        },
    }
}

/// Category shares and Herfindahl-Hirschman index; `None` for a zero total.
pub fn shares_and_hhi(amounts: &[f64]) -> Option<(Vec<f64>, f64)> {
    let total: f64 = amounts.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let shares: Vec<f64> = amounts.iter().map(|a| a / total).collect();
    let hhi = shares.iter().map(|s| s * s).sum();
    Some((shares, hhi))
}

//! Repeated k-fold cross-validation and the per-family report slice.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::metrics::{
    acceptance_curve, auc, quintile_ratio, roc_points, subgroup_auc, QuintileTable, SubgroupAuc,
};
use crate::learn::{train, Family, LearnConfig, ModelArtifact, TrainingSet};

/// Row-to-fold assignment for each draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: usize,
    pub draws: usize,
    pub seed: u64,
    /// `assignment[draw][row]` is the fold holding `row` out.
    pub assignment: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Each draw shuffles the rows with its own ChaCha stream and deals them
    /// round-robin into folds.
    pub fn new(n: usize, folds: usize, draws: usize, seed: u64) -> Result<FoldPlan> {
        if folds < 2 || draws == 0 {
            return Err(Error::Config(format!(
                "need at least 2 folds and 1 draw, got {folds} folds and {draws} draws"
            )));
        }
        if n < folds {
            return Err(Error::InvalidInput(format!("{n} rows cannot fill {folds} folds")));
        }
        let assignment = (0..draws)
            .map(|d| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(d as u64);
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                let mut fold = vec![0; n];
                for (i, &row) in perm.iter().enumerate() {
                    fold[row] = i % folds;
                }
                fold
            })
            .collect();
        Ok(FoldPlan {
            folds,
            draws,
            seed,
            assignment,
        })
    }

    pub fn test_rows(&self, draw: usize, fold: usize) -> Vec<usize> {
        (0..self.assignment[draw].len())
            .filter(|&i| self.assignment[draw][i] == fold)
            .collect()
    }

    pub fn train_rows(&self, draw: usize, fold: usize) -> Vec<usize> {
        (0..self.assignment[draw].len())
            .filter(|&i| self.assignment[draw][i] != fold)
            .collect()
    }
}

/// Evaluation settings shared by every family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub folds: usize,
    pub draws: usize,
    /// Points on the acceptance and ROC grids.
    pub grid: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 5,
            draws: 10,
            grid: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldAuc {
    pub draw: usize,
    pub fold: usize,
    /// `None` when the held-out labels are single-class.
    pub auc: Option<f64>,
}

/// Mean and SD across draws at each grid point.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveBand {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl CurveBand {
    fn from_draws(x: Vec<f64>, draws: &[Vec<f64>]) -> CurveBand {
        let (mean, sd) = (0..x.len())
            .map(|k| {
                let v: Vec<f64> = draws.iter().map(|d| d[k]).collect();
                mean_sd(&v)
            })
            .unzip();
        CurveBand { x, mean, sd }
    }
}

/// Held-out results of one family on one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub family: Family,
    /// "cv" or "out_of_time".
    pub sample: String,
    pub folds: Vec<FoldAuc>,
    /// Mean fold AUC within each draw.
    pub draw_auc: Vec<f64>,
    pub auc_mean: f64,
    pub auc_sd: f64,
    pub roc: CurveBand,
    pub acceptance: CurveBand,
    pub quintiles: Option<QuintileTable>,
    pub subgroups: Vec<SubgroupAuc>,
    pub warnings: Vec<String>,
}

/// Population mean and sample SD (0 for fewer than two values).
pub(crate) fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (m, (ss / (v.len() - 1) as f64).sqrt())
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Training seed for one (draw, fold) cell.
pub fn fold_seed(seed: u64, draw: usize, fold: usize) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ draw as u64) ^ fold as u64)
}

fn single_class(y: &[bool]) -> bool {
    y.iter().all(|&v| v) || !y.iter().any(|&v| v)
}

/// Fit on `train_rows`, score `test_rows`.
fn fit_and_score(
    family: Family,
    set: &TrainingSet<'_>,
    train_rows: &[usize],
    test_rows: &[usize],
    config: &LearnConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let x = set.x.select_rows(train_rows);
    let y: Vec<bool> = train_rows.iter().map(|&i| set.y[i]).collect();
    let weeks: Vec<i64> = train_rows.iter().map(|&i| set.weeks[i]).collect();
    let train_set = TrainingSet {
        x: &x,
        y: &y,
        weeks: &weeks,
    };
    let model: ModelArtifact = train(family, &train_set, config, seed)?;
    model.score(&set.x.select_rows(test_rows))
}

/// TPR on an evenly spaced FPR grid by linear interpolation along the ROC
/// path; vertical steps take their upper end.
fn roc_on_grid(points: &[(f64, f64)], grid: usize) -> (Vec<f64>, Vec<f64>) {
    let xs: Vec<f64> = (0..=grid).map(|k| k as f64 / grid as f64).collect();
    let ys = xs
        .iter()
        .map(|&f| {
            points
                .windows(2)
                .filter(|w| w[0].0 <= f && f <= w[1].0)
                .map(|w| {
                    let (a, b) = (w[0], w[1]);
                    if b.0 == a.0 {
                        b.1
                    } else {
                        a.1 + (b.1 - a.1) * (f - a.0) / (b.0 - a.0)
                    }
                })
                .fold(0.0, f64::max)
        })
        .collect();
    (xs, ys)
}

/// Per-draw pooled metrics from the scored rows of one draw.
struct Pooled {
    roc: Vec<f64>,
    acceptance: Vec<(f64, f64)>,
    quintiles: Option<QuintileTable>,
    subgroups: Vec<SubgroupAuc>,
}

fn pooled_metrics(scores: &[f64], labels: &[bool], groups: Option<&[String]>, grid: usize) -> Option<Pooled> {
    let roc = roc_points(scores, labels).ok()?;
    Some(Pooled {
        roc: roc_on_grid(&roc, grid).1,
        acceptance: acceptance_curve(scores, labels, grid).ok()?,
        quintiles: quintile_ratio(scores, labels).ok(),
        subgroups: groups.map(|g| subgroup_auc(scores, labels, g)).unwrap_or_default(),
    })
}

/// Held-out rows of one cell and their scores (`None` when single-class).
type HeldOut = (Vec<usize>, Option<Vec<f64>>);

/// Fold-local train and score for every (draw, fold); nothing computed on a
/// held-out fold reaches the model that scores it.
pub fn cross_validate(
    family: Family,
    set: &TrainingSet<'_>,
    config: &LearnConfig,
    plan: &FoldPlan,
    groups: Option<&[String]>,
    grid: usize,
) -> Result<FamilyReport> {
    let n = set.y.len();
    if plan.assignment.iter().any(|a| a.len() != n) {
        return Err(Error::InvalidInput("fold plan does not match the training rows".into()));
    }
    let cells: Vec<(usize, usize)> = (0..plan.draws)
        .flat_map(|d| (0..plan.folds).map(move |f| (d, f)))
        .collect();
    let results: Vec<Result<HeldOut>> = cells
        .par_iter()
        .map(|&(d, f)| {
            let test = plan.test_rows(d, f);
            let y_test: Vec<bool> = test.iter().map(|&i| set.y[i]).collect();
            if single_class(&y_test) {
                return Ok((test, None));
            }
            let train_rows = plan.train_rows(d, f);
            let scores = fit_and_score(family, set, &train_rows, &test, config, fold_seed(plan.seed, d, f))?;
            Ok((test, Some(scores)))
        })
        .collect();

    let mut warnings = Vec::new();
    let mut folds = Vec::with_capacity(cells.len());
    let mut per_draw: Vec<(Vec<f64>, Vec<usize>, Vec<f64>)> = vec![(Vec::new(), Vec::new(), Vec::new()); plan.draws];
    for (&(d, f), r) in cells.iter().zip(results) {
        let (test, scores) = r?;
        let fold_auc = match scores {
            None => {
                warnings.push(format!(
                    "draw {d} fold {f}: held-out labels are single-class; fold skipped"
                ));
                None
            }
            Some(s) => {
                let y_test: Vec<bool> = test.iter().map(|&i| set.y[i]).collect();
                let a = auc(&s, &y_test)?;
                let slot = &mut per_draw[d];
                slot.0.push(a);
                slot.1.extend_from_slice(&test);
                slot.2.extend_from_slice(&s);
                Some(a)
            }
        };
        folds.push(FoldAuc {
            draw: d,
            fold: f,
            auc: fold_auc,
        });
    }

    let mut draw_auc = Vec::new();
    let mut pooled = Vec::new();
    for (d, (aucs, rows, scores)) in per_draw.into_iter().enumerate() {
        if aucs.is_empty() {
            warnings.push(format!("draw {d}: every fold skipped"));
            continue;
        }
        draw_auc.push(aucs.iter().sum::<f64>() / aucs.len() as f64);
        // Restore row order so pooled metrics do not depend on fold order.
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by_key(|&k| rows[k]);
        let s: Vec<f64> = order.iter().map(|&k| scores[k]).collect();
        let y: Vec<bool> = order.iter().map(|&k| set.y[rows[k]]).collect();
        let g: Option<Vec<String>> = groups.map(|g| order.iter().map(|&k| g[rows[k]].clone()).collect());
        if let Some(p) = pooled_metrics(&s, &y, g.as_deref(), grid) {
            pooled.push(p);
        }
    }
    if draw_auc.is_empty() {
        return Err(Error::single_class(format!(
            "{family} cross-validation: no fold could be scored"
        )));
    }
    for w in &warnings {
        tracing::warn!(family = %family, "{w}");
    }
    let (auc_mean, auc_sd) = mean_sd(&draw_auc);
    Ok(FamilyReport {
        family,
        sample: "cv".into(),
        folds,
        draw_auc,
        auc_mean,
        auc_sd,
        ..summarize(&pooled, grid, warnings)
    })
}

/// Merge per-draw pooled metrics into bands and averaged tables.
fn summarize(pooled: &[Pooled], grid: usize, warnings: Vec<String>) -> FamilyReport {
    let fpr: Vec<f64> = (0..=grid).map(|k| k as f64 / grid as f64).collect();
    let roc = CurveBand::from_draws(fpr, &pooled.iter().map(|p| p.roc.clone()).collect::<Vec<_>>());
    let acc_x: Vec<f64> = pooled
        .first()
        .map(|p| p.acceptance.iter().map(|a| a.0).collect())
        .unwrap_or_default();
    let acceptance = CurveBand::from_draws(
        acc_x,
        &pooled
            .iter()
            .map(|p| p.acceptance.iter().map(|a| a.1).collect())
            .collect::<Vec<_>>(),
    );
    let tables: Vec<&QuintileTable> = pooled.iter().filter_map(|p| p.quintiles.as_ref()).collect();
    let quintiles = (!tables.is_empty()).then(|| {
        let rates: [f64; 5] =
            std::array::from_fn(|q| tables.iter().map(|t| t.rates[q]).sum::<f64>() / tables.len() as f64);
        QuintileTable {
            rates,
            counts: tables[0].counts,
            ratio: (rates[0] > 0.0).then(|| rates[4] / rates[0]),
        }
    });
    let mut subgroups: Vec<SubgroupAuc> = Vec::new();
    if let Some(first) = pooled.first() {
        for (k, g) in first.subgroups.iter().enumerate() {
            let vals: Vec<f64> = pooled
                .iter()
                .filter_map(|p| p.subgroups.get(k).and_then(|s| s.auc))
                .collect();
            subgroups.push(SubgroupAuc {
                group: g.group.clone(),
                n: g.n,
                auc: (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64),
            });
        }
    }
    FamilyReport {
        family: Family::Rf,
        sample: String::new(),
        folds: Vec::new(),
        draw_auc: Vec::new(),
        auc_mean: f64::NAN,
        auc_sd: f64::NAN,
        roc,
        acceptance,
        quintiles,
        subgroups,
        warnings,
    }
}

/// Fit on `early`, score `late`: a single split with no fold draws.
pub fn out_of_time_eval(
    family: Family,
    early: &TrainingSet<'_>,
    late: &TrainingSet<'_>,
    config: &LearnConfig,
    groups: Option<&[String]>,
    grid: usize,
    seed: u64,
) -> Result<FamilyReport> {
    if single_class(early.y) {
        return Err(Error::single_class(format!("{family} out-of-time: early loans")));
    }
    if single_class(late.y) {
        return Err(Error::single_class(format!("{family} out-of-time: late loans")));
    }
    let model = train(family, early, config, seed)?;
    let scores = model.score(late.x)?;
    let a = auc(&scores, late.y)?;
    let pooled: Vec<Pooled> = pooled_metrics(&scores, late.y, groups, grid).into_iter().collect();
    Ok(FamilyReport {
        family,
        sample: "out_of_time".into(),
        folds: vec![FoldAuc {
            draw: 0,
            fold: 0,
            auc: Some(a),
        }],
        draw_auc: vec![a],
        auc_mean: a,
        auc_sd: 0.0,
        ..summarize(&pooled, grid, model.warnings.clone())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_rows_evenly() {
        let plan = FoldPlan::new(23, 5, 3, 7).unwrap();
        for d in 0..3 {
            let sizes: Vec<usize> = (0..5).map(|f| plan.test_rows(d, f).len()).collect();
            assert_eq!(sizes.iter().sum::<usize>(), 23);
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
        assert_ne!(plan.assignment[0], plan.assignment[1]);
        assert_eq!(plan, FoldPlan::new(23, 5, 3, 7).unwrap());
    }

    #[test]
    fn roc_grid_interpolates() {
        let pts = [(0.0, 0.0), (0.0, 0.5), (1.0, 1.0)];
        let (_, y) = roc_on_grid(&pts, 4);
        assert_eq!(y, vec![0.5, 0.625, 0.75, 0.875, 1.0]);
    }

    #[test]
    fn fold_seeds_differ() {
        assert_ne!(fold_seed(1, 0, 1), fold_seed(1, 1, 0));
        assert_eq!(fold_seed(9, 2, 3), fold_seed(9, 2, 3));
    }
}

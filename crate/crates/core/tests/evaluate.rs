use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cdrscore::cdr::{
    clip_to_loan, AccountType, CalendarConfig, Country, EventRecord, EventStore, EventType, LoanRecord, LoanTable,
    ObservationWindow, Tower,
};
use cdrscore::evaluate::metrics::{acceptance_curve, auc, quintile_ratio, roc_points, subgroup_auc, trapezoid};
use cdrscore::evaluate::{
    build_offset, cross_validate, cross_validate_all, offset_features, out_of_time_eval, write_report, EvalConfig,
    EvalReport, FoldPlan,
};
use cdrscore::featurize::{FeatureMatrix, FeatureTaxonomy};
use cdrscore::learn::{Family, LearnConfig, TrainingSet};

/// Fraction of (positive, negative) pairs ranked correctly, ties half.
fn pair_auc(s: &[f64], y: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] && !y[j] {
                den += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

fn both_classes() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (3usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec((0i32..12).prop_map(f64::from), n),
            prop::collection::vec(any::<bool>(), n - 2).prop_map(|mut y| {
                y.push(true);
                y.push(false);
                y
            }),
        )
    })
}

#[test]
fn auc_worked_examples() {
    let y = [true, true, false, false];
    assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &y).unwrap(), 1.0);
    assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &y).unwrap(), 0.0);
    assert_eq!(auc(&[0.5; 4], &y).unwrap(), 0.5);
    assert_eq!(auc(&[0.9, 0.3, 0.5, 0.1], &y).unwrap(), 0.75);
    assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
}

proptest! {
    #[test]
    fn auc_matches_pair_counting((s, y) in both_classes()) {
        let a = auc(&s, &y).unwrap();
        prop_assert!((a - pair_auc(&s, &y)).abs() < 1e-12);
    }

    #[test]
    fn negated_scores_complement((s, y) in both_classes()) {
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((auc(&s, &y).unwrap() + auc(&neg, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_transform_keeps_auc((s, y) in both_classes()) {
        let t: Vec<f64> = s.iter().map(|v| (v * 0.3).exp() + 2.0 * v).collect();
        prop_assert_eq!(auc(&s, &y).unwrap(), auc(&t, &y).unwrap());
    }

    #[test]
    fn roc_is_monotone_and_integrates_to_auc((s, y) in both_classes()) {
        let pts = roc_points(&s, &y).unwrap();
        prop_assert_eq!(pts[0], (0.0, 0.0));
        prop_assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
        for w in pts.windows(2) {
            prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
        prop_assert!((trapezoid(&pts) - auc(&s, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn acceptance_accepts_lowest_scores((s, y) in both_classes(), grid in 1usize..20) {
        let curve = acceptance_curve(&s, &y, grid).unwrap();
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
        for (share, rate) in curve {
            let m = (share * grid as f64).round() as usize * s.len() / grid;
            prop_assert!(m >= 1);
            let d = order[..m].iter().filter(|&&i| y[i]).count();
            prop_assert!((rate - d as f64 / m as f64).abs() < 1e-12);
        }
    }
}

#[test]
fn acceptance_curve_rises_for_anti_aligned_scores() {
    let n = 500;
    let y: Vec<bool> = (0..n).map(|i| i % 4 == 0).collect();
    // Defaulters get the highest scores: acceptance adds them last.
    let s: Vec<f64> = (0..n)
        .map(|i| if y[i] { 1.0 + i as f64 } else { i as f64 / n as f64 })
        .collect();
    let curve = acceptance_curve(&s, &y, 50).unwrap();
    for w in curve.windows(2) {
        assert!(w[1].1 >= w[0].1 - 1e-12);
    }
    assert_eq!(curve[0].1, 0.0);
}

#[test]
fn acceptance_curve_is_flat_for_random_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 10_000;
    let y: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.2).collect();
    let s: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let p = y.iter().filter(|&&v| v).count() as f64 / n as f64;
    for (share, rate) in acceptance_curve(&s, &y, 100).unwrap() {
        let m = share * n as f64;
        let se = (p * (1.0 - p) / m * (1.0 - m / n as f64)).sqrt();
        assert!((rate - p).abs() <= 4.0 * se + 1e-12, "share {share} rate {rate}");
    }
}

#[test]
fn quintile_ratio_is_near_one_for_random_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let trials = 1000;
    let mut total = 0.0;
    for _ in 0..trials {
        let y: Vec<bool> = (0..1000).map(|_| rng.random::<f64>() < 0.3).collect();
        let s: Vec<f64> = (0..1000).map(|_| rng.random()).collect();
        total += quintile_ratio(&s, &y).unwrap().ratio.unwrap();
    }
    let mean = total / trials as f64;
    assert!((mean - 1.0).abs() <= 0.1, "mean ratio {mean}");
}

#[test]
fn quintile_ratio_is_undefined_without_bottom_defaults() {
    let s: Vec<f64> = (0..10).map(f64::from).collect();
    let y: Vec<bool> = (0..10).map(|i| i >= 8).collect();
    let q = quintile_ratio(&s, &y).unwrap();
    assert_eq!(q.counts, [2; 5]);
    assert_eq!(q.rates, [0.0, 0.0, 0.0, 0.0, 1.0]);
    assert_eq!(q.ratio, None);
}

#[test]
fn subgroups_report_per_group_and_flag_single_class() {
    let s = [0.9, 0.1, 0.8, 0.2, 0.7, 0.3];
    let y = [true, false, true, false, true, true];
    let g: Vec<String> = ["a", "a", "b", "b", "c", "c"].iter().map(|v| v.to_string()).collect();
    let sub = subgroup_auc(&s, &y, &g);
    assert_eq!(sub.len(), 3);
    assert_eq!(sub[0].auc, Some(1.0));
    assert_eq!(sub[1].auc, Some(1.0));
    assert_eq!(sub[2].auc, None);
}

fn matrix(cols: Vec<(&str, Vec<f64>)>) -> FeatureMatrix {
    let n = cols[0].1.len();
    FeatureMatrix {
        subscribers: (0..n).map(|i| Arc::from(format!("s{i:05}"))).collect(),
        names: cols.iter().map(|c| c.0.to_string()).collect(),
        columns: cols.into_iter().map(|c| c.1).collect(),
    }
}

fn small_forest() -> LearnConfig {
    let mut c = LearnConfig::default();
    c.forest.trees = 100;
    c
}

#[test]
fn label_copy_is_recovered_by_cross_validation() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 600;
    let y: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.3).collect();
    let x = matrix(vec![
        ("leak", y.iter().map(|&v| f64::from(u8::from(v))).collect()),
        ("noise", (0..n).map(|_| rng.random()).collect()),
    ]);
    let weeks = vec![0i64; n];
    let set = TrainingSet {
        x: &x,
        y: &y,
        weeks: &weeks,
    };
    let eval = EvalConfig {
        folds: 5,
        draws: 2,
        grid: 20,
    };
    let r = cross_validate_all(&[Family::Rf], &set, &small_forest(), &eval, 5, None).unwrap();
    assert!(r[0].auc_mean > 0.99, "{}", r[0].auc_mean);
}

#[test]
fn pure_noise_cross_validates_near_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let n = 1000;
    let y: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.3).collect();
    let cols = (0..5)
        .map(|k| (["a", "b", "c", "d", "e"][k], (0..n).map(|_| rng.random()).collect()))
        .collect();
    let x = matrix(cols);
    let weeks = vec![0i64; n];
    let set = TrainingSet {
        x: &x,
        y: &y,
        weeks: &weeks,
    };
    let eval = EvalConfig {
        folds: 5,
        draws: 3,
        grid: 20,
    };
    let r = cross_validate_all(
        &[Family::Rf, Family::LogitStepwise],
        &set,
        &small_forest(),
        &eval,
        6,
        None,
    )
    .unwrap();
    for f in &r {
        assert!((f.auc_mean - 0.5).abs() <= 0.03, "{}: {}", f.family, f.auc_mean);
        assert_eq!(f.draw_auc.len(), 3);
        assert_eq!(f.folds.len(), 15);
    }
}

#[test]
fn fold_plans_partition_rows_and_repeat() {
    let plan = FoldPlan::new(103, 5, 4, 9).unwrap();
    assert_eq!(plan, FoldPlan::new(103, 5, 4, 9).unwrap());
    assert_ne!(plan.assignment[0], plan.assignment[1]);
    for d in 0..4 {
        let mut all: Vec<usize> = (0..5).flat_map(|f| plan.test_rows(d, f)).collect();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        for f in 0..5 {
            let t = plan.test_rows(d, f).len();
            assert!((20..=21).contains(&t));
            assert_eq!(plan.train_rows(d, f).len() + t, 103);
        }
    }
}

#[test]
fn cross_validation_is_deterministic_and_writes_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let n = 300;
    let signal: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let y: Vec<bool> = signal.iter().map(|&s| rng.random::<f64>() < 0.05 + 0.9 * s).collect();
    let x = matrix(vec![
        ("signal", signal),
        ("noise", (0..n).map(|_| rng.random()).collect()),
    ]);
    let weeks: Vec<i64> = (0..n as i64).map(|i| i % 6).collect();
    let groups: Vec<String> = (0..n).map(|i| format!("Q{}", i % 4 + 1)).collect();
    let set = TrainingSet {
        x: &x,
        y: &y,
        weeks: &weeks,
    };
    let eval = EvalConfig {
        folds: 5,
        draws: 2,
        grid: 10,
    };
    let mut learn = small_forest();
    learn.min_week_loans = 20;
    let run = || cross_validate_all(&Family::ALL, &set, &learn, &eval, 8, Some(&groups)).unwrap();
    let a = run();
    assert_eq!(a, run());
    let plan = FoldPlan::new(n, 5, 2, 8).unwrap();
    assert_eq!(
        a[1],
        cross_validate(Family::LogitStepwise, &set, &learn, &plan, Some(&groups), 10).unwrap()
    );
    for r in &a {
        assert!(r.auc_mean > 0.6, "{}: {}", r.family, r.auc_mean);
        assert_eq!(r.roc.x.len(), 11);
        assert_eq!(r.subgroups.len(), 4);
    }

    let report = EvalReport {
        config: serde_json::json!({ "seed": 8 }),
        default_rate: y.iter().filter(|&&v| v).count() as f64 / n as f64,
        results: a,
    };
    let dir = tempfile::tempdir().unwrap();
    let written = write_report(&report, dir.path(), true).unwrap();
    let names: Vec<String> = written
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    for f in [
        "report.json",
        "roc.csv",
        "acceptance.csv",
        "quintiles.csv",
        "subgroups.csv",
        "roc.svg",
        "acceptance.svg",
    ] {
        assert!(names.iter().any(|n| n == f), "{f}");
    }
    let back: EvalReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(back, report);
    let roc = std::fs::read_to_string(dir.path().join("roc.csv")).unwrap();
    assert_eq!(roc.lines().count(), 1 + 4 * 11);
}

fn day(d: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, 1, 4).unwrap() + Duration::days(d)
}

fn event(sub: &str, d: i64, k: u32) -> EventRecord {
    EventRecord {
        subscriber_id: sub.into(),
        timestamp: Utc.from_utc_datetime(&day(d).and_hms_opt(9 + k % 10, 0, 0).unwrap()),
        event_type: if k.is_multiple_of(2) {
            EventType::CallOut
        } else {
            EventType::SmsIn
        },
        duration: k.is_multiple_of(2).then_some(60 + k),
        counterparty_id: Some(format!("p{}", k % 3).into()),
        counterparty_account: AccountType::Prepaid,
        counterparty_country: Country::Unknown,
        tower: Some(Tower { lat: 4.6, lon: -74.0 }),
    }
}

fn loan(sub: &str, d: i64, default: bool) -> LoanRecord {
    LoanRecord {
        subscriber_id: sub.into(),
        loan_date: day(d),
        default,
        covariates: BTreeMap::new(),
    }
}

#[test]
fn late_loan_without_late_activity_gets_missing_features() {
    // Activity stops on day 50; the span midpoint is day 50.
    let mut recs = Vec::new();
    for s in ["s0", "s1", "s2", "s3"] {
        for d in 0..50 {
            for k in 0..3 {
                recs.push(event(s, d, k + d as u32));
            }
        }
    }
    let window = ObservationWindow::days(day(0), day(100)).unwrap();
    let (store, _) = EventStore::from_records(recs, window, Arc::new(CalendarConfig::default()));
    let loans = LoanTable::from_records(
        vec![
            loan("s0", 10, true),
            loan("s1", 20, false),
            loan("s2", 30, true),
            loan("s3", 60, false),
        ],
        vec![],
    )
    .unwrap();
    let clipped = clip_to_loan(&store, &loans, false).unwrap();
    let plan = build_offset(&loans, window).unwrap();
    assert_eq!(plan.median, day(20));
    assert_eq!(plan.late, vec![Arc::from("s2"), Arc::from("s3")]);
    assert_eq!(plan.empty_late, vec![Arc::from("s2")]);
    for (id, &(from, until)) in &plan.windows {
        let cutoff = loans
            .get(id)
            .unwrap()
            .loan_date
            .and_hms_opt(0, 0, 0)
            .unwrap()
            .and_utc()
            .timestamp();
        assert!(until <= cutoff || from == until);
        if plan.is_early(id) {
            assert!(until <= plan.midpoint);
        } else {
            assert!(from >= plan.midpoint);
        }
    }

    let off = offset_features(&FeatureTaxonomy::compact(), &clipped, &loans, &plan, false).unwrap();
    let m = &off.late.matrix;
    let row = m.subscribers.iter().position(|s| &**s == "s3").unwrap();
    for (name, col) in m.names.iter().zip(&m.columns) {
        if name.ends_with(".missing") {
            assert_eq!(col[row], 1.0, "{name}");
        } else {
            assert!(col[row].is_nan(), "{name}");
        }
    }
    assert_eq!(off.early.matrix.names, off.late.matrix.names);
    let early_row = off.early.matrix.subscribers.iter().position(|s| &**s == "s1").unwrap();
    assert!(off
        .early
        .matrix
        .columns
        .iter()
        .any(|c| c[early_row].is_finite() && c[early_row] > 0.0));
}

#[test]
fn out_of_time_rejects_single_class_halves() {
    let x = matrix(vec![("a", vec![0.1, 0.2, 0.3, 0.4])]);
    let weeks = vec![0i64; 4];
    let mixed = [true, false, true, false];
    let same = [false; 4];
    let early = TrainingSet {
        x: &x,
        y: &mixed,
        weeks: &weeks,
    };
    let late = TrainingSet {
        x: &x,
        y: &same,
        weeks: &weeks,
    };
    assert!(out_of_time_eval(
        Family::LogitStepwise,
        &early,
        &late,
        &LearnConfig::default(),
        None,
        10,
        1
    )
    .is_err());
    assert!(out_of_time_eval(
        Family::LogitStepwise,
        &late,
        &early,
        &LearnConfig::default(),
        None,
        10,
        1
    )
    .is_err());
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn config(dir: &Path, extra: &str) -> String {
    let text = format!(
        r#"seed = 17
families = ["rf", "logit", "rf_weekly", "ols_fe"]
{extra}
[paths]
events = "data/events.csv"
loans = "data/loans.csv"
output = "out"

[features]
taxonomy = "compact"

[learn]
min_week_loans = 10
[learn.forest]
trees = 25

[eval]
folds = 3
draws = 2
grid = 20

[synth]
subscribers = 100
span_days = 70
loan_from_day = 21
"#
    );
    let path = dir.join("run.toml");
    fs::write(&path, &text).unwrap();
    text
}

fn cdrscore(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdrscore"))
        .args(args)
        .arg("--config")
        .arg(dir.join("run.toml"))
        .output()
        .unwrap()
}

fn ok(o: &Output) -> String {
    assert!(
        o.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status,
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_writes_three_files_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), "");
    ok(&cdrscore(dir.path(), &["synth"]));
    let read = |n: &str| fs::read(dir.path().join("data").join(n)).unwrap();
    let first: Vec<Vec<u8>> = ["events.csv", "loans.csv", "groundtruth.csv"]
        .iter()
        .map(|n| read(n))
        .collect();
    ok(&cdrscore(dir.path(), &["synth"]));
    for (i, n) in ["events.csv", "loans.csv", "groundtruth.csv"].iter().enumerate() {
        assert_eq!(first[i], read(n), "{n}");
    }
}

#[test]
fn missing_seed_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = config(dir.path(), "");
    fs::write(dir.path().join("run.toml"), text.replace("seed = 17", "")).unwrap();
    let o = cdrscore(dir.path(), &["synth"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed is required"), "{}", stderr(&o));
    assert!(!dir.path().join("data").exists());
}

#[test]
fn featurize_train_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), "");
    ok(&cdrscore(dir.path(), &["synth"]));
    let out = ok(&cdrscore(dir.path(), &["featurize"]));
    assert!(out.contains("features: 100 rows"), "{out}");
    let features = fs::read_to_string(dir.path().join("out/features.csv")).unwrap();
    assert_eq!(features.lines().count(), 101);

    let out = ok(&cdrscore(dir.path(), &["train"]));
    let models = dir.path().join("out/models");
    let first: Vec<String> = ["rf", "logit", "rf_weekly", "ols_fe"]
        .iter()
        .map(|f| fs::read_to_string(models.join(format!("{f}.json"))).unwrap())
        .collect();
    assert!(out.contains("data "), "{out}");
    ok(&cdrscore(dir.path(), &["train"]));
    for (i, f) in ["rf", "logit", "rf_weekly", "ols_fe"].iter().enumerate() {
        assert_eq!(first[i], fs::read_to_string(models.join(format!("{f}.json"))).unwrap());
    }

    let out = ok(&cdrscore(dir.path(), &["evaluate", "--plots"]));
    assert!(
        out.contains("model") && out.contains("AUC") && out.contains("rf_weekly"),
        "{out}"
    );
    for f in [
        "report.json",
        "roc.csv",
        "acceptance.csv",
        "quintiles.csv",
        "subgroups.csv",
        "roc.svg",
        "acceptance.svg",
    ] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }

    let o = cdrscore(dir.path(), &["evaluate", "--out-of-time"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("featurize --offset"), "{}", stderr(&o));
}

#[test]
fn offset_mode_enables_out_of_time_results() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), "");
    ok(&cdrscore(dir.path(), &["synth"]));
    ok(&cdrscore(dir.path(), &["featurize", "--offset"]));
    for f in ["features_early.csv", "features_late.csv", "offset.json"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
    let out = ok(&cdrscore(dir.path(), &["evaluate", "--out-of-time"]));
    assert!(out.contains("out_of_time") && out.contains("cv_early"), "{out}");
}

#[test]
fn unknown_family_lists_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let text = config(dir.path(), "");
    fs::write(dir.path().join("run.toml"), text.replace("\"ols_fe\"]", "\"svm\"]")).unwrap();
    let o = cdrscore(dir.path(), &["train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("svm") && stderr(&o).contains("rf, logit, rf_weekly, ols_fe"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn orphan_subscriber_fails_and_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), "");
    ok(&cdrscore(dir.path(), &["synth"]));
    let loans = dir.path().join("data/loans.csv");
    let text = fs::read_to_string(&loans).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let gone = lines.remove(5).split(',').next().unwrap().to_string();
    fs::write(&loans, lines.join("\n") + "\n").unwrap();
    let o = cdrscore(dir.path(), &["featurize"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(&gone), "{}", stderr(&o));
    assert!(!dir.path().join("out/features.csv").exists());
}

#[test]
fn missing_input_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), "");
    let o = cdrscore(dir.path(), &["featurize"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("does not exist"), "{}", stderr(&o));
}

#[test]
fn pipeline_report_is_identical_across_thread_counts() {
    let mut reports = Vec::new();
    for threads in ["1", "3"] {
        let dir = tempfile::tempdir().unwrap();
        config(dir.path(), "");
        let o = Command::new(env!("CARGO_BIN_EXE_cdrscore"))
            .args(["pipeline", "--config"])
            .arg(dir.path().join("run.toml"))
            .env("CDRSCORE_THREADS", threads)
            .output()
            .unwrap();
        ok(&o);
        reports.push(fs::read(dir.path().join("out/report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), "");
    let o = Command::new(env!("CARGO_BIN_EXE_cdrscore"))
        .args(["synth", "--config"])
        .arg(dir.path().join("run.toml"))
        .env("CDRSCORE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

//! Subcommand bodies.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use cdrscore::cdr::{clip_to_loan, ingest_events, ingest_loans, IngestOptions, LoanTable};
use cdrscore::evaluate::{
    auc_table, build_offset, cross_validate_all, offset_features, out_of_time_eval, write_report, EvalReport,
    FamilyReport,
};
use cdrscore::featurize::{assemble_matrix, AssembleOptions, Assembled, FeatureMatrix, FeatureMeta};
use cdrscore::learn::train;
use cdrscore::pipeline::{usage_quartiles, Prepared};
use cdrscore::synth::generate;

use crate::config::RunConfig;
use crate::failure::Failure;

const FEATURES: &str = "features";
const EARLY: &str = "features_early";
const LATE: &str = "features_late";
const USAGE: &str = "usage.csv";

/// Files written by one command; removed again unless the command commits.
struct Outputs {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn new() -> Outputs {
        Outputs {
            written: Vec::new(),
            committed: false,
        }
    }

    fn create(&mut self, path: &Path) -> Result<BufWriter<File>, Failure> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        }
        self.written.push(path.to_path_buf());
        let f = File::create(path).map_err(|e| io_failure(path, e))?;
        Ok(BufWriter::new(f))
    }

    fn write(&mut self, path: &Path, body: &str) -> Result<(), Failure> {
        let mut w = self.create(path)?;
        w.write_all(body.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| io_failure(path, e))
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(anyhow::anyhow!("{}: {e}", path.display()))
}

pub fn synth(run: &RunConfig) -> Result<(), Failure> {
    let config = run.synth_config()?;
    let data = generate(&config)?;
    let mut out = Outputs::new();
    let truth = run.paths.groundtruth();
    for p in [&run.paths.events, &run.paths.loans, &truth] {
        out.written.push(p.clone());
    }
    data.write_files(&run.paths.events, &run.paths.loans, &truth)?;
    out.commit();
    println!(
        "synth: {} subscribers, {} events, default rate {:.4} (intercept {:.4})",
        data.truth.len(),
        data.records.len(),
        data.loans.default_rate(),
        data.alpha
    );
    println!(
        "wrote {}, {}, {}",
        run.paths.events.display(),
        run.paths.loans.display(),
        truth.display()
    );
    Ok(())
}

fn write_features(out: &mut Outputs, dir: &Path, stem: &str, a: &Assembled) -> Result<(), Failure> {
    let csv = dir.join(format!("{stem}.csv"));
    a.matrix.write_csv(out.create(&csv)?)?;
    let meta = serde_json::to_string_pretty(&a.meta)? + "\n";
    out.write(&dir.join(format!("{stem}.meta.json")), &meta)
}

fn summarize(label: &str, a: &Assembled) {
    println!(
        "{label}: {} rows, {} columns ({} generated, {} constant dropped)",
        a.matrix.n_rows(),
        a.meta.columns,
        a.meta.columns_before_drop,
        a.meta.dropped.len()
    );
}

pub fn featurize(run: &RunConfig) -> Result<(), Failure> {
    run.check_inputs()?;
    let window = run.window()?;
    let opts = IngestOptions { strict: run.strict };
    let (store, report) = ingest_events(&run.paths.events, window, &run.calendar, opts)?;
    println!(
        "ingest: {} rows read, {} stored, {} outside the span, {} duplicates, {} malformed",
        report.rows_read,
        report.stored,
        report.excluded_out_of_window,
        report.duplicates_removed,
        report.malformed.len()
    );
    let loans = ingest_loans(&run.paths.loans)?;
    let clipped = clip_to_loan(&store, &loans, !run.strict)?;
    let assembled = assemble_matrix(
        &run.taxonomy,
        &clipped,
        &loans,
        &AssembleOptions {
            drop_constant: true,
            universe: None,
        },
    )?;

    let dir = &run.paths.output;
    let mut out = Outputs::new();
    write_features(&mut out, dir, FEATURES, &assembled)?;
    let mut usage = String::from("subscriber_id,usage_quartile\n");
    for (id, q) in assembled
        .matrix
        .subscribers
        .iter()
        .zip(usage_quartiles(&clipped, &assembled.matrix))
    {
        usage.push_str(&format!("{id},{q}\n"));
    }
    out.write(&dir.join(USAGE), &usage)?;
    summarize("features", &assembled);

    if run.offset {
        let plan = build_offset(&loans, window)?;
        let off = offset_features(&run.taxonomy, &clipped, &loans, &plan, true)?;
        write_features(&mut out, dir, EARLY, &off.early)?;
        write_features(&mut out, dir, LATE, &off.late)?;
        let ts = |s: i64| {
            chrono::DateTime::from_timestamp(s, 0)
                .map(|d| d.to_rfc3339())
                .unwrap_or_default()
        };
        let summary = json!({
            "median_loan_date": plan.median.to_string(),
            "strict_split": plan.strict_split,
            "span_start": ts(plan.span_start),
            "midpoint": ts(plan.midpoint),
            "span_end": ts(plan.span_end),
            "early_loans": plan.early.len(),
            "late_loans": plan.late.len(),
            "late_loans_with_empty_window": plan.empty_late.iter().map(|s| s.as_ref()).collect::<Vec<&str>>(),
        });
        out.write(
            &dir.join("offset.json"),
            &(serde_json::to_string_pretty(&summary)? + "\n"),
        )?;
        summarize("early features", &off.early);
        summarize("late features", &off.late);
        if !plan.empty_late.is_empty() {
            println!(
                "warning: {} late loans predate the phone-data midpoint",
                plan.empty_late.len()
            );
        }
    }
    out.commit();
    Ok(())
}

fn load_features(dir: &Path, stem: &str) -> Result<Assembled, Failure> {
    let csv = dir.join(format!("{stem}.csv"));
    let meta = dir.join(format!("{stem}.meta.json"));
    let f = File::open(&csv).map_err(|e| io_failure(&csv, e))?;
    let matrix = FeatureMatrix::read_csv(BufReader::new(f)).map_err(|e| Failure::from(e).context(csv.display()))?;
    let text = std::fs::read_to_string(&meta).map_err(|e| io_failure(&meta, e))?;
    let meta: FeatureMeta = serde_json::from_str(&text)?;
    Ok(Assembled { matrix, meta })
}

fn require(dir: &Path, stem: &str, hint: &str) -> Result<(), Failure> {
    let p = dir.join(format!("{stem}.csv"));
    if p.exists() {
        Ok(())
    } else {
        Err(Failure::Config(anyhow::anyhow!("{} not found; {hint}", p.display())))
    }
}

fn loans(run: &RunConfig) -> Result<LoanTable, Failure> {
    if !run.paths.loans.exists() {
        return Err(Failure::Config(anyhow::anyhow!(
            "loan file {} does not exist",
            run.paths.loans.display()
        )));
    }
    Ok(ingest_loans(&run.paths.loans)?)
}

pub fn train_models(run: &RunConfig) -> Result<(), Failure> {
    let dir = &run.paths.output;
    require(dir, FEATURES, "run `cdrscore featurize` first")?;
    let prepared = Prepared::from_matrix(load_features(dir, FEATURES)?, &loans(run)?)?;
    let set = prepared.set();
    let models: Vec<_> = run
        .families
        .par_iter()
        .map(|&f| train(f, &set, &run.learn, run.seed).map_err(|e| Failure::from(e).context(f)))
        .collect::<Result<_, _>>()?;
    let mut out = Outputs::new();
    for m in &models {
        let path = dir.join("models").join(format!("{}.json", m.family));
        out.write(&path, &(m.to_json()? + "\n"))?;
        println!(
            "{:<10} {} features  data {}  config {}  seed {}",
            m.family.to_string(),
            m.features.len(),
            &m.fingerprint.data_sha256[..16],
            &m.fingerprint.config_sha256[..16],
            m.fingerprint.seed
        );
        for w in &m.warnings {
            println!("  warning: {w}");
        }
    }
    out.commit();
    Ok(())
}

fn read_groups(dir: &Path) -> Result<Option<HashMap<String, String>>, Failure> {
    let p = dir.join(USAGE);
    if !p.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&p).map_err(|e| io_failure(&p, e))?;
    let mut map = HashMap::new();
    for line in text.lines().skip(1) {
        if let Some((id, g)) = line.split_once(',') {
            map.insert(id.to_string(), g.to_string());
        }
    }
    Ok(Some(map))
}

fn groups_for(map: &Option<HashMap<String, String>>, m: &FeatureMatrix) -> Option<Vec<String>> {
    let map = map.as_ref()?;
    m.subscribers.iter().map(|id| map.get(id.as_ref()).cloned()).collect()
}

pub fn evaluate(run: &RunConfig) -> Result<(), Failure> {
    let dir = &run.paths.output;
    require(dir, FEATURES, "run `cdrscore featurize` first")?;
    if run.out_of_time {
        for stem in [EARLY, LATE] {
            require(
                dir,
                stem,
                "out-of-time evaluation needs offset features; run `cdrscore featurize --offset` first",
            )?;
        }
    }
    let loans = loans(run)?;
    let usage = read_groups(dir)?;
    let full = Prepared::from_matrix(load_features(dir, FEATURES)?, &loans)?;
    let groups = groups_for(&usage, &full.features.matrix);

    let mut results = cross_validate_all(
        &run.families,
        &full.set(),
        &run.learn,
        &run.eval,
        run.seed,
        groups.as_deref(),
    )?;

    if run.out_of_time {
        let early = Prepared::from_matrix(load_features(dir, EARLY)?, &loans)?;
        let late = Prepared::from_matrix(load_features(dir, LATE)?, &loans)?;
        let early_groups = groups_for(&usage, &early.features.matrix);
        let late_groups = groups_for(&usage, &late.features.matrix);
        let within = cross_validate_all(
            &run.families,
            &early.set(),
            &run.learn,
            &run.eval,
            run.seed,
            early_groups.as_deref(),
        )?;
        let across: Vec<FamilyReport> = run
            .families
            .par_iter()
            .map(|&f| {
                out_of_time_eval(
                    f,
                    &early.set(),
                    &late.set(),
                    &run.learn,
                    late_groups.as_deref(),
                    run.eval.grid,
                    run.seed,
                )
                .map_err(|e| Failure::from(e).context(f))
            })
            .collect::<Result<_, _>>()?;
        for (mut w, a) in within.into_iter().zip(across) {
            w.sample = "cv_early".into();
            results.push(w);
            results.push(a);
        }
    }

    let report = EvalReport {
        config: json!({
            "seed": run.seed,
            "families": run.families.iter().map(|f| f.key()).collect::<Vec<_>>(),
            "taxonomy_sha256": full.features.meta.taxonomy_hash,
            "learn": run.learn,
            "eval": run.eval,
            "out_of_time": run.out_of_time,
        }),
        default_rate: full.y.iter().filter(|&&d| d).count() as f64 / full.y.len().max(1) as f64,
        results,
    };
    let mut out = Outputs::new();
    let names = [
        "report.json",
        "roc.csv",
        "acceptance.csv",
        "quintiles.csv",
        "subgroups.csv",
        "roc.svg",
        "acceptance.svg",
    ];
    let count = if run.plots { names.len() } else { 5 };
    out.written.extend(names[..count].iter().map(|n| dir.join(n)));
    write_report(&report, dir, run.plots)?;
    out.commit();
    print!("{}", auc_table(&report));
    for r in &report.results {
        for w in &r.warnings {
            println!("warning ({} {}): {w}", r.family, r.sample);
        }
    }
    Ok(())
}

pub fn pipeline(run: &RunConfig) -> Result<(), Failure> {
    if run.synth.is_some() {
        synth(run)?;
    }
    featurize(run)?;
    train_models(run)?;
    evaluate(run)
}

//! The evaluation report and its file outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::cv::{cross_validate, CurveBand, EvalConfig, FamilyReport, FoldPlan};
use crate::learn::{Family, LearnConfig, TrainingSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Settings the report was produced under.
    pub config: serde_json::Value,
    /// Sample default rate of the evaluated rows.
    pub default_rate: f64,
    pub results: Vec<FamilyReport>,
}

impl EvalReport {
    pub fn result(&self, family: Family, sample: &str) -> Option<&FamilyReport> {
        self.results.iter().find(|r| r.family == family && r.sample == sample)
    }
}

/// Cross-validate several families on one fold plan; results keep the
/// order of `families`.
pub fn cross_validate_all(
    families: &[Family],
    set: &TrainingSet<'_>,
    learn: &LearnConfig,
    eval: &EvalConfig,
    seed: u64,
    groups: Option<&[String]>,
) -> Result<Vec<FamilyReport>> {
    let plan = FoldPlan::new(set.y.len(), eval.folds, eval.draws, seed)?;
    families
        .par_iter()
        .map(|&f| cross_validate(f, set, learn, &plan, groups, eval.grid))
        .collect()
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Write report.json and the CSV tables into `dir`; with `plots`, also
/// roc.svg and acceptance.svg. Returns the paths written.
pub fn write_report(report: &EvalReport, dir: &Path, plots: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        write_file(&p, &body)?;
        written.push(p);
        Ok(())
    };
    put("report.json", serde_json::to_string_pretty(report)? + "\n")?;

    let mut roc = String::from("family,sample,fpr,tpr_mean,tpr_sd\n");
    let mut acc = String::from("family,sample,accepted,default_rate_mean,default_rate_sd\n");
    let mut quint = String::from("family,sample,quintile,rows,default_rate,top_bottom_ratio\n");
    let mut sub = String::from("family,sample,group,rows,auc\n");
    for r in &report.results {
        let tag = format!("{},{}", r.family, r.sample);
        for k in 0..r.roc.x.len() {
            let _ = writeln!(
                roc,
                "{tag},{},{},{}",
                num(r.roc.x[k]),
                num(r.roc.mean[k]),
                num(r.roc.sd[k])
            );
        }
        for k in 0..r.acceptance.x.len() {
            let a = &r.acceptance;
            let _ = writeln!(acc, "{tag},{},{},{}", num(a.x[k]), num(a.mean[k]), num(a.sd[k]));
        }
        if let Some(q) = &r.quintiles {
            let ratio = q.ratio.map(num).unwrap_or_else(|| "undefined".into());
            for i in 0..5 {
                let _ = writeln!(quint, "{tag},{},{},{},{ratio}", i + 1, q.counts[i], num(q.rates[i]));
            }
        }
        for g in &r.subgroups {
            let a = g.auc.map(num).unwrap_or_else(|| "unreportable".into());
            let _ = writeln!(sub, "{tag},{},{},{a}", g.group, g.n);
        }
    }
    put("roc.csv", roc)?;
    put("acceptance.csv", acc)?;
    put("quintiles.csv", quint)?;
    put("subgroups.csv", sub)?;

    if plots {
        let cv: Vec<&FamilyReport> = report.results.iter().filter(|r| r.sample == "cv").collect();
        let pick = if cv.is_empty() {
            report.results.iter().collect()
        } else {
            cv
        };
        let series = |f: fn(&FamilyReport) -> &CurveBand| -> Vec<(String, &CurveBand)> {
            pick.iter()
                .map(|r| (format!("{} ({})", r.family, r.sample), f(r)))
                .collect()
        };
        put(
            "roc.svg",
            line_plot(
                "ROC",
                "False positive rate",
                "True positive rate",
                &series(|r| &r.roc),
                true,
            ),
        )?;
        put(
            "acceptance.svg",
            line_plot(
                "Default rate by share accepted",
                "Share of borrowers accepted",
                "Default rate",
                &series(|r| &r.acceptance),
                false,
            ),
        )?;
    }
    Ok(written)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Mean lines with a ±1 SD ribbon, one colour per series.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[(String, &CurveBand)], diagonal: bool) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 480.0, 70.0, 20.0, 40.0, 60.0);
    let y_max = if diagonal {
        1.0
    } else {
        let m = series
            .iter()
            .flat_map(|(_, b)| b.mean.iter().zip(&b.sd).map(|(m, s)| m + s))
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max);
        if m > 0.0 {
            (m * 1.1).min(1.0)
        } else {
            1.0
        }
    };
    let px = |x: f64| left + x * (w - left - right);
    let py = |y: f64| h - bottom - (y / y_max).clamp(0.0, 1.0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - left - right,
        h - top - bottom
    );
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{f:.1}</text>"#,
            px(f),
            h - bottom + 18.0
        );
        let yv = f * y_max;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.2}</text>"#,
            left - 6.0,
            py(yv) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        px(0.5),
        h - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        py(y_max / 2.0),
        py(y_max / 2.0),
        escape(y_label)
    );
    if diagonal {
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#999" stroke-dasharray="4 4"/>"##,
            px(0.0),
            py(0.0),
            px(1.0),
            py(1.0)
        );
    }
    for (i, (name, band)) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64, f64)> = (0..band.x.len())
            .filter(|&k| band.mean[k].is_finite())
            .map(|k| {
                (
                    band.x[k],
                    band.mean[k],
                    if band.sd[k].is_finite() { band.sd[k] } else { 0.0 },
                )
            })
            .collect();
        if pts.is_empty() {
            continue;
        }
        let upper = pts.iter().map(|&(x, m, sd)| format!("{:.2},{:.2}", px(x), py(m + sd)));
        let lower = pts
            .iter()
            .rev()
            .map(|&(x, m, sd)| format!("{:.2},{:.2}", px(x), py(m - sd)));
        let ribbon: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{colour}" fill-opacity="0.2" stroke="none"/>"#,
            ribbon.join(" ")
        );
        let line: Vec<String> = pts
            .iter()
            .map(|&(x, m, _)| format!("{:.2},{:.2}", px(x), py(m)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = top + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            left + 10.0,
            left + 30.0,
            left + 36.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Family × sample × AUC table for the console.
pub fn auc_table(report: &EvalReport) -> String {
    let mut s = format!("{:<12} {:<12} {:>8} {:>8}\n", "model", "sample", "AUC", "SD");
    for r in &report.results {
        let _ = writeln!(
            s,
            "{:<12} {:<12} {:>8.3} {:>8.3}",
            r.family.to_string(),
            r.sample,
            r.auc_mean,
            r.auc_sd
        );
    }
    s
}

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cdr::{EventStore, LoanTable};
use crate::error::{Error, Result};
use crate::featurize::extract::{layout, row, Context, Universe};
use crate::featurize::names::{sanitize_token, FeatureName};
use crate::featurize::taxonomy::FeatureTaxonomy;

/// Subscribers by features, stored column-major. `NaN` marks a missing cell.
#[derive(Clone, Debug, Default)]
pub struct FeatureMatrix {
    pub subscribers: Vec<Arc<str>>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl PartialEq for FeatureMatrix {
    /// Bitwise cell comparison, so missing cells compare equal.
    fn eq(&self, other: &FeatureMatrix) -> bool {
        self.subscribers == other.subscribers
            && self.names == other.names
            && self.columns.len() == other.columns.len()
            && self
                .columns
                .iter()
                .zip(&other.columns)
                .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()))
    }
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.subscribers.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.column_index(name).map(|i| self.columns[i].as_slice())
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.columns[col][row];
        (!v.is_nan()).then_some(v)
    }

    /// Columns `names`, in that order. Fails listing every absent name.
    pub fn select(&self, names: &[String]) -> Result<FeatureMatrix> {
        let index: HashMap<&str, usize> = self.names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let absent: Vec<String> = names
            .iter()
            .filter(|n| !index.contains_key(n.as_str()))
            .cloned()
            .collect();
        if !absent.is_empty() {
            return Err(Error::MissingColumns(absent));
        }
        Ok(FeatureMatrix {
            subscribers: self.subscribers.clone(),
            names: names.to_vec(),
            columns: names.iter().map(|n| self.columns[index[n.as_str()]].clone()).collect(),
        })
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            subscribers: rows.iter().map(|&r| self.subscribers[r].clone()).collect(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
        }
    }

    /// Drop columns that cannot discriminate: fewer than two distinct
    /// non-missing values. Returns the dropped names in column order.
    pub fn drop_constant_columns(&mut self) -> Vec<String> {
        let keep: Vec<bool> = self.columns.iter().map(|c| !is_constant(c)).collect();
        self.retain(&keep)
    }

    /// Keep only columns whose flag is set; returns dropped names.
    pub fn retain(&mut self, keep: &[bool]) -> Vec<String> {
        let mut dropped = Vec::new();
        let names = std::mem::take(&mut self.names);
        let columns = std::mem::take(&mut self.columns);
        for ((name, col), &k) in names.into_iter().zip(columns).zip(keep) {
            if k {
                self.names.push(name);
                self.columns.push(col);
            } else {
                dropped.push(name);
            }
        }
        dropped
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = Vec::with_capacity(self.n_cols() + 1);
        header.push("subscriber_id");
        header.extend(self.names.iter().map(String::as_str));
        wtr.write_record(&header)?;
        let mut rec = Vec::with_capacity(self.n_cols() + 1);
        for (r, id) in self.subscribers.iter().enumerate() {
            rec.clear();
            rec.push(id.to_string());
            for c in &self.columns {
                let v = c[r];
                rec.push(if v.is_nan() { String::new() } else { v.to_string() });
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<features>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<FeatureMatrix> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(r);
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("subscriber_id") {
            return Err(Error::MalformedRow {
                line: 1,
                message: "feature table must start with subscriber_id".into(),
            });
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut m = FeatureMatrix {
            subscribers: Vec::new(),
            columns: vec![Vec::new(); names.len()],
            names,
        };
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            m.subscribers.push(rec.get(0).unwrap_or("").into());
            for (c, cell) in rec.iter().skip(1).enumerate() {
                let v = if cell.is_empty() {
                    f64::NAN
                } else {
                    cell.parse().map_err(|_| Error::MalformedRow {
                        line,
                        message: format!("non-numeric cell '{cell}' in column {}", m.names[c]),
                    })?
                };
                m.columns[c].push(v);
            }
        }
        Ok(m)
    }
}

fn is_constant(col: &[f64]) -> bool {
    let mut first = None;
    for &v in col.iter().filter(|v| !v.is_nan()) {
        match first {
            None => first = Some(v),
            Some(f) if f != v => return false,
            _ => {}
        }
    }
    true
}

#[derive(Clone, Debug, Default)]
pub struct AssembleOptions {
    pub drop_constant: bool,
    /// Fixed category universe; observed from the store when `None`.
    pub universe: Option<Universe>,
}

/// Provenance written next to a feature matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub taxonomy_hash: String,
    pub taxonomy: FeatureTaxonomy,
    pub rows: usize,
    pub columns_before_drop: usize,
    pub columns: usize,
    pub dropped: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Assembled {
    pub matrix: FeatureMatrix,
    pub meta: FeatureMeta,
}

/// One row per loan, in subscriber order: phone features, external
/// covariates, then a missing flag for each of those columns.
pub fn assemble_matrix(
    taxonomy: &FeatureTaxonomy,
    store: &EventStore,
    loans: &LoanTable,
    options: &AssembleOptions,
) -> Result<Assembled> {
    let universe = match &options.universe {
        Some(u) => u.clone(),
        None => Universe::observe(taxonomy, store),
    };
    let ctx = Context {
        taxonomy,
        universe: &universe,
        pois: &store.calendar().points_of_interest,
    };
    let phone_names = layout(&ctx);
    let width = phone_names.len();
    let ids: Vec<Arc<str>> = loans.iter().map(|l| l.subscriber_id.clone()).collect();
    let rows: Vec<Vec<f64>> = ids.par_iter().map(|id| row(&ctx, store.history(id), width)).collect();

    let mut names: Vec<FeatureName> = phone_names;
    let mut columns: Vec<Vec<f64>> = (0..width).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
    drop(rows);
    for cov in loans.covariate_names() {
        names.push(FeatureName::External(sanitize_token(cov)));
        columns.push(
            loans
                .iter()
                .map(|l| l.covariates.get(cov).copied().unwrap_or(f64::NAN))
                .collect(),
        );
    }
    let base = names.len();
    for c in 0..base {
        names.push(names[c].missing_flag());
        let flag = columns[c].iter().map(|v| if v.is_nan() { 1.0 } else { 0.0 }).collect();
        columns.push(flag);
    }

    let mut matrix = FeatureMatrix {
        subscribers: ids,
        names: names.iter().map(ToString::to_string).collect(),
        columns,
    };
    let before = matrix.n_cols();
    let dropped = if options.drop_constant {
        matrix.drop_constant_columns()
    } else {
        Vec::new()
    };
    tracing::info!(
        rows = matrix.n_rows(),
        columns = matrix.n_cols(),
        dropped = dropped.len(),
        "assembled features"
    );
    Ok(Assembled {
        meta: FeatureMeta {
            taxonomy_hash: taxonomy.hash(),
            taxonomy: taxonomy.clone(),
            rows: matrix.n_rows(),
            columns_before_drop: before,
            columns: matrix.n_cols(),
            dropped,
        },
        matrix,
    })
}

/// Default outcome per matrix row.
pub fn outcomes(matrix: &FeatureMatrix, loans: &LoanTable) -> Result<Vec<bool>> {
    matrix
        .subscribers
        .iter()
        .map(|id| {
            loans
                .get(id)
                .map(|l| l.default)
                .ok_or_else(|| Error::InvalidInput(format!("no loan outcome for subscriber {id}")))
        })
        .collect()
}

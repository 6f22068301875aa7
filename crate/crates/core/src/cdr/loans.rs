use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LoanRecord {
    pub subscriber_id: Arc<str>,
    pub loan_date: NaiveDate,
    /// 15+ days past due, as defined by the data producer.
    pub default: bool,
    /// External covariates; absent cells are absent keys, never zero.
    pub covariates: BTreeMap<String, f64>,
}

/// Loan outcomes keyed by subscriber.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoanTable {
    covariate_names: Vec<String>,
    records: BTreeMap<Arc<str>, LoanRecord>,
}

impl LoanTable {
    pub fn from_records(records: Vec<LoanRecord>, covariate_names: Vec<String>) -> Result<LoanTable> {
        let mut map = BTreeMap::new();
        for r in records {
            if let Some(dup) = map.insert(r.subscriber_id.clone(), r) {
                return Err(Error::DuplicateSubscriber(dup.subscriber_id.to_string()));
            }
        }
        Ok(LoanTable {
            covariate_names,
            records: map,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&LoanRecord> {
        self.records.get(id)
    }

    /// Records in subscriber order.
    pub fn iter(&self) -> impl Iterator<Item = &LoanRecord> {
        self.records.values()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn default_rate(&self) -> f64 {
        if self.records.is_empty() {
            return f64::NAN;
        }
        self.iter().filter(|r| r.default).count() as f64 / self.len() as f64
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["subscriber_id".to_string(), "loan_date".into(), "default".into()];
        header.extend(self.covariate_names.iter().cloned());
        wtr.write_record(&header)?;
        for r in self.iter() {
            let mut row = vec![
                r.subscriber_id.to_string(),
                r.loan_date.format("%Y-%m-%d").to_string(),
                if r.default { "1" } else { "0" }.to_string(),
            ];
            row.extend(
                self.covariate_names
                    .iter()
                    .map(|c| r.covariates.get(c).map(|v| v.to_string()).unwrap_or_default()),
            );
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| Error::io("<loans>", e))?;
        Ok(())
    }
}

pub fn read_loans<R: Read>(reader: R) -> Result<LoanTable> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let header = rdr.headers()?.clone();
    let expect = ["subscriber_id", "loan_date", "default"];
    for (i, name) in expect.iter().enumerate() {
        if header.get(i).map(str::trim) != Some(*name) {
            return Err(Error::MalformedRow {
                line: 1,
                message: format!(
                    "loans header must start with subscriber_id,loan_date,default; column {} is not '{name}'",
                    i + 1
                ),
            });
        }
    }
    let covariate_names: Vec<String> = header.iter().skip(3).map(|h| h.trim().to_string()).collect();

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| Error::MalformedRow { line, message };
        let id = row.get(0).unwrap_or("").trim();
        if id.is_empty() {
            return Err(bad("empty subscriber_id".into()));
        }
        let date_raw = row.get(1).unwrap_or("").trim();
        let loan_date = NaiveDate::parse_from_str(date_raw, "%Y-%m-%d")
            .map_err(|_| bad(format!("invalid loan_date '{date_raw}'")))?;
        let default = match row.get(2).unwrap_or("").trim() {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("default must be 0 or 1, got '{other}'"))),
        };
        let mut covariates = BTreeMap::new();
        for (name, cell) in covariate_names.iter().zip(row.iter().skip(3)) {
            let cell = cell.trim();
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| bad(format!("covariate {name} is not numeric: '{cell}'")))?;
            covariates.insert(name.clone(), v);
        }
        records.push(LoanRecord {
            subscriber_id: id.into(),
            loan_date,
            default,
            covariates,
        });
    }
    LoanTable::from_records(records, covariate_names)
}

pub fn ingest_loans(path: &Path) -> Result<LoanTable> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_loans(std::io::BufReader::new(f))
}

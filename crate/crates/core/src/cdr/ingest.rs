use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, NaiveDateTime, Utc};
use rayon::prelude::*;

use super::calendar::CalendarConfig;
use super::store::{format_timestamp, EventStore, ObservationWindow};
use super::types::{AccountType, Country, EventRecord, EventType, Tower};
use crate::error::{Error, Result};

/// Canonical `events.csv` column order.
pub const EVENT_COLUMNS: [&str; 9] = [
    "subscriber_id",
    "timestamp",
    "event_type",
    "duration_s",
    "counterparty_id",
    "counterparty_account",
    "counterparty_country",
    "tower_lat",
    "tower_lon",
];

#[derive(Clone, Copy, Debug)]
pub struct IngestOptions {
    /// Fail on the first malformed row instead of skipping it.
    pub strict: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { strict: true }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub rows_read: u64,
    pub stored: u64,
    pub excluded_out_of_window: u64,
    pub duplicates_removed: u64,
    pub malformed: Vec<RowError>,
}

/// Parse an ISO-8601 UTC instant. Offsets are converted to UTC; naive
/// timestamps are taken as UTC. Sub-second precision is truncated.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let t = if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        t.with_timezone(&Utc)
    } else {
        ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f"]
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())?
            .and_utc()
    };
    DateTime::from_timestamp(t.timestamp(), 0)
}

struct ColumnIndex([usize; 9]);

impl ColumnIndex {
    fn from_header(header: &csv::StringRecord) -> Result<ColumnIndex> {
        let mut idx = [0usize; 9];
        for (slot, name) in idx.iter_mut().zip(EVENT_COLUMNS) {
            *slot = header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::MalformedRow {
                    line: 1,
                    message: format!("header is missing column '{name}'"),
                })?;
        }
        Ok(ColumnIndex(idx))
    }
}

fn optional(s: &str) -> Option<&str> {
    let s = s.trim();
    (!s.is_empty()).then_some(s)
}

fn parse_row(row: &csv::StringRecord, cols: &ColumnIndex) -> std::result::Result<EventRecord, String> {
    let field = |i: usize| row.get(cols.0[i]).unwrap_or("");
    let subscriber = optional(field(0)).ok_or("empty subscriber_id")?;
    let ts_raw = field(1).trim();
    let timestamp = parse_timestamp(ts_raw).ok_or_else(|| format!("unparseable timestamp '{ts_raw}'"))?;
    let event_type: EventType = field(2).trim().parse()?;
    let duration = optional(field(3))
        .map(|d| d.parse::<u32>().map_err(|_| format!("invalid duration_s '{d}'")))
        .transpose()?;
    let counterparty_id = optional(field(4)).map(Arc::<str>::from);
    let counterparty_account: AccountType = field(5).trim().parse()?;
    let counterparty_country: Country = field(6).trim().parse()?;
    let coord = |i: usize, what: &str| {
        optional(field(i))
            .map(|v| v.parse::<f64>().map_err(|_| format!("invalid {what} '{v}'")))
            .transpose()
    };
    let tower = match (coord(7, "tower_lat")?, coord(8, "tower_lon")?) {
        (Some(lat), Some(lon)) => Some(Tower::new(lat, lon)?),
        (None, None) => None,
        _ => return Err("tower_lat and tower_lon must both be present or both absent".into()),
    };
    let record = EventRecord {
        subscriber_id: subscriber.into(),
        timestamp,
        event_type,
        duration,
        counterparty_id,
        counterparty_account,
        counterparty_country,
        tower,
    };
    record.validate()?;
    Ok(record)
}

/// Read raw rows from one CSV source without windowing or canonicalization.
pub fn read_event_records<R: Read>(reader: R, opts: IngestOptions) -> Result<(Vec<EventRecord>, u64, Vec<RowError>)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let cols = ColumnIndex::from_header(rdr.headers()?)?;
    let mut records = Vec::new();
    let mut malformed = Vec::new();
    let mut rows = 0u64;
    let mut row = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {
                rows += 1;
                let line = row.position().map(|p| p.line()).unwrap_or(rows + 1);
                match parse_row(&row, &cols) {
                    Ok(r) => records.push(r),
                    Err(message) if opts.strict => return Err(Error::MalformedRow { line, message }),
                    Err(message) => malformed.push(RowError { line, message }),
                }
            }
            Err(e) => {
                rows += 1;
                let line = e.position().map(|p| p.line()).unwrap_or(rows + 1);
                if opts.strict {
                    return Err(Error::MalformedRow {
                        line,
                        message: e.to_string(),
                    });
                }
                malformed.push(RowError {
                    line,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok((records, rows, malformed))
}

fn finish(
    records: Vec<EventRecord>,
    rows_read: u64,
    malformed: Vec<RowError>,
    window: ObservationWindow,
    calendar: &CalendarConfig,
) -> (EventStore, IngestReport) {
    let (store, stats) = EventStore::from_records(records, window, Arc::new(calendar.clone()));
    if stats.duplicates_removed > 0 {
        tracing::warn!(count = stats.duplicates_removed, "removed duplicate event rows");
    }
    if !malformed.is_empty() {
        tracing::warn!(count = malformed.len(), "skipped malformed event rows");
    }
    let report = IngestReport {
        rows_read,
        stored: store.event_count() as u64,
        excluded_out_of_window: stats.excluded_out_of_window,
        duplicates_removed: stats.duplicates_removed,
        malformed,
    };
    (store, report)
}

/// Ingest events from any reader.
pub fn read_events<R: Read>(
    reader: R,
    window: ObservationWindow,
    calendar: &CalendarConfig,
    opts: IngestOptions,
) -> Result<(EventStore, IngestReport)> {
    calendar.validate()?;
    let (records, rows, malformed) = read_event_records(reader, opts)?;
    Ok(finish(records, rows, malformed, window, calendar))
}

/// Ingest an `events.csv` file into a canonical store.
pub fn ingest_events(
    path: &Path,
    window: ObservationWindow,
    calendar: &CalendarConfig,
    opts: IngestOptions,
) -> Result<(EventStore, IngestReport)> {
    ingest_event_shards(&[path.to_path_buf()], window, calendar, opts)
}

/// Ingest several shards in parallel; the resulting store does not depend on
/// how rows are split across shards.
pub fn ingest_event_shards(
    paths: &[PathBuf],
    window: ObservationWindow,
    calendar: &CalendarConfig,
    opts: IngestOptions,
) -> Result<(EventStore, IngestReport)> {
    calendar.validate()?;
    let shards: Vec<_> = paths
        .par_iter()
        .map(|p| {
            let f = File::open(p).map_err(|e| Error::io(p, e))?;
            read_event_records(std::io::BufReader::new(f), opts)
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    let mut rows = 0;
    let mut malformed = Vec::new();
    for (r, n, m) in shards {
        records.extend(r);
        rows += n;
        malformed.extend(m);
    }
    Ok(finish(records, rows, malformed, window, calendar))
}

/// Write records in the canonical `events.csv` layout.
pub fn write_events_csv<W: Write>(records: impl IntoIterator<Item = EventRecord>, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(EVENT_COLUMNS)?;
    for r in records {
        let (lat, lon) = r
            .tower
            .map(|t| (t.lat.to_string(), t.lon.to_string()))
            .unwrap_or_default();
        wtr.write_record([
            &*r.subscriber_id,
            &format_timestamp(r.timestamp.timestamp()),
            r.event_type.as_str(),
            &r.duration.map(|d| d.to_string()).unwrap_or_default(),
            r.counterparty_id.as_deref().unwrap_or(""),
            r.counterparty_account.as_str(),
            &r.counterparty_country.to_string(),
            &lat,
            &lon,
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<events>", e))?;
    Ok(())
}

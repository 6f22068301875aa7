use std::collections::BTreeSet;
use std::io::Write;
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, TimeZone, Utc};

use super::calendar::CalendarConfig;
use super::loans::LoanTable;
use super::types::{ContactId, Event, EventRecord};
use crate::error::{Error, Result};

pub(crate) const SECONDS_PER_DAY: i64 = 86_400;

/// Half-open observation window `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObservationWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl ObservationWindow {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<ObservationWindow> {
        if start >= end {
            return Err(Error::Config(format!(
                "observation window not well-ordered: {start} >= {end}"
            )));
        }
        Ok(ObservationWindow { start, end })
    }

    /// Window covering whole days `[first, last_exclusive)`.
    pub fn days(first: NaiveDate, last_exclusive: NaiveDate) -> Result<ObservationWindow> {
        Self::new(midnight(first), midnight(last_exclusive))
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }
}

pub(crate) fn midnight(d: NaiveDate) -> DateTime<Utc> {
    Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).expect("midnight exists"))
}

pub(crate) fn format_timestamp(secs: i64) -> String {
    DateTime::from_timestamp(secs, 0)
        .expect("timestamp in range")
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string()
}

/// All events of one subscriber, sorted by timestamp, together with the
/// span over which the subscriber was observed.
#[derive(Clone, Debug, PartialEq)]
pub struct SubscriberHistory {
    pub id: Arc<str>,
    pub loan_date: Option<NaiveDate>,
    /// Unix seconds, inclusive.
    pub observed_from: i64,
    /// Unix seconds, exclusive.
    pub observed_until: i64,
    pub events: Vec<Event>,
}

/// Outcome counters from canonicalizing a batch of records.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub excluded_out_of_window: u64,
    pub duplicates_removed: u64,
}

/// Canonical, immutable event store: subscribers sorted by id, events by
/// timestamp (ties in canonical record order).
#[derive(Clone, Debug)]
pub struct EventStore {
    window: ObservationWindow,
    calendar: Arc<CalendarConfig>,
    contacts: Arc<[Arc<str>]>,
    histories: Vec<SubscriberHistory>,
}

impl EventStore {
    /// Canonicalize raw records: window filter, sort, dedup, derive
    /// characteristics against the window end as horizon.
    pub fn from_records(
        mut records: Vec<EventRecord>,
        window: ObservationWindow,
        calendar: Arc<CalendarConfig>,
    ) -> (EventStore, BuildStats) {
        let before = records.len();
        records.retain(|r| window.contains(r.timestamp));
        let excluded = (before - records.len()) as u64;

        records.sort_by(|a, b| a.canonical_cmp(b));
        let before = records.len();
        records.dedup_by(|a, b| a.canonical_cmp(b).is_eq());
        let duplicates = (before - records.len()) as u64;

        let names: BTreeSet<&Arc<str>> = records.iter().filter_map(|r| r.counterparty_id.as_ref()).collect();
        let contacts: Arc<[Arc<str>]> = names.into_iter().cloned().collect();

        let horizon = (window.end - chrono::Duration::seconds(1)).date_naive();
        let mut histories: Vec<SubscriberHistory> = Vec::new();
        for r in &records {
            if histories.last().map(|h| h.id != r.subscriber_id).unwrap_or(true) {
                histories.push(SubscriberHistory {
                    id: r.subscriber_id.clone(),
                    loan_date: None,
                    observed_from: window.start.timestamp(),
                    observed_until: window.end.timestamp(),
                    events: Vec::new(),
                });
            }
            let counterparty = r
                .counterparty_id
                .as_ref()
                .map(|c| ContactId(contacts.binary_search(c).expect("interned contact") as u32));
            let traits = calendar.characterize(r.timestamp, horizon, r.counterparty_account, r.counterparty_country);
            histories.last_mut().expect("pushed above").events.push(Event {
                timestamp: r.timestamp.timestamp(),
                event_type: r.event_type,
                duration: r.duration,
                counterparty,
                tower: r.tower,
                traits,
            });
        }

        let store = EventStore {
            window,
            calendar,
            contacts,
            histories,
        };
        (
            store,
            BuildStats {
                excluded_out_of_window: excluded,
                duplicates_removed: duplicates,
            },
        )
    }

    pub fn window(&self) -> ObservationWindow {
        self.window
    }

    pub fn calendar(&self) -> &CalendarConfig {
        &self.calendar
    }

    pub fn histories(&self) -> &[SubscriberHistory] {
        &self.histories
    }

    pub fn history(&self, id: &str) -> Option<&SubscriberHistory> {
        self.histories
            .binary_search_by(|h| (*h.id).cmp(id))
            .ok()
            .map(|i| &self.histories[i])
    }

    pub fn contact_name(&self, id: ContactId) -> &str {
        &self.contacts[id.0 as usize]
    }

    pub fn event_count(&self) -> usize {
        self.histories.iter().map(|h| h.events.len()).sum()
    }

    /// Re-window every history to `[from, until)` (unix seconds) as chosen by
    /// `bounds`; events outside are dropped.
    pub fn restrict(&self, mut bounds: impl FnMut(&SubscriberHistory) -> (i64, i64)) -> EventStore {
        let histories = self
            .histories
            .iter()
            .map(|h| {
                let (from, until) = bounds(h);
                let until = until.max(from);
                SubscriberHistory {
                    id: h.id.clone(),
                    loan_date: h.loan_date,
                    observed_from: from,
                    observed_until: until,
                    events: h
                        .events
                        .iter()
                        .filter(|e| from <= e.timestamp && e.timestamp < until)
                        .cloned()
                        .collect(),
                }
            })
            .collect();
        EventStore {
            window: self.window,
            calendar: self.calendar.clone(),
            contacts: self.contacts.clone(),
            histories,
        }
    }

    /// Raw records in canonical order.
    pub fn records(&self) -> impl Iterator<Item = EventRecord> + '_ {
        self.histories.iter().flat_map(move |h| {
            h.events.iter().map(move |e| EventRecord {
                subscriber_id: h.id.clone(),
                timestamp: DateTime::from_timestamp(e.timestamp, 0).expect("valid timestamp"),
                event_type: e.event_type,
                duration: e.duration,
                counterparty_id: e.counterparty.map(|c| self.contacts[c.0 as usize].clone()),
                counterparty_account: e.traits.counterparty_account,
                counterparty_country: e.traits.counterparty_country,
                tower: e.tower,
            })
        })
    }

    /// Serialize the store in the `events.csv` layout.
    pub fn write_canonical<W: Write>(&self, w: W) -> Result<()> {
        super::ingest::write_events_csv(self.records(), w)
    }
}

/// Keep only events strictly before each subscriber's loan date.
///
/// Every loan subscriber appears in the result, with an empty history when
/// no events remain. Store subscribers absent from `loans` are an error
/// unless `permissive`, in which case they are dropped.
pub fn clip_to_loan(store: &EventStore, loans: &LoanTable, permissive: bool) -> Result<EventStore> {
    let orphans: Vec<String> = store
        .histories
        .iter()
        .filter(|h| loans.get(&h.id).is_none())
        .map(|h| h.id.to_string())
        .collect();
    if !orphans.is_empty() {
        if permissive {
            tracing::warn!(count = orphans.len(), "dropping subscribers without a loan record");
        } else {
            return Err(Error::OrphanSubscribers(orphans));
        }
    }

    let window = store.window;
    let histories = loans
        .iter()
        .map(|loan| {
            let cutoff = midnight(loan.loan_date).timestamp().min(window.end.timestamp());
            let events = store
                .history(&loan.subscriber_id)
                .map(|h| {
                    h.events
                        .iter()
                        .filter(|e| e.timestamp < cutoff)
                        .map(|e| {
                            let mut e = e.clone();
                            let day = e.day();
                            e.traits.days_until_loan = (unix_day(loan.loan_date) - day).max(0) as u32;
                            e
                        })
                        .collect()
                })
                .unwrap_or_default();
            SubscriberHistory {
                id: loan.subscriber_id.clone(),
                loan_date: Some(loan.loan_date),
                observed_from: window.start.timestamp(),
                observed_until: cutoff.max(window.start.timestamp()),
                events,
            }
        })
        .collect();

    Ok(EventStore {
        window,
        calendar: store.calendar.clone(),
        contacts: store.contacts.clone(),
        histories,
    })
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("epoch")
}

/// Unix day number of a date.
pub(crate) fn unix_day(d: NaiveDate) -> i64 {
    d.signed_duration_since(epoch()).num_days()
}

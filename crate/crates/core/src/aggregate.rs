//! Second-stage objects: per-characteristic count vectors, calendar-bucketed
//! usage series, and per-subscriber tower sets.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cdr::{AccountType, ContactId, Country, Event, EventStore, EventType, SubscriberHistory, SECONDS_PER_DAY};
use crate::error::{Error, Result};

const WEEKDAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

/// A per-event characteristic that can be tallied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Characteristic {
    DayOfWeek,
    HourOfDay,
    IsHoliday,
    IsWorkday,
    DaysUntilLoan,
    InDiscountBand,
    AtBandDiscontinuity,
    CounterpartyAccount,
    CounterpartyCountry,
    Counterparty,
}

impl Characteristic {
    pub const ALL: [Characteristic; 10] = [
        Characteristic::DayOfWeek,
        Characteristic::HourOfDay,
        Characteristic::IsHoliday,
        Characteristic::IsWorkday,
        Characteristic::DaysUntilLoan,
        Characteristic::InDiscountBand,
        Characteristic::AtBandDiscontinuity,
        Characteristic::CounterpartyAccount,
        Characteristic::CounterpartyCountry,
        Characteristic::Counterparty,
    ];

    /// Snake-case name used in configuration.
    pub fn key(self) -> &'static str {
        match self {
            Characteristic::DayOfWeek => "day_of_week",
            Characteristic::HourOfDay => "hour_of_day",
            Characteristic::IsHoliday => "is_holiday",
            Characteristic::IsWorkday => "is_workday",
            Characteristic::DaysUntilLoan => "days_until_loan",
            Characteristic::InDiscountBand => "in_discount_band",
            Characteristic::AtBandDiscontinuity => "at_band_discontinuity",
            Characteristic::CounterpartyAccount => "counterparty_account",
            Characteristic::CounterpartyCountry => "counterparty_country",
            Characteristic::Counterparty => "counterparty",
        }
    }

    /// Token used inside feature names.
    pub fn token(self) -> &'static str {
        match self {
            Characteristic::DayOfWeek => "DayOfWeek",
            Characteristic::HourOfDay => "HourOfDay",
            Characteristic::IsHoliday => "HolidayFlag",
            Characteristic::IsWorkday => "WorkDayFlag",
            Characteristic::DaysUntilLoan => "DaysUntilLoan",
            Characteristic::InDiscountBand => "DiscountBand",
            Characteristic::AtBandDiscontinuity => "BandEdge",
            Characteristic::CounterpartyAccount => "Account",
            Characteristic::CounterpartyCountry => "Country",
            Characteristic::Counterparty => "Contact",
        }
    }

    pub fn from_token(s: &str) -> Option<Characteristic> {
        Characteristic::ALL.into_iter().find(|c| c.token() == s)
    }

    pub fn value_of(self, e: &Event) -> Option<CharValue> {
        let t = &e.traits;
        Some(match self {
            Characteristic::DayOfWeek => CharValue::Weekday(t.day_of_week),
            Characteristic::HourOfDay => CharValue::Hour(t.hour_of_day),
            Characteristic::IsHoliday => CharValue::Flag(t.is_holiday),
            Characteristic::IsWorkday => CharValue::Flag(t.is_workday),
            Characteristic::DaysUntilLoan => CharValue::Days(t.days_until_loan),
            Characteristic::InDiscountBand => CharValue::Flag(t.in_discount_band),
            Characteristic::AtBandDiscontinuity => CharValue::Flag(t.at_band_discontinuity),
            Characteristic::CounterpartyAccount => CharValue::Account(t.counterparty_account),
            Characteristic::CounterpartyCountry => CharValue::Country(t.counterparty_country),
            Characteristic::Counterparty => CharValue::Contact(e.counterparty?),
        })
    }
}

impl FromStr for Characteristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Characteristic::ALL
            .into_iter()
            .find(|c| c.key() == s)
            .ok_or_else(|| Error::UnknownCharacteristic(s.to_string()))
    }
}

/// One observed value of a characteristic. Ordering: enums by declaration
/// order, integers ascending.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CharValue {
    Weekday(u8),
    Hour(u8),
    Days(u32),
    Flag(bool),
    Account(AccountType),
    Country(Country),
    Contact(ContactId),
}

impl CharValue {
    /// Name token for the value; contacts have no stable token and yield `None`.
    pub fn label(&self) -> Option<String> {
        Some(match self {
            CharValue::Weekday(d) => WEEKDAYS[*d as usize].to_string(),
            CharValue::Hour(h) => format!("H{h:02}"),
            CharValue::Days(d) => format!("D{d:03}"),
            CharValue::Flag(true) => "Yes".into(),
            CharValue::Flag(false) => "No".into(),
            CharValue::Account(a) => match a {
                AccountType::Prepaid => "Prepaid",
                AccountType::Postpaid => "Postpaid",
                AccountType::Unknown => "Unknown",
            }
            .into(),
            CharValue::Country(Country::Unknown) => "Unknown".into(),
            CharValue::Country(c) => c.to_string(),
            CharValue::Contact(_) => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Measure {
    Count,
    DurationSum,
}

/// Requested (event type, characteristic, measure) triple; the
/// characteristic is named by its configuration key.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateSpec {
    pub event_type: EventType,
    pub characteristic: String,
    pub measure: Measure,
}

/// Counts (or duration sums) of one subscriber's events of one type, per
/// observed value of one characteristic.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateVector {
    pub subscriber_id: Arc<str>,
    pub event_type: EventType,
    pub characteristic: Characteristic,
    pub measure: Measure,
    pub entries: Vec<(CharValue, f64)>,
}

impl AggregateVector {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v).sum()
    }
}

/// Tally `events` of `event_type` by `characteristic`. Returns `None` when no
/// event of that type carries the characteristic.
pub fn tally(
    events: &[Event],
    event_type: EventType,
    characteristic: Characteristic,
    measure: Measure,
) -> Option<Vec<(CharValue, f64)>> {
    let mut acc: BTreeMap<CharValue, f64> = BTreeMap::new();
    for e in events.iter().filter(|e| e.event_type == event_type) {
        if let Some(v) = characteristic.value_of(e) {
            let amount = match measure {
                Measure::Count => 1.0,
                Measure::DurationSum => e.duration.unwrap_or(0) as f64,
            };
            *acc.entry(v).or_insert(0.0) += amount;
        }
    }
    (!acc.is_empty()).then(|| acc.into_iter().collect())
}

pub fn build_aggregates(store: &EventStore, specs: &[AggregateSpec]) -> Result<Vec<AggregateVector>> {
    let resolved = specs
        .iter()
        .map(|s| {
            let c: Characteristic = s.characteristic.parse()?;
            if s.measure == Measure::DurationSum && !s.event_type.is_call() {
                return Err(Error::Config(format!(
                    "duration measure requires a call event type, got {}",
                    s.event_type
                )));
            }
            Ok((s.event_type, c, s.measure))
        })
        .collect::<Result<Vec<_>>>()?;

    let per_subscriber: Vec<Vec<AggregateVector>> = store
        .histories()
        .par_iter()
        .map(|h| {
            resolved
                .iter()
                .filter_map(|&(e, c, m)| {
                    tally(&h.events, e, c, m).map(|entries| AggregateVector {
                        subscriber_id: h.id.clone(),
                        event_type: e,
                        characteristic: c,
                        measure: m,
                        entries,
                    })
                })
                .collect()
        })
        .collect();
    Ok(per_subscriber.into_iter().flatten().collect())
}

/// Usage stream that can be bucketed into a series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stream {
    CallsOut,
    CallsIn,
    SmsOut,
    SmsIn,
    DurationOut,
    DurationIn,
}

impl Stream {
    pub const ALL: [Stream; 6] = [
        Stream::CallsOut,
        Stream::CallsIn,
        Stream::SmsOut,
        Stream::SmsIn,
        Stream::DurationOut,
        Stream::DurationIn,
    ];

    pub fn event_type(self) -> EventType {
        match self {
            Stream::CallsOut | Stream::DurationOut => EventType::CallOut,
            Stream::CallsIn | Stream::DurationIn => EventType::CallIn,
            Stream::SmsOut => EventType::SmsOut,
            Stream::SmsIn => EventType::SmsIn,
        }
    }

    pub fn measure(self) -> Measure {
        match self {
            Stream::DurationOut | Stream::DurationIn => Measure::DurationSum,
            _ => Measure::Count,
        }
    }

    /// Dotted name prefix, e.g. `SMS.Out`.
    pub fn label(self) -> &'static str {
        match self {
            Stream::CallsOut => "Calls.Out",
            Stream::CallsIn => "Calls.In",
            Stream::SmsOut => "SMS.Out",
            Stream::SmsIn => "SMS.In",
            Stream::DurationOut => "Duration.Out",
            Stream::DurationIn => "Duration.In",
        }
    }

    pub fn from_label(s: &str) -> Option<Stream> {
        Stream::ALL.into_iter().find(|st| st.label() == s)
    }

    pub fn amount(self, e: &Event) -> Option<f64> {
        (e.event_type == self.event_type()).then(|| match self.measure() {
            Measure::Count => 1.0,
            Measure::DurationSum => e.duration.unwrap_or(0) as f64,
        })
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Bucket {
    Day,
    Week,
    Day30,
}

impl Bucket {
    pub const ALL: [Bucket; 3] = [Bucket::Day, Bucket::Week, Bucket::Day30];

    pub fn days(self) -> i64 {
        match self {
            Bucket::Day => 1,
            Bucket::Week => 7,
            Bucket::Day30 => 30,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Bucket::Day => "Day",
            Bucket::Week => "Week",
            Bucket::Day30 => "30Day",
        }
    }

    pub fn from_label(s: &str) -> Option<Bucket> {
        Bucket::ALL.into_iter().find(|b| b.label() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub subscriber_id: Arc<str>,
    pub stream: Stream,
    pub bucket: Bucket,
    /// Oldest bucket first; the last bucket ends at the observation horizon.
    pub values: Vec<f64>,
    /// True when the window holds no whole bucket.
    pub degenerate: bool,
}

/// Whole days `[first, end)` (unix day numbers) inside a history's window.
pub fn whole_days(h: &SubscriberHistory) -> (i64, i64) {
    let first =
        h.observed_from.div_euclid(SECONDS_PER_DAY) + i64::from(h.observed_from.rem_euclid(SECONDS_PER_DAY) != 0);
    let end = h.observed_until.div_euclid(SECONDS_PER_DAY);
    (first, end.max(first))
}

/// Bucketed values of one stream. Buckets are counted backward from the end
/// of the window, so only whole buckets appear and the newest is complete.
pub fn series_values(h: &SubscriberHistory, stream: Stream, bucket: Bucket) -> Vec<f64> {
    let (first, end) = whole_days(h);
    let size = bucket.days();
    let n = ((end - first) / size) as usize;
    let start = end - n as i64 * size;
    let mut values = vec![0.0; n];
    for e in &h.events {
        let day = e.day();
        if day < start || day >= end {
            continue;
        }
        if let Some(a) = stream.amount(e) {
            values[((day - start) / size) as usize] += a;
        }
    }
    values
}

pub fn build_series(store: &EventStore, streams: &[Stream], buckets: &[Bucket]) -> Vec<TimeSeries> {
    let per_subscriber: Vec<Vec<TimeSeries>> = store
        .histories()
        .par_iter()
        .map(|h| {
            let mut out = Vec::with_capacity(streams.len() * buckets.len());
            for &stream in streams {
                for &bucket in buckets {
                    let values = series_values(h, stream, bucket);
                    out.push(TimeSeries {
                        subscriber_id: h.id.clone(),
                        stream,
                        bucket,
                        degenerate: values.is_empty(),
                        values,
                    });
                }
            }
            out
        })
        .collect();
    per_subscriber.into_iter().flatten().collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocationPoint {
    pub lat: f64,
    pub lon: f64,
    /// Distinct unix days on which the tower was used, ascending.
    pub days: Vec<i64>,
    pub events: u32,
}

impl LocationPoint {
    pub fn days_used(&self) -> u32 {
        self.days.len() as u32
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocationSet {
    pub subscriber_id: Arc<str>,
    pub points: Vec<LocationPoint>,
    /// Whole days in the subscriber's observation window.
    pub observed_days: u32,
}

pub fn locations_for(h: &SubscriberHistory) -> LocationSet {
    let mut located: Vec<(f64, f64, i64)> = h
        .events
        .iter()
        .filter_map(|e| e.tower.map(|t| (t.lat, t.lon, e.day())))
        .collect();
    located.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut points: Vec<LocationPoint> = Vec::new();
    for (lat, lon, day) in located {
        match points.last_mut() {
            Some(p) if p.lat.total_cmp(&lat).is_eq() && p.lon.total_cmp(&lon).is_eq() => {
                p.events += 1;
                if p.days.last() != Some(&day) {
                    p.days.push(day);
                }
            }
            _ => points.push(LocationPoint {
                lat,
                lon,
                days: vec![day],
                events: 1,
            }),
        }
    }
    let (first, end) = whole_days(h);
    LocationSet {
        subscriber_id: h.id.clone(),
        points,
        observed_days: (end - first) as u32,
    }
}

pub fn build_locations(store: &EventStore) -> Vec<LocationSet> {
    store.histories().par_iter().map(locations_for).collect()
}

/// Debug dump `subscriber_id,name,index,value` of aggregates and series.
pub fn write_debug_csv<W: Write>(
    store: &EventStore,
    aggregates: &[AggregateVector],
    series: &[TimeSeries],
    w: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["subscriber_id", "name", "index", "value"])?;
    for a in aggregates {
        let name = format!("{}.{}.{:?}", a.event_type, a.characteristic.key(), a.measure);
        for (v, amount) in &a.entries {
            let index = match v {
                CharValue::Contact(c) => store.contact_name(*c).to_string(),
                other => other.label().unwrap_or_default(),
            };
            wtr.write_record([&*a.subscriber_id, &name, &index, &amount.to_string()])?;
        }
    }
    for s in series {
        let name = format!("{}.{}", s.stream.label(), s.bucket.label());
        for (i, v) in s.values.iter().enumerate() {
            wtr.write_record([&*s.subscriber_id, &name, &i.to_string(), &v.to_string()])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<debug>", e))?;
    Ok(())
}

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Kind of an atomic transaction or movement.
///
/// `TopUp`, `DataUse` and `DeviceSwitch` are accepted on ingest but no
/// feature family consumes them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventType {
    CallOut,
    CallIn,
    SmsOut,
    SmsIn,
    TowerPing,
    TopUp,
    DataUse,
    DeviceSwitch,
}

impl EventType {
    pub const ALL: [EventType; 8] = [
        EventType::CallOut,
        EventType::CallIn,
        EventType::SmsOut,
        EventType::SmsIn,
        EventType::TowerPing,
        EventType::TopUp,
        EventType::DataUse,
        EventType::DeviceSwitch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::CallOut => "CALL_OUT",
            EventType::CallIn => "CALL_IN",
            EventType::SmsOut => "SMS_OUT",
            EventType::SmsIn => "SMS_IN",
            EventType::TowerPing => "TOWER_PING",
            EventType::TopUp => "TOP_UP",
            EventType::DataUse => "DATA_USE",
            EventType::DeviceSwitch => "DEVICE_SWITCH",
        }
    }

    pub fn is_call(self) -> bool {
        matches!(self, EventType::CallOut | EventType::CallIn)
    }

    pub fn is_outgoing(self) -> bool {
        matches!(self, EventType::CallOut | EventType::SmsOut)
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventType::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown event_type '{s}'"))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AccountType {
    Prepaid,
    Postpaid,
    #[default]
    Unknown,
}

impl AccountType {
    pub const ALL: [AccountType; 3] = [AccountType::Prepaid, AccountType::Postpaid, AccountType::Unknown];

    pub fn as_str(self) -> &'static str {
        match self {
            AccountType::Prepaid => "PREPAID",
            AccountType::Postpaid => "POSTPAID",
            AccountType::Unknown => "UNKNOWN",
        }
    }
}

impl FromStr for AccountType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "PREPAID" => Ok(AccountType::Prepaid),
            "POSTPAID" => Ok(AccountType::Postpaid),
            "UNKNOWN" | "" => Ok(AccountType::Unknown),
            other => Err(format!("unknown counterparty_account '{other}'")),
        }
    }
}

/// ISO-3166 alpha-2 country code, or unknown.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Country {
    Code([u8; 2]),
    #[default]
    Unknown,
}

impl Country {
    pub fn code(s: &str) -> Option<Country> {
        let b = s.as_bytes();
        (b.len() == 2 && b.iter().all(u8::is_ascii_uppercase)).then(|| Country::Code([b[0], b[1]]))
    }
}

impl fmt::Display for Country {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Country::Code([a, b]) => write!(f, "{}{}", *a as char, *b as char),
            Country::Unknown => f.write_str("UNKNOWN"),
        }
    }
}

impl FromStr for Country {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "" | "UNKNOWN" => Ok(Country::Unknown),
            other => Country::code(other).ok_or_else(|| format!("invalid counterparty_country '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tower {
    pub lat: f64,
    pub lon: f64,
}

impl Tower {
    pub fn new(lat: f64, lon: f64) -> Result<Tower, String> {
        if !(lat.is_finite() && lon.is_finite()) || lat.abs() > 90.0 || lon.abs() > 180.0 {
            return Err(format!("tower coordinates out of range ({lat}, {lon})"));
        }
        Ok(Tower { lat, lon })
    }

    fn total_cmp(&self, other: &Tower) -> Ordering {
        self.lat
            .total_cmp(&other.lat)
            .then_with(|| self.lon.total_cmp(&other.lon))
    }
}

/// One raw transaction row, as read from `events.csv` or produced by the
/// synthetic generator.
#[derive(Clone, Debug, PartialEq)]
pub struct EventRecord {
    pub subscriber_id: Arc<str>,
    pub timestamp: DateTime<Utc>,
    pub event_type: EventType,
    /// Seconds; present exactly for calls.
    pub duration: Option<u32>,
    pub counterparty_id: Option<Arc<str>>,
    pub counterparty_account: AccountType,
    pub counterparty_country: Country,
    pub tower: Option<Tower>,
}

impl EventRecord {
    pub fn validate(&self) -> Result<(), String> {
        match (self.event_type.is_call(), self.duration) {
            (true, None) => return Err(format!("{} requires a duration", self.event_type)),
            (false, Some(_)) => return Err(format!("{} must not carry a duration", self.event_type)),
            _ => {}
        }
        if let Some(t) = self.tower {
            Tower::new(t.lat, t.lon)?;
        }
        if self.subscriber_id.is_empty() {
            return Err("empty subscriber_id".into());
        }
        Ok(())
    }

    /// Total order used for the canonical store layout and deduplication.
    pub fn canonical_cmp(&self, other: &EventRecord) -> Ordering {
        self.subscriber_id
            .cmp(&other.subscriber_id)
            .then_with(|| self.timestamp.cmp(&other.timestamp))
            .then_with(|| self.event_type.cmp(&other.event_type))
            .then_with(|| self.duration.cmp(&other.duration))
            .then_with(|| self.counterparty_id.cmp(&other.counterparty_id))
            .then_with(|| self.counterparty_account.cmp(&other.counterparty_account))
            .then_with(|| self.counterparty_country.cmp(&other.counterparty_country))
            .then_with(|| match (&self.tower, &other.tower) {
                (None, None) => Ordering::Equal,
                (None, Some(_)) => Ordering::Less,
                (Some(_), None) => Ordering::Greater,
                (Some(a), Some(b)) => a.total_cmp(b),
            })
    }
}

/// Derived, calendar-dependent characteristics of a stored event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EventCharacteristics {
    /// Monday = 0.
    pub day_of_week: u8,
    pub hour_of_day: u8,
    pub is_holiday: bool,
    pub is_workday: bool,
    pub days_until_loan: u32,
    pub in_discount_band: bool,
    pub at_band_discontinuity: bool,
    pub counterparty_account: AccountType,
    pub counterparty_country: Country,
}

/// Interned counterparty token, scoped to one [`EventStore`](super::EventStore).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContactId(pub u32);

/// A stored event: raw fields minus the subscriber id, plus characteristics.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    /// Unix seconds, UTC.
    pub timestamp: i64,
    pub event_type: EventType,
    pub duration: Option<u32>,
    pub counterparty: Option<ContactId>,
    pub tower: Option<Tower>,
    pub traits: EventCharacteristics,
}

impl Event {
    /// Unix day number of the event.
    pub fn day(&self) -> i64 {
        self.timestamp.div_euclid(86_400)
    }
}

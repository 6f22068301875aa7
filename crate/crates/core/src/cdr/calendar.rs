use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, Timelike, Utc, Weekday};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::types::{AccountType, Country, EventCharacteristics};
use crate::error::{Error, Result};

const SECONDS_PER_DAY: u32 = 86_400;

/// Minute-resolution time of day, written `HH:MM`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct TimeOfDay(u32);

impl TimeOfDay {
    pub fn hm(hour: u32, minute: u32) -> TimeOfDay {
        assert!(hour < 24 && minute < 60, "invalid time of day {hour}:{minute}");
        TimeOfDay(hour * 3600 + minute * 60)
    }

    pub fn seconds(self) -> u32 {
        self.0
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.0 / 3600, (self.0 % 3600) / 60)
    }
}

impl FromStr for TimeOfDay {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (h, m) = s.split_once(':').ok_or_else(|| format!("expected HH:MM, got '{s}'"))?;
        let h: u32 = h.parse().map_err(|_| format!("bad hour in '{s}'"))?;
        let m: u32 = m.parse().map_err(|_| format!("bad minute in '{s}'"))?;
        if h >= 24 || m >= 60 {
            return Err(format!("time of day out of range: '{s}'"));
        }
        Ok(TimeOfDay::hm(h, m))
    }
}

impl Serialize for TimeOfDay {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TimeOfDay {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Discount time band `[start, end)`; wraps past midnight when `end <= start`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscountBand {
    pub start: TimeOfDay,
    pub end: TimeOfDay,
}

impl DiscountBand {
    fn contains(&self, tod: u32) -> bool {
        let (s, e) = (self.start.0, self.end.0);
        if s < e {
            (s..e).contains(&tod)
        } else {
            tod >= s || tod < e
        }
    }

    /// Covered seconds as a set of half-open intervals within one day.
    fn intervals(&self) -> Vec<(u32, u32)> {
        let (s, e) = (self.start.0, self.end.0);
        if s < e {
            vec![(s, e)]
        } else {
            vec![(s, SECONDS_PER_DAY), (0, e)]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointOfInterest {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
}

fn default_workdays() -> Vec<Weekday> {
    vec![Weekday::Mon, Weekday::Tue, Weekday::Wed, Weekday::Thu, Weekday::Fri]
}

fn default_margin() -> u32 {
    5
}

/// Calendar knowledge needed to derive event characteristics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalendarConfig {
    #[serde(default)]
    pub holidays: BTreeSet<NaiveDate>,
    #[serde(default = "default_workdays")]
    pub workdays: Vec<Weekday>,
    #[serde(default)]
    pub bands: Vec<DiscountBand>,
    #[serde(default = "default_margin")]
    pub margin_minutes: u32,
    #[serde(default)]
    pub points_of_interest: Vec<PointOfInterest>,
}

impl Default for CalendarConfig {
    fn default() -> Self {
        CalendarConfig {
            holidays: BTreeSet::new(),
            workdays: default_workdays(),
            bands: Vec::new(),
            margin_minutes: default_margin(),
            points_of_interest: Vec::new(),
        }
    }
}

impl CalendarConfig {
    pub fn from_toml_str(s: &str) -> Result<CalendarConfig> {
        let cfg: CalendarConfig = toml::from_str(s).map_err(|e| Error::Config(format!("calendar: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<CalendarConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.margin_minutes == 0 {
            return Err(Error::Config("band margin must be positive".into()));
        }
        let mut intervals: Vec<(u32, u32)> = self.bands.iter().flat_map(|b| b.intervals()).collect();
        intervals.sort_unstable();
        if intervals.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(Error::Config("discount bands overlap".into()));
        }
        if self.bands.iter().any(|b| b.start == b.end) {
            return Err(Error::Config("discount band with zero length".into()));
        }
        for poi in &self.points_of_interest {
            if poi.lat.abs() > 90.0 || poi.lon.abs() > 180.0 {
                return Err(Error::Config(format!("point of interest '{}' out of range", poi.name)));
            }
        }
        Ok(())
    }

    pub fn is_holiday(&self, date: NaiveDate) -> bool {
        self.holidays.contains(&date)
    }

    pub fn is_workday(&self, date: NaiveDate) -> bool {
        self.workdays.contains(&date.weekday()) && !self.is_holiday(date)
    }

    fn in_band(&self, tod: u32) -> bool {
        self.bands.iter().any(|b| b.contains(tod))
    }

    fn near_band_edge(&self, tod: u32) -> bool {
        let margin = self.margin_minutes * 60;
        self.bands.iter().flat_map(|b| [b.start.0, b.end.0]).any(|edge| {
            let d = tod.abs_diff(edge);
            d.min(SECONDS_PER_DAY - d) <= margin
        })
    }

    /// Derive the calendar characteristics of an instant; `horizon` is the
    /// date the `days_until_loan` count runs to.
    pub fn characterize(
        &self,
        at: DateTime<Utc>,
        horizon: NaiveDate,
        account: AccountType,
        country: Country,
    ) -> EventCharacteristics {
        let date = at.date_naive();
        let tod = at.num_seconds_from_midnight();
        EventCharacteristics {
            day_of_week: date.weekday().num_days_from_monday() as u8,
            hour_of_day: at.hour() as u8,
            is_holiday: self.is_holiday(date),
            is_workday: self.is_workday(date),
            days_until_loan: (horizon - date).num_days().max(0) as u32,
            in_discount_band: self.in_band(tod),
            at_band_discontinuity: self.near_band_edge(tod),
            counterparty_account: account,
            counterparty_country: country,
        }
    }
}

//! Brute-force recomputation of every feature column from raw events.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use chrono::{Datelike, NaiveDate, Timelike};

use cdrscore::aggregate::{Bucket, Characteristic, Stream};
use cdrscore::cdr::{AccountType, CalendarConfig, Country, EventRecord, EventType};
use cdrscore::featurize::stats::{CorrMethod, SPECTRAL_NOISE};
use cdrscore::featurize::{CalendarShare, ContactStat, FeatureName, GeoStat, PairStat, SeriesStat, WindowVariant};

/// One subscriber's raw inputs.
pub struct Subject<'a> {
    pub events: Vec<&'a EventRecord>,
    pub loan_date: NaiveDate,
    pub window_start: NaiveDate,
    pub covariates: &'a BTreeMap<String, f64>,
}

pub struct Settings<'a> {
    pub calendar: &'a CalendarConfig,
    pub cluster_km: f64,
    pub day_share: f64,
    pub min_days: u32,
}

fn unix_day(d: NaiveDate) -> i64 {
    (d - NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()).num_days()
}

fn event_day(e: &EventRecord) -> i64 {
    unix_day(e.timestamp.date_naive())
}

fn matches(stream: Stream, e: &EventRecord) -> Option<f64> {
    let (ty, duration) = match stream {
        Stream::CallsOut => (EventType::CallOut, false),
        Stream::CallsIn => (EventType::CallIn, false),
        Stream::SmsOut => (EventType::SmsOut, false),
        Stream::SmsIn => (EventType::SmsIn, false),
        Stream::DurationOut => (EventType::CallOut, true),
        Stream::DurationIn => (EventType::CallIn, true),
    };
    (e.event_type == ty).then(|| {
        if duration {
            f64::from(e.duration.unwrap_or(0))
        } else {
            1.0
        }
    })
}

fn bucket_days(b: Bucket) -> i64 {
    match b {
        Bucket::Day => 1,
        Bucket::Week => 7,
        Bucket::Day30 => 30,
    }
}

impl Subject<'_> {
    fn first_day(&self) -> i64 {
        unix_day(self.window_start)
    }

    fn end_day(&self) -> i64 {
        unix_day(self.loan_date)
    }

    fn series(&self, stream: Stream, bucket: Bucket) -> Vec<f64> {
        let size = bucket_days(bucket);
        let count = (self.end_day() - self.first_day()) / size;
        let start = self.end_day() - count * size;
        (0..count)
            .map(|b| {
                let (lo, hi) = (start + b * size, start + (b + 1) * size);
                self.events
                    .iter()
                    .filter(|e| (lo..hi).contains(&event_day(e)))
                    .filter_map(|e| matches(stream, e))
                    .sum()
            })
            .collect()
    }
}

fn variant(v: WindowVariant, x: &[f64]) -> Vec<f64> {
    let nz: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
    match v {
        WindowVariant::Full => x.to_vec(),
        WindowVariant::NonZero => nz.iter().map(|&i| x[i]).collect(),
        WindowVariant::AfterFirst => nz.first().map_or(Vec::new(), |&f| x[f..].to_vec()),
        WindowVariant::BetweenFirstAndLast => match (nz.first(), nz.last()) {
            (Some(&f), Some(&l)) => x[f..=l].to_vec(),
            _ => Vec::new(),
        },
    }
}

fn constant(x: &[f64]) -> bool {
    x.iter().all(|&v| v == x[0])
}

fn percentile(x: &[f64], p: u32) -> Option<f64> {
    if x.is_empty() {
        return None;
    }
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = f64::from(p) / 100.0 * (s.len() - 1) as f64;
    let below = pos.floor();
    let above = pos.ceil();
    let frac = pos - below;
    Some(s[below as usize] * (1.0 - frac) + s[above as usize] * frac)
}

fn sd(x: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    Some((x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() < 2 || constant(a) || constant(b) {
        return None;
    }
    let n = a.len() as f64;
    let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    let sab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let saa: f64 = a.iter().map(|x| x * x).sum();
    let sbb: f64 = b.iter().map(|y| y * y).sum();
    Some((n * sab - sa * sb) / ((n * saa - sa * sa) * (n * sbb - sb * sb)).sqrt())
}

fn counting_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let less = x.iter().filter(|w| *w < v).count() as f64;
            let equal = x.iter().filter(|w| *w == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn correlate(a: &[f64], b: &[f64], method: CorrMethod) -> Option<f64> {
    match method {
        CorrMethod::Pearson => pearson(a, b),
        CorrMethod::Spearman => {
            if a.len() < 2 || constant(a) || constant(b) {
                return None;
            }
            pearson(&counting_ranks(a), &counting_ranks(b))
        }
    }
}

fn lagged(a: &[f64], b: &[f64], lag: usize, method: CorrMethod) -> Option<f64> {
    let n = a.len().min(b.len());
    if n < lag + 3 {
        return None;
    }
    let xs: Vec<f64> = (lag..n).map(|t| a[t]).collect();
    let ys: Vec<f64> = (lag..n).map(|t| b[t - lag]).collect();
    correlate(&xs, &ys, method)
}

/// Non-DC magnitudes k = 1..=n/2 by the direct transform.
fn dft_magnitudes(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    (1..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let angle = 2.0 * PI * (k * t) as f64 / n as f64;
                re += (v - m) * angle.cos();
                im -= (v - m) * angle.sin();
            }
            re.hypot(im)
        })
        .collect()
}

fn periodicity(x: &[f64], stat: SeriesStat) -> Option<f64> {
    if x.len() < 8 || constant(x) {
        return None;
    }
    let mut mags = dft_magnitudes(x);
    let peak = mags.iter().copied().fold(0.0, f64::max);
    for m in &mut mags {
        if *m <= SPECTRAL_NOISE * peak {
            *m = 0.0;
        }
    }
    if peak == 0.0 {
        return None;
    }
    let mut desc = mags.clone();
    desc.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let total: f64 = mags.iter().sum();
    let ratio = |a: f64, b: f64| (b != 0.0).then(|| a / b);
    match stat {
        SeriesStat::Magnitude(r) => desc.get(r).copied(),
        SeriesStat::RatioRank0Rank2 => ratio(desc[0], *desc.get(2)?),
        SeriesStat::RatioRank0AllOther => ratio(desc[0], total - desc[0]),
        SeriesStat::RatioWeeklyAllOther => {
            let k = ((x.len() as f64 / 7.0).round() as usize).clamp(1, mags.len());
            ratio(mags[k - 1], total - mags[k - 1])
        }
        SeriesStat::DifferenceRank0Rank1 => Some(desc[0] - desc[1]),
        _ => unreachable!(),
    }
}

fn series_stat(x: &[f64], stat: SeriesStat) -> Option<f64> {
    let n = x.len();
    match stat {
        SeriesStat::Mean => (n > 0).then(|| x.iter().sum::<f64>() / n as f64),
        SeriesStat::Median => percentile(x, 50),
        SeriesStat::Sd => sd(x),
        SeriesStat::Max => x.iter().copied().reduce(f64::max),
        SeriesStat::Min => x.iter().copied().reduce(f64::min),
        SeriesStat::Quantile(p) => percentile(x, p),
        SeriesStat::Spread(a, b) => Some((percentile(x, a)? - percentile(x, b)?).max(0.0)),
        SeriesStat::MeanOverSd => {
            let s = sd(x)?;
            (s > 0.0).then(|| x.iter().sum::<f64>() / n as f64 / s)
        }
        SeriesStat::Slope => {
            if n < 2 {
                return None;
            }
            let nf = n as f64;
            let (mut st, mut sy, mut sty, mut stt) = (0.0, 0.0, 0.0, 0.0);
            for (t, y) in x.iter().enumerate() {
                let t = t as f64;
                st += t;
                sy += y;
                sty += t * y;
                stt += t * t;
            }
            Some((nf * sty - st * sy) / (nf * stt - st * st))
        }
        SeriesStat::AutoCorrelation { lag, method } => lagged(x, x, lag, method),
        _ => periodicity(x, stat),
    }
}

const WEEKDAY_NAMES: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

/// Label of a characteristic for one event; `None` when absent.
fn label(ch: Characteristic, e: &EventRecord, loan: NaiveDate, cal: &CalendarConfig) -> Option<String> {
    let date = e.timestamp.date_naive();
    let tod = i64::from(e.timestamp.num_seconds_from_midnight());
    let yes_no = |b: bool| if b { "Yes".to_string() } else { "No".to_string() };
    let band = |t: i64| {
        cal.bands.iter().any(|b| {
            let (s, en) = (i64::from(b.start.seconds()), i64::from(b.end.seconds()));
            if s < en {
                t >= s && t < en
            } else {
                t >= s || t < en
            }
        })
    };
    let near_edge = |t: i64| {
        cal.bands.iter().any(|b| {
            [b.start.seconds(), b.end.seconds()].iter().any(|&edge| {
                let d = (t - i64::from(edge)).rem_euclid(86_400);
                d.min(86_400 - d) <= i64::from(cal.margin_minutes) * 60
            })
        })
    };
    Some(match ch {
        Characteristic::DayOfWeek => WEEKDAY_NAMES[date.weekday().num_days_from_monday() as usize].to_string(),
        Characteristic::HourOfDay => format!("H{:02}", e.timestamp.hour()),
        Characteristic::IsHoliday => yes_no(cal.holidays.contains(&date)),
        Characteristic::IsWorkday => yes_no(is_workday(date, cal)),
        Characteristic::DaysUntilLoan => format!("D{:03}", (loan - date).num_days().max(0)),
        Characteristic::InDiscountBand => yes_no(band(tod)),
        Characteristic::AtBandDiscontinuity => yes_no(near_edge(tod)),
        Characteristic::CounterpartyAccount => match e.counterparty_account {
            AccountType::Prepaid => "Prepaid",
            AccountType::Postpaid => "Postpaid",
            AccountType::Unknown => "Unknown",
        }
        .to_string(),
        Characteristic::CounterpartyCountry => match e.counterparty_country {
            Country::Unknown => "Unknown".to_string(),
            c => c.to_string(),
        },
        Characteristic::Counterparty => e.counterparty_id.as_ref()?.to_string(),
    })
}

fn is_workday(date: NaiveDate, cal: &CalendarConfig) -> bool {
    date.weekday().num_days_from_monday() < 5 && !cal.holidays.contains(&date)
}

fn amounts_by_label(
    s: &Subject<'_>,
    stream: Stream,
    ch: Characteristic,
    cal: &CalendarConfig,
) -> BTreeMap<String, f64> {
    let mut acc = BTreeMap::new();
    for e in &s.events {
        if let (Some(a), Some(l)) = (matches(stream, e), label(ch, e, s.loan_date, cal)) {
            *acc.entry(l).or_insert(0.0) += a;
        }
    }
    acc
}

/// Great-circle distance from the spherical Vincenty formula.
pub fn great_circle_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dl = (lon2 - lon1).to_radians();
    let y = ((p2.cos() * dl.sin()).powi(2) + (p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos()).powi(2)).sqrt();
    let x = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
    6371.0 * y.atan2(x)
}

struct Place {
    lat: f64,
    lon: f64,
    events: f64,
    days: BTreeSet<i64>,
}

fn places(s: &Subject<'_>) -> Vec<Place> {
    let mut out: Vec<Place> = Vec::new();
    for e in &s.events {
        let Some(t) = e.tower else { continue };
        match out.iter_mut().find(|p| p.lat == t.lat && p.lon == t.lon) {
            Some(p) => {
                p.events += 1.0;
                p.days.insert(event_day(e));
            }
            None => out.push(Place {
                lat: t.lat,
                lon: t.lon,
                events: 1.0,
                days: [event_day(e)].into(),
            }),
        }
    }
    out
}

fn geo(s: &Subject<'_>, stat: &GeoStat, set: &Settings<'_>) -> Option<f64> {
    let pts = places(s);
    if pts.is_empty() {
        return None;
    }
    let w: f64 = pts.iter().map(|p| p.events).sum();
    let c_lat = pts.iter().map(|p| p.lat * p.events).sum::<f64>() / w;
    let c_lon = pts.iter().map(|p| p.lon * p.events).sum::<f64>() / w;
    Some(match stat {
        GeoStat::TowerCount => pts.len() as f64,
        GeoStat::MaxPairwiseDistance => {
            let mut best = 0.0f64;
            for a in &pts {
                for b in &pts {
                    best = best.max(great_circle_km(a.lat, a.lon, b.lat, b.lon));
                }
            }
            best
        }
        GeoStat::RadiusFromCentroid => (pts
            .iter()
            .map(|p| p.events * great_circle_km(p.lat, p.lon, c_lat, c_lon).powi(2))
            .sum::<f64>()
            / w)
            .sqrt(),
        GeoStat::DistanceToPoi(name) => {
            let poi = set.calendar.points_of_interest.iter().find(|p| &p.name == name)?;
            great_circle_km(c_lat, c_lon, poi.lat, poi.lon)
        }
        GeoStat::ImportantPlaces => {
            // Connected components of the "within cluster_km" graph.
            let mut comp = vec![usize::MAX; pts.len()];
            for root in 0..pts.len() {
                if comp[root] != usize::MAX {
                    continue;
                }
                let mut stack = vec![root];
                comp[root] = root;
                while let Some(i) = stack.pop() {
                    for j in 0..pts.len() {
                        if comp[j] == usize::MAX
                            && great_circle_km(pts[i].lat, pts[i].lon, pts[j].lat, pts[j].lon) <= set.cluster_km
                        {
                            comp[j] = root;
                            stack.push(j);
                        }
                    }
                }
            }
            let observed = (s.end_day() - s.first_day()) as f64;
            let needed = (set.day_share * observed).ceil().max(f64::from(set.min_days));
            let roots: BTreeSet<usize> = comp.iter().copied().collect();
            roots
                .iter()
                .filter(|&&r| {
                    let days: BTreeSet<i64> = (0..pts.len())
                        .filter(|&i| comp[i] == r)
                        .flat_map(|i| pts[i].days.iter().copied())
                        .collect();
                    days.len() as f64 >= needed
                })
                .count() as f64
        }
    })
}

fn contacts(s: &Subject<'_>, stat: ContactStat) -> Option<f64> {
    let mut out: BTreeMap<&str, f64> = BTreeMap::new();
    let mut called = BTreeSet::new();
    let mut callers = BTreeSet::new();
    for e in &s.events {
        let Some(p) = e.counterparty_id.as_deref() else {
            continue;
        };
        match e.event_type {
            EventType::CallOut => {
                *out.entry(p).or_default() += 1.0;
                called.insert(p);
            }
            EventType::SmsOut => *out.entry(p).or_default() += 1.0,
            EventType::CallIn => {
                callers.insert(p);
            }
            _ => {}
        }
    }
    let total: f64 = out.values().sum();
    match stat {
        ContactStat::Degree => (!out.is_empty()).then_some(out.len() as f64),
        ContactStat::TopContactShare => (total > 0.0).then(|| out.values().copied().fold(0.0, f64::max) / total),
        ContactStat::Hhi => (total > 0.0).then(|| out.values().map(|v| (v / total).powi(2)).sum()),
        ContactStat::CallsReturned => (!called.is_empty())
            .then(|| called.iter().filter(|p| callers.contains(*p)).count() as f64 / called.len() as f64),
    }
}

/// Expected value of one named feature for one subject.
pub fn expected(name: &FeatureName, s: &Subject<'_>, set: &Settings<'_>) -> Option<f64> {
    if let FeatureName::External(c) = name {
        return s.covariates.get(c).copied();
    }
    if let FeatureName::Missing(inner) = name {
        return Some(if expected(inner, s, set).is_some_and(f64::is_finite) {
            0.0
        } else {
            1.0
        });
    }
    if s.events.is_empty() {
        return None;
    }
    let cal = set.calendar;
    match name {
        FeatureName::Series {
            stream,
            bucket,
            variant: v,
            stat,
        } => series_stat(&variant(*v, &s.series(*stream, *bucket)), *stat),
        FeatureName::Fraction {
            stream,
            characteristic,
            value,
        } => {
            let a = amounts_by_label(s, *stream, *characteristic, cal);
            let total: f64 = a.values().sum();
            (total > 0.0).then(|| a.get(value).copied().unwrap_or(0.0) / total)
        }
        FeatureName::Hhi { stream, characteristic } => {
            let a = amounts_by_label(s, *stream, *characteristic, cal);
            let total: f64 = a.values().sum();
            (total > 0.0).then(|| a.values().map(|v| (v / total).powi(2)).sum())
        }
        FeatureName::Calendar { stream, share } => {
            let mut total = 0.0;
            let mut part = 0.0;
            for e in &s.events {
                if let Some(a) = matches(*stream, e) {
                    total += a;
                    let date = e.timestamp.date_naive();
                    let hit = match share {
                        CalendarShare::WorkDay => is_workday(date, cal),
                        CalendarShare::Holiday => cal.holidays.contains(&date),
                    };
                    if hit {
                        part += a;
                    }
                }
            }
            (total > 0.0).then(|| part / total)
        }
        FeatureName::Contact(stat) => contacts(s, *stat),
        FeatureName::Geo(stat) => geo(s, stat, set),
        FeatureName::Pair { a, b, bucket, stat } => {
            let (sa, sb) = (s.series(*a, *bucket), s.series(*b, *bucket));
            match stat {
                PairStat::Correlation { lag, method } => lagged(&sa, &sb, *lag, *method),
                PairStat::Ratio => {
                    let d: f64 = sb.iter().sum();
                    (d != 0.0).then(|| sa.iter().sum::<f64>() / d)
                }
            }
        }
        FeatureName::External(_) | FeatureName::Missing(_) => unreachable!(),
    }
}

/// Statistic family of a column, for reporting coverage.
pub fn family(name: &FeatureName) -> &'static str {
    match name {
        FeatureName::Series { stat, .. } => match stat {
            SeriesStat::Mean | SeriesStat::Median | SeriesStat::Max | SeriesStat::Min | SeriesStat::Quantile(_) => {
                "centrality"
            }
            SeriesStat::Sd | SeriesStat::Spread(..) | SeriesStat::MeanOverSd => "spread",
            SeriesStat::Slope => "slope",
            SeriesStat::AutoCorrelation { .. } => "autocorrelation",
            _ => "periodicity",
        },
        FeatureName::Hhi { .. } => "hhi",
        FeatureName::Fraction { .. } | FeatureName::Calendar { .. } => "fractions",
        FeatureName::Contact(_) => "contacts",
        FeatureName::Geo(_) => "geo",
        FeatureName::Pair { .. } => "pairs",
        FeatureName::External(_) | FeatureName::Missing(_) => "covariates",
    }
}

pub const FAMILIES: [&str; 10] = [
    "centrality",
    "spread",
    "slope",
    "autocorrelation",
    "periodicity",
    "hhi",
    "fractions",
    "contacts",
    "geo",
    "pairs",
];

/// Agreement to 1e-9 relative; values that should be zero may differ by
/// rounding noise of 1e-12.
pub fn agrees(actual: f64, expected: Option<f64>) -> bool {
    match expected.filter(|v| v.is_finite()) {
        None => actual.is_nan(),
        Some(e) => {
            let d = (actual - e).abs();
            d <= 1e-9 * actual.abs().max(e.abs()) || d <= 1e-12
        }
    }
}

//! Structured feature names with a lossless textual form.
//!
//! Examples of the textual form:
//! `Calls.Out.Day.Mean`, `SMS.In.Week.NonZero.Q80.Q80minusQ50`,
//! `Duration.Out.Day.AutoCorrelation.L7.Spearman`,
//! `Calls.In.DayOfWeek.Fraction.Sat`, `(SMS.Out Calls.Out) By30DayL0L1.Correlation.Pearson`,
//! `Geography.DistanceToPOI.capital`, `Ext.bureau_entities`, `Calls.Out.Day.Mean.missing`.

use std::fmt;
use std::str::FromStr;

use crate::aggregate::{Bucket, Characteristic, Stream};
use crate::error::{Error, Result};
use crate::featurize::stats::CorrMethod;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum WindowVariant {
    /// The whole series.
    Full,
    /// From the first nonzero bucket to the end.
    AfterFirst,
    /// From the first to the last nonzero bucket, inclusive.
    BetweenFirstAndLast,
    /// Nonzero buckets only; order is discarded.
    NonZero,
}

impl WindowVariant {
    pub const ALL: [WindowVariant; 4] = [
        WindowVariant::Full,
        WindowVariant::AfterFirst,
        WindowVariant::BetweenFirstAndLast,
        WindowVariant::NonZero,
    ];

    fn token(self) -> Option<&'static str> {
        match self {
            WindowVariant::Full => None,
            WindowVariant::AfterFirst => Some("AfterFirst"),
            WindowVariant::BetweenFirstAndLast => Some("BetweenFirstAndLast"),
            WindowVariant::NonZero => Some("NonZero"),
        }
    }

    /// Whether the variant keeps temporal order (and so supports
    /// slope, autocorrelation and periodicity).
    pub fn is_ordered(self) -> bool {
        self != WindowVariant::NonZero
    }

    pub fn apply(self, x: &[f64]) -> Vec<f64> {
        let first = x.iter().position(|&v| v != 0.0);
        let last = x.iter().rposition(|&v| v != 0.0);
        match (self, first, last) {
            (WindowVariant::Full, _, _) => x.to_vec(),
            (WindowVariant::NonZero, _, _) => x.iter().copied().filter(|&v| v != 0.0).collect(),
            (_, None, _) | (_, _, None) => Vec::new(),
            (WindowVariant::AfterFirst, Some(f), _) => x[f..].to_vec(),
            (WindowVariant::BetweenFirstAndLast, Some(f), Some(l)) => x[f..=l].to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SeriesStat {
    Mean,
    Median,
    Sd,
    Max,
    Min,
    Quantile(u32),
    /// Upper percentile minus lower percentile.
    Spread(u32, u32),
    MeanOverSd,
    Slope,
    AutoCorrelation {
        lag: usize,
        method: CorrMethod,
    },
    /// Magnitude of the spectral bin at the given rank (0 = largest).
    Magnitude(usize),
    RatioRank0Rank2,
    RatioRank0AllOther,
    RatioWeeklyAllOther,
    DifferenceRank0Rank1,
}

impl fmt::Display for SeriesStat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeriesStat::Mean => f.write_str("Mean"),
            SeriesStat::Median => f.write_str("Median"),
            SeriesStat::Sd => f.write_str("SD"),
            SeriesStat::Max => f.write_str("Max"),
            SeriesStat::Min => f.write_str("Min"),
            SeriesStat::Quantile(p) => write!(f, "Q{p}"),
            SeriesStat::Spread(a, b) => write!(f, "Q{a}.Q{a}minusQ{b}"),
            SeriesStat::MeanOverSd => f.write_str("Mean.SD"),
            SeriesStat::Slope => f.write_str("Slope"),
            SeriesStat::AutoCorrelation { lag, method } => write!(f, "AutoCorrelation.L{lag}.{}", method.label()),
            SeriesStat::Magnitude(r) => write!(f, "Periodicity.Magnitude.Rank{r}"),
            SeriesStat::RatioRank0Rank2 => f.write_str("Periodicity.MagnitudeRatio.Rank0_Rank2"),
            SeriesStat::RatioRank0AllOther => f.write_str("Periodicity.MagnitudeRatio.Rank0_AllOtherRanks"),
            SeriesStat::RatioWeeklyAllOther => f.write_str("Periodicity.MagnitudeRatio.Weekly_AllOtherRanks"),
            SeriesStat::DifferenceRank0Rank1 => f.write_str("Periodicity.MagnitudeDifference.Rank0_Rank1"),
        }
    }
}

fn parse_percentile(s: &str) -> Option<u32> {
    let p: u32 = s.strip_prefix('Q')?.parse().ok()?;
    (p <= 100).then_some(p)
}

fn parse_method(s: &str) -> Option<CorrMethod> {
    CorrMethod::ALL.into_iter().find(|m| m.label() == s)
}

fn parse_lag(s: &str) -> Option<usize> {
    s.strip_prefix('L')?.parse().ok()
}

impl FromStr for SeriesStat {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<SeriesStat, ()> {
        let parts: Vec<&str> = s.split('.').collect();
        let stat = match parts.as_slice() {
            ["Mean"] => SeriesStat::Mean,
            ["Median"] => SeriesStat::Median,
            ["SD"] => SeriesStat::Sd,
            ["Max"] => SeriesStat::Max,
            ["Min"] => SeriesStat::Min,
            ["Mean", "SD"] => SeriesStat::MeanOverSd,
            ["Slope"] => SeriesStat::Slope,
            [q] => SeriesStat::Quantile(parse_percentile(q).ok_or(())?),
            [q, diff] => {
                let a = parse_percentile(q).ok_or(())?;
                let rest = diff.strip_prefix(q).and_then(|d| d.strip_prefix("minus")).ok_or(())?;
                SeriesStat::Spread(a, parse_percentile(rest).ok_or(())?)
            }
            ["AutoCorrelation", lag, method] => SeriesStat::AutoCorrelation {
                lag: parse_lag(lag).ok_or(())?,
                method: parse_method(method).ok_or(())?,
            },
            ["Periodicity", "Magnitude", rank] => {
                SeriesStat::Magnitude(rank.strip_prefix("Rank").and_then(|r| r.parse().ok()).ok_or(())?)
            }
            ["Periodicity", "MagnitudeRatio", "Rank0_Rank2"] => SeriesStat::RatioRank0Rank2,
            ["Periodicity", "MagnitudeRatio", "Rank0_AllOtherRanks"] => SeriesStat::RatioRank0AllOther,
            ["Periodicity", "MagnitudeRatio", "Weekly_AllOtherRanks"] => SeriesStat::RatioWeeklyAllOther,
            ["Periodicity", "MagnitudeDifference", "Rank0_Rank1"] => SeriesStat::DifferenceRank0Rank1,
            _ => return Err(()),
        };
        Ok(stat)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CalendarShare {
    WorkDay,
    Holiday,
}

impl CalendarShare {
    fn token(self) -> &'static str {
        match self {
            CalendarShare::WorkDay => "WorkDay",
            CalendarShare::Holiday => "Holiday",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ContactStat {
    /// Distinct outgoing counterparties.
    Degree,
    /// Share of outgoing interactions going to the most frequent counterparty.
    TopContactShare,
    Hhi,
    /// Share of called counterparties that also called back.
    CallsReturned,
}

impl ContactStat {
    const ALL: [ContactStat; 4] = [
        ContactStat::Degree,
        ContactStat::TopContactShare,
        ContactStat::Hhi,
        ContactStat::CallsReturned,
    ];

    fn token(self) -> &'static str {
        match self {
            ContactStat::Degree => "Out.Degree",
            ContactStat::TopContactShare => "Out.TopContactShare",
            ContactStat::Hhi => "Out.HHI",
            ContactStat::CallsReturned => "CallsReturned.Fraction",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GeoStat {
    TowerCount,
    MaxPairwiseDistance,
    RadiusFromCentroid,
    DistanceToPoi(String),
    ImportantPlaces,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PairStat {
    /// Correlation of `a[t]` with `b[t - lag]`.
    Correlation {
        lag: usize,
        method: CorrMethod,
    },
    Ratio,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureName {
    Series {
        stream: Stream,
        bucket: Bucket,
        variant: WindowVariant,
        stat: SeriesStat,
    },
    Fraction {
        stream: Stream,
        characteristic: Characteristic,
        value: String,
    },
    Hhi {
        stream: Stream,
        characteristic: Characteristic,
    },
    Calendar {
        stream: Stream,
        share: CalendarShare,
    },
    Contact(ContactStat),
    Geo(GeoStat),
    Pair {
        a: Stream,
        b: Stream,
        bucket: Bucket,
        stat: PairStat,
    },
    External(String),
    Missing(Box<FeatureName>),
}

impl FeatureName {
    pub fn missing_flag(&self) -> FeatureName {
        FeatureName::Missing(Box::new(self.clone()))
    }

    /// Whether the feature is derived from phone usage (as opposed to an
    /// external covariate or its missing flag).
    pub fn is_phone(&self) -> bool {
        match self {
            FeatureName::External(_) => false,
            FeatureName::Missing(inner) => inner.is_phone(),
            _ => true,
        }
    }
}

impl fmt::Display for FeatureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureName::Series {
                stream,
                bucket,
                variant,
                stat,
            } => {
                write!(f, "{stream}.{}", bucket.label())?;
                if let Some(v) = variant.token() {
                    write!(f, ".{v}")?;
                }
                write!(f, ".{stat}")
            }
            FeatureName::Fraction {
                stream,
                characteristic,
                value,
            } => write!(f, "{stream}.{}.Fraction.{value}", characteristic.token()),
            FeatureName::Hhi { stream, characteristic } => write!(f, "{stream}.{}.HHI", characteristic.token()),
            FeatureName::Calendar { stream, share } => write!(f, "{stream}.{}.Fraction", share.token()),
            FeatureName::Contact(c) => write!(f, "Contacts.{}", c.token()),
            FeatureName::Geo(g) => match g {
                GeoStat::TowerCount => f.write_str("Geography.TowerCount"),
                GeoStat::MaxPairwiseDistance => f.write_str("Geography.MaxPairwiseDistance"),
                GeoStat::RadiusFromCentroid => f.write_str("Geography.RadiusFromCentroid"),
                GeoStat::DistanceToPoi(name) => write!(f, "Geography.DistanceToPOI.{name}"),
                GeoStat::ImportantPlaces => f.write_str("Geography.ImportantPlaces.DaysUsed.Number"),
            },
            FeatureName::Pair { a, b, bucket, stat } => match stat {
                PairStat::Correlation { lag, method } => {
                    write!(
                        f,
                        "({a} {b}) By{}L0L{lag}.Correlation.{}",
                        bucket.label(),
                        method.label()
                    )
                }
                PairStat::Ratio => write!(f, "({a} {b}) By{}.Ratio", bucket.label()),
            },
            FeatureName::External(name) => write!(f, "Ext.{name}"),
            FeatureName::Missing(inner) => write!(f, "{inner}.missing"),
        }
    }
}

fn split_stream(s: &str) -> Option<(Stream, &str)> {
    Stream::ALL.into_iter().find_map(|st| {
        let rest = s.strip_prefix(st.label())?.strip_prefix('.')?;
        Some((st, rest))
    })
}

fn parse_pair(s: &str) -> Option<FeatureName> {
    let inner = s.strip_prefix('(')?;
    let (streams, rest) = inner.split_once(") By")?;
    let (a, b) = streams.split_once(' ')?;
    let (a, b) = (Stream::from_label(a)?, Stream::from_label(b)?);
    if let Some(bucket) = rest.strip_suffix(".Ratio") {
        return Some(FeatureName::Pair {
            a,
            b,
            bucket: Bucket::from_label(bucket)?,
            stat: PairStat::Ratio,
        });
    }
    let (head, method) = rest.split_once(".Correlation.")?;
    let (bucket, lag) = head.split_once("L0L")?;
    Some(FeatureName::Pair {
        a,
        b,
        bucket: Bucket::from_label(bucket)?,
        stat: PairStat::Correlation {
            lag: lag.parse().ok()?,
            method: parse_method(method)?,
        },
    })
}

fn parse_stream_feature(stream: Stream, rest: &str) -> Option<FeatureName> {
    let (head, tail) = rest.split_once('.')?;
    if let Some(bucket) = Bucket::from_label(head) {
        let (variant, stat_str) = match tail.split_once('.') {
            Some((v, s)) => match WindowVariant::ALL.into_iter().find(|w| w.token() == Some(v)) {
                Some(w) => (w, s),
                None => (WindowVariant::Full, tail),
            },
            None => (WindowVariant::Full, tail),
        };
        let stat = stat_str.parse().ok()?;
        return Some(FeatureName::Series {
            stream,
            bucket,
            variant,
            stat,
        });
    }
    for share in [CalendarShare::WorkDay, CalendarShare::Holiday] {
        if head == share.token() && tail == "Fraction" {
            return Some(FeatureName::Calendar { stream, share });
        }
    }
    let characteristic = Characteristic::from_token(head)?;
    if tail == "HHI" {
        return Some(FeatureName::Hhi { stream, characteristic });
    }
    let value = tail.strip_prefix("Fraction.")?;
    (!value.is_empty()).then(|| FeatureName::Fraction {
        stream,
        characteristic,
        value: value.to_string(),
    })
}

fn parse_base(s: &str) -> Option<FeatureName> {
    if let Some(name) = s.strip_prefix("Ext.") {
        return (!name.is_empty()).then(|| FeatureName::External(name.to_string()));
    }
    if s.starts_with('(') {
        return parse_pair(s);
    }
    if let Some(rest) = s.strip_prefix("Contacts.") {
        return ContactStat::ALL
            .into_iter()
            .find(|c| c.token() == rest)
            .map(FeatureName::Contact);
    }
    if let Some(rest) = s.strip_prefix("Geography.") {
        let g = match rest {
            "TowerCount" => GeoStat::TowerCount,
            "MaxPairwiseDistance" => GeoStat::MaxPairwiseDistance,
            "RadiusFromCentroid" => GeoStat::RadiusFromCentroid,
            "ImportantPlaces.DaysUsed.Number" => GeoStat::ImportantPlaces,
            other => {
                let poi = other.strip_prefix("DistanceToPOI.")?;
                if poi.is_empty() {
                    return None;
                }
                GeoStat::DistanceToPoi(poi.to_string())
            }
        };
        return Some(FeatureName::Geo(g));
    }
    let (stream, rest) = split_stream(s)?;
    parse_stream_feature(stream, rest)
}

impl FromStr for FeatureName {
    type Err = Error;

    fn from_str(s: &str) -> Result<FeatureName> {
        let parsed = match s.strip_suffix(".missing") {
            Some(inner) => parse_base(inner).map(|b| FeatureName::Missing(Box::new(b))),
            None => parse_base(s),
        };
        parsed.ok_or_else(|| Error::InvalidInput(format!("unrecognized feature name '{s}'")))
    }
}

/// Restrict a free-form label (POI or covariate name) to characters that
/// survive the dotted naming scheme.
pub fn sanitize_token(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

//! Per-subscriber feature generation. Names and values come out of the same
//! traversal, so a layout computed once always lines up with every row.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::aggregate::{locations_for, series_values, tally, Bucket, CharValue, Characteristic, Stream};
use crate::cdr::{EventStore, EventType, PointOfInterest, SubscriberHistory};
use crate::featurize::geo::{geo_summary, PlaceRule};
use crate::featurize::names::{
    sanitize_token, CalendarShare, ContactStat, FeatureName, GeoStat, PairStat, SeriesStat, WindowVariant,
};
use crate::featurize::stats;
use crate::featurize::taxonomy::FeatureTaxonomy;

/// Category values that get their own fraction column, per
/// (stream, characteristic). Shared by every row of a matrix.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Universe {
    values: BTreeMap<(Stream, Characteristic), BTreeSet<CharValue>>,
}

impl Universe {
    /// Union of values observed across all histories in `store`.
    pub fn observe(taxonomy: &FeatureTaxonomy, store: &EventStore) -> Universe {
        let mut values: BTreeMap<(Stream, Characteristic), BTreeSet<CharValue>> = BTreeMap::new();
        for &(stream, ch) in &taxonomy.categorical {
            let set = values.entry((stream, ch)).or_default();
            if ch == Characteristic::Counterparty {
                continue;
            }
            for h in store.histories() {
                for e in h.events.iter().filter(|e| e.event_type == stream.event_type()) {
                    if let Some(v) = ch.value_of(e) {
                        set.insert(v);
                    }
                }
            }
        }
        Universe { values }
    }

    pub fn union(mut self, other: &Universe) -> Universe {
        for (k, v) in &other.values {
            self.values.entry(*k).or_default().extend(v.iter().copied());
        }
        self
    }

    fn values_for(&self, stream: Stream, ch: Characteristic) -> impl Iterator<Item = &CharValue> {
        self.values.get(&(stream, ch)).into_iter().flatten()
    }
}

pub(crate) trait Sink {
    fn put(&mut self, name: &dyn Fn() -> FeatureName, value: Option<f64>);
}

pub(crate) struct NameSink(pub Vec<FeatureName>);

impl Sink for NameSink {
    fn put(&mut self, name: &dyn Fn() -> FeatureName, _: Option<f64>) {
        self.0.push(name());
    }
}

/// Values with `NaN` standing for missing.
pub(crate) struct ValueSink(pub Vec<f64>);

impl Sink for ValueSink {
    fn put(&mut self, _: &dyn Fn() -> FeatureName, value: Option<f64>) {
        self.0.push(value.filter(|v| v.is_finite()).unwrap_or(f64::NAN));
    }
}

pub(crate) struct Context<'a> {
    pub taxonomy: &'a FeatureTaxonomy,
    pub universe: &'a Universe,
    pub pois: &'a [PointOfInterest],
}

struct SeriesCache<'h> {
    history: Option<&'h SubscriberHistory>,
    cache: HashMap<(Stream, Bucket), Vec<f64>>,
}

impl SeriesCache<'_> {
    fn get(&mut self, stream: Stream, bucket: Bucket) -> &[f64] {
        let h = self.history;
        self.cache
            .entry((stream, bucket))
            .or_insert_with(|| h.map(|h| series_values(h, stream, bucket)).unwrap_or_default())
    }
}

/// Emit every phone feature for one subscriber. `history` is `None` for a
/// subscriber without events, whose features are then all missing.
pub(crate) fn emit(ctx: &Context<'_>, history: Option<&SubscriberHistory>, sink: &mut dyn Sink) {
    let history = history.filter(|h| !h.events.is_empty());
    let tax = ctx.taxonomy;
    let mut series = SeriesCache {
        history,
        cache: HashMap::new(),
    };

    for &stream in &tax.streams {
        for &bucket in &tax.buckets {
            let full = series.get(stream, bucket).to_vec();
            for &variant in &tax.variants {
                emit_series(ctx, stream, bucket, variant, &variant.apply(&full), sink);
            }
        }
    }

    let events = history.map(|h| h.events.as_slice()).unwrap_or(&[]);
    for &(stream, ch) in &tax.categorical {
        let amounts = tally(events, stream.event_type(), ch, stream.measure()).unwrap_or_default();
        let total: f64 = amounts.iter().map(|(_, a)| a).sum();
        if ch != Characteristic::Counterparty {
            for v in ctx.universe.values_for(stream, ch) {
                let label = v.label().unwrap_or_default();
                let own = amounts.iter().find(|(k, _)| k == v).map_or(0.0, |(_, a)| *a);
                sink.put(
                    &|| FeatureName::Fraction {
                        stream,
                        characteristic: ch,
                        value: label.clone(),
                    },
                    (total > 0.0).then(|| own / total),
                );
            }
        }
        let raw: Vec<f64> = amounts.iter().map(|(_, a)| *a).collect();
        sink.put(
            &|| FeatureName::Hhi {
                stream,
                characteristic: ch,
            },
            stats::shares_and_hhi(&raw).map(|(_, h)| h),
        );
    }

    if tax.calendar_shares {
        for &stream in &tax.streams {
            let (mut total, mut work, mut holiday) = (0.0, 0.0, 0.0);
            for e in events {
                if let Some(a) = stream.amount(e) {
                    total += a;
                    if e.traits.is_workday {
                        work += a;
                    }
                    if e.traits.is_holiday {
                        holiday += a;
                    }
                }
            }
            for (share, part) in [(CalendarShare::WorkDay, work), (CalendarShare::Holiday, holiday)] {
                sink.put(
                    &|| FeatureName::Calendar { stream, share },
                    (total > 0.0).then(|| part / total),
                );
            }
        }
    }

    if tax.contacts {
        let c = contact_summary(history);
        for (stat, v) in [
            (ContactStat::Degree, c.degree),
            (ContactStat::TopContactShare, c.top_share),
            (ContactStat::Hhi, c.hhi),
            (ContactStat::CallsReturned, c.calls_returned),
        ] {
            sink.put(&|| FeatureName::Contact(stat), v);
        }
    }

    if tax.geography {
        let rule = PlaceRule {
            cluster_km: tax.cluster_km,
            min_day_share: tax.important_day_share,
            min_days: tax.important_min_days,
        };
        let g = match history {
            Some(h) => geo_summary(&locations_for(h), ctx.pois, rule),
            None => geo_summary(&empty_locations(), ctx.pois, rule),
        };
        sink.put(&|| FeatureName::Geo(GeoStat::TowerCount), g.tower_count);
        sink.put(&|| FeatureName::Geo(GeoStat::MaxPairwiseDistance), g.max_pairwise_km);
        sink.put(&|| FeatureName::Geo(GeoStat::RadiusFromCentroid), g.radius_km);
        for (poi, d) in ctx.pois.iter().zip(&g.poi_km) {
            sink.put(
                &|| FeatureName::Geo(GeoStat::DistanceToPoi(sanitize_token(&poi.name))),
                *d,
            );
        }
        sink.put(&|| FeatureName::Geo(GeoStat::ImportantPlaces), g.important_places);
    }

    for &(a, b) in &tax.pairs {
        for &bucket in &tax.pair_buckets {
            let sa = series.get(a, bucket).to_vec();
            let sb = series.get(b, bucket);
            for &lag in &tax.pair_lags {
                for &method in &tax.correlation_methods {
                    sink.put(
                        &|| FeatureName::Pair {
                            a,
                            b,
                            bucket,
                            stat: PairStat::Correlation { lag, method },
                        },
                        stats::lagged_correlation(&sa, sb, lag, method),
                    );
                }
            }
            sink.put(
                &|| FeatureName::Pair {
                    a,
                    b,
                    bucket,
                    stat: PairStat::Ratio,
                },
                stats::ratio_of_totals(&sa, sb),
            );
        }
    }
}

fn empty_locations() -> crate::aggregate::LocationSet {
    crate::aggregate::LocationSet {
        subscriber_id: "".into(),
        points: Vec::new(),
        observed_days: 0,
    }
}

fn emit_series(
    ctx: &Context<'_>,
    stream: Stream,
    bucket: Bucket,
    variant: WindowVariant,
    x: &[f64],
    sink: &mut dyn Sink,
) {
    let tax = ctx.taxonomy;
    let mut put = |stat: SeriesStat, v: Option<f64>| {
        sink.put(
            &|| FeatureName::Series {
                stream,
                bucket,
                variant,
                stat,
            },
            v,
        )
    };
    let c = stats::central_dispersion(x, &tax.percentiles, &tax.spreads);
    put(SeriesStat::Mean, c.mean);
    put(SeriesStat::Median, c.median);
    put(SeriesStat::Sd, c.sd);
    put(SeriesStat::Max, c.max);
    put(SeriesStat::Min, c.min);
    for (&p, &q) in tax.percentiles.iter().zip(&c.quantiles) {
        put(SeriesStat::Quantile(p), q);
    }
    for (&(a, b), &s) in tax.spreads.iter().zip(&c.spreads) {
        put(SeriesStat::Spread(a, b), s);
    }
    put(SeriesStat::MeanOverSd, c.mean_over_sd);
    if !variant.is_ordered() {
        return;
    }
    put(SeriesStat::Slope, stats::slope(x));
    for &lag in tax.lags_for(bucket) {
        for &method in &tax.correlation_methods {
            put(
                SeriesStat::AutoCorrelation { lag, method },
                stats::autocorrelation(x, lag, method),
            );
        }
    }
    if tax.periodicity_ranks == 0 {
        return;
    }
    let weekly = bucket == Bucket::Day;
    let p = stats::periodicity(x, tax.periodicity_ranks, weekly);
    for (r, &m) in p.magnitudes.iter().enumerate() {
        put(SeriesStat::Magnitude(r), m);
    }
    if tax.periodicity_ranks >= 3 {
        put(SeriesStat::RatioRank0Rank2, p.ratio_rank0_rank2);
    }
    put(SeriesStat::RatioRank0AllOther, p.ratio_rank0_all_other);
    if weekly {
        put(SeriesStat::RatioWeeklyAllOther, p.ratio_weekly_all_other);
    }
    if tax.periodicity_ranks >= 2 {
        put(SeriesStat::DifferenceRank0Rank1, p.difference_rank0_rank1);
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContactSummary {
    pub degree: Option<f64>,
    pub top_share: Option<f64>,
    pub hhi: Option<f64>,
    pub calls_returned: Option<f64>,
}

/// Outgoing-contact structure over outgoing calls and texts.
pub fn contact_summary(history: Option<&SubscriberHistory>) -> ContactSummary {
    let Some(h) = history else {
        return ContactSummary::default();
    };
    let mut out: BTreeMap<u32, f64> = BTreeMap::new();
    let mut called: BTreeSet<u32> = BTreeSet::new();
    let mut callers: BTreeSet<u32> = BTreeSet::new();
    for e in &h.events {
        let Some(c) = e.counterparty else { continue };
        match e.event_type {
            EventType::CallOut => {
                called.insert(c.0);
                *out.entry(c.0).or_default() += 1.0;
            }
            EventType::SmsOut => *out.entry(c.0).or_default() += 1.0,
            EventType::CallIn => {
                callers.insert(c.0);
            }
            _ => {}
        }
    }
    let amounts: Vec<f64> = out.values().copied().collect();
    let shares = stats::shares_and_hhi(&amounts);
    ContactSummary {
        degree: (!out.is_empty()).then_some(out.len() as f64),
        top_share: shares.as_ref().map(|(s, _)| s.iter().copied().fold(0.0, f64::max)),
        hhi: shares.map(|(_, h)| h),
        calls_returned: (!called.is_empty())
            .then(|| called.intersection(&callers).count() as f64 / called.len() as f64),
    }
}

/// Names in emission order for the given context.
pub(crate) fn layout(ctx: &Context<'_>) -> Vec<FeatureName> {
    let mut sink = NameSink(Vec::new());
    emit(ctx, None, &mut sink);
    sink.0
}

pub(crate) fn row(ctx: &Context<'_>, history: Option<&SubscriberHistory>, width: usize) -> Vec<f64> {
    let mut sink = ValueSink(Vec::with_capacity(width));
    emit(ctx, history, &mut sink);
    sink.0
}

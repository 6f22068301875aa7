//! Synthetic populations with planted structure: latent borrower types that
//! drive both phone behavior and default, optional loan-week shocks and
//! event thinning.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cdr::{
    midnight, write_events_csv, AccountType, BuildStats, CalendarConfig, Country, EventRecord, EventStore, EventType,
    LoanRecord, LoanTable, ObservationWindow, Tower, SECONDS_PER_DAY,
};
use crate::error::{Error, Result};
use crate::featurize::geo::EARTH_RADIUS_KM;

/// Behavior of one latent borrower type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentType {
    pub name: String,
    pub weight: f64,
    pub theta: f64,
    pub calls_per_day: f64,
    pub sms_per_day: f64,
    /// Incoming rate as a multiple of the outgoing rate.
    pub incoming_ratio: f64,
    pub duration_mean_s: f64,
    /// Relative amplitude of the weekly cycle, in [0, 1].
    pub weekly_amplitude: f64,
    /// Phase of the weekly cycle in radians.
    pub phase: f64,
    /// Relative change in rate per week.
    pub trend: f64,
    pub contacts: u32,
    /// Zipf exponent of contact choice; higher is more concentrated.
    pub concentration: f64,
    pub towers: u32,
    pub mobility_km: f64,
    pub foreign_share: f64,
    pub postpaid_share: f64,
}

impl LatentType {
    pub fn responsible() -> LatentType {
        LatentType {
            name: "responsible".into(),
            weight: 0.7,
            theta: 0.0,
            calls_per_day: 3.5,
            sms_per_day: 3.5,
            incoming_ratio: 0.9,
            duration_mean_s: 80.0,
            weekly_amplitude: 0.6,
            phase: 0.0,
            trend: 0.0,
            contacts: 25,
            concentration: 1.0,
            towers: 6,
            mobility_km: 3.0,
            foreign_share: 0.02,
            postpaid_share: 0.2,
        }
    }

    pub fn risky() -> LatentType {
        LatentType {
            name: "risky".into(),
            weight: 0.3,
            theta: 1.0,
            calls_per_day: 3.0,
            sms_per_day: 3.2,
            incoming_ratio: 0.8,
            duration_mean_s: 70.0,
            weekly_amplitude: 0.35,
            phase: 0.0,
            trend: -0.01,
            contacts: 18,
            concentration: 1.15,
            towers: 5,
            mobility_km: 4.0,
            foreign_share: 0.03,
            postpaid_share: 0.15,
        }
    }
}

/// Log-odds shock to loans dated in `weeks` plus a level shift of one
/// stream over the days before each exposed loan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shock {
    /// Week indices counted from the span start (week k covers days
    /// 7k..7k+7).
    pub weeks: Vec<u32>,
    pub magnitude: f64,
    #[serde(default = "default_shock_stream")]
    pub stream: EventType,
    /// The stream's rate is multiplied by exp(coupling · magnitude).
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    #[serde(default = "default_lead_days")]
    pub lead_days: u32,
}

fn default_shock_stream() -> EventType {
    EventType::CallOut
}

fn default_coupling() -> f64 {
    0.5
}

fn default_lead_days() -> u32 {
    14
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub lat: f64,
    pub lon: f64,
    pub radius_km: f64,
}

impl Default for Region {
    fn default() -> Self {
        Region {
            lat: 4.65,
            lon: -74.08,
            radius_km: 15.0,
        }
    }
}

/// Generator settings. Only `seed` is mandatory in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    #[serde(default = "default_subscribers")]
    pub subscribers: usize,
    #[serde(default = "default_start")]
    pub start: NaiveDate,
    #[serde(default = "default_span")]
    pub span_days: u32,
    /// Loans are dated uniformly on days [loan_from_day, span_days).
    #[serde(default = "default_loan_from")]
    pub loan_from_day: u32,
    #[serde(default = "default_base_rate")]
    pub base_rate: f64,
    /// Log-odds of default per unit of latent theta.
    #[serde(default = "default_signal")]
    pub signal: f64,
    #[serde(default = "default_types")]
    pub types: Vec<LatentType>,
    /// Per-subscriber spread around the type: log-scale SD of the activity
    /// and mobility multipliers, and SD of the weekly amplitude. Contact and
    /// tower pool sizes are Poisson around the type values.
    #[serde(default = "default_heterogeneity")]
    pub heterogeneity: f64,
    /// Shift of the bureau covariate per unit theta, in SD units.
    #[serde(default = "default_bureau_signal")]
    pub bureau_signal: f64,
    /// Share of subscribers without a bureau record.
    #[serde(default = "default_bureau_missing")]
    pub bureau_missing: f64,
    #[serde(default = "default_home_country")]
    pub home_country: String,
    #[serde(default)]
    pub region: Region,
    #[serde(default)]
    pub shocks: Vec<Shock>,
    /// Probability that each generated event is dropped.
    #[serde(default)]
    pub thin_rate: f64,
}

fn default_subscribers() -> usize {
    1000
}
fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, 1, 4).expect("valid date")
}
fn default_span() -> u32 {
    140
}
fn default_loan_from() -> u32 {
    28
}
fn default_base_rate() -> f64 {
    0.11
}
fn default_signal() -> f64 {
    2.8
}
fn default_types() -> Vec<LatentType> {
    vec![LatentType::responsible(), LatentType::risky()]
}
fn default_heterogeneity() -> f64 {
    0.35
}
fn default_bureau_signal() -> f64 {
    0.15
}
fn default_bureau_missing() -> f64 {
    0.15
}
fn default_home_country() -> String {
    "CO".into()
}

impl SynthConfig {
    pub fn new(seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            subscribers: default_subscribers(),
            start: default_start(),
            span_days: default_span(),
            loan_from_day: default_loan_from(),
            base_rate: default_base_rate(),
            signal: default_signal(),
            types: default_types(),
            heterogeneity: default_heterogeneity(),
            bureau_signal: default_bureau_signal(),
            bureau_missing: default_bureau_missing(),
            home_country: default_home_country(),
            region: Region::default(),
            shocks: Vec::new(),
            thin_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.subscribers < 10 {
            return bad(format!("need at least 10 subscribers, got {}", self.subscribers));
        }
        if self.loan_from_day >= self.span_days {
            return bad("loan_from_day must fall inside the span".into());
        }
        if !(self.base_rate > 0.0 && self.base_rate < 1.0) {
            return bad(format!("base_rate {} outside (0, 1)", self.base_rate));
        }
        if self.types.is_empty() {
            return bad("at least one latent type is required".into());
        }
        let total: f64 = self.types.iter().map(|t| t.weight).sum();
        if (total - 1.0).abs() > 1e-9 || self.types.iter().any(|t| t.weight < 0.0) {
            return bad(format!(
                "latent type weights must be non-negative and sum to 1, got {total}"
            ));
        }
        for t in &self.types {
            let rates = [
                t.calls_per_day,
                t.sms_per_day,
                t.incoming_ratio,
                t.duration_mean_s,
                t.mobility_km,
            ];
            if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                return bad(format!("type '{}': rates must be finite and non-negative", t.name));
            }
            if !(0.0..=1.0).contains(&t.weekly_amplitude) {
                return bad(format!("type '{}': weekly_amplitude outside [0, 1]", t.name));
            }
            if t.contacts == 0 || t.towers == 0 {
                return bad(format!("type '{}': contacts and towers must be positive", t.name));
            }
            for s in [t.foreign_share, t.postpaid_share] {
                if !(0.0..=1.0).contains(&s) {
                    return bad(format!("type '{}': shares must lie in [0, 1]", t.name));
                }
            }
        }
        if !(0.0..1.0).contains(&self.thin_rate) {
            return bad(format!("thin_rate {} outside [0, 1)", self.thin_rate));
        }
        if !(0.0..=1.0).contains(&self.bureau_missing) {
            return bad("bureau_missing outside [0, 1]".into());
        }
        if Country::code(&self.home_country).is_none() {
            return bad(format!("home_country '{}' is not a two-letter code", self.home_country));
        }
        let weeks = self.span_days.div_ceil(7);
        for s in &self.shocks {
            if let Some(w) = s.weeks.iter().find(|&&w| w >= weeks) {
                return bad(format!("shock week {w} outside the {weeks}-week span"));
            }
        }
        Ok(())
    }

    pub fn window(&self) -> Result<ObservationWindow> {
        ObservationWindow::days(self.start, self.start + Duration::days(i64::from(self.span_days)))
    }
}

/// Add a shock of `magnitude` to the loans dated in `weeks`.
pub fn plant_shock(config: &SynthConfig, weeks: &[u32], magnitude: f64) -> SynthConfig {
    let mut c = config.clone();
    c.shocks.push(Shock {
        weeks: weeks.to_vec(),
        magnitude,
        stream: default_shock_stream(),
        coupling: default_coupling(),
        lead_days: default_lead_days(),
    });
    c
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intercept whose expected default rate over the type mixture equals
/// `target`, by bisection.
pub fn calibrate_alpha(types: &[LatentType], signal: f64, target: f64) -> Result<f64> {
    let rate = |a: f64| {
        types
            .iter()
            .map(|t| t.weight * logistic(a + signal * t.theta))
            .sum::<f64>()
    };
    let (mut lo, mut hi) = (-40.0, 40.0);
    if !(rate(lo) < target && target < rate(hi)) {
        return Err(Error::Calibration(format!(
            "base rate {target} unreachable with signal {signal} (attainable range {:.3e}..{:.6})",
            rate(lo),
            rate(hi)
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha = 0.5 * (lo + hi);
    for t in types.iter().filter(|t| t.weight > 0.0) {
        let p = logistic(alpha + signal * t.theta);
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Calibration(format!(
                "type '{}' default probability degenerates to {p} at base rate {target}",
                t.name
            )));
        }
    }
    Ok(alpha)
}

/// Oracle bookkeeping for one subscriber.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub subscriber_id: String,
    pub latent_type: String,
    pub theta: f64,
    pub true_p: f64,
    /// Log-odds shock applied to this loan.
    pub shock: f64,
    pub default: bool,
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub records: Vec<EventRecord>,
    pub loans: LoanTable,
    pub truth: Vec<GroundTruth>,
    pub window: ObservationWindow,
    pub alpha: f64,
}

pub const BUREAU_COVARIATE: &str = "bureau_score";
pub const AGE_COVARIATE: &str = "age";

struct Subscriber {
    records: Vec<EventRecord>,
    loan: LoanRecord,
    truth: GroundTruth,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Offset by (north, east) kilometres.
fn displace(lat: f64, lon: f64, north_km: f64, east_km: f64) -> (f64, f64) {
    let dlat = (north_km / EARTH_RADIUS_KM).to_degrees();
    let dlon = (east_km / (EARTH_RADIUS_KM * lat.to_radians().cos())).to_degrees();
    (lat + dlat, lon + dlon)
}

fn point_in_disk(rng: &mut ChaCha8Rng, lat: f64, lon: f64, radius_km: f64) -> (f64, f64) {
    let r = radius_km * rng.random::<f64>().sqrt();
    let a = rng.random::<f64>() * 2.0 * PI;
    displace(lat, lon, r * a.sin(), r * a.cos())
}

fn pick(rng: &mut ChaCha8Rng, cumulative: &[f64]) -> usize {
    let u = rng.random::<f64>() * cumulative.last().copied().unwrap_or(1.0);
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    weights
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

const FOREIGN: [&str; 3] = ["US", "VE", "EC"];

fn subscriber(config: &SynthConfig, alpha: f64, index: usize) -> Subscriber {
    let mut rng = rng_for(config.seed, index as u64);
    let id: Arc<str> = format!("s{index:06}").into();
    let type_cum = cumulative(config.types.iter().map(|t| t.weight));
    let ty = &config.types[pick(&mut rng, &type_cum)];
    let spread = LogNormal::new(0.0, config.heterogeneity.max(0.0)).expect("valid lognormal");
    let activity = spread.sample(&mut rng);
    let sms_activity = activity * spread.sample(&mut rng);
    let incoming = ty.incoming_ratio * spread.sample(&mut rng);
    let duration_mean = ty.duration_mean_s * spread.sample(&mut rng);
    let mobility = ty.mobility_km * spread.sample(&mut rng);
    let amplitude = (ty.weekly_amplitude
        + config.heterogeneity * Normal::new(0.0, 1.0).expect("valid normal").sample(&mut rng))
    .clamp(0.0, 1.0);
    let pool = |rng: &mut ChaCha8Rng, mean: u32| -> u32 {
        if mean <= 1 {
            return mean;
        }
        1 + Poisson::new(f64::from(mean - 1)).expect("positive mean").sample(rng) as u32
    };
    let n_contacts = pool(&mut rng, ty.contacts);
    let n_towers = pool(&mut rng, ty.towers);
    let loan_day = rng.random_range(config.loan_from_day..config.span_days);
    let loan_date = config.start + Duration::days(i64::from(loan_day));
    let loan_week = loan_day / 7;

    // Contacts with fixed attributes; choice weights fall off by rank.
    let home = Country::code(&config.home_country).expect("validated");
    let contacts: Vec<(Arc<str>, AccountType, Country)> = (0..n_contacts)
        .map(|k| {
            let account = if rng.random::<f64>() < ty.postpaid_share {
                AccountType::Postpaid
            } else {
                AccountType::Prepaid
            };
            let country = if rng.random::<f64>() < ty.foreign_share {
                Country::code(FOREIGN[rng.random_range(0..FOREIGN.len())]).expect("valid code")
            } else {
                home
            };
            (Arc::from(format!("{id}-c{k}")), account, country)
        })
        .collect();
    let contact_cum = cumulative((0..n_contacts).map(|k| (f64::from(k) + 1.0).powf(-ty.concentration)));

    let (hlat, hlon) = point_in_disk(&mut rng, config.region.lat, config.region.lon, config.region.radius_km);
    let towers: Vec<Tower> = (0..n_towers)
        .map(|k| {
            let (lat, lon) = if k == 0 {
                (hlat, hlon)
            } else {
                point_in_disk(&mut rng, hlat, hlon, mobility)
            };
            Tower::new(lat, lon).expect("tower in range")
        })
        .collect();
    let tower_cum = cumulative((0..n_towers).map(|k| 1.0 / (f64::from(k) + 1.0)));

    let bureau = Normal::new(config.bureau_signal * ty.theta, 1.0)
        .expect("valid normal")
        .sample(&mut rng);
    let has_bureau = rng.random::<f64>() >= config.bureau_missing;
    let age = f64::from(rng.random_range(18u32..66));

    let shock: f64 = config
        .shocks
        .iter()
        .filter(|s| s.weeks.contains(&loan_week))
        .fold(0.0, |acc, s| acc + s.magnitude);
    let true_p = logistic(alpha + config.signal * ty.theta + shock);
    let default = rng.random::<f64>() < true_p;

    let streams = [
        (EventType::CallOut, ty.calls_per_day * activity),
        (EventType::SmsOut, ty.sms_per_day * sms_activity),
        (EventType::CallIn, ty.calls_per_day * activity * incoming),
        (EventType::SmsIn, ty.sms_per_day * sms_activity * incoming),
    ];
    let duration = Exp::new(1.0 / duration_mean.max(1.0)).expect("valid exponential");
    let mut records = Vec::new();
    for day in 0..loan_day {
        let t = f64::from(day);
        let cycle = (1.0 + amplitude * (2.0 * PI * t / 7.0 + ty.phase).cos()).max(0.0);
        let trend = (1.0 + ty.trend * t / 7.0).max(0.0);
        let day_start = midnight(config.start).timestamp() + i64::from(day) * SECONDS_PER_DAY;
        for &(event_type, base) in &streams {
            let mut rate = base * cycle * trend;
            for s in &config.shocks {
                if s.stream == event_type && s.weeks.contains(&loan_week) && day + s.lead_days >= loan_day {
                    rate *= (s.coupling * s.magnitude).exp();
                }
            }
            let count = if rate > 0.0 {
                Poisson::new(rate).expect("positive rate").sample(&mut rng) as u64
            } else {
                0
            };
            for _ in 0..count {
                let second = rng.random_range(0..SECONDS_PER_DAY);
                let (cp, account, country) = contacts[pick(&mut rng, &contact_cum)].clone();
                let tower = towers[pick(&mut rng, &tower_cum)];
                let dur = event_type
                    .is_call()
                    .then(|| 1 + duration.sample(&mut rng).floor().min(1e6) as u32);
                records.push(EventRecord {
                    subscriber_id: id.clone(),
                    timestamp: DateTime::from_timestamp(day_start + second, 0).expect("valid timestamp"),
                    event_type,
                    duration: dur,
                    counterparty_id: Some(cp),
                    counterparty_account: account,
                    counterparty_country: country,
                    tower: Some(tower),
                });
            }
        }
    }
    records.sort_by(|a, b| a.canonical_cmp(b));
    if config.thin_rate > 0.0 {
        let mut thin_rng = rng_for(config.seed, (1 << 32) + index as u64);
        records.retain(|_| thin_rng.random::<f64>() >= config.thin_rate);
    }

    let mut covariates = BTreeMap::new();
    covariates.insert(AGE_COVARIATE.to_string(), age);
    if has_bureau {
        covariates.insert(BUREAU_COVARIATE.to_string(), bureau);
    }
    Subscriber {
        records,
        loan: LoanRecord {
            subscriber_id: id.clone(),
            loan_date,
            default,
            covariates,
        },
        truth: GroundTruth {
            subscriber_id: id.to_string(),
            latent_type: ty.name.clone(),
            theta: ty.theta,
            true_p,
            shock,
            default,
        },
    }
}

/// Generate a population. Deterministic given the config, independent of
/// thread count.
pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let alpha = calibrate_alpha(&config.types, config.signal, config.base_rate)?;
    let subs: Vec<Subscriber> = (0..config.subscribers)
        .into_par_iter()
        .map(|i| subscriber(config, alpha, i))
        .collect();
    let mut records = Vec::with_capacity(subs.iter().map(|s| s.records.len()).sum());
    let mut loans = Vec::with_capacity(subs.len());
    let mut truth = Vec::with_capacity(subs.len());
    for s in subs {
        records.extend(s.records);
        loans.push(s.loan);
        truth.push(s.truth);
    }
    Ok(SynthData {
        records,
        loans: LoanTable::from_records(loans, vec![AGE_COVARIATE.into(), BUREAU_COVARIATE.into()])?,
        truth,
        window: config.window()?,
        alpha,
    })
}

/// Drop each record independently with probability `rate`.
pub fn thin(records: &[EventRecord], rate: f64, seed: u64) -> Result<Vec<EventRecord>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("thinning rate {rate} outside [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(records
        .iter()
        .filter(|_| rng.random::<f64>() >= rate)
        .cloned()
        .collect())
}

impl SynthData {
    /// Canonical event store over the generated span.
    pub fn store(&self, calendar: Arc<CalendarConfig>) -> (EventStore, BuildStats) {
        EventStore::from_records(self.records.clone(), self.window, calendar)
    }

    /// Write events.csv, loans.csv and groundtruth.csv into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = [
            dir.join("events.csv"),
            dir.join("loans.csv"),
            dir.join("groundtruth.csv"),
        ];
        self.write_files(&paths[0], &paths[1], &paths[2])?;
        Ok(paths.to_vec())
    }

    /// Write the event log, loan table and ground truth to the given paths.
    pub fn write_files(&self, events: &Path, loans: &Path, truth: &Path) -> Result<()> {
        let open = |p: &Path| -> Result<BufWriter<File>> {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            let f = File::create(p).map_err(|e| Error::io(p, e))?;
            Ok(BufWriter::new(f))
        };
        write_events_csv(self.records.iter().cloned(), open(events)?)?;
        self.loans.write_csv(open(loans)?)?;
        let mut w = open(truth)?;
        let mut body = String::from("subscriber_id,latent_type,theta,true_p,shock_exposure,default\n");
        for t in &self.truth {
            body.push_str(&format!(
                "{},{},{},{},{},{}\n",
                t.subscriber_id,
                t.latent_type,
                t.theta,
                t.true_p,
                t.shock,
                u8::from(t.default)
            ));
        }
        w.write_all(body.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(truth, e))
    }
}

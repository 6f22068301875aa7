use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregate::{Bucket, Characteristic, Stream};
use crate::featurize::names::WindowVariant;
use crate::featurize::stats::CorrMethod;

/// Which feature families to generate and with which parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureTaxonomy {
    pub streams: Vec<Stream>,
    pub buckets: Vec<Bucket>,
    pub variants: Vec<WindowVariant>,
    pub percentiles: Vec<u32>,
    pub spreads: Vec<(u32, u32)>,
    pub day_lags: Vec<usize>,
    /// Autocorrelation lags for week and 30-day buckets.
    pub coarse_lags: Vec<usize>,
    pub correlation_methods: Vec<CorrMethod>,
    pub periodicity_ranks: usize,
    /// (stream, characteristic) pairs tallied into fractions and HHI.
    pub categorical: Vec<(Stream, Characteristic)>,
    pub calendar_shares: bool,
    pub contacts: bool,
    pub geography: bool,
    pub pairs: Vec<(Stream, Stream)>,
    pub pair_buckets: Vec<Bucket>,
    pub pair_lags: Vec<usize>,
    pub cluster_km: f64,
    pub important_day_share: f64,
    pub important_min_days: u32,
}

fn categorical_grid(streams: &[Stream], chars: &[Characteristic]) -> Vec<(Stream, Characteristic)> {
    streams
        .iter()
        .flat_map(|&s| chars.iter().map(move |&c| (s, c)))
        .collect()
}

impl FeatureTaxonomy {
    /// Every family with every window variant and bucket.
    pub fn full() -> FeatureTaxonomy {
        use Characteristic::*;
        FeatureTaxonomy {
            streams: Stream::ALL.to_vec(),
            buckets: Bucket::ALL.to_vec(),
            variants: WindowVariant::ALL.to_vec(),
            percentiles: vec![20, 40, 50, 60, 80],
            spreads: vec![(80, 50), (50, 20), (60, 40)],
            day_lags: vec![1, 2, 7],
            coarse_lags: vec![1, 2],
            correlation_methods: CorrMethod::ALL.to_vec(),
            periodicity_ranks: 3,
            categorical: categorical_grid(
                &Stream::ALL,
                &[
                    DayOfWeek,
                    HourOfDay,
                    InDiscountBand,
                    AtBandDiscontinuity,
                    CounterpartyAccount,
                    CounterpartyCountry,
                    Counterparty,
                ],
            ),
            calendar_shares: true,
            contacts: true,
            geography: true,
            pairs: vec![
                (Stream::CallsOut, Stream::CallsIn),
                (Stream::SmsOut, Stream::SmsIn),
                (Stream::DurationOut, Stream::DurationIn),
                (Stream::CallsOut, Stream::SmsOut),
                (Stream::SmsOut, Stream::DurationOut),
                (Stream::CallsIn, Stream::SmsIn),
            ],
            pair_buckets: Bucket::ALL.to_vec(),
            pair_lags: vec![0, 1, 2],
            cluster_km: 1.0,
            important_day_share: 0.05,
            important_min_days: 2,
        }
    }

    /// A smaller set for quick experiments: outgoing streams, day and week
    /// buckets, full and nonzero variants.
    pub fn compact() -> FeatureTaxonomy {
        use Characteristic::*;
        let out = [Stream::CallsOut, Stream::SmsOut, Stream::DurationOut];
        FeatureTaxonomy {
            streams: out.to_vec(),
            buckets: vec![Bucket::Day, Bucket::Week],
            variants: vec![WindowVariant::Full, WindowVariant::NonZero],
            day_lags: vec![1, 7],
            coarse_lags: vec![1],
            correlation_methods: vec![CorrMethod::Pearson],
            categorical: categorical_grid(&out, &[DayOfWeek, InDiscountBand, CounterpartyAccount, Counterparty]),
            pairs: vec![(Stream::CallsOut, Stream::CallsIn), (Stream::CallsOut, Stream::SmsOut)],
            pair_buckets: vec![Bucket::Day],
            pair_lags: vec![0, 1],
            ..FeatureTaxonomy::full()
        }
    }

    pub fn preset(name: &str) -> Option<FeatureTaxonomy> {
        match name {
            "full" => Some(FeatureTaxonomy::full()),
            "compact" => Some(FeatureTaxonomy::compact()),
            _ => None,
        }
    }

    /// Stable content hash, recorded next to every feature matrix.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("taxonomy serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn lags_for(&self, bucket: Bucket) -> &[usize] {
        match bucket {
            Bucket::Day => &self.day_lags,
            _ => &self.coarse_lags,
        }
    }
}

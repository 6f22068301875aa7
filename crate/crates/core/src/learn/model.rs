//! Training and inference façade over the four model families.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::featurize::FeatureMatrix;
use crate::learn::forest::{fit_forest, Forest, ForestSpec};
use crate::learn::logistic::{fit_logistic, sigmoid, LogisticFit};
use crate::learn::ols_fe::{fit_ols_fe, OlsFeFit};
use crate::learn::prep::{fit_imputation, screen_univariate, Imputation, ScreenedFeature};
use crate::learn::stepwise::stepwise_select;
use crate::learn::weeks::{merge_weeks, WeekGroups};

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Family {
    LogitStepwise,
    Rf,
    OlsFeStepwise,
    RfWeeklyEnsemble,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Rf,
        Family::LogitStepwise,
        Family::RfWeeklyEnsemble,
        Family::OlsFeStepwise,
    ];

    /// Short name used on the command line and in file names.
    pub fn key(self) -> &'static str {
        match self {
            Family::LogitStepwise => "logit",
            Family::Rf => "rf",
            Family::OlsFeStepwise => "ols_fe",
            Family::RfWeeklyEnsemble => "rf_weekly",
        }
    }

    pub fn uses_weeks(self) -> bool {
        matches!(self, Family::OlsFeStepwise | Family::RfWeeklyEnsemble)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Family> {
        Family::ALL.into_iter().find(|f| f.key() == s).ok_or_else(|| {
            let valid: Vec<&str> = Family::ALL.iter().map(|f| f.key()).collect();
            Error::Config(format!("unknown model family '{s}'; valid: {}", valid.join(", ")))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnConfig {
    /// Candidates kept after univariate screening for stepwise search.
    pub pool_size: usize,
    /// Size of the second stepwise start set (top screened features).
    pub start_top: usize,
    pub forest: ForestSpec,
    pub min_week_loans: usize,
    /// Recency decay for the weekly ensemble's group weights.
    pub recency_gamma: f64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            pool_size: 200,
            start_top: 5,
            forest: ForestSpec::default(),
            min_week_loans: 50,
            recency_gamma: 1.0,
        }
    }
}

/// Rows to learn from: features, default labels and loan week numbers.
#[derive(Clone, Copy, Debug)]
pub struct TrainingSet<'a> {
    pub x: &'a FeatureMatrix,
    pub y: &'a [bool],
    pub weeks: &'a [i64],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub data_sha256: String,
    pub seed: u64,
    pub config_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelBody {
    Logistic(LogisticFit),
    Forest(Forest),
    OlsFe(OlsFeFit),
    WeeklyForests { groups: WeekGroups, forests: Vec<Forest> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub version: u32,
    pub family: Family,
    /// Exactly the columns `score` consumes, in order.
    pub features: Vec<String>,
    pub imputation: Vec<f64>,
    pub week_weights: Vec<f64>,
    pub model: ModelBody,
    pub warnings: Vec<String>,
    pub fingerprint: Fingerprint,
}

impl ModelArtifact {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<ModelArtifact> {
        let a: ModelArtifact = serde_json::from_str(s)?;
        if a.version != ARTIFACT_VERSION {
            return Err(Error::InvalidInput(format!(
                "artifact version {} is not supported (expected {ARTIFACT_VERSION})",
                a.version
            )));
        }
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ModelArtifact> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ModelArtifact::from_json(&s)
    }

    /// Ranking scores, higher = riskier. Fixed-effects scores are not
    /// clamped here.
    pub fn score(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let imp = Imputation {
            features: self.features.clone(),
            constants: self.imputation.clone(),
        };
        let m = imp.apply(x)?;
        let cols: Vec<&[f64]> = m.columns.iter().map(Vec::as_slice).collect();
        let n = m.n_rows();
        Ok(match &self.model {
            ModelBody::Logistic(fit) => (0..n).map(|i| sigmoid(fit.linear_predictor(|j| cols[j][i]))).collect(),
            ModelBody::Forest(f) => f.score(&cols),
            ModelBody::OlsFe(fit) => (0..n).map(|i| fit.score_row(|j| cols[j][i])).collect(),
            ModelBody::WeeklyForests { forests, .. } => {
                let per: Vec<Vec<f64>> = forests.iter().map(|f| f.score(&cols)).collect();
                (0..n)
                    .map(|i| per.iter().zip(&self.week_weights).map(|(s, w)| w * s[i]).sum())
                    .collect()
            }
        })
    }

    /// Default probabilities in [0, 1].
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        Ok(self.score(x)?.into_iter().map(|s| s.clamp(0.0, 1.0)).collect())
    }
}

fn data_hash(set: &TrainingSet<'_>) -> String {
    let mut h = Sha256::new();
    for n in &set.x.names {
        h.update(n.as_bytes());
        h.update([0]);
    }
    for s in &set.x.subscribers {
        h.update(s.as_bytes());
        h.update([0]);
    }
    for c in &set.x.columns {
        for v in c {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.update(set.y.iter().map(|&b| u8::from(b)).collect::<Vec<_>>());
    for w in set.weeks {
        h.update(w.to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn config_hash(family: Family, config: &LearnConfig) -> String {
    let json = serde_json::to_vec(&(family, config)).expect("config serializes");
    hex::encode(Sha256::digest(json))
}

fn check_labels(y: &[bool], context: &str) -> Result<()> {
    if y.iter().all(|&v| v) || !y.iter().any(|&v| v) {
        return Err(Error::SingleClass {
            context: Some(context.to_string()),
        });
    }
    Ok(())
}

/// Screen, then pick a subset by stepwise BIC. Returns the pool-ordered
/// selected names.
fn stepwise_names(
    set: &TrainingSet<'_>,
    imputed: &FeatureMatrix,
    config: &LearnConfig,
    criterion: impl Fn(&[&[f64]], &[String]) -> Option<f64> + Sync,
    warnings: &mut Vec<String>,
) -> Vec<String> {
    let screened: Vec<ScreenedFeature> = screen_univariate(set.x, set.y);
    let pool: Vec<String> = screened
        .into_iter()
        .filter(|s| s.t.is_some() || s.infinite_t)
        .take(config.pool_size)
        .map(|s| s.name)
        .collect();
    let cols: Vec<&[f64]> = pool
        .iter()
        .map(|n| imputed.column(n).expect("pool drawn from matrix"))
        .collect();
    let score = |subset: &[usize]| {
        let c: Vec<&[f64]> = subset.iter().map(|&i| cols[i]).collect();
        let n: Vec<String> = subset.iter().map(|&i| pool[i].clone()).collect();
        criterion(&c, &n)
    };
    let starts = vec![Vec::new(), (0..config.start_top.min(pool.len())).collect()];
    match stepwise_select(&score, &pool, &starts) {
        Some(r) => r.subset.iter().map(|&i| pool[i].clone()).collect(),
        None => {
            warnings.push("no stepwise start could be fitted; using intercept-only model".into());
            Vec::new()
        }
    }
}

fn group_index(groups: &WeekGroups, weeks: &[i64]) -> Vec<usize> {
    weeks.iter().map(|&w| groups.group_of(w)).collect()
}

/// Fit one model family on a training set.
pub fn train(family: Family, set: &TrainingSet<'_>, config: &LearnConfig, seed: u64) -> Result<ModelArtifact> {
    let n = set.y.len();
    if set.x.n_rows() != n || set.weeks.len() != n {
        return Err(Error::InvalidInput("training rows do not align".into()));
    }
    check_labels(set.y, &format!("{family} training labels"))?;
    let mut warnings = Vec::new();
    let full_imp = fit_imputation(set.x, &mut warnings);
    let imputed = full_imp.apply(set.x)?;
    let cols_of =
        |names: &[String]| -> Vec<&[f64]> { names.iter().map(|n| imputed.column(n).expect("known column")).collect() };

    let (features, model, week_weights) = match family {
        Family::LogitStepwise => {
            let chosen = stepwise_names(
                set,
                &imputed,
                config,
                |c, names| fit_logistic(names, c, set.y).ok().map(|f| f.bic()),
                &mut warnings,
            );
            let fit = fit_logistic(&chosen, &cols_of(&chosen), set.y)?;
            if let Some(r) = fit.ridge {
                warnings.push(format!("singular design stabilized with ridge {r}"));
            }
            (chosen, ModelBody::Logistic(fit), Vec::new())
        }
        Family::OlsFeStepwise => {
            let groups = merge_weeks(set.weeks, config.min_week_loans);
            let gidx = group_index(&groups, set.weeks);
            let weights = groups.weights(1.0);
            let yf: Vec<f64> = set.y.iter().map(|&d| f64::from(u8::from(d))).collect();
            let chosen = stepwise_names(
                set,
                &imputed,
                config,
                |c, names| {
                    let fit = fit_ols_fe(names, c, &yf, &gidx, &weights).ok()?;
                    fit.dropped.is_empty().then(|| fit.bic())
                },
                &mut warnings,
            );
            let fit = fit_ols_fe(&chosen, &cols_of(&chosen), &yf, &gidx, &weights)?;
            for d in &fit.dropped {
                warnings.push(format!("feature {d} collinear with week effects; dropped"));
            }
            (chosen, ModelBody::OlsFe(fit), weights)
        }
        Family::Rf => {
            let names = set.x.names.clone();
            let forest = fit_forest(&cols_of(&names), set.y, &config.forest, seed)?;
            (names, ModelBody::Forest(forest), Vec::new())
        }
        Family::RfWeeklyEnsemble => {
            let mut groups = merge_weeks(set.weeks, config.min_week_loans);
            loop {
                let gidx = group_index(&groups, set.weeks);
                let single = (0..groups.len()).find(|&g| {
                    let labels: Vec<bool> = gidx
                        .iter()
                        .zip(set.y)
                        .filter(|(gi, _)| **gi == g)
                        .map(|(_, &y)| y)
                        .collect();
                    labels.iter().all(|&v| v) || !labels.iter().any(|&v| v)
                });
                match single {
                    Some(g) if groups.len() > 1 => {
                        warnings.push(format!("week group {g} has a single class; merged with a neighbour"));
                        groups.merge_with_neighbour(g);
                    }
                    Some(_) => {
                        return Err(Error::SingleClass {
                            context: Some("weekly ensemble group".into()),
                        })
                    }
                    None => break,
                }
            }
            let gidx = group_index(&groups, set.weeks);
            let names = set.x.names.clone();
            let all = cols_of(&names);
            let mut forests = Vec::with_capacity(groups.len());
            for g in 0..groups.len() {
                let rows: Vec<usize> = (0..n).filter(|&i| gidx[i] == g).collect();
                let sub: Vec<Vec<f64>> = all.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect();
                let sub_refs: Vec<&[f64]> = sub.iter().map(Vec::as_slice).collect();
                let y: Vec<bool> = rows.iter().map(|&i| set.y[i]).collect();
                forests.push(fit_forest(&sub_refs, &y, &config.forest, seed)?);
            }
            let weights = groups.weights(config.recency_gamma);
            (names, ModelBody::WeeklyForests { groups, forests }, weights)
        }
    };
    for w in &warnings {
        tracing::warn!(family = %family, "{w}");
    }
    Ok(ModelArtifact {
        version: ARTIFACT_VERSION,
        family,
        imputation: full_imp.restrict(&features).constants,
        features,
        week_weights,
        model,
        warnings,
        fingerprint: Fingerprint {
            data_sha256: data_hash(set),
            seed,
            config_sha256: config_hash(family, config),
        },
    })
}

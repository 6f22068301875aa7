//! Run configuration: one TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;

use cdrscore::cdr::{CalendarConfig, ObservationWindow};
use cdrscore::evaluate::EvalConfig;
use cdrscore::featurize::FeatureTaxonomy;
use cdrscore::learn::{Family, LearnConfig};
use cdrscore::synth::SynthConfig;

use crate::failure::Failure;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    families: Option<Vec<String>>,
    paths: RawPaths,
    #[serde(default)]
    data: DataSection,
    #[serde(default)]
    features: FeatureSection,
    #[serde(default)]
    learn: LearnConfig,
    #[serde(default)]
    eval: EvalConfig,
    synth: Option<toml::Table>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPaths {
    events: PathBuf,
    loans: PathBuf,
    calendar: Option<PathBuf>,
    output: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct DataSection {
    /// First day of the observation span, "YYYY-MM-DD".
    start: Option<String>,
    /// Day after the last observed day.
    end: Option<String>,
    /// Reject malformed event rows and subscribers without a loan.
    strict: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            start: None,
            end: None,
            strict: true,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FeatureSection {
    /// "full", "compact" or a path to a taxonomy TOML file.
    taxonomy: String,
    offset: bool,
}

impl Default for FeatureSection {
    fn default() -> Self {
        FeatureSection {
            taxonomy: "full".into(),
            offset: false,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub plots: bool,
    pub offset: bool,
    pub out_of_time: bool,
}

#[derive(Clone, Debug)]
pub struct Paths {
    pub events: PathBuf,
    pub loans: PathBuf,
    pub output: PathBuf,
}

impl Paths {
    pub fn groundtruth(&self) -> PathBuf {
        self.loans.with_file_name("groundtruth.csv")
    }
}

/// Validated settings for one invocation.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub families: Vec<Family>,
    pub paths: Paths,
    pub calendar: CalendarConfig,
    pub window: Option<ObservationWindow>,
    pub strict: bool,
    pub taxonomy: FeatureTaxonomy,
    pub offset: bool,
    pub out_of_time: bool,
    pub plots: bool,
    pub learn: LearnConfig,
    pub eval: EvalConfig,
    pub synth: Option<SynthConfig>,
}

fn config_err(msg: impl Into<String>) -> Failure {
    Failure::Config(anyhow::anyhow!(msg.into()))
}

fn parse_date(field: &str, s: &str) -> Result<NaiveDate, Failure> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| config_err(format!("data.{field} '{s}': {e}")))
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        RunConfig::parse(&text, base, overrides)
    }

    /// Parse and validate; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path, overrides: &Overrides) -> Result<RunConfig, Failure> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        let seed = overrides
            .seed
            .or(raw.seed)
            .ok_or_else(|| config_err("seed is required (set `seed` in the config or pass --seed)"))?;

        let families = match &raw.families {
            None => Family::ALL.to_vec(),
            Some(names) if names.is_empty() => return Err(config_err("families must not be empty")),
            Some(names) => names
                .iter()
                .map(|n| n.parse::<Family>())
                .collect::<Result<Vec<_>, _>>()?,
        };

        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let paths = Paths {
            events: resolve(&raw.paths.events),
            loans: resolve(&raw.paths.loans),
            output: resolve(&raw.paths.output),
        };
        let calendar = match &raw.paths.calendar {
            Some(p) => {
                let p = resolve(p);
                if !p.exists() {
                    return Err(config_err(format!("calendar file {} does not exist", p.display())));
                }
                CalendarConfig::load(&p)?
            }
            None => CalendarConfig::default(),
        };
        calendar.validate()?;

        let taxonomy = match FeatureTaxonomy::preset(&raw.features.taxonomy) {
            Some(t) => t,
            None => {
                let p = resolve(Path::new(&raw.features.taxonomy));
                let text = std::fs::read_to_string(&p).map_err(|e| {
                    config_err(format!(
                        "taxonomy '{}' is neither a preset (full, compact) nor a readable file: {e}",
                        raw.features.taxonomy
                    ))
                })?;
                toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))?
            }
        };

        let synth = match raw.synth {
            Some(mut table) => {
                if table.contains_key("seed") {
                    return Err(config_err("set the seed at the top level, not in [synth]"));
                }
                table.insert("seed".into(), toml::Value::Integer(0));
                let mut c: SynthConfig = table
                    .try_into()
                    .map_err(|e: toml::de::Error| config_err(format!("[synth]: {e}")))?;
                c.seed = seed;
                c.validate()?;
                Some(c)
            }
            None => None,
        };

        let window = match (&raw.data.start, &raw.data.end) {
            (Some(s), Some(e)) => Some(ObservationWindow::days(parse_date("start", s)?, parse_date("end", e)?)?),
            (None, None) => match &synth {
                Some(c) => Some(c.window()?),
                None => None,
            },
            _ => return Err(config_err("data.start and data.end must be given together")),
        };

        if raw.eval.folds < 2 || raw.eval.draws == 0 || raw.eval.grid == 0 {
            return Err(config_err("eval needs folds >= 2, draws >= 1 and grid >= 1"));
        }

        Ok(RunConfig {
            seed,
            families,
            paths,
            calendar,
            window,
            strict: raw.data.strict,
            taxonomy,
            offset: raw.features.offset || overrides.offset,
            out_of_time: overrides.out_of_time,
            plots: overrides.plots,
            learn: raw.learn,
            eval: raw.eval,
            synth,
        })
    }

    /// The synthetic generator settings; defaults apply without a [synth]
    /// section.
    pub fn synth_config(&self) -> Result<SynthConfig, Failure> {
        let c = self.synth.clone().unwrap_or_else(|| SynthConfig::new(self.seed));
        c.validate()?;
        Ok(c)
    }

    pub fn window(&self) -> Result<ObservationWindow, Failure> {
        self.window.ok_or_else(|| {
            config_err("set data.start and data.end (or a [synth] section) to define the observation span")
        })
    }

    /// Inputs that must exist before featurizing.
    pub fn check_inputs(&self) -> Result<(), Failure> {
        for p in [&self.paths.events, &self.paths.loans] {
            if !p.exists() {
                return Err(config_err(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

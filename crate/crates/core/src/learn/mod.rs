//! Model families: stepwise logistic regression, random forest, week
//! fixed-effects linear probability model and the weekly forest ensemble.

pub mod forest;
mod linalg;
pub mod logistic;
mod model;
pub mod ols_fe;
pub mod prep;
pub mod stepwise;
pub mod weeks;

pub use forest::{fit_forest, Forest, ForestSpec, Tree};
pub use logistic::{bic, fit_logistic, LogisticFit};
pub use model::{train, Family, Fingerprint, LearnConfig, ModelArtifact, ModelBody, TrainingSet, ARTIFACT_VERSION};
pub use ols_fe::{fit_ols_fe, OlsFeFit};
pub use prep::{fit_imputation, impute, screen_univariate, Imputation, ScreenedFeature};
pub use stepwise::{stepwise_select, StepwiseResult, SubsetCriterion};
pub use weeks::{merge_weeks, week_of, WeekGroups};

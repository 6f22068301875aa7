//! Turning subscriber histories into a feature matrix.

mod extract;
pub mod geo;
mod matrix;
mod names;
pub mod stats;
mod taxonomy;

pub use extract::{contact_summary, ContactSummary, Universe};
pub use matrix::{assemble_matrix, outcomes, AssembleOptions, Assembled, FeatureMatrix, FeatureMeta};
pub use names::{
    sanitize_token, CalendarShare, ContactStat, FeatureName, GeoStat, PairStat, SeriesStat, WindowVariant,
};
pub use taxonomy::FeatureTaxonomy;

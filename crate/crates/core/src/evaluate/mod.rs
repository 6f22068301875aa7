//! Held-out evaluation: AUC and ROC, acceptance curves, quintile ratios,
//! repeated cross-validation and the early/late out-of-time split.

mod cv;
pub mod metrics;
mod offset;
mod report;

pub use cv::{cross_validate, fold_seed, out_of_time_eval, CurveBand, EvalConfig, FamilyReport, FoldAuc, FoldPlan};
pub use metrics::{
    acceptance_curve, auc, quintile_ratio, roc_points, subgroup_auc, trapezoid, QuintileTable, SubgroupAuc,
};
pub use offset::{build_offset, offset_features, OffsetFeatures, OffsetPlan};
pub use report::{auc_table, cross_validate_all, line_plot, write_report, EvalReport};

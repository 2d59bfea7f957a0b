//! Evaluation: splits, metrics, ROC analysis, grid search and the full
//! protocol.

pub mod grid;
pub mod metrics;
pub mod protocol;
pub mod report;
pub mod roc;
pub mod split;

pub use grid::{grid_search, GridResult, GridSpec};
pub use metrics::{confusion, fold_ci, metrics, ConfidenceInterval, ConfusionMatrix, Metric, MetricSet};
pub use protocol::{run_protocol, ModelReport, ProtocolConfig, ProtocolMode};
pub use report::{comparison_table, Report};
pub use roc::{auc_concordance_oracle, roc_curve, RocCurve};
pub use split::{stratified_kfold, stratified_split, FoldPlan, SplitPlan};

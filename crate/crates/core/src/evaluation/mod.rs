//! Classification metrics, stratified folds and the cross-validation grid.

mod crossval;
mod folds;
mod metrics;
mod report;

pub use crossval::{
    crossval_run, fold_seed, full_grid, parse_grid, summarize, Aggregate, ConfigResult, CrossvalOptions,
    CrossvalResult, GridPoint,
};
pub use folds::{stratified_kfold, FoldPlan};
pub use metrics::{confusion_metrics, evaluate, roc_auc, MetricsReport};
pub use report::{render_baseline_table, render_csv, render_table, BASELINES, CSV_HEADER, PUBLISHED_GRID};

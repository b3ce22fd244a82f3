//! Evaluation mathematics.

pub mod auc;
pub mod benchmark;
pub mod curve;
pub mod delta;
pub mod kendall;
pub mod table;

pub use auc::auc_roc;
pub use benchmark::{accuracy, predict_labels, resolve_label, weighted_f1, BenchmarkMetric};
pub use curve::{relative_auc_curve, Curve, CurvePoint};
pub use delta::{delta_stats, scatter_data, verdict, Condition, DeltaStats, ScatterRow, Verdict, Weighting};
pub use kendall::{kendall_tau, KendallResult};
pub use table::{
    ensemble_descriptions, eval_dataset, eval_descriptions, DescriptionAuc, Evaluation, ScoreRow, ScoreTable,
};

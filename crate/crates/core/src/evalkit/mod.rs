//! Cross-validation, metrics, confidence intervals, significance tests and
//! report emission.
//!
//! ```
//! use visent::evalkit::{ci95, macro_f1, ConfusionMatrix};
//!
//! let cm = ConfusionMatrix::from_counts(vec![vec![3, 1], vec![2, 4]]);
//! assert!((macro_f1(&cm).unwrap() - 23.0 / 33.0).abs() < 1e-12);
//!
//! let ci = ci95(&[0.50, 0.60, 0.55, 0.58, 0.52]).unwrap();
//! assert!((ci.halfwidth - 0.0512).abs() < 1e-4);
//! ```

mod folds;
mod metrics;
mod report;
mod stats;

use thiserror::Error;

pub use folds::{make_folds, FoldPlan};
pub use metrics::{accuracy, f_score, macro_f1, Averaging, ConfusionMatrix};
pub use report::{
    annotate_comparisons, emit_report, render_chart_csv, render_json, render_table, EmittedFiles, EvalReport,
    ExcludedView, Metric, PairwiseTest, RelativeGain, INVALID_FLAG_RATE, REPORT_SCHEMA_VERSION,
};
pub use stats::{ci95, paired_t, relative_gain, Interval, PairedT};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("instance {0} appears more than once")]
    DuplicateInstance(String),
    #[error("class {class} has {count} instances, fewer than the number of folds")]
    ClassTooSmall { class: usize, count: usize },
    #[error("confusion matrix has no evaluated instances")]
    EmptyMatrix,
    #[error("need at least 2 scores, got {0}")]
    TooFewScores(usize),
    #[error("scores must be finite")]
    NonFinite,
    #[error("score lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("paired differences are constant and non-zero; t is undefined")]
    ZeroVarianceDifferences,
    #[error("baseline score must be positive, got {0}")]
    NonpositiveBaseline(f64),
    #[error("no reports to emit")]
    EmptyReports,
    #[error("fold matrices disagree on class count")]
    ClassCountMismatch,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

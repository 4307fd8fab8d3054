//! Out-of-sample validation: data splits, left-out observation metrics,
//! shifts between full-data and training-data estimates, and prediction of
//! transitions from 1970.

mod leftout;
mod predict;
mod report;
mod shift;
mod split;

use thiserror::Error;

pub use leftout::{
    leftout_metrics, permutation_outcomes, posterior_predictive, LeftoutMetrics,
    PermutationOutcome, PredictiveRow, DEFAULT_PERMUTATIONS,
};
pub use predict::{predict_from_1970, predictions_from_1970, PREDICTION_START};
pub use report::{
    aggregate_reports, format_pct_count, write_estimates_csv, write_leftout_csv,
    write_reports_json, ValidationReport, ESTIMATES_HEADER,
};
pub use shift::{estimate_shift_metrics, EstimateShift, Outcome, REFERENCE_YEARS};
pub use split::{choose_cutoff, split, Split, SplitMode, SplitSpec};

use crate::mcmc::McmcError;
use crate::projection::ProjectionError;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("split leaves no test observations")]
    EmptyTest,
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("no left-out observations to score")]
    NoTestRows,
    #[error("year {0} is outside the estimation grid")]
    MissingYear(i32),
    #[error("fit lacks hyperparameter draws for `{0}`")]
    MissingHyperDraws(String),
    #[error("no start-year anchors for {0}")]
    MissingAnchors(String),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Mcmc(#[from] McmcError),
}

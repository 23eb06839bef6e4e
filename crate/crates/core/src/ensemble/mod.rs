//! Bagged regression trees and the ensembles built on archived forecasts.

mod forest;
mod stack;

use chrono::NaiveDate;
use thiserror::Error;

use crate::store::StoreError;

pub use forest::{best_split, fit_forest, ForestHyper, ForestModel, Node, SplitChoice, Tree, FOREST_FORMAT_VERSION};
pub use stack::{
    build_training_set, mean_ensemble, stack_forecast, stacked_descriptor, train_forests, training_origins,
    trend_features, FeatureRow,
    FEATURE_COUNT, MEAN_ENSEMBLE_ID, STACKED_ENSEMBLE_ID,
};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("no training rows")]
    NoTrainingRows,
    #[error("feature arity mismatch: expected {expected}, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("non-finite training value")]
    NonFinite,
    #[error("invalid forest settings: {0}")]
    Hyper(String),
    #[error("bad forest file: {0}")]
    Format(String),
    #[error("no forecast from {method_id} at origin {origin}")]
    MissingConstituent { method_id: String, origin: NaiveDate },
    #[error("no trained forest for horizon {0}")]
    NoForest(u32),
    #[error("forecast sets disagree on origin: {0} vs {1}")]
    OriginMismatch(NaiveDate, NaiveDate),
    #[error("mean ensemble needs at least one forecast set")]
    NoConstituents,
    #[error(transparent)]
    Store(#[from] StoreError),
}

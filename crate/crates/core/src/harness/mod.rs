//! Rolling-origin runs over archived forecasts: planning, the forecaster
//! interface, the archive, scoring, sensitivity analyses and synthetic data.

mod archive;
mod evaluate;
mod plan;
mod runner;
mod sensitivity;
pub mod synth;

use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

use crate::ensemble::EnsembleError;
use crate::forecast::{ForecastError, ForecastSet, MethodDescriptor, TargetType};
use crate::metrics::MetricError;
use crate::sikjalpha::{SikjalphaError, SikjalphaForecaster};
use crate::store::{LocationId, Signal, SnapshotView, StoreError};

pub use archive::{Archive, DESCRIPTOR_FILE};
pub use evaluate::{evaluate, leaderboard_file_name, EvalOptions, Evaluation, Leaderboard, LeaderboardRow, LEADERBOARD_HEADER};
pub use plan::{HarnessConfig, OriginSpec, RunPlan};
pub use runner::{bundled_forecasters, run_ensembles, run_retrospective, EnsembleRun, RunReport};
pub use sensitivity::{
    sensitivity_day_of_week, sensitivity_smoothing, DayOfWeekReport, SmoothingReport, SmoothingRow, WeekdaySummary,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Sikjalpha(#[from] SikjalphaError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("method {method_id} read data published after origin {origin}")]
    ForesightViolation { method_id: String, origin: NaiveDate },
    #[error("no resolvable targets")]
    NoResolvableTargets,
    #[error("method {0} is not in the archive")]
    MissingMethod(String),
    #[error("analysis period holds {days} days, at least 7 required")]
    PeriodTooShort { days: i64 },
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }
}

/// What a forecaster is asked to produce at one origin.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForecastRequest {
    /// Empty means every location with both signals in the snapshot.
    pub locations: Vec<LocationId>,
    pub horizons: Vec<u32>,
    pub targets: Vec<TargetType>,
}

impl ForecastRequest {
    pub fn resolve_locations(&self, view: &SnapshotView) -> Vec<LocationId> {
        if !self.locations.is_empty() {
            return self.locations.clone();
        }
        let cases = view.locations(Signal::Cases);
        view.locations(Signal::Deaths).into_iter().filter(|l| cases.contains(l)).collect()
    }
}

/// A method runnable inside the harness. Forecasters see nothing but the
/// snapshot they are handed.
pub trait Forecaster: Send + Sync {
    fn descriptor(&self) -> &MethodDescriptor;
    fn forecast(&self, view: &SnapshotView, request: &ForecastRequest) -> Result<ForecastSet, HarnessError>;
}

impl Forecaster for SikjalphaForecaster {
    fn descriptor(&self) -> &MethodDescriptor {
        &self.descriptor
    }

    fn forecast(&self, view: &SnapshotView, request: &ForecastRequest) -> Result<ForecastSet, HarnessError> {
        let locations = request.resolve_locations(view);
        Ok(self.forecast_locations(view, &locations, &request.horizons, &request.targets)?)
    }
}

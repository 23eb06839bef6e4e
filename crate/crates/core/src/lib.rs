//! Retrospective benchmarking of epidemic forecasters.
//!
//! The crate is organised around a versioned truth store that serves
//! as-of snapshots, so that every forecast issued at an origin date can only
//! see data published on or before that date. On top of it sit:
//!
//! - [`forecast`]: the forecast/target data model and the hub-style
//!   submission codec,
//! - [`sikjalpha`]: the reduced SIkJα forecaster and its bundled variants,
//! - [`metrics`]: MAE, SMAPE, floored log score and interval coverage,
//! - [`ensemble`]: bagged regression trees and the stacking ensemble,
//! - [`harness`]: the rolling-origin runner, evaluation, leaderboards,
//!   sensitivity analyses and the synthetic data generator.

pub mod ensemble;
pub mod forecast;
pub mod harness;
pub mod metrics;
pub mod sikjalpha;
pub mod store;

mod numeric;

pub use forecast::{
    Category, ForecastSet, ForecastValue, MethodDescriptor, TargetKind, TargetSpec,
};
pub use store::{DatedSeries, LocationId, Signal, SnapshotView, Store};

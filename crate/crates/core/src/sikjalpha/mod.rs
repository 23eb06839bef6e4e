//! Reduced SIkJα forecaster.
//!
//! Daily new reported cases `x_t` and deaths `d_t` are smoothed with a
//! trailing mean and regressed on sums of new cases over the `k` trailing
//! 7-day blocks before `t`:
//!
//! ```text
//! x_t = max(0, 1 - γ C_{t-1} / N) · Σ_j β_j · B_{t,j}
//! d_t =                              Σ_j θ_j · B_{t,j}
//! B_{t,j} = x_{t-7j} + … + x_{t-7j+6}
//! ```
//!
//! `C` is cumulative reported cases, `N` the population and `γ` the
//! under-reporting factor, so `γ C / N` approximates the fraction of the
//! population already infected. Both equations are linear in their
//! coefficients and are fitted one after the other by non-negative least
//! squares over the last `fit_window` days. Forecasts iterate the equations
//! daily, feeding predicted cases back into the lag blocks.

mod lstsq;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use chrono::{Duration, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::{
    Category, Decisions, ForecastSet, ForecastValue, MethodDescriptor, TargetKind, TargetSpec, TargetType,
};
use crate::store::{incident, smooth, LocationId, Signal, SnapshotView, StoreError};

pub(crate) use lstsq::clipped_nnls;

/// Days per lag block.
pub const LAG_BLOCK_DAYS: usize = 7;

/// Daily predictions are capped at this multiple of the largest smoothed
/// daily value seen in the history.
pub const EXPLOSION_CAP: f64 = 5.0;

pub const DEFAULT_LAG_GRID: [usize; 3] = [1, 2, 3];
pub const DEFAULT_WINDOW_GRID: [usize; 5] = [14, 21, 28, 35, 49];

/// Population key used when a location has no entry of its own.
pub const NATIONAL_KEY: &str = "US";

#[derive(Debug, Error)]
pub enum SikjalphaError {
    #[error("location {location}: {have} days of history, at least {need} required")]
    InsufficientHistory {
        location: String,
        have: usize,
        need: usize,
    },
    #[error("no population for location {0} and no national total")]
    MissingPopulation(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Population per location code.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Population {
    table: BTreeMap<String, f64>,
}

impl Population {
    pub fn new(table: BTreeMap<String, f64>) -> Self {
        Self { table }
    }

    /// Reads `location,population` rows.
    pub fn from_csv(text: &str) -> Result<Self, SikjalphaError> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("location,population") {
            return Err(SikjalphaError::Config("population file needs header `location,population`".into()));
        }
        let mut table = BTreeMap::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (code, n) = line
                .split_once(',')
                .and_then(|(c, n)| Some((c.trim(), n.trim().parse::<f64>().ok()?)))
                .filter(|(_, n)| *n > 0.0 && n.is_finite())
                .ok_or_else(|| SikjalphaError::Config(format!("bad population row `{line}`")))?;
            table.insert(code.to_string(), n);
        }
        Ok(Self { table })
    }

    pub fn load(path: &Path) -> Result<Self, SikjalphaError> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("location,population\n");
        for (code, n) in &self.table {
            out.push_str(&format!("{code},{n}\n"));
        }
        out
    }

    /// The location's own population, else the national total.
    pub fn get(&self, code: &str) -> Result<f64, SikjalphaError> {
        self.table
            .get(code)
            .or_else(|| self.table.get(NATIONAL_KEY))
            .copied()
            .ok_or_else(|| SikjalphaError::MissingPopulation(code.to_string()))
    }
}

/// How `(lag_count, fit_window)` is chosen from the candidate grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HyperRegime {
    /// Fit without the last `holdout_days`, score the forecast over them,
    /// then refit the winner on all data.
    HoldoutValidation { holdout_days: usize },
    /// Pick the candidate with the smallest relative in-window residual.
    WindowedFitNoValidation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SikjalphaConfig {
    pub smoothing_window: usize,
    pub under_reporting_factor: f64,
    pub lag_grid: Vec<usize>,
    pub window_grid: Vec<usize>,
    pub hyper_regime: HyperRegime,
    pub population: Arc<Population>,
}

impl SikjalphaConfig {
    pub fn new(smoothing_window: usize, hyper_regime: HyperRegime, population: Arc<Population>) -> Self {
        Self {
            smoothing_window,
            under_reporting_factor: 10.0,
            lag_grid: DEFAULT_LAG_GRID.to_vec(),
            window_grid: DEFAULT_WINDOW_GRID.to_vec(),
            hyper_regime,
            population,
        }
    }

    fn validate(&self) -> Result<(), SikjalphaError> {
        let bad = |m: &str| Err(SikjalphaError::Config(m.to_string()));
        if self.smoothing_window == 0 {
            return bad("smoothing_window must be positive");
        }
        if !(self.under_reporting_factor >= 1.0) {
            return bad("under_reporting_factor must be at least 1");
        }
        if self.lag_grid.is_empty() || self.lag_grid.contains(&0) {
            return bad("lag grid must hold positive lag counts");
        }
        if self.window_grid.is_empty() || self.window_grid.contains(&0) {
            return bad("window grid must hold positive window lengths");
        }
        if let HyperRegime::HoldoutValidation { holdout_days: 0 } = self.hyper_regime {
            return bad("holdout_days must be positive");
        }
        Ok(())
    }

    fn candidates(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.lag_grid
            .iter()
            .flat_map(|&k| self.window_grid.iter().map(move |&w| (k, w)))
    }

    fn min_days(&self, k: usize, w: usize) -> usize {
        let holdout = match self.hyper_regime {
            HyperRegime::HoldoutValidation { holdout_days } => holdout_days,
            HyperRegime::WindowedFitNoValidation => 0,
        };
        w + holdout + LAG_BLOCK_DAYS * k
    }
}

/// Fitted coefficients for one location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SikjalphaParams {
    /// Per-lag-block infection rates.
    pub beta: Vec<f64>,
    /// Per-lag-block fatality rates.
    pub theta: Vec<f64>,
    pub lag_count: usize,
    pub fit_window: usize,
    /// Set when the case regressors were all zero.
    pub flat: bool,
}

impl SikjalphaParams {
    pub fn zero(lag_count: usize, fit_window: usize) -> Self {
        Self {
            beta: vec![0.0; lag_count],
            theta: vec![0.0; lag_count],
            lag_count,
            fit_window,
            flat: true,
        }
    }
}

/// Smoothed daily series of one location, aligned on a common date range.
#[derive(Debug, Clone)]
struct Prepared {
    last_date: NaiveDate,
    cases: Vec<f64>,
    deaths: Vec<f64>,
    cum_cases: Vec<f64>,
    cum_deaths: Vec<f64>,
    population: f64,
    gamma: f64,
}

impl Prepared {
    fn from_view(view: &SnapshotView, cfg: &SikjalphaConfig, location: &LocationId) -> Result<Self, SikjalphaError> {
        let code = &location.code;
        let cases = view.series(Signal::Cases, code)?;
        let deaths = view.series(Signal::Deaths, code)?;
        let first = cases.start().max(deaths.start());
        let last = cases.end().min(deaths.end());
        let span = (last - first).num_days() + 1;
        if span <= 0 {
            return Err(SikjalphaError::InsufficientHistory {
                location: code.clone(),
                have: 0,
                need: 1,
            });
        }
        let window = |s: &crate::store::DatedSeries| {
            let i = s.index_of(first).expect("first lies in both ranges");
            crate::store::DatedSeries::new(first, s.values()[i..i + span as usize].to_vec())
        };
        let cum_cases = window(cases);
        let cum_deaths = window(deaths);
        let daily = |cum: &crate::store::DatedSeries| -> Result<Vec<f64>, SikjalphaError> {
            Ok(smooth(&incident(cum).series, cfg.smoothing_window)?
                .values()
                .iter()
                .map(|v| v.max(0.0))
                .collect())
        };
        Ok(Self {
            last_date: last,
            cases: daily(&cum_cases)?,
            deaths: daily(&cum_deaths)?,
            cum_cases: cum_cases.values().to_vec(),
            cum_deaths: cum_deaths.values().to_vec(),
            population: cfg.population.get(code)?,
            gamma: cfg.under_reporting_factor,
        })
    }

    fn len(&self) -> usize {
        self.cases.len()
    }

    fn susceptible(&self, cumulative: f64) -> f64 {
        (1.0 - self.gamma * cumulative / self.population).max(0.0)
    }
}

fn block_sum(series: &[f64], t: usize, j: usize) -> f64 {
    series[t - LAG_BLOCK_DAYS * j..t - LAG_BLOCK_DAYS * (j - 1)].iter().sum()
}

/// Fits both equations on days `upto - window .. upto`.
fn fit_range(prep: &Prepared, upto: usize, k: usize, window: usize) -> SikjalphaParams {
    let days = upto - window..upto;
    let blocks: Vec<Vec<f64>> = (1..=k)
        .map(|j| days.clone().map(|t| block_sum(&prep.cases, t, j)).collect())
        .collect();
    let scaled: Vec<Vec<f64>> = blocks
        .iter()
        .map(|col| {
            col.iter()
                .zip(days.clone())
                .map(|(b, t)| prep.susceptible(prep.cum_cases[t - 1]) * b)
                .collect()
        })
        .collect();
    let cases = clipped_nnls(&scaled, &prep.cases[days.clone()]);
    let deaths = clipped_nnls(&blocks, &prep.deaths[days]);
    SikjalphaParams {
        beta: cases.coef,
        theta: deaths.coef,
        lag_count: k,
        fit_window: window,
        flat: cases.degenerate,
    }
}

/// Daily case and death predictions for `days` days starting at index
/// `start`, using only history before `start`.
fn simulate(params: &SikjalphaParams, prep: &Prepared, start: usize, days: usize) -> (Vec<f64>, Vec<f64>) {
    let max_of = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    let case_cap = EXPLOSION_CAP * max_of(&prep.cases[..start]);
    let death_cap = EXPLOSION_CAP * max_of(&prep.deaths[..start]);
    let mut cases = prep.cases[..start].to_vec();
    let mut cumulative = prep.cum_cases[start - 1];
    let mut deaths = Vec::with_capacity(days);
    for _ in 0..days {
        let t = cases.len();
        let mut infection = 0.0;
        let mut fatality = 0.0;
        for j in 1..=params.lag_count {
            let b = block_sum(&cases, t, j);
            infection += params.beta[j - 1] * b;
            fatality += params.theta[j - 1] * b;
        }
        let x = (prep.susceptible(cumulative) * infection).clamp(0.0, case_cap);
        cumulative += x;
        cases.push(x);
        deaths.push(fatality.clamp(0.0, death_cap));
    }
    (cases.split_off(start), deaths)
}

fn relative_mae(pred: &[f64], obs: &[f64]) -> f64 {
    let n = obs.len() as f64;
    let err: f64 = pred.iter().zip(obs).map(|(p, o)| (p - o).abs()).sum::<f64>() / n;
    let level = obs.iter().sum::<f64>() / n;
    err / level.max(1.0)
}

fn relative_residual(params: &SikjalphaParams, prep: &Prepared) -> f64 {
    let t_end = prep.len();
    let days = t_end - params.fit_window..t_end;
    let mut res = [0.0f64; 2];
    let mut mass = [0.0f64; 2];
    for t in days {
        let (mut inf, mut fat) = (0.0, 0.0);
        for j in 1..=params.lag_count {
            let b = block_sum(&prep.cases, t, j);
            inf += params.beta[j - 1] * b;
            fat += params.theta[j - 1] * b;
        }
        let x_hat = prep.susceptible(prep.cum_cases[t - 1]) * inf;
        res[0] += (x_hat - prep.cases[t]).powi(2);
        res[1] += (fat - prep.deaths[t]).powi(2);
        mass[0] += prep.cases[t].powi(2);
        mass[1] += prep.deaths[t].powi(2);
    }
    (0..2).map(|i| (res[i] / mass[i].max(1.0)).sqrt()).sum()
}

fn fit_prepared(prep: &Prepared, cfg: &SikjalphaConfig, location: &str) -> Result<SikjalphaParams, SikjalphaError> {
    let t_end = prep.len();
    let feasible: Vec<(usize, usize)> = cfg
        .candidates()
        .filter(|&(k, w)| cfg.min_days(k, w) <= t_end)
        .collect();
    if feasible.is_empty() {
        let need = cfg.candidates().map(|(k, w)| cfg.min_days(k, w)).min().unwrap_or(0);
        return Err(SikjalphaError::InsufficientHistory {
            location: location.to_string(),
            have: t_end,
            need,
        });
    }
    let score = |&(k, w): &(usize, usize)| -> f64 {
        match cfg.hyper_regime {
            HyperRegime::HoldoutValidation { holdout_days } => {
                let upto = t_end - holdout_days;
                let params = fit_range(prep, upto, k, w);
                let (cases, deaths) = simulate(&params, prep, upto, holdout_days);
                relative_mae(&cases, &prep.cases[upto..]) + relative_mae(&deaths, &prep.deaths[upto..])
            }
            HyperRegime::WindowedFitNoValidation => relative_residual(&fit_range(prep, t_end, k, w), prep),
        }
    };
    let mut best = feasible[0];
    let mut best_score = score(&best);
    for cand in &feasible[1..] {
        let s = score(cand);
        if s < best_score {
            best = *cand;
            best_score = s;
        }
    }
    Ok(fit_range(prep, t_end, best.0, best.1))
}

/// Learns the coefficients for one location from the snapshot.
pub fn fit(view: &SnapshotView, cfg: &SikjalphaConfig, location: &LocationId) -> Result<SikjalphaParams, SikjalphaError> {
    cfg.validate()?;
    let prep = Prepared::from_view(view, cfg, location)?;
    fit_prepared(&prep, cfg, &location.code)
}

fn weekly_targets(
    params: &SikjalphaParams,
    prep: &Prepared,
    origin: NaiveDate,
    location: &LocationId,
    horizons: &[u32],
    targets: &[TargetType],
) -> Vec<(TargetSpec, ForecastValue)> {
    let max_h = horizons.iter().copied().max().unwrap_or(0) as i64;
    let horizon_end = origin + Duration::days(7 * max_h);
    let days = (horizon_end - prep.last_date).num_days().max(0) as usize;
    let (cases, deaths) = simulate(params, prep, prep.len(), days);
    let last_cum = |s: Signal| match s {
        Signal::Cases => *prep.cum_cases.last().unwrap(),
        Signal::Deaths => *prep.cum_deaths.last().unwrap(),
    };
    // index into the simulated days of a calendar date after the last data day
    let idx = |date: NaiveDate| (date - prep.last_date).num_days() - 1;

    let mut out = Vec::new();
    for &h in horizons {
        for &tt in targets {
            let target = TargetSpec::ahead(location.clone(), tt, origin, h);
            let daily = match tt.signal {
                Signal::Cases => &cases,
                Signal::Deaths => &deaths,
            };
            let end = idx(target.target_week_end);
            let value = match tt.kind {
                TargetKind::Incident => ((end - 6).max(0)..=end).map(|i| daily[i as usize]).sum::<f64>(),
                TargetKind::Cumulative => {
                    last_cum(tt.signal) + daily[..=end as usize].iter().sum::<f64>()
                }
            };
            out.push((target, ForecastValue::from_point(value.max(0.0))));
        }
    }
    out
}

/// Simulates the fitted model past the snapshot and aggregates weekly
/// targets for each horizon.
pub fn predict(
    params: &SikjalphaParams,
    view: &SnapshotView,
    cfg: &SikjalphaConfig,
    location: &LocationId,
    horizons: &[u32],
    targets: &[TargetType],
) -> Result<Vec<(TargetSpec, ForecastValue)>, SikjalphaError> {
    let prep = Prepared::from_view(view, cfg, location)?;
    if prep.len() < LAG_BLOCK_DAYS * params.lag_count {
        return Err(SikjalphaError::InsufficientHistory {
            location: location.code.clone(),
            have: prep.len(),
            need: LAG_BLOCK_DAYS * params.lag_count,
        });
    }
    Ok(weekly_targets(params, &prep, view.as_of(), location, horizons, targets))
}

pub const SMOOTH14_ID: &str = "SIkJalpha_smooth14_un10_hyper7";
pub const SMOOTH7_ID: &str = "SIkJalpha_smooth7_un10_hyper7";
pub const WINDOW_NOVAL_ID: &str = "SIkJalpha_window_noval";

/// The three bundled variants: 14- and 7-day smoothing with a 7-day
/// holdout, and 14-day smoothing with windowed fitting and no validation.
/// All use an under-reporting factor of 10.
pub fn bundled_variants(population: Arc<Population>) -> Vec<(MethodDescriptor, SikjalphaConfig)> {
    let holdout = HyperRegime::HoldoutValidation { holdout_days: 7 };
    [
        (SMOOTH14_ID, 14, holdout),
        (SMOOTH7_ID, 7, holdout),
        (WINDOW_NOVAL_ID, 14, HyperRegime::WindowedFitNoValidation),
    ]
    .into_iter()
    .map(|(id, smoothing, regime)| {
        let cfg = SikjalphaConfig::new(smoothing, regime, Arc::clone(&population));
        let descriptor = MethodDescriptor {
            method_id: id.to_string(),
            category: Category::Aiml,
            decisions: describe(&cfg),
        };
        (descriptor, cfg)
    })
    .collect()
}

fn describe(cfg: &SikjalphaConfig) -> Decisions {
    Decisions {
        smoothing_window: format!("{}d", cfg.smoothing_window),
        model_family: "sikjalpha".to_string(),
        learning_strategy: "clipped-nnls".to_string(),
        hyperparameter_regime: match cfg.hyper_regime {
            HyperRegime::HoldoutValidation { holdout_days } => format!("holdout-{holdout_days}d"),
            HyperRegime::WindowedFitNoValidation => "windowed-fit-noval".to_string(),
        },
    }
}

/// A configured variant, runnable by the harness.
#[derive(Debug, Clone)]
pub struct SikjalphaForecaster {
    pub descriptor: MethodDescriptor,
    pub config: SikjalphaConfig,
}

impl SikjalphaForecaster {
    pub fn new(descriptor: MethodDescriptor, config: SikjalphaConfig) -> Self {
        Self { descriptor, config }
    }

    /// Fits and predicts every requested location. Locations without enough
    /// history are skipped with a warning.
    pub fn forecast_locations(
        &self,
        view: &SnapshotView,
        locations: &[LocationId],
        horizons: &[u32],
        targets: &[TargetType],
    ) -> Result<ForecastSet, SikjalphaError> {
        self.config.validate()?;
        let results: Vec<Result<Vec<(TargetSpec, ForecastValue)>, SikjalphaError>> = locations
            .par_iter()
            .map(|loc| {
                let prep = Prepared::from_view(view, &self.config, loc)?;
                let params = fit_prepared(&prep, &self.config, &loc.code)?;
                Ok(weekly_targets(&params, &prep, view.as_of(), loc, horizons, targets))
            })
            .collect();
        let mut set = ForecastSet::new(self.descriptor.method_id.clone(), view.as_of());
        for (loc, res) in locations.iter().zip(results) {
            match res {
                Ok(entries) => {
                    for (target, value) in entries {
                        set.insert(target, value)
                            .expect("native targets lie after the origin");
                    }
                }
                Err(SikjalphaError::InsufficientHistory { have, need, .. }) => {
                    log::warn!(
                        "{} {}: skipping {loc}, {have} days of history < {need}",
                        self.descriptor.method_id,
                        view.as_of()
                    );
                }
                Err(e) => return Err(e),
            }
        }
        Ok(set)
    }
}

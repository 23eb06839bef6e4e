//! Synthetic versioned truth.
//!
//! Each location runs a two-lag-block epidemic forward in time:
//!
//! ```text
//! cases_t  = max(0, 1 - γ · C_{t-1} / N) · (β1 · L1_t + β2 · L2_t)
//! deaths_t = θ1 · L1_t + θ2 · L2_t
//! ```
//!
//! where `L1_t` sums cases over days `t-7 .. t-1` and `L2_t` over
//! `t-14 .. t-8`. The first two weeks are seeded with an irregular profile.
//! Scenarios then shape either the rates or what gets published in each
//! daily data version.

use std::fs;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::numeric::fmt_f64;
use crate::sikjalpha::Population;
use crate::store::{truth_file_name, IngestFormat, Signal, Store, StoreError, TRUTH_HEADER};

/// Lag blocks in the generating model.
pub const GENERATOR_LAGS: usize = 2;
const SEED_DAYS: usize = 7 * GENERATOR_LAGS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Constant rates, no observation noise.
    Stable,
    /// Infection rates change abruptly at `break_day`.
    TrendBreak,
    /// Weekend counts are held back and published on Monday.
    WeeklyPeriodic,
    /// Multiplicative noise, provisional under-counts of the newest days and
    /// a one-day spike that is later corrected downward.
    Noisy,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Stable, Scenario::TrendBreak, Scenario::WeeklyPeriodic, Scenario::Noisy];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Stable => "stable",
            Scenario::TrendBreak => "trend_break",
            Scenario::WeeklyPeriodic => "weekly_periodic",
            Scenario::Noisy => "noisy",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| format!("unknown scenario `{s}` (stable, trend_break, weekly_periodic, noisy)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub locations: usize,
    pub days: usize,
    pub scenario: Scenario,
    /// Date of day 0.
    pub start: NaiveDate,
    /// Day index of the first published version; one version per day after.
    pub first_version_day: usize,
    pub under_reporting_factor: f64,
    /// Multiplies every population; large values keep the susceptible
    /// fraction near one.
    pub population_scale: f64,
    /// Day the trend-break scenario switches rates.
    pub break_day: usize,
    /// Infection-rate multiplier after the break.
    pub break_factor: f64,
    /// Log-scale standard deviation of the noisy scenario.
    pub noise_sd: f64,
    /// Rescales each location's infection rates so that `7 (β1 + β2)`
    /// equals this value; `None` keeps the drawn rates.
    pub reproduction: Option<f64>,
}

impl SynthConfig {
    pub fn new(seed: u64, locations: usize, days: usize, scenario: Scenario) -> Self {
        Self {
            seed,
            locations,
            days,
            scenario,
            start: NaiveDate::from_ymd_opt(2020, 3, 1).expect("valid date"),
            first_version_day: days.saturating_sub(84).max(SEED_DAYS),
            under_reporting_factor: 10.0,
            population_scale: 1.0,
            break_day: days * 2 / 3,
            break_factor: 0.5,
            noise_sd: 0.2,
            reproduction: None,
        }
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.start + Duration::days(day as i64)
    }
}

/// Generating parameters and noise-free daily counts of one location.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationTruth {
    pub code: String,
    pub population: f64,
    pub beta: [f64; GENERATOR_LAGS],
    pub theta: [f64; GENERATOR_LAGS],
    pub cases: Vec<f64>,
    pub deaths: Vec<f64>,
}

impl LocationTruth {
    /// Noise-free sum of daily deaths over the 7 days ending on `day`.
    pub fn week_deaths(&self, day: usize) -> f64 {
        self.deaths[day - 6..=day].iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct VersionFile {
    pub signal: Signal,
    pub date: NaiveDate,
    pub contents: Vec<u8>,
}

impl VersionFile {
    pub fn file_name(&self) -> String {
        truth_file_name(self.signal, self.date)
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub locations: Vec<LocationTruth>,
    pub versions: Vec<VersionFile>,
}

impl SynthDataset {
    pub fn population(&self) -> Population {
        let mut table: std::collections::BTreeMap<String, f64> =
            self.locations.iter().map(|l| (l.code.clone(), l.population)).collect();
        table.insert("US".to_string(), self.locations.iter().map(|l| l.population).sum());
        Population::new(table)
    }

    /// Ingests every version into a fresh in-memory store.
    pub fn to_store(&self) -> Result<Store, StoreError> {
        let mut store = Store::new();
        for v in &self.versions {
            store.ingest_version(&v.contents, v.date, IngestFormat::HubTruth(v.signal))?;
        }
        Ok(store)
    }

    /// Writes every version file plus `population.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        for v in &self.versions {
            fs::write(dir.join(v.file_name()), &v.contents)?;
        }
        fs::write(dir.join("population.csv"), self.population().to_csv())
    }
}

fn simulate_location(cfg: &SynthConfig, code: String, rng: &mut ChaCha8Rng) -> LocationTruth {
    let mut beta = [rng.random_range(0.12..0.16), rng.random_range(0.04..0.07)];
    if let Some(r) = cfg.reproduction {
        let scale = r / (7.0 * (beta[0] + beta[1]));
        beta = beta.map(|b| b * scale);
    }
    let theta = [rng.random_range(0.001..0.003), rng.random_range(0.006..0.012)];
    let level: f64 = rng.random_range(20.0..200.0);
    let population = cfg.under_reporting_factor * level * rng.random_range(150.0..300.0) * cfg.population_scale;

    let mut cases = Vec::with_capacity(cfg.days);
    let mut deaths = Vec::with_capacity(cfg.days);
    let mut cumulative = 0.0;
    for t in 0..cfg.days {
        let (x, d) = if t < SEED_DAYS {
            (level * rng.random_range(0.3..1.7), 0.0)
        } else {
            let l1: f64 = cases[t - 7..t].iter().sum();
            let l2: f64 = cases[t - 14..t - 7].iter().sum();
            let factor = match cfg.scenario {
                Scenario::TrendBreak if t >= cfg.break_day => cfg.break_factor,
                _ => 1.0,
            };
            let s = (1.0 - cfg.under_reporting_factor * cumulative / population).max(0.0);
            (s * factor * (beta[0] * l1 + beta[1] * l2), theta[0] * l1 + theta[1] * l2)
        };
        cases.push(x);
        deaths.push(d);
        cumulative += x;
    }
    LocationTruth {
        code,
        population,
        beta,
        theta,
        cases,
        deaths,
    }
}

/// Daily counts as published in version `v`.
struct Publisher {
    scenario: Scenario,
    noise: Vec<f64>,
    spike_day: usize,
}

impl Publisher {
    const PROVISIONAL: [f64; 3] = [0.6, 0.75, 0.9];
    const SPIKE: f64 = 4.0;
    const SPIKE_LIFETIME: usize = 7;

    fn publish(&self, cfg: &SynthConfig, truth: &[f64], v: usize) -> Vec<f64> {
        let mut out: Vec<f64> = truth[..=v].to_vec();
        match self.scenario {
            Scenario::Stable | Scenario::TrendBreak => {}
            Scenario::WeeklyPeriodic => {
                let mut held = 0.0;
                for (t, x) in out.iter_mut().enumerate() {
                    match cfg.date(t).weekday() {
                        Weekday::Sat | Weekday::Sun => {
                            held += *x;
                            *x = 0.0;
                        }
                        Weekday::Mon => {
                            *x += held;
                            held = 0.0;
                        }
                        _ => {}
                    }
                }
            }
            Scenario::Noisy => {
                for (x, e) in out.iter_mut().zip(&self.noise) {
                    *x *= e;
                }
                for (lag, f) in Self::PROVISIONAL.iter().enumerate() {
                    if let Some(t) = v.checked_sub(lag) {
                        out[t] *= f;
                    }
                }
                if (self.spike_day..self.spike_day + Self::SPIKE_LIFETIME).contains(&v) {
                    out[self.spike_day] += Self::SPIKE * truth[self.spike_day];
                }
            }
        }
        out
    }
}

fn running_total(daily: &[f64]) -> Vec<f64> {
    daily
        .iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Forward-simulates every location and renders one truth file per signal
/// and version day. Output is a pure function of `cfg`.
pub fn generate_synthetic(cfg: &SynthConfig) -> SynthDataset {
    assert!(cfg.days >= 70, "synthetic worlds need at least 70 days");
    assert!(cfg.first_version_day < cfg.days, "first version lies beyond the last day");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lognormal = LogNormal::new(0.0, cfg.noise_sd).expect("noise sd is finite and non-negative");

    let mut locations = Vec::with_capacity(cfg.locations);
    let mut publishers = Vec::with_capacity(cfg.locations);
    for i in 0..cfg.locations {
        locations.push(simulate_location(cfg, format!("{:02}", i + 1), &mut rng));
        let noise = (0..2 * cfg.days).map(|_| lognormal.sample(&mut rng)).collect::<Vec<_>>();
        let spike_day = rng.random_range(cfg.first_version_day.max(SEED_DAYS)..cfg.days);
        publishers.push((
            Publisher { scenario: cfg.scenario, noise: noise[..cfg.days].to_vec(), spike_day },
            Publisher { scenario: cfg.scenario, noise: noise[cfg.days..].to_vec(), spike_day },
        ));
    }

    let mut versions = Vec::new();
    for v in cfg.first_version_day..cfg.days {
        for signal in Signal::ALL {
            let mut text = String::from(TRUTH_HEADER);
            text.push('\n');
            for (loc, (case_pub, death_pub)) in locations.iter().zip(&publishers) {
                let published = match signal {
                    Signal::Cases => case_pub.publish(cfg, &loc.cases, v),
                    Signal::Deaths => death_pub.publish(cfg, &loc.deaths, v),
                };
                for (t, c) in running_total(&published).into_iter().enumerate() {
                    text.push_str(&format!("{},{},{}\n", loc.code, cfg.date(t), fmt_f64(c)));
                }
            }
            versions.push(VersionFile {
                signal,
                date: cfg.date(v),
                contents: text.into_bytes(),
            });
        }
    }
    SynthDataset {
        config: cfg.clone(),
        locations,
        versions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let cfg = SynthConfig::new(7, 3, 80, Scenario::Noisy);
        let a = generate_synthetic(&cfg);
        let b = generate_synthetic(&cfg);
        assert_eq!(a.versions.len(), b.versions.len());
        assert!(a.versions.iter().zip(&b.versions).all(|(x, y)| x.contents == y.contents));
        let c = generate_synthetic(&SynthConfig { seed: 8, ..cfg });
        assert_ne!(a.versions[0].contents, c.versions[0].contents);
    }

    #[test]
    fn noisy_scenario_revises_history() {
        let ds = generate_synthetic(&SynthConfig::new(1, 4, 90, Scenario::Noisy));
        let store = ds.to_store().unwrap();
        let mut revised_up = false;
        let mut revised_down = false;
        for loc in store.locations(Signal::Cases) {
            let series = store.series(Signal::Cases, &loc.code).unwrap();
            let latest = series.latest().unwrap();
            for (_, s) in series.versions() {
                for (date, v) in s.iter() {
                    let now = latest.get(date).unwrap();
                    revised_up |= now > v;
                    revised_down |= now < v;
                }
            }
        }
        assert!(revised_up && revised_down);
    }

    #[test]
    fn weekly_periodic_publishes_nothing_on_weekends() {
        let cfg = SynthConfig::new(3, 2, 84, Scenario::WeeklyPeriodic);
        let ds = generate_synthetic(&cfg);
        let store = ds.to_store().unwrap();
        let view = store.snapshot(cfg.date(83)).unwrap();
        let daily = crate::store::incident(view.series(Signal::Deaths, "01").unwrap()).series;
        let mut weekend_total = 0.0;
        let mut total = 0.0;
        for (date, x) in daily.iter() {
            if matches!(date.weekday(), Weekday::Sat | Weekday::Sun) && date < cfg.date(83) {
                weekend_total += x;
            }
            total += x;
        }
        assert_eq!(weekend_total, 0.0);
        let exact: f64 = ds.locations[0].deaths[..=83].iter().sum();
        // held weekend counts are still pending on a Saturday version
        assert!(total <= exact * (1.0 + 1e-12) && total > 0.5 * exact);
    }

    #[test]
    fn stable_versions_agree_on_shared_days() {
        let ds = generate_synthetic(&SynthConfig::new(5, 2, 75, Scenario::Stable));
        let store = ds.to_store().unwrap();
        let series = store.series(Signal::Cases, "02").unwrap();
        let latest = series.latest().unwrap();
        for (_, s) in series.versions() {
            assert_eq!(s.values(), &latest.values()[..s.len()]);
        }
    }

    #[test]
    fn epidemic_depletes_susceptibles() {
        let cfg = SynthConfig::new(11, 10, 120, Scenario::Stable);
        let ds = generate_synthetic(&cfg);
        for loc in &ds.locations {
            let attack = cfg.under_reporting_factor * loc.cases.iter().sum::<f64>() / loc.population;
            assert!(attack > 0.2 && attack < 1.0, "{} attack {attack}", loc.code);
        }
    }
}

//! Run plans and forecaster configuration, both TOML.

use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::Deserialize;

use super::{ForecastRequest, HarnessError};
use crate::ensemble::ForestHyper;
use crate::forecast::TargetType;
use crate::sikjalpha::{DEFAULT_LAG_GRID, DEFAULT_WINDOW_GRID};
use crate::store::LocationId;

/// Origins as an explicit list or as every given weekday in a date range.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OriginSpec {
    List(Vec<NaiveDate>),
    Range {
        start: NaiveDate,
        end: NaiveDate,
        /// Defaults to Sunday.
        weekday: Option<String>,
    },
}

impl OriginSpec {
    pub fn dates(&self) -> Result<Vec<NaiveDate>, HarnessError> {
        match self {
            OriginSpec::List(dates) => Ok(dates.clone()),
            OriginSpec::Range { start, end, weekday } => {
                let wd: Weekday = match weekday {
                    Some(w) => w.parse().map_err(|_| HarnessError::Plan(format!("unknown weekday `{w}`")))?,
                    None => Weekday::Sun,
                };
                let offset = (7 + wd.num_days_from_monday() as i64 - start.weekday().num_days_from_monday() as i64) % 7;
                let mut out = Vec::new();
                let mut day = *start + Duration::days(offset);
                while day <= *end {
                    out.push(day);
                    day += Duration::days(7);
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlan {
    archive: PathBuf,
    #[serde(default = "default_horizons")]
    horizons: Vec<u32>,
    #[serde(default = "default_targets")]
    targets: Vec<String>,
    methods: Vec<String>,
    #[serde(default)]
    locations: Vec<String>,
    origins: OriginSpec,
    #[serde(default)]
    ensemble_seed: u64,
    #[serde(default)]
    paranoid: bool,
}

fn default_horizons() -> Vec<u32> {
    vec![1, 2, 3, 4]
}

fn default_targets() -> Vec<String> {
    vec!["inc death".to_string()]
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub archive: PathBuf,
    pub horizons: Vec<u32>,
    pub targets: Vec<TargetType>,
    pub methods: Vec<String>,
    /// Empty means every location in the store.
    pub locations: Vec<LocationId>,
    pub origins: Vec<NaiveDate>,
    pub ensemble_seed: u64,
    /// Re-run every forecast on a store truncated at its origin and compare.
    pub paranoid: bool,
}

impl RunPlan {
    /// Parses a plan; a relative archive path is taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, HarnessError> {
        let raw: RawPlan = toml::from_str(text).map_err(|e| HarnessError::Plan(e.to_string()))?;
        let targets = raw
            .targets
            .iter()
            .map(|t| t.parse().map_err(|_| HarnessError::Plan(format!("unknown target `{t}`"))))
            .collect::<Result<Vec<TargetType>, _>>()?;
        let plan = RunPlan {
            archive: base.join(&raw.archive),
            horizons: raw.horizons,
            targets,
            methods: raw.methods,
            locations: raw.locations.into_iter().map(LocationId::new).collect(),
            origins: raw.origins.dates()?,
            ensemble_seed: raw.ensemble_seed,
            paranoid: raw.paranoid,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Plan(m));
        if self.horizons.is_empty() || self.horizons.iter().any(|h| !(1..=4).contains(h)) {
            return bad(format!("horizons must be a non-empty subset of 1..4, got {:?}", self.horizons));
        }
        if self.targets.is_empty() {
            return bad("no targets".to_string());
        }
        if self.origins.is_empty() {
            return bad("no origins".to_string());
        }
        if let Some(w) = self.origins.windows(2).find(|w| w[0] >= w[1]) {
            return bad(format!("origins must be strictly increasing: {} then {}", w[0], w[1]));
        }
        Ok(())
    }

    pub fn request(&self) -> ForecastRequest {
        ForecastRequest {
            locations: self.locations.clone(),
            horizons: self.horizons.clone(),
            targets: self.targets.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    population: Option<PathBuf>,
    under_reporting_factor: Option<f64>,
    lag_grid: Option<Vec<usize>>,
    window_grid: Option<Vec<usize>>,
    forest: Option<RawForest>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForest {
    tree_count: Option<usize>,
    min_leaf: Option<usize>,
    features_per_split: Option<usize>,
}

/// Settings shared by the bundled forecasters and the stacking forest.
#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig {
    /// `location,population` table; defaults to `population.csv` in the store.
    pub population: Option<PathBuf>,
    pub under_reporting_factor: f64,
    pub lag_grid: Vec<usize>,
    pub window_grid: Vec<usize>,
    pub forest: ForestHyper,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            population: None,
            under_reporting_factor: 10.0,
            lag_grid: DEFAULT_LAG_GRID.to_vec(),
            window_grid: DEFAULT_WINDOW_GRID.to_vec(),
            forest: ForestHyper::default(),
        }
    }
}

impl HarnessConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, HarnessError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| HarnessError::Plan(e.to_string()))?;
        let d = HarnessConfig::default();
        let mut forest = d.forest;
        if let Some(f) = raw.forest {
            forest.tree_count = f.tree_count.unwrap_or(forest.tree_count);
            forest.min_leaf = f.min_leaf.unwrap_or(forest.min_leaf);
            forest.features_per_split = f.features_per_split.or(forest.features_per_split);
        }
        Ok(Self {
            population: raw.population.map(|p| base.join(p)),
            under_reporting_factor: raw.under_reporting_factor.unwrap_or(d.under_reporting_factor),
            lag_grid: raw.lag_grid.unwrap_or(d.lag_grid),
            window_grid: raw.window_grid.unwrap_or(d.window_grid),
            forest,
        })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

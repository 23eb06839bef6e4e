//! Rolling-origin execution of forecasters and ensembles.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::NaiveDate;
use rayon::prelude::*;

use super::{Archive, Forecaster, HarnessConfig, HarnessError, RunPlan};
use crate::ensemble::{
    mean_ensemble, stack_forecast, stacked_descriptor, train_forests, EnsembleError, ForestHyper, ForestModel,
    MEAN_ENSEMBLE_ID, STACKED_ENSEMBLE_ID,
};
use crate::forecast::{write_submission, Category, Decisions, ForecastSet, MethodDescriptor};
use crate::sikjalpha::{bundled_variants, Population, SikjalphaForecaster};
use crate::store::Store;

/// The three SIkJα variants with grids and under-reporting factor taken from
/// `cfg`.
pub fn bundled_forecasters(population: Arc<Population>, cfg: &HarnessConfig) -> Vec<SikjalphaForecaster> {
    bundled_variants(population)
        .into_iter()
        .map(|(descriptor, mut config)| {
            config.under_reporting_factor = cfg.under_reporting_factor;
            config.lag_grid = cfg.lag_grid.clone();
            config.window_grid = cfg.window_grid.clone();
            SikjalphaForecaster::new(descriptor, config)
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub written: Vec<PathBuf>,
    /// Plan methods with no runnable forecaster; expected to be imported.
    pub not_run: Vec<String>,
}

/// Runs every plan method that has a forecaster at every plan origin, each
/// on exactly the snapshot of its origin, and archives the results. In
/// paranoid mode each forecast is repeated on a store holding no version
/// after the origin; any byte difference aborts the run.
pub fn run_retrospective(
    store: &Store,
    plan: &RunPlan,
    forecasters: &[&dyn Forecaster],
    archive: &Archive,
) -> Result<RunReport, HarnessError> {
    plan.validate()?;
    let mut report = RunReport::default();
    let mut selected: Vec<&dyn Forecaster> = Vec::new();
    for id in &plan.methods {
        match forecasters.iter().find(|f| &f.descriptor().method_id == id) {
            Some(f) => selected.push(*f),
            None => report.not_run.push(id.clone()),
        }
    }
    let request = plan.request();
    let jobs: Vec<(NaiveDate, &dyn Forecaster)> =
        plan.origins.iter().flat_map(|&o| selected.iter().map(move |&f| (o, f))).collect();
    let outputs: Vec<Result<ForecastSet, HarnessError>> = jobs
        .par_iter()
        .map(|&(origin, f)| {
            let set = f.forecast(&store.snapshot(origin)?, &request)?;
            if plan.paranoid {
                let isolated = store.truncated(origin);
                let again = f.forecast(&isolated.snapshot(origin)?, &request)?;
                if write_submission(&set) != write_submission(&again) {
                    return Err(HarnessError::ForesightViolation {
                        method_id: f.descriptor().method_id.clone(),
                        origin,
                    });
                }
            }
            Ok(set)
        })
        .collect();
    for f in &selected {
        archive.write_descriptor(f.descriptor())?;
    }
    for out in outputs {
        report.written.push(archive.write(&out?)?);
    }
    Ok(report)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnsembleRun {
    pub mean_origins: Vec<NaiveDate>,
    pub stacked: Vec<(NaiveDate, Vec<u32>)>,
    /// `(origin, horizon)` pairs lacking archived training forecasts.
    pub untrained: Vec<(NaiveDate, u32)>,
}

fn mean_descriptor() -> MethodDescriptor {
    MethodDescriptor {
        method_id: MEAN_ENSEMBLE_ID.to_string(),
        category: Category::Aiml,
        decisions: Decisions {
            smoothing_window: "inherited".to_string(),
            model_family: "mean".to_string(),
            learning_strategy: "none".to_string(),
            hyperparameter_regime: "none".to_string(),
        },
    }
}

/// Builds the mean ensemble and the stacked ensemble at every plan origin
/// from archived constituent forecasts. Stacking for horizon `k` is skipped
/// where the archive lacks the two training origins.
pub fn run_ensembles(
    store: &Store,
    plan: &RunPlan,
    archive: &Archive,
    constituents: &[String],
    hyper: ForestHyper,
) -> Result<EnsembleRun, HarnessError> {
    let ids: Vec<&str> = constituents.iter().map(String::as_str).collect();
    let load = |m: &str, o: NaiveDate| match archive.load(m, o) {
        Ok(set) => set,
        Err(e) => {
            log::warn!("{m} {o}: unreadable archived forecast: {e}");
            None
        }
    };
    archive.write_descriptor(&mean_descriptor())?;
    archive.write_descriptor(&stacked_descriptor())?;
    let mut run = EnsembleRun::default();
    for &origin in &plan.origins {
        let sets: Vec<ForecastSet> = ids
            .iter()
            .map(|m| {
                archive.load(m, origin)?.ok_or_else(|| {
                    HarnessError::Ensemble(EnsembleError::MissingConstituent { method_id: m.to_string(), origin })
                })
            })
            .collect::<Result<_, _>>()?;
        archive.write(&mean_ensemble(&sets, MEAN_ENSEMBLE_ID)?)?;
        run.mean_origins.push(origin);

        let mut forests: BTreeMap<u32, ForestModel> = BTreeMap::new();
        for &h in &plan.horizons {
            match train_forests(&ids, origin, &[h], store, load, hyper, plan.ensemble_seed) {
                Ok(mut f) => {
                    forests.append(&mut f);
                }
                Err(EnsembleError::MissingConstituent { .. } | EnsembleError::NoTrainingRows) => {
                    run.untrained.push((origin, h));
                }
                Err(e) => return Err(e.into()),
            }
        }
        if forests.is_empty() {
            continue;
        }
        let horizons: Vec<u32> = forests.keys().copied().collect();
        let stacked = stack_forecast(&sets, &forests, &store.snapshot(origin)?, &horizons)?;
        archive.write(&stacked)?;
        let model_dir = archive.root().join(STACKED_ENSEMBLE_ID).join("models");
        std::fs::create_dir_all(&model_dir).map_err(HarnessError::io(&model_dir))?;
        for (h, forest) in &forests {
            let path = model_dir.join(format!("{origin}_h{h}.json"));
            std::fs::write(&path, forest.to_json()).map_err(HarnessError::io(&path))?;
        }
        run.stacked.push((origin, horizons));
    }
    Ok(run)
}

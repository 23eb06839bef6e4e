//! Scoring archived forecasts against ground truth and ranking methods.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;

use super::{Archive, HarnessError};
use crate::forecast::{Category, TargetType};
use crate::metrics::{write_reports, Metric, MetricReport, ScoredPair};
use crate::numeric::fmt_f64;
use crate::store::{Store, StoreError};

pub const LEADERBOARD_HEADER: &str = "rank,method_id,category,horizon,score,n_origins";

pub fn leaderboard_file_name(metric: Metric) -> String {
    format!("leaderboard_{metric}.csv")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub metrics: Vec<Metric>,
    pub target: TargetType,
    /// Restrict to these methods; `None` scores the whole archive.
    pub methods: Option<Vec<String>>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            metrics: Metric::ALL.to_vec(),
            target: TargetType::INC_DEATH,
            methods: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub method_id: String,
    pub category: Category,
    pub horizon: u32,
    /// Mean of the per-origin scores.
    pub score: f64,
    pub per_origin: Vec<(NaiveDate, f64)>,
}

/// Ranking for one metric, horizon by horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Leaderboard {
    pub metric: Metric,
    pub rows: Vec<LeaderboardRow>,
}

impl Leaderboard {
    fn build(metric: Metric, reports: &[MetricReport], categories: &BTreeMap<String, Category>) -> Self {
        let mut grouped: BTreeMap<(u32, &str), Vec<(NaiveDate, f64)>> = BTreeMap::new();
        for r in reports.iter().filter(|r| r.metric == metric && r.location.is_none()) {
            grouped.entry((r.horizon, &r.method_id)).or_default().push((r.origin, r.value));
        }
        let mut by_horizon: BTreeMap<u32, Vec<LeaderboardRow>> = BTreeMap::new();
        for ((horizon, method), mut per_origin) in grouped {
            per_origin.sort_by_key(|(o, _)| *o);
            let score = per_origin.iter().map(|(_, v)| v).sum::<f64>() / per_origin.len() as f64;
            by_horizon.entry(horizon).or_default().push(LeaderboardRow {
                rank: 0,
                method_id: method.to_string(),
                category: categories.get(method).copied().unwrap_or(Category::HumanExpert),
                horizon,
                score,
                per_origin,
            });
        }
        let mut rows = Vec::new();
        for (_, mut group) in by_horizon {
            group.sort_by(|a, b| {
                let by_score = if metric.higher_is_better() {
                    b.score.total_cmp(&a.score)
                } else {
                    a.score.total_cmp(&b.score)
                };
                by_score.then_with(|| a.method_id.cmp(&b.method_id))
            });
            for (i, row) in group.iter_mut().enumerate() {
                row.rank = i + 1;
            }
            rows.extend(group);
        }
        Leaderboard { metric, rows }
    }

    pub fn for_horizon(&self, horizon: u32) -> impl Iterator<Item = &LeaderboardRow> {
        self.rows.iter().filter(move |r| r.horizon == horizon)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{LEADERBOARD_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.rank,
                r.method_id,
                r.category,
                r.horizon,
                fmt_f64(r.score),
                r.per_origin.len()
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// One row per `(method, metric, origin, horizon)`, aggregated over
    /// locations.
    pub reports: Vec<MetricReport>,
    pub scored_targets: usize,
    pub unresolved_targets: usize,
    pub leaderboards: Vec<Leaderboard>,
}

impl Evaluation {
    pub fn leaderboard(&self, metric: Metric) -> Option<&Leaderboard> {
        self.leaderboards.iter().find(|l| l.metric == metric)
    }

    /// Writes `metrics.csv` and one `leaderboard_<metric>.csv` per metric.
    pub fn write_to(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
        let write = |name: &str, text: String| {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(HarnessError::io(path))
        };
        write("metrics.csv", write_reports(&self.reports))?;
        for lb in &self.leaderboards {
            write(&leaderboard_file_name(lb.metric), lb.to_csv())?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scored targets: {}", self.scored_targets);
        let _ = writeln!(out, "unresolved targets skipped: {}", self.unresolved_targets);
        for lb in &self.leaderboards {
            let direction = if lb.metric.higher_is_better() { "higher is better" } else { "lower is better" };
            let _ = writeln!(out, "\n{} ({direction})", lb.metric);
            if lb.rows.is_empty() {
                let _ = writeln!(out, "  no forecasts in a form this metric can score");
            }
            let mut horizon = 0;
            for r in &lb.rows {
                if r.horizon != horizon {
                    horizon = r.horizon;
                    let _ = writeln!(out, "  {horizon} wk ahead");
                }
                let _ = writeln!(
                    out,
                    "    {:>2}. {:<40} {:<12} {:>14.4} over {} origins",
                    r.rank,
                    r.method_id,
                    r.category,
                    r.score,
                    r.per_origin.len()
                );
            }
        }
        out
    }
}

/// Scores every archived forecast of the requested target type whose truth
/// has resolved in the latest data version. Metrics a method's forecasts do
/// not support are left out for that method.
pub fn evaluate(archive: &Archive, store: &Store, opts: &EvalOptions) -> Result<Evaluation, HarnessError> {
    let methods = match &opts.methods {
        Some(m) => {
            let present = archive.methods()?;
            if let Some(missing) = m.iter().find(|id| !present.contains(id)) {
                return Err(HarnessError::MissingMethod(missing.clone()));
            }
            m.clone()
        }
        None => archive.methods()?,
    };
    let mut categories = BTreeMap::new();
    let mut reports = Vec::new();
    let mut scored = 0;
    let mut unresolved = 0;
    for method in &methods {
        categories.insert(method.clone(), archive.descriptor_or_default(method)?.category);
        for origin in archive.origins(method)? {
            let Some(set) = archive.load(method, origin)? else { continue };
            let mut by_horizon: BTreeMap<u32, Vec<ScoredPair>> = BTreeMap::new();
            for (target, fv) in set.entries() {
                if target.target_type() != opts.target {
                    continue;
                }
                match store.ground_truth(target.signal, &target.location.code, target.target_week_end, target.kind) {
                    Ok(truth) => by_horizon.entry(target.horizon_weeks).or_default().push(ScoredPair {
                        truth,
                        forecast: fv.clone(),
                        target: target.clone(),
                    }),
                    Err(StoreError::Unresolved { .. } | StoreError::MissingSeries { .. }) => unresolved += 1,
                    Err(e) => return Err(e.into()),
                }
            }
            for (horizon, pairs) in by_horizon {
                scored += pairs.len();
                for &metric in &opts.metrics {
                    let usable: Vec<ScoredPair> =
                        pairs.iter().filter(|p| metric.applicable(&p.forecast)).cloned().collect();
                    if usable.is_empty() {
                        continue;
                    }
                    reports.push(MetricReport {
                        method_id: method.clone(),
                        metric,
                        horizon,
                        origin,
                        location: None,
                        value: metric.score(&usable)?,
                        n: usable.len(),
                    });
                }
            }
        }
    }
    if scored == 0 {
        return Err(HarnessError::NoResolvableTargets);
    }
    let leaderboards = opts.metrics.iter().map(|&m| Leaderboard::build(m, &reports, &categories)).collect();
    Ok(Evaluation {
        reports,
        scored_targets: scored,
        unresolved_targets: unresolved,
        leaderboards,
    })
}

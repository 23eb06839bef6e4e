//! Acceptance checks, one test per criterion. Each prints a PASS/FAIL line
//! with the measured numbers and wall time, then asserts.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use retrocast::ensemble::{best_split, fit_forest, ForestHyper, MEAN_ENSEMBLE_ID, STACKED_ENSEMBLE_ID};
use retrocast::forecast::{
    hub_week_end, parse_submission, write_submission, Bin, ForecastSet, ForecastValue, Quantile, TargetKind,
    TargetSpec, TargetType,
};
use retrocast::harness::synth::{generate_synthetic, Scenario, SynthConfig};
use retrocast::harness::{
    bundled_forecasters, run_ensembles, run_retrospective, sensitivity_day_of_week, sensitivity_smoothing, Archive,
    ForecastRequest, Forecaster, HarnessConfig, RunPlan,
};
use retrocast::metrics::{coverage, log_score, mae, smape, ScoredPair};
use retrocast::sikjalpha::{fit, predict, HyperRegime, SikjalphaConfig, SikjalphaForecaster, SMOOTH14_ID, SMOOTH7_ID};
use retrocast::store::Store;
use retrocast::{LocationId, Signal};

fn report(id: u32, name: &str, passed: bool, detail: &str, elapsed: Duration) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    let line = format!("acceptance {id} {verdict} {name}: {detail} [{:.2} s]\n", elapsed.as_secs_f64());
    // straight to the handle, so the line shows even when output is captured
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 7, 5).unwrap()
}

// ---------------------------------------------------------------- 1

fn naive_mae(ps: &[(f64, f64)]) -> f64 {
    let mut s = 0.0;
    for &(y, f) in ps {
        s += if y > f { y - f } else { f - y };
    }
    s / ps.len() as f64
}

fn naive_smape(ps: &[(f64, f64)]) -> f64 {
    let mut s = 0.0;
    for &(y, f) in ps {
        if !(y == 0.0 && f == 0.0) {
            s += (y - f).abs() / ((y + f) / 2.0);
        }
    }
    s / ps.len() as f64
}

fn naive_log_score(truths: &[f64], bins: &[Vec<(f64, f64, f64)>]) -> f64 {
    let mut s = 0.0;
    for (y, bs) in truths.iter().zip(bins) {
        let (_, _, p) = bs.iter().find(|(lo, hi, _)| lo <= y && y < hi).copied().unwrap();
        s += if p <= 0.0 { -10.0 } else { p.ln().max(-10.0) };
    }
    s / truths.len() as f64
}

fn naive_coverage(truths: &[f64], intervals: &[(f64, f64)]) -> f64 {
    let hits = truths.iter().zip(intervals).filter(|(y, (lo, hi))| lo <= *y && *y <= hi).count();
    hits as f64 / truths.len() as f64
}

fn pairs_of(truths: &[f64], values: Vec<ForecastValue>) -> Vec<ScoredPair> {
    let target = TargetSpec::ahead(LocationId::new("01"), TargetType::INC_DEATH, day0(), 1);
    truths
        .iter()
        .zip(values)
        .map(|(&truth, forecast)| ScoredPair { truth, forecast, target: target.clone() })
        .collect()
}

#[test]
fn criterion_1_metric_oracles() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = Vec::new();
    for instance in 0..1000 {
        let n = rng.random_range(1..=25);
        let mut truths = Vec::new();
        let mut points = Vec::new();
        let mut bins = Vec::new();
        let mut intervals = Vec::new();
        let mut values = Vec::new();
        for _ in 0..n {
            let y: f64 = match rng.random_range(0..10) {
                0 => 0.0,
                1 => rng.random_range(0..500) as f64,
                _ => rng.random_range(0.0..1e4),
            };
            let f: f64 = match rng.random_range(0..10) {
                0 => y,
                1 => 0.0,
                _ => rng.random_range(0.0..1e4),
            };
            let mut edges = vec![0.0, 1e4 + 1.0];
            for _ in 0..rng.random_range(1..12) {
                edges.push(rng.random_range(1.0..1e4));
            }
            edges.sort_by(f64::total_cmp);
            edges.dedup();
            let mut weights: Vec<f64> = (1..edges.len())
                .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(1e-6..1.0) })
                .collect();
            if weights.iter().all(|&w| w == 0.0) {
                weights[0] = 1.0;
            }
            let total: f64 = weights.iter().sum();
            let b: Vec<(f64, f64, f64)> = edges.windows(2).zip(&weights).map(|(e, w)| (e[0], e[1], w / total)).collect();
            let mut qv: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1e4)).collect();
            qv.sort_by(f64::total_cmp);
            let levels = [0.025, 0.25, 0.5, 0.75, 0.975];
            let quantiles: Vec<Quantile> = levels.iter().zip(&qv).map(|(&level, &value)| Quantile { level, value }).collect();
            let fbins: Vec<Bin> = b.iter().map(|&(lower, upper, probability)| Bin { lower, upper, probability }).collect();
            values.push(ForecastValue::new(Some(f), Some(quantiles), Some(fbins)).unwrap());
            truths.push(y);
            points.push((y, f));
            bins.push(b);
            intervals.push((qv[0], qv[4]));
        }
        let pairs = pairs_of(&truths, values);
        let checks = [
            ("mae", mae(&pairs).unwrap(), naive_mae(&points)),
            ("smape", smape(&pairs).unwrap(), naive_smape(&points)),
            ("log_score", log_score(&pairs).unwrap(), naive_log_score(&truths, &bins)),
            ("coverage", coverage(&pairs, 0.95).unwrap(), naive_coverage(&truths, &intervals)),
        ];
        for (name, got, want) in checks {
            if !rel_close(got, want, 1e-12) {
                mismatches.push(format!("#{instance} {name}: {got} vs {want}"));
            }
        }
    }

    let zero_bin = vec![Bin { lower: 0.0, upper: 10.0, probability: 0.0 }, Bin { lower: 10.0, upper: 20.0, probability: 1.0 }];
    let floored = log_score(&pairs_of(&[3.0], vec![ForecastValue::new(None, None, Some(zero_bin)).unwrap()])).unwrap();
    let smape_max = smape(&pairs_of(&[0.0, 7.0], vec![ForecastValue::from_point(5.0), ForecastValue::from_point(0.0)])).unwrap();
    let smape_zero = smape(&pairs_of(&[0.0], vec![ForecastValue::from_point(0.0)])).unwrap();
    let boundaries = floored == -10.0 && smape_max == 2.0 && smape_zero == 0.0;

    let elapsed = t0.elapsed();
    let passed = mismatches.is_empty() && boundaries && elapsed < Duration::from_secs(5);
    let detail = format!(
        "1000 instances, {} mismatches; floor {floored}, SMAPE max {smape_max}, SMAPE 0/0 {smape_zero}",
        mismatches.len()
    );
    report(1, "metric oracles", passed, &detail, elapsed);
    assert!(passed, "{detail}\n{}", mismatches.join("\n"));
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_exact_recovery() {
    let t0 = Instant::now();
    const ORIGIN: usize = 119;
    let ds = generate_synthetic(&SynthConfig::new(2020, 10, ORIGIN + 29, Scenario::Stable));
    let store = ds.to_store().unwrap();
    let view = store.snapshot(ds.config.date(ORIGIN)).unwrap();
    let mut cfg = SikjalphaConfig::new(1, HyperRegime::HoldoutValidation { holdout_days: 7 }, Arc::new(ds.population()));
    cfg.lag_grid = vec![2];
    cfg.window_grid = vec![28];

    let mut worst_param: f64 = 0.0;
    let mut worst_forecast: f64 = 0.0;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    for loc in &ds.locations {
        let id = LocationId::new(loc.code.clone());
        let params = fit(&view, &cfg, &id).unwrap();
        for j in 0..2 {
            worst_param = worst_param.max(rel(params.beta[j], loc.beta[j])).max(rel(params.theta[j], loc.theta[j]));
        }
        for (target, value) in predict(&params, &view, &cfg, &id, &[1, 2, 3, 4], &[TargetType::INC_DEATH]).unwrap() {
            let expected = loc.week_deaths(ORIGIN + 7 * target.horizon_weeks as usize);
            worst_forecast = worst_forecast.max(rel(value.point().unwrap(), expected));
        }
    }
    let elapsed = t0.elapsed();
    let passed = worst_param < 1e-6 && worst_forecast < 1e-6 && elapsed < Duration::from_secs(10);
    let detail = format!(
        "{} locations, {} days of history; worst relative error params {worst_param:.2e}, forecasts {worst_forecast:.2e}",
        ds.locations.len(),
        ORIGIN + 1
    );
    report(2, "SIkJalpha exact recovery", passed, &detail, elapsed);
    assert!(passed, "{detail}");
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_3_speed_contract() {
    let ds = generate_synthetic(&SynthConfig::new(2020, 50, 150, Scenario::Noisy));
    let store = ds.to_store().unwrap();
    let fs = bundled_forecasters(Arc::new(ds.population()), &HarnessConfig::default());
    let f = fs.iter().find(|f| f.descriptor.method_id == SMOOTH14_ID).unwrap();
    let view = store.snapshot(ds.config.date(147)).unwrap();
    let request = ForecastRequest { locations: Vec::new(), horizons: vec![1, 2, 3, 4], targets: vec![TargetType::INC_DEATH] };

    let t0 = Instant::now();
    let set = f.forecast(&view, &request).unwrap();
    let elapsed = t0.elapsed();
    let passed = set.len() == 50 * 4 && elapsed <= Duration::from_secs(8);
    let detail = format!(
        "{SMOOTH14_ID}, 50 locations, {} targets; desktop budget 4 s {}, CI budget 8 s",
        set.len(),
        if elapsed <= Duration::from_secs(4) { "met" } else { "missed" }
    );
    report(3, "50-location fit and predict", passed, &detail, elapsed);
    assert!(passed, "{detail} in {elapsed:?}");
}

// ---------------------------------------------------------------- 4

/// Exhaustive split search: every feature, every midpoint, SSE from
/// explicit child means.
fn brute_best_sse(x: &[Vec<f64>], y: &[f64], min_leaf: usize) -> Option<f64> {
    let sse = |idx: &[usize]| {
        let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        idx.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
    };
    let mut best: Option<f64> = None;
    for f in 0..x[0].len() {
        let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| x[i][f] < t);
            if l.len() >= min_leaf && r.len() >= min_leaf {
                let s = sse(&l) + sse(&r);
                best = Some(best.map_or(s, |b: f64| b.min(s)));
            }
        }
    }
    best
}

fn split_sse(x: &[Vec<f64>], y: &[f64], feature: usize, threshold: f64) -> f64 {
    let (l, r): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| x[i][feature] < threshold);
    let sse = |idx: &[usize]| {
        let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        idx.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
    };
    sse(&l) + sse(&r)
}

#[test]
fn criterion_4_forest_correctness() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);

    let x: Vec<Vec<f64>> = (0..80).map(|_| (0..4).map(|_| rng.random_range(-50.0..50.0)).collect()).collect();
    let y: Vec<f64> = (0..80).map(|_| rng.random_range(0.0..1e3)).collect();
    let tree = fit_forest(&x, &y, ForestHyper::single_unpruned_tree(), 0, 1).unwrap();
    let memorized = x.iter().zip(&y).all(|(r, &t)| tree.predict_raw(r).unwrap() == t);

    let mut split_mismatches = 0;
    for _ in 0..500 {
        let n = rng.random_range(2..=20);
        let p = rng.random_range(1..=3);
        let min_leaf = rng.random_range(1..=3);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random_range(0..6) as f64).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
        let rows: Vec<usize> = (0..n).collect();
        let features: Vec<usize> = (0..p).collect();
        let got = best_split(&x, &y, &rows, &features, min_leaf);
        let want = brute_best_sse(&x, &y, min_leaf);
        let ok = match (got, want) {
            (None, None) => true,
            (Some(s), Some(b)) => {
                let scale = 1e-9 * (1.0 + b);
                (s.sse - b).abs() <= scale && (split_sse(&x, &y, s.feature, s.threshold) - b).abs() <= scale
            }
            _ => false,
        };
        split_mismatches += usize::from(!ok);
    }

    let x: Vec<Vec<f64>> = (0..150).map(|_| (0..6).map(|_| rng.random_range(0.0..500.0)).collect()).collect();
    let y: Vec<f64> = x.iter().map(|r| r[0] * 0.8 + rng.random_range(0.0..20.0)).collect();
    let a = fit_forest(&x, &y, ForestHyper::default(), 99, 2).unwrap();
    let b = fit_forest(&x, &y, ForestHyper::default(), 99, 2).unwrap();
    let reproducible = a.trees.len() == 100
        && a.to_json() == b.to_json()
        && x.iter().all(|r| a.predict(r).unwrap().to_bits() == b.predict(r).unwrap().to_bits());

    let elapsed = t0.elapsed();
    let passed = memorized && split_mismatches == 0 && reproducible && elapsed < Duration::from_secs(10);
    let detail = format!(
        "memorizes 80 rows: {memorized}; root split vs brute force: {split_mismatches}/500 mismatches; 100-tree refit bit-identical: {reproducible}"
    );
    report(4, "forest correctness", passed, &detail, elapsed);
    assert!(passed, "{detail}");
}

// ---------------------------------------------------------------- 5

fn pooled_mae(archive: &Archive, store: &Store, method: &str, origins: &[NaiveDate]) -> f64 {
    let (mut total, mut n) = (0.0, 0);
    for &o in origins {
        for (t, fv) in archive.load(method, o).unwrap().unwrap().entries() {
            let y = store.ground_truth(t.signal, &t.location.code, t.target_week_end, t.kind).unwrap();
            total += (y - fv.point().unwrap()).abs();
            n += 1;
        }
    }
    total / n as f64
}

#[test]
fn criterion_5_stacking_efficacy() {
    let t0 = Instant::now();
    // revision-free world, so truth as of any origin equals the final truth
    let mut cfg = SynthConfig::new(31, 50, 168, Scenario::Stable);
    cfg.reproduction = Some(1.0);
    cfg.first_version_day = 77;
    let ds = generate_synthetic(&cfg);
    let store = ds.to_store().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let archive = Archive::new(dir.path());
    let constituents = ["A-exact", "B-plus20", "C-minus20"];

    let test_origins: Vec<NaiveDate> = [112, 119, 126, 133].iter().map(|&d| cfg.date(d)).collect();
    let mut origin = test_origins[0] - chrono::Duration::days(35);
    while origin <= test_origins[3] {
        for (method, factor) in constituents.iter().zip([1.0, 1.2, 0.8]) {
            let mut set = ForecastSet::new(*method, origin);
            for loc in &ds.locations {
                for h in 1..=4 {
                    let t = TargetSpec::ahead(LocationId::new(loc.code.clone()), TargetType::INC_DEATH, origin, h);
                    let y = store.ground_truth(Signal::Deaths, &loc.code, t.target_week_end, TargetKind::Incident).unwrap();
                    set.insert(t, ForecastValue::from_point(y * factor)).unwrap();
                }
            }
            archive.write(&set).unwrap();
        }
        origin += chrono::Duration::days(7);
    }
    let plan = RunPlan {
        archive: dir.path().to_path_buf(),
        horizons: vec![1, 2, 3, 4],
        targets: vec![TargetType::INC_DEATH],
        methods: Vec::new(),
        locations: Vec::new(),
        origins: test_origins.clone(),
        ensemble_seed: 5,
        paranoid: false,
    };
    let ids: Vec<String> = constituents.iter().map(|s| s.to_string()).collect();
    let run = run_ensembles(&store, &plan, &archive, &ids, ForestHyper::default()).unwrap();
    assert!(run.untrained.is_empty());

    let m = |id: &str| pooled_mae(&archive, &store, id, &test_origins);
    let (a, worst, mean, stacked) = (m(constituents[0]), m(constituents[1]).max(m(constituents[2])), m(MEAN_ENSEMBLE_ID), m(STACKED_ENSEMBLE_ID));
    let elapsed = t0.elapsed();
    let passed = stacked <= 1.1 * a && stacked <= 0.6 * mean && elapsed < Duration::from_secs(30);
    let detail = format!(
        "MAE stacked {stacked:.4}, A {a:.4}, mean ensemble {mean:.2e}, worst constituent {worst:.4}; \
         need stacked <= 1.1*A = {:.4} and <= 0.6*mean = {:.2e}; stacked below worst constituent: {}",
        1.1 * a,
        0.6 * mean,
        stacked <= worst
    );
    report(5, "stacking efficacy", passed, &detail, elapsed);
    assert!(passed, "{detail}");
}

// ---------------------------------------------------------------- 6

fn plan_for(dir: &Path, fs: &[SikjalphaForecaster], origins: Vec<NaiveDate>, paranoid: bool) -> RunPlan {
    RunPlan {
        archive: dir.to_path_buf(),
        horizons: vec![1, 2, 3, 4],
        targets: vec![TargetType::INC_DEATH],
        methods: fs.iter().map(|f| f.descriptor.method_id.clone()).collect(),
        locations: Vec::new(),
        origins,
        ensemble_seed: 0,
        paranoid,
    }
}

fn archive_bytes(archive: &Archive) -> BTreeMap<(String, NaiveDate), Vec<u8>> {
    let mut out = BTreeMap::new();
    for m in archive.methods().unwrap() {
        for o in archive.origins(&m).unwrap() {
            out.insert((m.clone(), o), archive.read_bytes(&m, o).unwrap());
        }
    }
    out
}

#[test]
fn criterion_6_no_foresight_guard() {
    let t0 = Instant::now();
    let ds = generate_synthetic(&SynthConfig::new(2020, 20, 150, Scenario::Noisy));
    let store = ds.to_store().unwrap();
    let fs = bundled_forecasters(Arc::new(ds.population()), &HarnessConfig::default());
    let refs: Vec<&dyn Forecaster> = fs.iter().map(|f| f as &dyn Forecaster).collect();
    let origins: Vec<NaiveDate> = (14..20).map(|w| ds.config.date(7 * w)).collect();

    let full_dir = tempfile::tempdir().unwrap();
    let full = Archive::new(full_dir.path());
    let paranoid = run_retrospective(&store, &plan_for(full_dir.path(), &fs, origins.clone(), true), &refs, &full);

    let cut_dir = tempfile::tempdir().unwrap();
    let cut = Archive::new(cut_dir.path());
    for &o in &origins {
        let truncated = store.truncated(o);
        run_retrospective(&truncated, &plan_for(cut_dir.path(), &fs, vec![o], false), &refs, &cut).unwrap();
    }
    let (a, b) = (archive_bytes(&full), archive_bytes(&cut));
    let identical = !a.is_empty() && a == b;
    let elapsed = t0.elapsed();
    let passed = paranoid.is_ok() && identical && a.len() == 18 && elapsed < Duration::from_secs(60);
    let detail = format!(
        "{} methods x {} origins; paranoid run {}; {} archived files byte-identical to runs on cut stores: {identical}",
        fs.len(),
        origins.len(),
        if paranoid.is_ok() { "clean" } else { "flagged a difference" },
        a.len()
    );
    report(6, "no-foresight guard", passed, &detail, elapsed);
    assert!(passed, "{detail} {paranoid:?}");
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_7_sensitivity_analyses() {
    let t0 = Instant::now();

    let mut cfg = SynthConfig::new(7, 10, 160, Scenario::TrendBreak);
    cfg.break_day = 100;
    cfg.break_factor = 0.5;
    cfg.first_version_day = 60;
    let ds = generate_synthetic(&cfg);
    let store = ds.to_store().unwrap();
    let fs = bundled_forecasters(Arc::new(ds.population()), &HarnessConfig::default());
    let selected: Vec<SikjalphaForecaster> =
        fs.into_iter().filter(|f| [SMOOTH7_ID, SMOOTH14_ID].contains(&f.descriptor.method_id.as_str())).collect();
    let refs: Vec<&dyn Forecaster> = selected.iter().map(|f| f as &dyn Forecaster).collect();
    // Sundays after the break whose 4-week targets resolve
    let origins: Vec<NaiveDate> = [105, 112, 119, 126].iter().map(|&d| cfg.date(d)).collect();
    let dir = tempfile::tempdir().unwrap();
    let archive = Archive::new(dir.path());
    run_retrospective(&store, &plan_for(dir.path(), &selected, origins.clone(), false), &refs, &archive).unwrap();
    let smoothing = sensitivity_smoothing(&archive, &store, SMOOTH7_ID, SMOOTH14_ID, &origins, TargetType::INC_DEATH).unwrap();
    let min_rel = smoothing.rows.iter().map(|r| r.relative_difference()).fold(f64::INFINITY, f64::min);
    let smoothing_ok = smoothing.rows.len() == origins.len() && min_rel > 0.25;

    let spread = |scenario: Scenario| {
        let mut cfg = SynthConfig::new(7, 10, 150, scenario);
        cfg.first_version_day = 60;
        cfg.reproduction = Some(1.05);
        cfg.population_scale = 1e3;
        let ds = generate_synthetic(&cfg);
        let store = ds.to_store().unwrap();
        let fs = bundled_forecasters(Arc::new(ds.population()), &HarnessConfig::default());
        let f = fs.iter().find(|f| f.descriptor.method_id == SMOOTH7_ID).unwrap();
        let request = ForecastRequest { locations: Vec::new(), horizons: vec![1, 2, 3, 4], targets: vec![TargetType::INC_DEATH] };
        sensitivity_day_of_week(&store, f, cfg.date(70), cfg.date(111), &request).unwrap().median_spread
    };
    let periodic = spread(Scenario::WeeklyPeriodic);
    let control = spread(Scenario::Stable);
    let weekday_ok = periodic >= 3.0 * control;

    let elapsed = t0.elapsed();
    let passed = smoothing_ok && weekday_ok && elapsed < Duration::from_secs(60);
    let detail = format!(
        "smooth7 vs smooth14 smallest post-break relative MAE gap {min_rel:.3} (> 0.25); \
         weekday median spread periodic {periodic:.3} vs control {control:.3} = {:.1}x (>= 3x)",
        periodic / control
    );
    report(7, "sensitivity analyses", passed, &detail, elapsed);
    assert!(passed, "{detail}");
}

// ---------------------------------------------------------------- 8

const HUB_LEVELS: [f64; 23] = [
    0.01, 0.025, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9,
    0.95, 0.975, 0.99,
];

fn random_number(rng: &mut ChaCha8Rng) -> f64 {
    match rng.random_range(0..4) {
        0 => rng.random_range(0..100_000) as f64,
        1 => rng.random_range(0.0..1e6),
        2 => rng.random_range(0.0..1e-3),
        _ => (rng.random_range(0.0..1e4) * 100.0f64).round() / 100.0,
    }
}

fn random_set(rng: &mut ChaCha8Rng) -> ForecastSet {
    let origin = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap() + chrono::Duration::days(rng.random_range(0..400));
    let mut set = ForecastSet::new("randomized", origin);
    let codes = ["01", "06", "36", "48", "72", "US"];
    let types = [
        TargetType::INC_DEATH,
        TargetType { signal: Signal::Deaths, kind: TargetKind::Cumulative },
        TargetType { signal: Signal::Cases, kind: TargetKind::Incident },
        TargetType { signal: Signal::Cases, kind: TargetKind::Cumulative },
    ];
    for _ in 0..rng.random_range(1..30) {
        let code = codes[rng.random_range(0..codes.len())];
        let h = rng.random_range(1..=4);
        let mut target = TargetSpec::ahead(LocationId::new(code), types[rng.random_range(0..4)], origin, h);
        if rng.random_bool(0.5) {
            target.target_week_end = hub_week_end(origin, h);
        }
        let point = rng.random_bool(0.7).then(|| random_number(rng));
        let quantiles = (point.is_none() || rng.random_bool(0.5)).then(|| {
            let levels: Vec<f64> = HUB_LEVELS.iter().copied().filter(|_| rng.random_bool(0.6)).collect();
            let levels = if levels.is_empty() { vec![0.5] } else { levels };
            let mut values: Vec<f64> = levels.iter().map(|_| random_number(rng)).collect();
            values.sort_by(f64::total_cmp);
            levels.into_iter().zip(values).map(|(level, value)| Quantile { level, value }).collect()
        });
        // a repeated target is simply dropped
        let _ = set.insert(target, ForecastValue::new(point, quantiles, None).unwrap());
    }
    set
}

#[test]
fn criterion_8_format_fidelity() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();
    for i in 0..100 {
        let set = random_set(&mut rng);
        let first = write_submission(&set);
        let parsed = parse_submission(&first, &set.method_id, Some(set.origin)).unwrap();
        let second = write_submission(&parsed.set);
        if parsed.set != set || parsed.skipped != 0 {
            failures.push(format!("set {i}: parse(write(s)) != s"));
        }
        if first != second {
            failures.push(format!("set {i}: write not idempotent"));
        }
    }

    let sample = include_bytes!("data/hub_sample.csv");
    let hub = parse_submission(sample, "hub-sample", None);
    let hub_ok = match &hub {
        Ok(p) => {
            let with_quantiles = p.set.entries().values().filter(|v| v.quantiles().is_some_and(|q| q.len() == 23)).count();
            let with_points = p.set.entries().values().filter(|v| v.point().is_some()).count();
            p.skipped == 2 && p.set.len() == 9 && with_quantiles == 6 && with_points == 9
        }
        Err(_) => false,
    };
    let elapsed = t0.elapsed();
    let passed = failures.is_empty() && hub_ok;
    let detail = format!(
        "100 randomized sets, {} round-trip failures; hub sample parses with point and quantile rows: {hub_ok}",
        failures.len()
    );
    report(8, "format fidelity", passed, &detail, elapsed);
    assert!(passed, "{detail}\n{}\n{hub:?}", failures.join("\n"));
}

// ---------------------------------------------------------------- 9

fn retrocast(store: &Path, args: &[&str]) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_retrocast"))
        .arg("--store")
        .arg(store)
        .args(args)
        .output()
        .expect("binary runs");
    let text = format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    (out.status.success(), text)
}

#[test]
fn criterion_9_end_to_end_smoke() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let store = root.join("store");
    let plan = root.join("plan.toml");
    std::fs::write(&plan, include_str!("../../../configs/plan.toml")).unwrap();
    let (data, reports) = (root.join("data"), root.join("reports"));
    let (plan, data, reports) = (plan.to_str().unwrap(), data.to_str().unwrap(), reports.to_str().unwrap());

    let steps: [(&str, Vec<&str>); 5] = [
        ("synth", vec!["synth", "--out", data, "--ingest"]),
        ("run", vec!["run", "--plan", plan]),
        ("ensemble", vec!["ensemble", "--plan", plan]),
        ("evaluate", vec!["evaluate", "--plan", plan, "--out", reports]),
        ("report", vec!["report", "--plan", plan, "--out", reports]),
    ];
    let mut failed = None;
    for (name, args) in &steps {
        let (ok, text) = retrocast(&store, args);
        if !ok {
            failed = Some(format!("{name} failed: {text}"));
            break;
        }
    }

    let mut missing = Vec::new();
    let expected = [
        SMOOTH14_ID,
        SMOOTH7_ID,
        retrocast::sikjalpha::WINDOW_NOVAL_ID,
        MEAN_ENSEMBLE_ID,
        STACKED_ENSEMBLE_ID,
    ];
    if failed.is_none() {
        let board = std::fs::read_to_string(Path::new(reports).join("leaderboard_mae.csv")).unwrap_or_default();
        let scored: BTreeSet<(String, u32)> = board
            .lines()
            .skip(1)
            .filter_map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                let score: f64 = f.get(4)?.parse().ok()?;
                let h: u32 = f.get(3)?.parse().ok()?;
                score.is_finite().then(|| (f[1].to_string(), h))
            })
            .collect();
        for id in expected {
            for h in 1..=4 {
                if !scored.contains(&(id.to_string(), h)) {
                    missing.push(format!("{id} h{h}"));
                }
            }
        }
        if !Path::new(reports).join("summary.txt").exists() {
            missing.push("summary.txt".to_string());
        }
    }
    let elapsed = t0.elapsed();
    let passed = failed.is_none() && missing.is_empty() && elapsed < Duration::from_secs(120);
    let detail = match &failed {
        Some(f) => f.clone(),
        None => format!("5 steps exit 0; {} methods x 4 horizons on the MAE leaderboard, missing {:?}", expected.len(), missing),
    };
    report(9, "end-to-end CLI smoke", passed, &detail, elapsed);
    assert!(passed, "{detail}");
}

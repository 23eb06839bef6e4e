use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};

use retrocast::ensemble::STACKED_ENSEMBLE_ID;
use retrocast::forecast::TargetType;
use retrocast::harness::synth::{generate_synthetic, Scenario, SynthConfig};
use retrocast::harness::{
    bundled_forecasters, evaluate, run_ensembles, run_retrospective, sensitivity_day_of_week, sensitivity_smoothing,
    Archive, EvalOptions, Forecaster, HarnessConfig, RunPlan,
};
use retrocast::metrics::Metric;
use retrocast::sikjalpha::{Population, SikjalphaForecaster, SMOOTH14_ID, SMOOTH7_ID};
use retrocast::store::{parse_truth_file_name, IngestFormat, Store};

/// Retrospective benchmarking of epidemic forecasts on versioned truth data.
#[derive(Parser, Debug)]
#[command(name = "retrocast", version)]
struct Cli {
    /// Versioned truth store directory.
    #[arg(long, global = true, default_value = "store")]
    store: PathBuf,
    /// Forecaster configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for synthetic worlds and the stacking forest.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Add truth versions to the store, or submissions to an archive.
    Ingest(IngestArgs),
    /// Generate a synthetic versioned dataset.
    Synth(SynthArgs),
    /// Run the bundled forecasters at every plan origin.
    Run {
        #[arg(long)]
        plan: PathBuf,
        /// Re-run each forecast on a store cut at its origin and compare.
        #[arg(long)]
        paranoid: bool,
    },
    /// Build the mean and stacked ensembles from archived forecasts.
    Ensemble {
        #[arg(long)]
        plan: PathBuf,
        /// Exactly three constituent method ids; defaults to the bundled ones.
        #[arg(long, value_delimiter = ',')]
        constituents: Vec<String>,
    },
    /// Score the archive and write metric tables and leaderboards.
    Evaluate(EvalArgs),
    /// Like `evaluate`, plus a readable `summary.txt`.
    Report(EvalArgs),
    /// Smoothing-window and forecast-day sensitivity analyses.
    Sensitivity {
        #[command(subcommand)]
        analysis: Analysis,
    },
}

#[derive(clap::Args, Debug)]
struct IngestArgs {
    /// Truth files, or directories holding `<signal>_<date>.csv` files.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Truth file layout.
    #[arg(long, value_enum, default_value_t = TruthLayout::Long)]
    layout: TruthLayout,
    /// Treat the inputs as forecast submissions for `--method`.
    #[arg(long, requires_all = ["method", "archive"])]
    submission: bool,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    archive: Option<PathBuf>,
    /// Submission origin, when it cannot be read from the file.
    #[arg(long)]
    origin: Option<NaiveDate>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TruthLayout {
    Long,
    Wide,
}

#[derive(clap::Args, Debug)]
struct SynthArgs {
    /// Output directory for truth files and `population.csv`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "noisy")]
    scenario: Scenario,
    #[arg(long, default_value_t = 50)]
    locations: usize,
    #[arg(long, default_value_t = 150)]
    days: usize,
    /// Also ingest the generated files into the store.
    #[arg(long)]
    ingest: bool,
}

#[derive(clap::Args, Debug)]
struct EvalArgs {
    /// Plan whose archive is scored.
    #[arg(long, conflicts_with = "archive")]
    plan: Option<PathBuf>,
    #[arg(long)]
    archive: Option<PathBuf>,
    /// Output directory for the tables.
    #[arg(long, default_value = "reports")]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "mae,smape,log_score,coverage")]
    metrics: Vec<Metric>,
    #[arg(long, default_value = "inc death")]
    target: TargetType,
}

#[derive(Subcommand, Debug)]
enum Analysis {
    /// Paired per-origin MAE of the 7- and 14-day smoothing variants.
    Smoothing {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
    },
    /// Error by weekday with every day of the period as an origin.
    DayOfWeek {
        #[arg(long, default_value = SMOOTH7_ID)]
        method: String,
        #[arg(long)]
        start: NaiveDate,
        #[arg(long)]
        end: NaiveDate,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        horizons: Vec<u32>,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(args) => ingest(&cli, args),
        Command::Synth(args) => synth(&cli, args),
        Command::Run { plan, paranoid } => run(&cli, plan, *paranoid),
        Command::Ensemble { plan, constituents } => ensemble(&cli, plan, constituents),
        Command::Evaluate(args) => score(&cli, args, false),
        Command::Report(args) => score(&cli, args, true),
        Command::Sensitivity { analysis } => sensitivity(&cli, analysis),
    }
}

fn open_store(cli: &Cli) -> Result<Store> {
    Store::open(&cli.store).with_context(|| format!("opening store {}", cli.store.display()))
}

fn load_config(cli: &Cli) -> Result<HarnessConfig> {
    match &cli.config {
        Some(path) => Ok(HarnessConfig::load(path)?),
        None => Ok(HarnessConfig::default()),
    }
}

fn load_population(cli: &Cli, cfg: &HarnessConfig) -> Result<Arc<Population>> {
    let path = cfg.population.clone().unwrap_or_else(|| cli.store.join("population.csv"));
    let pop = Population::load(&path).with_context(|| format!("reading population table {}", path.display()))?;
    Ok(Arc::new(pop))
}

fn forecasters(cli: &Cli) -> Result<(HarnessConfig, Vec<SikjalphaForecaster>)> {
    let cfg = load_config(cli)?;
    let pop = load_population(cli, &cfg)?;
    let fs = bundled_forecasters(pop, &cfg);
    Ok((cfg, fs))
}

/// Files under each path, directories expanded one level, sorted by name.
fn expand(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "csv"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn ingest(cli: &Cli, args: &IngestArgs) -> Result<()> {
    let files = expand(&args.paths)?;
    if args.submission {
        let archive = Archive::new(args.archive.clone().expect("clap requires --archive"));
        let method = args.method.as_deref().expect("clap requires --method");
        for f in files {
            let raw = fs::read(&f).with_context(|| format!("reading {}", f.display()))?;
            let (origin, skipped) = archive
                .import(method, args.origin, &raw)
                .with_context(|| format!("importing {}", f.display()))?;
            println!("{method} {origin}: imported {} ({skipped} rows skipped)", f.display());
        }
        return Ok(());
    }
    let mut store = open_store(cli)?;
    let mut versions = Vec::new();
    for f in files {
        let name = f.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name == "population.csv" {
            fs::create_dir_all(&cli.store)?;
            fs::copy(&f, cli.store.join("population.csv"))?;
            continue;
        }
        let Some((signal, date)) = parse_truth_file_name(name) else {
            bail!("{}: expected a file named <signal>_<YYYY-MM-DD>.csv", f.display());
        };
        versions.push((date, signal, f));
    }
    // oldest first, so range checks see versions in publication order
    versions.sort();
    for (date, signal, f) in versions {
        let raw = fs::read(&f).with_context(|| format!("reading {}", f.display()))?;
        let format = match args.layout {
            TruthLayout::Long => IngestFormat::HubTruth(signal),
            TruthLayout::Wide => IngestFormat::Wide(signal),
        };
        let report = store
            .ingest_version(&raw, date, format)
            .with_context(|| format!("ingesting {}", f.display()))?;
        for (loc, day) in &report.non_monotone {
            log::warn!("{}: cumulative {signal} for {loc} decreases on {day}", f.display());
        }
    }
    store.save(&cli.store)?;
    Ok(())
}

fn synth(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig::new(cli.seed.unwrap_or(2020), args.locations, args.days, args.scenario);
    if args.days < 70 {
        bail!("synthetic worlds need at least 70 days");
    }
    let ds = generate_synthetic(&cfg);
    ds.write_to(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "{} scenario: {} locations, {} days, {} version files in {}",
        cfg.scenario.name(),
        cfg.locations,
        cfg.days,
        ds.versions.len(),
        args.out.display()
    );
    if args.ingest {
        let ingest_args = IngestArgs {
            paths: vec![args.out.clone()],
            layout: TruthLayout::Long,
            submission: false,
            method: None,
            archive: None,
            origin: None,
        };
        ingest(cli, &ingest_args)?;
    }
    Ok(())
}

fn run(cli: &Cli, plan_path: &Path, paranoid: bool) -> Result<()> {
    let mut plan = RunPlan::load(plan_path)?;
    plan.paranoid |= paranoid;
    let store = open_store(cli)?;
    let (_, fs) = forecasters(cli)?;
    let refs: Vec<&dyn Forecaster> = fs.iter().map(|f| f as &dyn Forecaster).collect();
    let archive = Archive::new(&plan.archive);
    let report = run_retrospective(&store, &plan, &refs, &archive)?;
    for id in &report.not_run {
        log::info!("{id}: not a bundled method, expected in the archive already");
    }
    println!("wrote {} forecast files to {}", report.written.len(), plan.archive.display());
    Ok(())
}

fn ensemble(cli: &Cli, plan_path: &Path, constituents: &[String]) -> Result<()> {
    let mut plan = RunPlan::load(plan_path)?;
    if let Some(seed) = cli.seed {
        plan.ensemble_seed = seed;
    }
    let store = open_store(cli)?;
    let cfg = load_config(cli)?;
    let constituents: Vec<String> = if constituents.is_empty() {
        retrocast::sikjalpha::bundled_variants(Arc::new(Population::default()))
            .into_iter()
            .map(|(d, _)| d.method_id)
            .collect()
    } else {
        constituents.to_vec()
    };
    if constituents.len() != 3 {
        bail!("stacking takes exactly three constituents, got {}", constituents.len());
    }
    let archive = Archive::new(&plan.archive);
    let run = run_ensembles(&store, &plan, &archive, &constituents, cfg.forest)?;
    for (origin, h) in &run.untrained {
        log::info!("{STACKED_ENSEMBLE_ID} {origin}: no training window for horizon {h}");
    }
    println!(
        "mean ensemble at {} origins, stacked ensemble at {} origins ({} origin-horizon pairs lacked training data)",
        run.mean_origins.len(),
        run.stacked.len(),
        run.untrained.len()
    );
    Ok(())
}

fn score(cli: &Cli, args: &EvalArgs, summary: bool) -> Result<()> {
    let archive_dir = match (&args.plan, &args.archive) {
        (Some(p), _) => RunPlan::load(p)?.archive,
        (None, Some(a)) => a.clone(),
        (None, None) => bail!("pass --plan or --archive"),
    };
    let store = open_store(cli)?;
    let opts = EvalOptions { metrics: args.metrics.clone(), target: args.target, methods: None };
    let eval = evaluate(&Archive::new(&archive_dir), &store, &opts)?;
    eval.write_to(&args.out)?;
    if summary {
        let path = args.out.join("summary.txt");
        fs::write(&path, eval.summary()).with_context(|| format!("writing {}", path.display()))?;
        print!("{}", eval.summary());
    } else {
        println!(
            "scored {} targets ({} unresolved); tables in {}",
            eval.scored_targets,
            eval.unresolved_targets,
            args.out.display()
        );
    }
    Ok(())
}

fn sensitivity(cli: &Cli, analysis: &Analysis) -> Result<()> {
    let store = open_store(cli)?;
    match analysis {
        Analysis::Smoothing { plan, out } => {
            let plan = RunPlan::load(plan)?;
            let archive = Archive::new(&plan.archive);
            let target = *plan.targets.first().unwrap_or(&TargetType::INC_DEATH);
            let report = sensitivity_smoothing(&archive, &store, SMOOTH7_ID, SMOOTH14_ID, &plan.origins, target)?;
            fs::create_dir_all(out)?;
            fs::write(out.join("sensitivity_smoothing.csv"), report.to_csv())?;
            println!("mean |MAE7 - MAE14| over {} origins: {}", report.rows.len(), report.mean_abs_difference);
        }
        Analysis::DayOfWeek { method, start, end, horizons, out } => {
            let (_, fs_list) = forecasters(cli)?;
            let Some(f) = fs_list.iter().find(|f| &f.descriptor.method_id == method) else {
                bail!("{method} is not a bundled method");
            };
            let request = retrocast::harness::ForecastRequest {
                locations: Vec::new(),
                horizons: horizons.clone(),
                targets: vec![TargetType::INC_DEATH],
            };
            let report = sensitivity_day_of_week(&store, f, *start, *end, &request)?;
            fs::create_dir_all(out)?;
            fs::write(out.join("sensitivity_day_of_week.csv"), report.to_csv())?;
            println!("{method}: weekday median MAE spread {}", report.median_spread);
        }
    }
    Ok(())
}

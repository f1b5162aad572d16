//! Batch commands. Each one loads what it needs, fans independent cells or
//! districts out over a worker pool and writes its outputs in a fixed order.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use huffval_core::data::{
    build_visit_matrices, filter_active_customers, partition, summarize, CustomerProfile, DatasetSummary, StudyCell,
    StudyWindow,
};
use huffval_core::geo::{distance_distribution, distance_matrix, DistanceHistogram, DistancePolicy};
use huffval_core::huff::{fit_cell_traced, fit_loglinear, CellKey, CellModelInputs, Estimator, SearchBox};
use huffval_core::indicators::{compute_indicators, DistrictIndicators};
use huffval_core::mobility::{mobility_pattern_matrix, MobilityMatrix};
use huffval_core::optimize::{SwarmConfig, TracePoint};
use huffval_core::regress::{build_regression_dataset, CellScore};
use huffval_core::seed::substream_seed;
use huffval_core::stats::{mean, sample_std};
use huffval_core::Id;
use rayon::prelude::*;

use crate::config::{AttractivenessSource, RunConfig};
use crate::dataset::{Dataset, IngestReport};
use crate::formats::{self, FitRow, RegressionSummaryRow};
use crate::report;
use crate::synth::{generate_city, read_truth_attractiveness, write_truth};
use crate::{Error, Result};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const REJECTIONS_FILE: &str = "rejections.csv";
pub const FIT_RESULTS_FILE: &str = "fit_results.csv";
pub const FIT_SUMMARY_FILE: &str = "fit_summary.csv";
pub const HISTOGRAMS_FILE: &str = "distance_histograms.csv";
pub const DISTANCE_SUMMARY_FILE: &str = "distance_summary.csv";
pub const TRACE_FILE: &str = "pso_trace.csv";
pub const INDICATORS_FILE: &str = "indicators.csv";
pub const MOBILITY_FILE: &str = "mobility.csv";
pub const REGRESSION_SUMMARY_FILE: &str = "regression_summary.csv";
pub const POOLED_SCOPE: &str = "pooled";

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Input validation failed a configured threshold.
    ValidationFailed(String),
    /// Too many degenerate cells.
    DegenerateThreshold(String),
}

impl Status {
    pub fn exit_code(&self) -> i32 {
        match self {
            Status::Success => 0,
            Status::ValidationFailed(_) => 1,
            Status::DegenerateThreshold(_) => 2,
        }
    }
}

/// File name of the coefficient table for one regression scope.
pub fn regression_file(scope: &str) -> String {
    let safe: String = scope.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
    format!("regression_{safe}.csv")
}

/// Runs `f` on a pool of `workers` threads (all cores when unset).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// A dataset after the active-customer filter, with homes resolved.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub homes: BTreeMap<Id, Id>,
    pub summary: DatasetSummary,
}

/// The inclusive span of the transaction dates.
fn observed_window(dataset: &Dataset) -> Result<StudyWindow> {
    let first = dataset.transactions.iter().map(|t| t.timestamp.date()).min();
    let last = dataset.transactions.iter().map(|t| t.timestamp.date()).max();
    match (first, last) {
        (Some(a), Some(b)) => Ok(StudyWindow::new(a, b)?),
        _ => Err(Error::Invalid("no valid transactions".into())),
    }
}

pub fn prepare(mut dataset: Dataset, min_transactions: usize, window: Option<StudyWindow>) -> Result<Prepared> {
    let window = match window {
        Some(w) => w,
        None => observed_window(&dataset)?,
    };
    dataset.transactions = filter_active_customers(&dataset.transactions, min_transactions)?;
    let summary = summarize(window, &dataset.transactions)?;
    let homes = dataset.homes();
    Ok(Prepared { dataset, homes, summary })
}

pub fn load(config: &RunConfig) -> Result<(Dataset, IngestReport)> {
    Dataset::load(&config.input_paths()?, &config.ingest_options()?)
}

fn load_prepared(config: &RunConfig) -> Result<Prepared> {
    let (dataset, _) = load(config)?;
    prepare(dataset, config.min_transactions, config.study_window()?)
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub policy: DistancePolicy,
    pub swarm: SwarmConfig,
    pub search: SearchBox,
    pub estimator: Estimator,
    pub seed: u64,
    pub bin_width_km: f64,
    pub trace: bool,
    /// Categories to fit, in output order.
    pub categories: Vec<Id>,
    /// Districts to fit; empty means all.
    pub districts: Vec<Id>,
    /// Attractiveness per merchant; revenue when unset.
    pub attractiveness: Option<BTreeMap<Id, f64>>,
}

impl FitOptions {
    pub fn from_config(config: &RunConfig, seed: u64) -> Result<Self> {
        let attractiveness = match config.attractiveness {
            AttractivenessSource::Revenue => None,
            AttractivenessSource::Truth => Some(read_truth_attractiveness(&config.truth_attractiveness_path())?),
        };
        Ok(Self {
            policy: config.distance_policy()?,
            swarm: config.swarm.swarm_config()?,
            search: config.swarm.search_box(),
            estimator: config.estimator.into(),
            seed,
            bin_width_km: config.bin_width_km,
            trace: config.trace,
            categories: config.categories.iter().map(|c| Id::from(c.id.as_str())).collect(),
            districts: config.districts.iter().map(|d| Id::from(d.as_str())).collect(),
            attractiveness,
        })
    }
}

/// A study cell and its model inputs, or why inputs could not be built.
#[derive(Debug, Clone)]
pub struct CellJob {
    pub cell: StudyCell,
    pub inputs: std::result::Result<CellModelInputs, String>,
}

impl CellJob {
    pub fn key(&self) -> CellKey {
        CellKey { district_id: self.cell.district_id.clone(), category_id: self.cell.category_id.clone() }
    }
}

/// Partitions the prepared dataset and builds every cell's inputs.
pub fn build_cells(prepared: &Prepared, options: &FitOptions) -> Result<Vec<CellJob>> {
    let ds = &prepared.dataset;
    let all_districts = ds.districts.ids();
    let unknown: Vec<&Id> = options.districts.iter().filter(|d| !all_districts.contains(d)).collect();
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown districts: {unknown:?}")));
    }
    let parts = partition(&ds.transactions, &ds.merchants, &all_districts, &options.categories)?;
    for (d, c) in &parts.omitted {
        log::warn!("cell ({d}, {c}) has no merchant with transactions; skipped");
    }
    let cells: Vec<StudyCell> = parts
        .cells
        .into_iter()
        .filter(|c| options.districts.is_empty() || options.districts.contains(&c.district_id))
        .collect();
    let visits = build_visit_matrices(&cells, &ds.transactions)?;
    let customers: BTreeMap<&str, &CustomerProfile> = ds.customers.iter().map(|c| (&*c.customer_id, c)).collect();

    Ok(cells
        .into_par_iter()
        .zip(visits)
        .map(|(cell, visits)| {
            let inputs = (|| {
                let profiles: Vec<&CustomerProfile> = cell
                    .customers
                    .iter()
                    .map(|id| customers.get(&**id).copied().ok_or_else(|| format!("customer {id} has no profile")))
                    .collect::<std::result::Result<_, _>>()?;
                let distances = distance_matrix(&profiles, &cell.merchants, &options.policy);
                let attractiveness: Vec<f64> = match &options.attractiveness {
                    None => cell.merchants.iter().map(|m| m.revenue.as_f64()).collect(),
                    Some(map) => cell
                        .merchants
                        .iter()
                        .map(|m| {
                            map.get(&m.merchant_id)
                                .copied()
                                .ok_or_else(|| format!("no attractiveness for {}", m.merchant_id))
                        })
                        .collect::<std::result::Result<_, _>>()?,
                };
                let key = CellKey { district_id: cell.district_id.clone(), category_id: cell.category_id.clone() };
                CellModelInputs::new(key, attractiveness, distances, visits).map_err(|e| e.to_string())
            })();
            CellJob { cell, inputs }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub row: FitRow,
    pub histogram: Option<DistanceHistogram>,
    pub trace: Option<Vec<TracePoint>>,
}

fn cell_seed(master: u64, key: &CellKey) -> u64 {
    substream_seed(master, &format!("fit.cell.{}.{}", key.district_id, key.category_id))
}

pub fn histogram_of(inputs: &CellModelInputs, bin_width_km: f64) -> Result<DistanceHistogram> {
    let key = inputs.key();
    Ok(distance_distribution(
        key.district_id.clone(),
        key.category_id.clone(),
        inputs.distances(),
        inputs.visits(),
        bin_width_km,
    )?)
}

/// Fits every cell in parallel; results keep the order of `jobs`.
pub fn fit_cells(jobs: &[CellJob], options: &FitOptions) -> Vec<CellOutcome> {
    jobs.par_iter()
        .map(|job| {
            let key = job.key();
            let inputs = match &job.inputs {
                Ok(i) => i,
                Err(reason) => {
                    return CellOutcome {
                        row: FitRow { key, outcome: Err(reason.clone()) },
                        histogram: None,
                        trace: None,
                    };
                }
            };
            let histogram = histogram_of(inputs, options.bin_width_km).ok();
            let fitted = match options.estimator {
                Estimator::Pso => fit_cell_traced(inputs, &options.swarm, cell_seed(options.seed, &key))
                    .map(|(fit, trace)| (fit, Some(trace))),
                Estimator::LogLinear => fit_loglinear(inputs, &options.search).map(|fit| (fit, None)),
            };
            match fitted {
                Ok((fit, trace)) => CellOutcome {
                    row: FitRow { key, outcome: Ok(fit) },
                    histogram,
                    trace: trace.filter(|_| options.trace),
                },
                Err(e) => {
                    log::warn!("cell ({}, {}) is degenerate: {e}", key.district_id, key.category_id);
                    CellOutcome { row: FitRow { key, outcome: Err(e.to_string()) }, histogram, trace: None }
                }
            }
        })
        .collect()
}

/// Mean, sample standard deviation, maximum and minimum of one category's
/// fit scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CategorySummary {
    pub category_id: Id,
    pub n_cells: usize,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub min: f64,
}

/// Per-category score summaries, in `categories` order. A category without
/// any scored cell is left out.
pub fn summarize_fits(rows: &[FitRow], categories: &[Id]) -> Vec<CategorySummary> {
    categories
        .iter()
        .filter_map(|cat| {
            let scores: Vec<f64> = rows
                .iter()
                .filter(|r| r.key.category_id == *cat)
                .filter_map(|r| r.outcome.as_ref().ok().map(|f| f.score))
                .collect();
            if scores.is_empty() {
                log::warn!("category {cat} has no scored cell; omitted from the summary");
                return None;
            }
            Some(CategorySummary {
                category_id: cat.clone(),
                n_cells: scores.len(),
                mean: mean(&scores),
                std: if scores.len() > 1 { sample_std(&scores) } else { 0.0 },
                max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                min: scores.iter().copied().fold(f64::INFINITY, f64::min),
            })
        })
        .collect()
}

pub const FIT_SUMMARY_HEADER: [&str; 7] = ["category_id", "label", "n_cells", "mean", "std", "max", "min"];

fn write_fit_summary(path: &Path, config: &RunConfig, summary: &[CategorySummary]) -> Result<()> {
    let mut w = formats::create(path)?;
    w.write_record(FIT_SUMMARY_HEADER)?;
    for s in summary {
        w.write_record([
            s.category_id.to_string(),
            config.label_of(&s.category_id).to_string(),
            s.n_cells.to_string(),
            formats::fmt_f64(s.mean),
            formats::fmt_f64(s.std),
            formats::fmt_f64(s.max),
            formats::fmt_f64(s.min),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn start(config: &RunConfig) -> Result<()> {
    config.validate()?;
    config.write_effective()
}

pub fn cmd_ingest(config: &RunConfig) -> Result<Status> {
    start(config)?;
    let (dataset, report) = load(config)?;
    formats::write_rejections(&config.out.join(REJECTIONS_FILE), &report)?;
    let prepared = prepare(dataset, config.min_transactions, config.study_window()?)?;
    formats::write_summary(&config.out.join(SUMMARY_FILE), &prepared.summary)?;
    let fraction = report.rejection_fraction();
    log::info!("{} rows read, {} rejected ({:.3}%)", report.rows_read(), report.rejected(), 100.0 * fraction);
    if fraction > config.max_rejection_fraction {
        return Ok(Status::ValidationFailed(format!(
            "rejected {:.3}% of rows, above the configured {:.3}%",
            100.0 * fraction,
            100.0 * config.max_rejection_fraction
        )));
    }
    Ok(Status::Success)
}

pub fn cmd_fit(config: &RunConfig) -> Result<Status> {
    let seed = config.require_seed("fit")?;
    start(config)?;
    let options = FitOptions::from_config(config, seed)?;
    let outcomes = with_workers(config.workers, || -> Result<Vec<CellOutcome>> {
        let prepared = load_prepared(config)?;
        let jobs = build_cells(&prepared, &options)?;
        Ok(fit_cells(&jobs, &options))
    })??;

    let rows: Vec<FitRow> = outcomes.iter().map(|o| o.row.clone()).collect();
    formats::write_fit_results(&config.out.join(FIT_RESULTS_FILE), &rows)?;
    let summary = summarize_fits(&rows, &options.categories);
    write_fit_summary(&config.out.join(FIT_SUMMARY_FILE), config, &summary)?;
    let histograms: Vec<DistanceHistogram> = outcomes.iter().filter_map(|o| o.histogram.clone()).collect();
    formats::write_histograms(&config.out.join(HISTOGRAMS_FILE), &histograms)?;
    if config.trace {
        let traces: Vec<(CellKey, Vec<TracePoint>)> =
            outcomes.iter().filter_map(|o| o.trace.clone().map(|t| (o.row.key.clone(), t))).collect();
        formats::write_traces(&config.out.join(TRACE_FILE), &traces)?;
    }

    let degenerate = rows.iter().filter(|r| r.outcome.is_err()).count();
    log::info!("fitted {} cells, {degenerate} degenerate", rows.len());
    if rows.is_empty() {
        return Ok(Status::DegenerateThreshold("no cell could be formed".into()));
    }
    let fraction = degenerate as f64 / rows.len() as f64;
    if fraction > config.max_degenerate_fraction {
        return Ok(Status::DegenerateThreshold(format!(
            "{degenerate} of {} cells are degenerate, above the configured fraction {}",
            rows.len(),
            config.max_degenerate_fraction
        )));
    }
    Ok(Status::Success)
}

pub fn cmd_distances(config: &RunConfig) -> Result<Status> {
    start(config)?;
    let options = FitOptions { attractiveness: None, ..FitOptions::from_config(config, config.seed.unwrap_or(0))? };
    let histograms = with_workers(config.workers, || -> Result<Vec<DistanceHistogram>> {
        let prepared = load_prepared(config)?;
        let jobs = build_cells(&prepared, &options)?;
        Ok(jobs
            .par_iter()
            .filter_map(|j| j.inputs.as_ref().ok().and_then(|i| histogram_of(i, options.bin_width_km).ok()))
            .collect())
    })??;
    formats::write_histograms(&config.out.join(HISTOGRAMS_FILE), &histograms)?;
    let path = config.out.join(DISTANCE_SUMMARY_FILE);
    let mut w = formats::create(&path)?;
    w.write_record(["district_id", "category_id", "mean_km", "n_visits"])?;
    for h in &histograms {
        w.write_record([
            h.district_id.to_string(),
            h.category_id.to_string(),
            formats::fmt_f64(h.mean_km),
            h.total_weight().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(Status::Success)
}

/// District indicators plus pooled and per-category mobility matrices.
pub fn indicators_of(
    prepared: &Prepared,
    categories: &[Id],
) -> (Vec<DistrictIndicators>, Vec<(String, MobilityMatrix)>) {
    let ds = &prepared.dataset;
    let districts = ds.districts.ids();
    let indicators = compute_indicators(&districts, &ds.transactions, &ds.customers, &ds.merchants, &prepared.homes);
    let scopes: Vec<Option<&Id>> = std::iter::once(None).chain(categories.iter().map(Some)).collect();
    let mobility = scopes
        .par_iter()
        .map(|scope| {
            let m = mobility_pattern_matrix(
                &districts,
                &ds.transactions,
                &ds.merchants,
                &prepared.homes,
                scope.map(|c| &**c),
            );
            (scope.map_or_else(|| "all".to_string(), |c| c.to_string()), m)
        })
        .collect();
    (indicators, mobility)
}

pub fn cmd_indicators(config: &RunConfig) -> Result<Status> {
    start(config)?;
    let categories: Vec<Id> = config.categories.iter().map(|c| Id::from(c.id.as_str())).collect();
    let (indicators, mobility) = with_workers(config.workers, || -> Result<_> {
        let prepared = load_prepared(config)?;
        Ok(indicators_of(&prepared, &categories))
    })??;
    for d in indicators.iter().filter(|d| !d.is_complete()) {
        for (name, why) in &d.undefined {
            log::warn!("district {}: {name} undefined ({why})", d.district_id);
        }
    }
    formats::write_indicators(&config.out.join(INDICATORS_FILE), &indicators)?;
    formats::write_mobility(&config.out.join(MOBILITY_FILE), &mobility)?;
    Ok(Status::Success)
}

/// Pooled and per-category regressions of cell scores on district
/// indicators. Scopes with too few cells are skipped with a warning; any
/// other failure (such as a rank-deficient design) is an error.
pub fn regress(
    rows: &[FitRow],
    indicators: &[DistrictIndicators],
    categories: &[Id],
    intercept: bool,
) -> Result<Vec<RegressionSummaryRow>> {
    let scores: Vec<CellScore> = rows
        .iter()
        .map(|r| CellScore { key: r.key.clone(), score: r.outcome.as_ref().map(|f| f.score).map_err(Clone::clone) })
        .collect();
    let present: BTreeSet<&Id> = rows.iter().map(|r| &r.key.category_id).collect();
    let scopes: Vec<(String, Option<&str>)> = std::iter::once((POOLED_SCOPE.to_string(), None))
        .chain(categories.iter().filter(|c| present.contains(c)).map(|c| (c.to_string(), Some(&**c))))
        .collect();
    let mut out = Vec::new();
    for (scope, filter) in scopes {
        let fitted = build_regression_dataset(&scores, indicators, filter).and_then(|ds| {
            let report = ds.fit(&scope, intercept)?;
            Ok((report, ds.excluded.len(), ds.dropped))
        });
        match fitted {
            Ok((report, excluded_cells, dropped)) => out.push(RegressionSummaryRow { report, excluded_cells, dropped }),
            Err(e @ huffval_core::Error::InsufficientSample { .. }) => {
                log::warn!("regression scope {scope} skipped: {e}");
            }
            Err(e) => return Err(Error::Invalid(format!("regression scope {scope}: {e}"))),
        }
    }
    Ok(out)
}

pub fn cmd_regress(config: &RunConfig) -> Result<Status> {
    start(config)?;
    let rows = formats::read_fit_results(&config.out.join(FIT_RESULTS_FILE))?;
    let indicators = formats::read_indicators(&config.out.join(INDICATORS_FILE))?;
    let categories: Vec<Id> = config.categories.iter().map(|c| Id::from(c.id.as_str())).collect();
    let summary = regress(&rows, &indicators, &categories, config.intercept)?;
    if summary.is_empty() {
        return Err(Error::Invalid("no regression scope had enough cells".into()));
    }
    for s in &summary {
        formats::write_coefficients(&config.out.join(regression_file(&s.report.scope)), &s.report)?;
    }
    formats::write_regression_summary(&config.out.join(REGRESSION_SUMMARY_FILE), &summary)?;
    Ok(Status::Success)
}

pub fn cmd_synth(config: &RunConfig) -> Result<Status> {
    let seed = config.require_seed("synth")?;
    start(config)?;
    let mut city_config = config.synth.clone();
    city_config.seed = seed;
    let city = with_workers(config.workers, || generate_city(&city_config))??;
    city.dataset.write_dir(&config.out)?;
    write_truth(&config.out, &city.truth)?;
    log::info!(
        "wrote {} transactions, {} customers, {} merchants",
        city.dataset.transactions.len(),
        city.dataset.customers.len(),
        city.dataset.merchants.len()
    );
    Ok(Status::Success)
}

/// Writes the summary and renders every table whose inputs are present.
pub fn cmd_report(config: &RunConfig) -> Result<Status> {
    start(config)?;
    let prepared = load_prepared(config)?;
    formats::write_summary(&config.out.join(SUMMARY_FILE), &prepared.summary)?;
    report::write_report(config, &prepared.summary)?;
    Ok(Status::Success)
}

//! CSV schemas for everything the tool reads back or hands to plotting.
//!
//! Floats are written in their shortest round-trip form, switching to
//! exponent notation outside `[1e-4, 1e15)`, so re-reading a file gives the
//! same bits.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;
use std::str::FromStr;

use huffval_core::data::{CustomerProfile, DatasetSummary, DistrictTable, MerchantProfile, TransactionRecord};
use huffval_core::geo::DistanceHistogram;
use huffval_core::huff::{CellKey, Estimator, HuffFitResult, HuffParams};
use huffval_core::indicators::DistrictIndicators;
use huffval_core::mobility::MobilityMatrix;
use huffval_core::optimize::TracePoint;
use huffval_core::regress::RegressionReport;
use huffval_core::Id;

use crate::dataset::IngestReport;
use crate::ingest::format_timestamp;
use crate::{Error, Result};

pub type CsvWriter = csv::Writer<BufWriter<File>>;

pub fn create(path: &Path) -> Result<CsvWriter> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().from_writer(BufWriter::new(file)))
}

fn finish(mut w: CsvWriter, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn open_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(BufReader::new(file)))
}

pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Checks that `headers` is exactly `expected`, naming the first mismatch.
fn expect_headers(headers: &csv::StringRecord, expected: &[&str], file: &str) -> Result<()> {
    for (k, col) in expected.iter().enumerate() {
        if headers.get(k).map(str::trim) != Some(*col) {
            return Err(Error::MissingColumn { file: file.to_string(), column: col.to_string() });
        }
    }
    Ok(())
}

fn parse_field<T: FromStr>(row: &csv::StringRecord, k: usize, file: &str, line: usize) -> Result<T> {
    let raw = row.get(k).unwrap_or("");
    raw.trim()
        .parse()
        .map_err(|_| Error::Invalid(format!("{file} row {line}: cannot parse '{raw}' in column {}", k + 1)))
}

fn parse_opt(row: &csv::StringRecord, k: usize, file: &str, line: usize) -> Result<Option<f64>> {
    match row.get(k).map(str::trim) {
        None | Some("") => Ok(None),
        Some(_) => parse_field(row, k, file, line).map(Some),
    }
}

pub fn write_transactions(path: &Path, records: &[TransactionRecord]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(crate::ingest::TRANSACTION_COLUMNS)?;
    for r in records {
        w.write_record([
            &*r.customer_id,
            &*r.merchant_id,
            &r.amount.to_string(),
            &format_timestamp(&r.timestamp),
            &*r.category_id,
        ])?;
    }
    finish(w, path)
}

pub fn write_customers(path: &Path, customers: &[CustomerProfile]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(crate::ingest::CUSTOMER_COLUMNS)?;
    let opt = |v: &Option<Id>| v.as_deref().unwrap_or("").to_string();
    for c in customers {
        let (work_lat, work_lon) = match &c.work {
            Some(p) => (p.latitude().to_string(), p.longitude().to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            c.customer_id.to_string(),
            c.age.map(|a| a.to_string()).unwrap_or_default(),
            opt(&c.gender),
            opt(&c.marital_status),
            opt(&c.education_level),
            opt(&c.work_status),
            c.income.to_string(),
            c.home.latitude().to_string(),
            c.home.longitude().to_string(),
            work_lat,
            work_lon,
        ])?;
    }
    finish(w, path)
}

pub fn write_merchants(path: &Path, merchants: &[MerchantProfile]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(crate::ingest::MERCHANT_COLUMNS)?;
    for m in merchants {
        w.write_record([
            m.merchant_id.to_string(),
            m.category_id.to_string(),
            m.district_id.to_string(),
            m.location.latitude().to_string(),
            m.location.longitude().to_string(),
        ])?;
    }
    finish(w, path)
}

pub fn write_districts(path: &Path, table: &DistrictTable) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(crate::ingest::DISTRICT_COLUMNS)?;
    for d in table.districts() {
        let mut row = vec![d.id.to_string()];
        match d.bounds {
            Some(b) => row.extend([b.lat_min, b.lat_max, b.lon_min, b.lon_max].map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), 4)),
        }
        w.write_record(&row)?;
    }
    finish(w, path)
}

pub fn write_customer_districts(path: &Path, labels: &BTreeMap<Id, Id>) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["customer_id", "district_id"])?;
    for (c, d) in labels {
        w.write_record([&**c, &**d])?;
    }
    finish(w, path)
}

pub const REJECTIONS_HEADER: [&str; 3] = ["file", "row_number", "reason"];

pub fn write_rejections(path: &Path, report: &IngestReport) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(REJECTIONS_HEADER)?;
    for f in &report.files {
        for r in &f.rejections {
            w.write_record([f.file.as_str(), &r.row_number.to_string(), &r.reason])?;
        }
    }
    finish(w, path)
}

pub const SUMMARY_HEADER: [&str; 5] =
    ["period_start", "period_end", "n_transactions", "n_customers", "avg_transactions_per_customer"];

pub fn write_summary(path: &Path, summary: &DatasetSummary) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(SUMMARY_HEADER)?;
    w.write_record([
        summary.period.start.to_string(),
        summary.period.end.to_string(),
        summary.n_transactions.to_string(),
        summary.n_customers.to_string(),
        fmt_f64(summary.avg_transactions_per_customer),
    ])?;
    finish(w, path)
}

/// One cell of a fit run: the fit, or why the cell could not be fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRow {
    pub key: CellKey,
    pub outcome: std::result::Result<HuffFitResult, String>,
}

pub const FIT_RESULTS_HEADER: [&str; 14] = [
    "district_id",
    "category_id",
    "avg_distance",
    "alpha",
    "beta",
    "pearson_r",
    "p_value",
    "estimator",
    "alpha_at_bound",
    "beta_at_bound",
    "n_customers",
    "n_merchants",
    "degenerate",
    "reason",
];

pub fn write_fit_results(path: &Path, rows: &[FitRow]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(FIT_RESULTS_HEADER)?;
    for row in rows {
        let mut rec = vec![row.key.district_id.to_string(), row.key.category_id.to_string()];
        match &row.outcome {
            Ok(fit) => rec.extend([
                fmt_f64(fit.avg_distance_km),
                fmt_f64(fit.params.alpha),
                fmt_f64(fit.params.beta),
                fmt_f64(fit.score),
                fmt_f64(fit.p_value),
                fit.estimator.to_string(),
                fit.at_bound[0].to_string(),
                fit.at_bound[1].to_string(),
                fit.n_customers.to_string(),
                fit.n_merchants.to_string(),
                "false".to_string(),
                String::new(),
            ]),
            Err(reason) => {
                rec.extend(std::iter::repeat_n(String::new(), 10));
                rec.extend(["true".to_string(), reason.clone()]);
            }
        }
        w.write_record(&rec)?;
    }
    finish(w, path)
}

pub fn read_fit_results(path: &Path) -> Result<Vec<FitRow>> {
    let file = "fit_results.csv";
    let mut rdr = open_reader(path)?;
    expect_headers(rdr.headers()?, &FIT_RESULTS_HEADER, file)?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 1;
        let key = CellKey { district_id: Id::from(&rec[0]), category_id: Id::from(&rec[1]) };
        let degenerate: bool = parse_field(&rec, 12, file, line)?;
        let outcome = if degenerate {
            Err(rec[13].to_string())
        } else {
            let estimator = Estimator::from_str(&rec[7])
                .map_err(|_| Error::Invalid(format!("{file} row {line}: unknown estimator '{}'", &rec[7])))?;
            Ok(HuffFitResult {
                key: key.clone(),
                params: HuffParams {
                    alpha: parse_field(&rec, 3, file, line)?,
                    beta: parse_field(&rec, 4, file, line)?,
                },
                score: parse_field(&rec, 5, file, line)?,
                p_value: parse_field(&rec, 6, file, line)?,
                avg_distance_km: parse_field(&rec, 2, file, line)?,
                estimator,
                at_bound: [parse_field(&rec, 8, file, line)?, parse_field(&rec, 9, file, line)?],
                n_customers: parse_field(&rec, 10, file, line)?,
                n_merchants: parse_field(&rec, 11, file, line)?,
            })
        };
        out.push(FitRow { key, outcome });
    }
    Ok(out)
}

pub const INDICATORS_HEADER: [&str; 12] = [
    "district_id",
    "mobility_diversity",
    "gender_diversity",
    "marital_diversity",
    "education_diversity",
    "job_diversity",
    "merchant_diversity",
    "merchant_share_bias",
    "income_gini",
    "n_customers_income",
    "missing_demographics",
    "reason",
];

const REASON_SEPARATOR: &str = " | ";

pub fn write_indicators(path: &Path, rows: &[DistrictIndicators]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(INDICATORS_HEADER)?;
    for d in rows {
        let reason: Vec<String> = d.undefined.iter().map(|(name, why)| format!("{name}: {why}")).collect();
        w.write_record([
            d.district_id.to_string(),
            fmt_opt(d.mobility_diversity),
            fmt_opt(d.gender_diversity),
            fmt_opt(d.marital_diversity),
            fmt_opt(d.education_diversity),
            fmt_opt(d.job_diversity),
            fmt_opt(d.merchant_diversity),
            fmt_opt(d.merchant_share_bias),
            fmt_opt(d.income_gini),
            d.n_customers_income.to_string(),
            d.missing_demographics.to_string(),
            reason.join(REASON_SEPARATOR),
        ])?;
    }
    finish(w, path)
}

pub fn read_indicators(path: &Path) -> Result<Vec<DistrictIndicators>> {
    let file = "indicators.csv";
    let mut rdr = open_reader(path)?;
    expect_headers(rdr.headers()?, &INDICATORS_HEADER, file)?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 1;
        let mut undefined = Vec::new();
        for part in rec[11].split(REASON_SEPARATOR).filter(|p| !p.is_empty()) {
            let (name, why) = part.split_once(": ").unwrap_or((part, ""));
            let name = INDICATORS_HEADER[1..9]
                .iter()
                .find(|h| **h == name)
                .ok_or_else(|| Error::Invalid(format!("{file} row {line}: unknown indicator '{name}' in reason")))?;
            undefined.push((*name, why.to_string()));
        }
        out.push(DistrictIndicators {
            district_id: Id::from(&rec[0]),
            mobility_diversity: parse_opt(&rec, 1, file, line)?,
            gender_diversity: parse_opt(&rec, 2, file, line)?,
            marital_diversity: parse_opt(&rec, 3, file, line)?,
            education_diversity: parse_opt(&rec, 4, file, line)?,
            job_diversity: parse_opt(&rec, 5, file, line)?,
            merchant_diversity: parse_opt(&rec, 6, file, line)?,
            merchant_share_bias: parse_opt(&rec, 7, file, line)?,
            income_gini: parse_opt(&rec, 8, file, line)?,
            n_customers_income: parse_field(&rec, 9, file, line)?,
            missing_demographics: parse_field(&rec, 10, file, line)?,
            undefined,
        });
    }
    Ok(out)
}

pub const COEFFICIENTS_HEADER: [&str; 9] =
    ["variable", "beta", "std_error", "t_stat", "p_value", "ci95_lo", "ci95_hi", "stars", "significant_01"];

pub fn write_coefficients(path: &Path, report: &RegressionReport) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(COEFFICIENTS_HEADER)?;
    for c in &report.coefficients {
        w.write_record([
            c.name.clone(),
            fmt_f64(c.beta),
            fmt_f64(c.std_error),
            fmt_f64(c.t_stat),
            fmt_f64(c.p_value),
            fmt_f64(c.ci95_lo),
            fmt_f64(c.ci95_hi),
            c.stars().to_string(),
            c.significant_01.to_string(),
        ])?;
    }
    finish(w, path)
}

/// A coefficient row as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRow {
    pub variable: String,
    pub beta: f64,
    pub p_value: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    pub stars: String,
}

pub fn read_coefficients(path: &Path) -> Result<Vec<CoefficientRow>> {
    let file = "regression coefficients";
    let mut rdr = open_reader(path)?;
    expect_headers(rdr.headers()?, &COEFFICIENTS_HEADER, file)?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push(CoefficientRow {
            variable: rec[0].to_string(),
            beta: parse_field(&rec, 1, file, k + 1)?,
            p_value: parse_field(&rec, 4, file, k + 1)?,
            ci95_lo: parse_field(&rec, 5, file, k + 1)?,
            ci95_hi: parse_field(&rec, 6, file, k + 1)?,
            stars: rec[7].to_string(),
        });
    }
    Ok(out)
}

pub const REGRESSION_SUMMARY_HEADER: [&str; 8] = [
    "scope",
    "n_obs",
    "n_regressors",
    "r_squared",
    "adjusted_r_squared",
    "degenerate",
    "excluded_cells",
    "dropped_regressors",
];

/// One summary line per regression scope.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSummaryRow {
    pub report: RegressionReport,
    pub excluded_cells: usize,
    pub dropped: Vec<String>,
}

pub fn write_regression_summary(path: &Path, rows: &[RegressionSummaryRow]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(REGRESSION_SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.report.scope.clone(),
            r.report.n_obs.to_string(),
            r.report.regressors().count().to_string(),
            fmt_f64(r.report.r_squared),
            fmt_f64(r.report.adjusted_r_squared),
            r.report.degenerate.to_string(),
            r.excluded_cells.to_string(),
            r.dropped.join(";"),
        ])?;
    }
    finish(w, path)
}

pub const HISTOGRAM_HEADER: [&str; 5] = ["district_id", "category_id", "bin_lo", "bin_hi", "weight"];

pub fn write_histograms(path: &Path, histograms: &[DistanceHistogram]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(HISTOGRAM_HEADER)?;
    for h in histograms {
        for (k, count) in h.counts.iter().enumerate() {
            w.write_record([
                h.district_id.to_string(),
                h.category_id.to_string(),
                fmt_f64(h.bin_edges[k]),
                fmt_f64(h.bin_edges[k + 1]),
                count.to_string(),
            ])?;
        }
    }
    finish(w, path)
}

pub const TRACE_HEADER: [&str; 6] = ["district_id", "category_id", "iteration", "best_value", "alpha", "beta"];

pub fn write_traces(path: &Path, traces: &[(CellKey, Vec<TracePoint>)]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(TRACE_HEADER)?;
    for (key, trace) in traces {
        for t in trace {
            w.write_record([
                key.district_id.to_string(),
                key.category_id.to_string(),
                t.iteration.to_string(),
                fmt_f64(t.best_value),
                fmt_f64(t.best_point[0]),
                fmt_f64(t.best_point[1]),
            ])?;
        }
    }
    finish(w, path)
}

pub const MOBILITY_HEADER: [&str; 4] = ["scope", "origin_district", "destination_district", "share"];

/// Origin–destination shares; an undefined origin row is written with empty
/// shares.
pub fn write_mobility(path: &Path, matrices: &[(String, MobilityMatrix)]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(MOBILITY_HEADER)?;
    for (scope, m) in matrices {
        for (i, origin) in m.districts.iter().enumerate() {
            for (j, dest) in m.districts.iter().enumerate() {
                w.write_record([scope.as_str(), origin, dest, &fmt_opt(m.get(i, j))])?;
            }
        }
    }
    finish(w, path)
}

/// Reads any CSV into its header and rows of strings.
pub fn read_table<R: Read>(source: R) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::Reader::from_reader(source);
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use huffval_core::regress::ols_fit;

    fn key(d: &str, c: &str) -> CellKey {
        CellKey { district_id: Id::from(d), category_id: Id::from(c) }
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.0, 1.0, -2.5, 1.815968e-50, 0.1 + 0.2, 1e20, 123456.789, -3.2e-7, f64::MIN_POSITIVE] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(1.815968e-50), "1.815968e-50");
        assert_eq!(fmt_f64(0.957693), "0.957693");
    }

    #[test]
    fn fit_results_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fit_results.csv");
        let fit = HuffFitResult {
            key: key("4", "5411"),
            params: HuffParams { alpha: 44.092704, beta: 100.0 },
            score: 0.957693,
            p_value: 1.815968e-50,
            avg_distance_km: 8.07392,
            estimator: Estimator::Pso,
            at_bound: [false, true],
            n_customers: 512,
            n_merchants: 20,
        };
        let rows = vec![
            FitRow { key: key("4", "5411"), outcome: Ok(fit) },
            FitRow { key: key("17", "5411"), outcome: Err("fewer than 3 merchants, got 2".into()) },
        ];
        write_fit_results(&path, &rows).unwrap();
        assert_eq!(read_fit_results(&path).unwrap(), rows);
    }

    #[test]
    fn indicators_round_trip_with_undefined() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("indicators.csv");
        let rows = vec![DistrictIndicators {
            district_id: Id::from("9"),
            mobility_diversity: Some(1.25),
            gender_diversity: None,
            marital_diversity: Some(0.5),
            education_diversity: Some(0.7),
            job_diversity: Some(1.0),
            merchant_diversity: Some(1.3862943611198906),
            merchant_share_bias: Some(0.61),
            income_gini: None,
            n_customers_income: 0,
            missing_demographics: 3,
            undefined: vec![("gender_diversity", "entropy undefined".into()), ("income_gini", "no incomes".into())],
        }];
        write_indicators(&path, &rows).unwrap();
        assert_eq!(read_indicators(&path).unwrap(), rows);
    }

    #[test]
    fn coefficient_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let x = vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]];
        let y = [1.1, 1.9, 3.2, 3.9, 5.1, 6.0];
        let report = ols_fit(&x, &["x".to_string()], &y, true).unwrap();
        write_coefficients(&path, &report).unwrap();
        let back = read_coefficients(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].variable, "x");
        assert_eq!(back[1].beta, report.coefficients[1].beta);
        assert_eq!(back[1].stars, "**");
    }

    #[test]
    fn wrong_header_names_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fit_results.csv");
        std::fs::write(&path, "district_id,category\n").unwrap();
        match read_fit_results(&path) {
            Err(Error::MissingColumn { column, .. }) => assert_eq!(column, "category_id"),
            other => panic!("{other:?}"),
        }
    }
}

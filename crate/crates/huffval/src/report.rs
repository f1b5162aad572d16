//! Publication-style tables rendered from files already in the output
//! directory. Each table goes to its own CSV; `report.txt` holds all of them
//! as fixed-width text.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use huffval_core::data::DatasetSummary;
use huffval_core::Id;

use crate::config::RunConfig;
use crate::formats::{self, FitRow};
use crate::pipeline::{self, CategorySummary};
use crate::{Error, Result};

pub const REPORT_FILE: &str = "report.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(title: impl Into<String>, header: &[&str]) -> Self {
        Self { title: title.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, &w)| format!("{c:<w$}")).collect();
            padded.join("  ").trim_end().to_string()
        };
        let total = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
        let mut out = format!("{}\n{}\n{}\n", self.title, line(&self.header), "-".repeat(total));
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = formats::create(path)?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn long_date(d: chrono::NaiveDate) -> String {
    d.format("%B %-d, %Y").to_string()
}

/// Study period and volume.
pub fn dataset_table(summary: &DatasetSummary) -> Table {
    let mut t = Table::new("Dataset summary", &["statistic", "value"]);
    let p = summary.period;
    t.rows = vec![
        vec!["Period".into(), format!("{} to {}", long_date(p.start), long_date(p.end))],
        vec!["# of transactions".into(), summary.n_transactions.to_string()],
        vec!["# of customers".into(), summary.n_customers.to_string()],
        vec!["Avg. transactions / customer".into(), format!("{:.2}", summary.avg_transactions_per_customer)],
    ];
    t
}

/// Fit-score distribution per category.
pub fn score_table(config: &RunConfig, summary: &[CategorySummary]) -> Table {
    let mut t =
        Table::new("Pearson correlation per merchant category", &["Merchant category", "Mean", "Std", "Max", "Min"]);
    t.rows = summary
        .iter()
        .map(|s| {
            vec![
                config.label_of(&s.category_id).to_string(),
                format!("{:.4}", s.mean),
                format!("{:.4}", s.std),
                format!("{:.4}", s.max),
                format!("{:.4}", s.min),
            ]
        })
        .collect();
    t
}

/// Per-district parameters for one category.
pub fn appendix_table(config: &RunConfig, category: &str, rows: &[FitRow]) -> Table {
    let mut t = Table::new(
        format!("Fitted parameters: {}", config.label_of(category)),
        &["districtid", "Avg. distance", "α", "β", "Pearson r", "p-value"],
    );
    for r in rows.iter().filter(|r| &*r.key.category_id == category) {
        let row = match &r.outcome {
            Ok(f) => vec![
                r.key.district_id.to_string(),
                format!("{:.6}", f.avg_distance_km),
                format!("{:.6}", f.params.alpha),
                format!("{:.6}", f.params.beta),
                format!("{:.6}", f.score),
                format!("{:.6e}", f.p_value),
            ],
            Err(_) => {
                let mut v = vec![r.key.district_id.to_string()];
                v.extend(std::iter::repeat_n("n/a".to_string(), 5));
                v
            }
        };
        t.rows.push(row);
    }
    t
}

struct ScopeFit {
    scope: String,
    adjusted_r_squared: String,
}

fn read_regression_summary(path: &Path) -> Result<Vec<ScopeFit>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (header, rows) = formats::read_table(BufReader::new(file))?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn { file: pipeline::REGRESSION_SUMMARY_FILE.into(), column: name.into() })
    };
    let (scope, adj) = (col("scope")?, col("adjusted_r_squared")?);
    Ok(rows.into_iter().map(|r| ScopeFit { scope: r[scope].clone(), adjusted_r_squared: r[adj].clone() }).collect())
}

/// Adjusted R² of every regression scope.
fn fit_quality_table(config: &RunConfig, fits: &[ScopeFit]) -> Result<Table> {
    let mut t = Table::new("Regression fit", &["Merchant category", "Adjusted R² score"]);
    for f in fits {
        let value: f64 = f
            .adjusted_r_squared
            .parse()
            .map_err(|_| Error::Invalid(format!("bad adjusted R² '{}' for scope {}", f.adjusted_r_squared, f.scope)))?;
        let label = if f.scope == pipeline::POOLED_SCOPE { "All categories" } else { config.label_of(&f.scope) };
        t.rows.push(vec![label.to_string(), format!("{value:.3}")]);
    }
    Ok(t)
}

/// Indicator coefficients for one scope, intercept left out.
fn coefficient_table(config: &RunConfig, scope: &str, path: &Path) -> Result<Table> {
    let label = if scope == pipeline::POOLED_SCOPE { "all categories" } else { config.label_of(scope) };
    let mut t = Table::new(
        format!("Indicator coefficients: {label}"),
        &["Indicator", "β coefficient", "Confidence interval (95%)"],
    );
    for c in formats::read_coefficients(path)?.into_iter().filter(|c| c.variable != huffval_core::regress::INTERCEPT) {
        t.rows.push(vec![
            c.variable,
            format!("{:.4}{}", c.beta, c.stars),
            format!("[{:.4}, {:.4}]", c.ci95_lo, c.ci95_hi),
        ]);
    }
    Ok(t)
}

/// Renders every table whose source files exist in `config.out`.
pub fn write_report(config: &RunConfig, summary: &DatasetSummary) -> Result<()> {
    let out = &config.out;
    let mut tables: Vec<(String, Table)> = vec![("table1.csv".into(), dataset_table(summary))];

    let fit_path = out.join(pipeline::FIT_RESULTS_FILE);
    if fit_path.exists() {
        let rows = formats::read_fit_results(&fit_path)?;
        let categories: Vec<Id> = config.categories.iter().map(|c| Id::from(c.id.as_str())).collect();
        tables.push(("table3.csv".into(), score_table(config, &pipeline::summarize_fits(&rows, &categories))));
        for c in &categories {
            if rows.iter().any(|r| r.key.category_id == *c) {
                tables.push((format!("appendix_{c}.csv"), appendix_table(config, c, &rows)));
            }
        }
    } else {
        log::warn!("{} not found; score tables skipped", fit_path.display());
    }

    let reg_path = out.join(pipeline::REGRESSION_SUMMARY_FILE);
    if reg_path.exists() {
        let fits = read_regression_summary(&reg_path)?;
        tables.push(("table4.csv".into(), fit_quality_table(config, &fits)?));
        for f in &fits {
            let path = out.join(pipeline::regression_file(&f.scope));
            let name = pipeline::regression_file(&f.scope).replacen("regression_", "table5_", 1);
            tables.push((name, coefficient_table(config, &f.scope, &path)?));
        }
    } else {
        log::warn!("{} not found; regression tables skipped", reg_path.display());
    }

    let mut text = String::new();
    for (name, table) in &tables {
        table.write_csv(&out.join(name))?;
        let _ = writeln!(text, "{}", table.to_text());
    }
    let path = out.join(REPORT_FILE);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use huffval_core::data::StudyWindow;

    #[test]
    fn dataset_table_layout() {
        let d = |y, m, dd| chrono::NaiveDate::from_ymd_opt(y, m, dd).unwrap();
        let s = DatasetSummary::new(StudyWindow::new(d(2014, 7, 1), d(2015, 6, 30)).unwrap(), 300, 40).unwrap();
        let t = dataset_table(&s);
        assert_eq!(t.rows[0][1], "July 1, 2014 to June 30, 2015");
        assert_eq!(t.rows[3][1], "7.50");
        let text = t.to_text();
        assert!(text.lines().nth(1).unwrap().starts_with("statistic"));
    }

    #[test]
    fn text_columns_align() {
        let mut t = Table::new("x", &["a", "bbb"]);
        t.rows.push(vec!["long value".into(), "1".into()]);
        let text = t.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1].find("bbb"), lines[3].find('1'));
    }
}

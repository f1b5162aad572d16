//! Standardized OLS of per-cell model performance on district indicators.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::huff::CellKey;
use crate::indicators::DistrictIndicators;
use crate::linalg::least_squares;
pub use crate::stats::t_distribution_sf;
use crate::stats::{mean, sample_std, t_quantile, t_two_sided_p};
use crate::{Error, Id, Result};

/// Regressor labels, in table order.
pub const INDICATOR_NAMES: [&str; 8] = [
    "Mobility diversity",
    "Merchant diversity",
    "Merchant monopoly",
    "Gender diversity",
    "Marital status diversity",
    "Education level diversity",
    "Job status diversity",
    "Income inequality",
];

pub const INTERCEPT: &str = "Intercept";

fn indicator_values(ind: &DistrictIndicators) -> [Option<f64>; 8] {
    [
        ind.mobility_diversity,
        ind.merchant_diversity,
        ind.merchant_share_bias,
        ind.gender_diversity,
        ind.marital_diversity,
        ind.education_diversity,
        ind.job_diversity,
        ind.income_gini,
    ]
}

/// `(x − mean) / s` with the sample standard deviation.
pub fn zscore(column: &[f64]) -> Result<Vec<f64>> {
    if column.len() < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: column.len() });
    }
    let m = mean(column);
    let s = sample_std(column);
    if !(s.is_finite() && s > 0.0) || s <= 1e-14 * m.abs() {
        return Err(Error::ZeroVariance);
    }
    Ok(column.iter().map(|x| (x - m) / s).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientEstimate {
    pub name: String,
    pub beta: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    pub significant_05: bool,
    pub significant_01: bool,
}

impl CoefficientEstimate {
    /// `**` for p < 0.01, `*` for p < 0.05.
    pub fn stars(&self) -> &'static str {
        significance_stars(self.p_value)
    }
}

pub fn significance_stars(p_value: f64) -> &'static str {
    if p_value < 0.01 {
        "**"
    } else if p_value < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionReport {
    /// Category id, or `pooled`.
    pub scope: String,
    /// Intercept first when fitted, then regressors in input order.
    pub coefficients: Vec<CoefficientEstimate>,
    pub r_squared: f64,
    pub adjusted_r_squared: f64,
    pub n_obs: usize,
    pub dof_residual: usize,
    /// Set when the response has no variation; inference is then meaningless
    /// and every p-value is reported as 1.
    pub degenerate: bool,
}

impl RegressionReport {
    pub fn coefficient(&self, name: &str) -> Option<&CoefficientEstimate> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    /// Regressors only (intercept skipped).
    pub fn regressors(&self) -> impl Iterator<Item = &CoefficientEstimate> {
        self.coefficients.iter().filter(|c| c.name != INTERCEPT)
    }
}

/// Ordinary least squares with coefficient inference, solved through a
/// Householder QR of the design.
pub fn ols_fit(columns: &[Vec<f64>], names: &[String], y: &[f64], intercept: bool) -> Result<RegressionReport> {
    if columns.len() != names.len() {
        return Err(Error::InvalidInput("one name per column required".into()));
    }
    let n = y.len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidInput("column length differs from response length".into()));
    }
    let p = columns.len();
    let k = p + usize::from(intercept);
    if n <= k {
        return Err(Error::InsufficientSample { needed: k + 1, got: n });
    }
    let mut design: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut labels: Vec<String> = Vec::with_capacity(k);
    if intercept {
        design.push(vec![1.0; n]);
        labels.push(INTERCEPT.to_string());
    }
    design.extend(columns.iter().cloned());
    labels.extend(names.iter().cloned());

    let ls = least_squares(&design, y)
        .map_err(|cols| Error::SingularDesign(cols.into_iter().map(|c| labels[c].clone()).collect()))?;

    let dof = n - k;
    let rss: f64 = ls.residuals.iter().map(|r| r * r).sum();
    let y_bar = mean(y);
    let tss: f64 =
        if intercept { y.iter().map(|v| (v - y_bar) * (v - y_bar)).sum() } else { y.iter().map(|v| v * v).sum() };
    let degenerate = tss <= 0.0 || tss <= 1e-24 * y.iter().map(|v| v * v).sum::<f64>();
    let r_squared = if degenerate { 0.0 } else { 1.0 - rss / tss };
    let adjusted_r_squared = 1.0 - (1.0 - r_squared) * (n as f64 - 1.0) / dof as f64;
    let sigma2 = rss / dof as f64;
    let t_crit = t_quantile(0.975, dof as f64);

    let coefficients = labels
        .into_iter()
        .zip(ls.coef.iter().zip(&ls.xtx_inv_diag))
        .map(|(name, (&beta, &d))| {
            let std_error = libm::sqrt(sigma2 * d);
            let (t_stat, p_value) = if degenerate || std_error == 0.0 {
                (0.0, 1.0)
            } else {
                let t = beta / std_error;
                (t, t_two_sided_p(t, dof as f64))
            };
            CoefficientEstimate {
                name,
                beta,
                std_error,
                t_stat,
                p_value,
                ci95_lo: beta - t_crit * std_error,
                ci95_hi: beta + t_crit * std_error,
                significant_05: p_value < 0.05,
                significant_01: p_value < 0.01,
            }
        })
        .collect();

    Ok(RegressionReport {
        scope: String::new(),
        coefficients,
        r_squared,
        adjusted_r_squared,
        n_obs: n,
        dof_residual: dof,
        degenerate,
    })
}

/// One cell's performance as handed to the regression: a score, or the
/// reason the cell was degenerate.
#[derive(Debug, Clone, PartialEq)]
pub struct CellScore {
    pub key: CellKey,
    pub score: core::result::Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    pub rows: Vec<CellKey>,
    /// Standardized response.
    pub y: Vec<f64>,
    /// Surviving regressor names and their standardized columns.
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    /// Cells left out, with the reason.
    pub excluded: Vec<(CellKey, String)>,
    /// Regressors dropped for having no variance.
    pub dropped: Vec<String>,
}

impl RegressionDataset {
    pub fn fit(&self, scope: &str, intercept: bool) -> Result<RegressionReport> {
        let mut report = ols_fit(&self.columns, &self.names, &self.y, intercept)?;
        report.scope = scope.to_string();
        Ok(report)
    }
}

/// Joins cell scores to their district indicators and standardizes every
/// column. With `category_filter` only that category's cells are used.
pub fn build_regression_dataset(
    scores: &[CellScore],
    indicators: &[DistrictIndicators],
    category_filter: Option<&str>,
) -> Result<RegressionDataset> {
    let by_district: BTreeMap<&Id, &DistrictIndicators> = indicators.iter().map(|i| (&i.district_id, i)).collect();
    let orphans: BTreeSet<String> = scores
        .iter()
        .filter(|s| !by_district.contains_key(&s.key.district_id))
        .map(|s| format!("({}, {})", s.key.district_id, s.key.category_id))
        .collect();
    if !orphans.is_empty() {
        return Err(Error::Integrity(format!(
            "cells without district indicators: {}",
            crate::data::join_ids(orphans.iter().map(String::as_str))
        )));
    }

    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut raw: Vec<Vec<f64>> = vec![Vec::new(); INDICATOR_NAMES.len()];
    let mut excluded = Vec::new();
    for s in scores {
        if category_filter.is_some_and(|c| c != &*s.key.category_id) {
            continue;
        }
        let score = match &s.score {
            Ok(v) if v.is_finite() => *v,
            Ok(v) => {
                excluded.push((s.key.clone(), format!("non-finite score {v}")));
                continue;
            }
            Err(reason) => {
                excluded.push((s.key.clone(), reason.clone()));
                continue;
            }
        };
        let values = indicator_values(by_district[&s.key.district_id]);
        if values.iter().any(Option::is_none) {
            excluded.push((s.key.clone(), "district indicators incomplete".to_string()));
            continue;
        }
        for (col, v) in raw.iter_mut().zip(values) {
            col.push(v.expect("checked above"));
        }
        rows.push(s.key.clone());
        y.push(score);
    }
    for (key, reason) in &excluded {
        log::warn!("cell ({}, {}) excluded from regression: {reason}", key.district_id, key.category_id);
    }

    let y = zscore(&y)?;
    let mut names = Vec::new();
    let mut columns = Vec::new();
    let mut dropped = Vec::new();
    for (name, col) in INDICATOR_NAMES.iter().zip(raw) {
        match zscore(&col) {
            Ok(z) => {
                names.push(name.to_string());
                columns.push(z);
            }
            Err(_) => {
                log::warn!("regressor '{name}' has no variance; dropped");
                dropped.push(name.to_string());
            }
        }
    }
    Ok(RegressionDataset { rows, y, names, columns, excluded, dropped })
}

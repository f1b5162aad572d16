//! The Huff gravity model: utilities `A^α / D^β`, normalized choice
//! probabilities, the per-cell correlation objective and its estimators.
//!
//! Probabilities are computed in log space (`α ln A − β ln D`, shifted by the
//! row maximum) so that exponents near the top of the search box do not
//! overflow. The shift cancels in the normalization.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::data::VisitMatrix;
use crate::linalg::least_squares;
use crate::optimize::{maximize, SwarmConfig, TracePoint};
pub use crate::stats::{pearson, Correlation};
use crate::{Error, Id, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuffParams {
    pub alpha: f64,
    pub beta: f64,
}

impl HuffParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidInput(alloc::format!(
                "huff parameters must be finite and non-negative, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }
}

/// Rectangular range searched for `(α, β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBox {
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
}

impl Default for SearchBox {
    fn default() -> Self {
        Self { alpha: (0.0, 100.0), beta: (0.0, 100.0) }
    }
}

impl SearchBox {
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        vec![self.alpha, self.beta]
    }

    pub fn clamp(&self, alpha: f64, beta: f64) -> HuffParams {
        HuffParams { alpha: alpha.clamp(self.alpha.0, self.alpha.1), beta: beta.clamp(self.beta.0, self.beta.1) }
    }

    pub fn on_edge(&self, p: &HuffParams) -> [bool; 2] {
        [p.alpha <= self.alpha.0 || p.alpha >= self.alpha.1, p.beta <= self.beta.0 || p.beta >= self.beta.1]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub district_id: Id,
    pub category_id: Id,
}

/// Everything the model needs for one cell.
#[derive(Debug, Clone)]
pub struct CellModelInputs {
    key: CellKey,
    attractiveness: Vec<f64>,
    distances: Vec<f64>,
    visits: VisitMatrix,
    ln_attr: Vec<f64>,
    ln_dist: Vec<f64>,
    row_totals: Vec<f64>,
    observed: Vec<f64>,
}

impl CellModelInputs {
    /// `distances` is row-major customers × merchants, in km.
    pub fn new(key: CellKey, attractiveness: Vec<f64>, distances: Vec<f64>, visits: VisitMatrix) -> Result<Self> {
        let (n_c, n_m) = (visits.n_customers(), visits.n_merchants());
        if attractiveness.len() != n_m || distances.len() != n_c * n_m {
            return Err(Error::InvalidInput(alloc::format!(
                "cell ({}, {}): {} attractiveness values and {} distances for a {n_c}x{n_m} visit matrix",
                key.district_id,
                key.category_id,
                attractiveness.len(),
                distances.len()
            )));
        }
        if attractiveness.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidInput("attractiveness values must be positive and finite".to_string()));
        }
        if distances.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::InvalidInput("distances must be positive and finite".to_string()));
        }
        let ln_attr = attractiveness.iter().map(|&a| libm::log(a)).collect();
        let ln_dist = distances.iter().map(|&d| libm::log(d)).collect();
        let row_totals = visits.row_sums().into_iter().map(|n| n as f64).collect();
        let observed = visits.column_sums().into_iter().map(|n| n as f64).collect();
        Ok(Self { key, attractiveness, distances, visits, ln_attr, ln_dist, row_totals, observed })
    }

    pub fn key(&self) -> &CellKey {
        &self.key
    }

    pub fn attractiveness(&self) -> &[f64] {
        &self.attractiveness
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn visits(&self) -> &VisitMatrix {
        &self.visits
    }

    pub fn n_customers(&self) -> usize {
        self.visits.n_customers()
    }

    pub fn n_merchants(&self) -> usize {
        self.visits.n_merchants()
    }

    /// Per-merchant observed visit totals.
    pub fn observed_distribution(&self) -> &[f64] {
        &self.observed
    }

    /// Mean customer–merchant distance over all visits.
    pub fn mean_visit_distance(&self) -> f64 {
        let n_m = self.n_merchants();
        let mut weighted = 0.0;
        for i in 0..self.n_customers() {
            for (j, &v) in self.visits.row(i).iter().enumerate() {
                weighted += f64::from(v) * self.distances[i * n_m + j];
            }
        }
        weighted / self.visits.total() as f64
    }

    /// Writes row `i` of P into `out` and returns it.
    fn probabilities_into<'a>(&self, params: &HuffParams, i: usize, out: &'a mut [f64]) -> Result<&'a [f64]> {
        let n_m = self.n_merchants();
        let row = &self.ln_dist[i * n_m..(i + 1) * n_m];
        let mut max = f64::NEG_INFINITY;
        for ((o, &la), &ld) in out.iter_mut().zip(&self.ln_attr).zip(row) {
            *o = params.alpha * la - params.beta * ld;
            max = max.max(*o);
        }
        if !max.is_finite() {
            return Err(Error::DegenerateCell);
        }
        let mut sum = 0.0;
        for o in out.iter_mut() {
            *o = libm::exp(*o - max);
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
        Ok(out)
    }
}

/// Huff utility `A^α / D^β`, with `x^0 = 1`.
pub fn utility(attractiveness: f64, distance: f64, params: &HuffParams) -> Result<f64> {
    if !(attractiveness > 0.0 && distance > 0.0) {
        return Err(Error::InvalidInput(alloc::format!(
            "utility needs positive attractiveness and distance, got ({attractiveness}, {distance})"
        )));
    }
    let a = if params.alpha == 0.0 { 1.0 } else { libm::pow(attractiveness, params.alpha) };
    let d = if params.beta == 0.0 { 1.0 } else { libm::pow(distance, params.beta) };
    Ok(a / d)
}

/// Choice probabilities of one customer over every merchant in the cell.
pub fn choice_probabilities(inputs: &CellModelInputs, params: &HuffParams, customer_row: usize) -> Result<Vec<f64>> {
    if customer_row >= inputs.n_customers() {
        return Err(Error::InvalidInput(alloc::format!("customer row {customer_row} out of range")));
    }
    let mut out = vec![0.0; inputs.n_merchants()];
    inputs.probabilities_into(params, customer_row, &mut out)?;
    Ok(out)
}

/// Full customers × merchants probability matrix, row-major.
pub fn probability_matrix(inputs: &CellModelInputs, params: &HuffParams) -> Result<Vec<f64>> {
    let n_m = inputs.n_merchants();
    let mut out = vec![0.0; inputs.n_customers() * n_m];
    for (i, row) in out.chunks_exact_mut(n_m.max(1)).enumerate() {
        inputs.probabilities_into(params, i, row)?;
    }
    Ok(out)
}

/// Expected per-merchant visits `E_j = Σ_i N_i · P_ij`, where `N_i` is the
/// customer's in-cell visit total.
pub fn expected_visit_distribution(inputs: &CellModelInputs, params: &HuffParams) -> Result<Vec<f64>> {
    let n_m = inputs.n_merchants();
    let mut expected = vec![0.0; n_m];
    let mut row = vec![0.0; n_m];
    for (i, &n_i) in inputs.row_totals.iter().enumerate() {
        let p = inputs.probabilities_into(params, i, &mut row)?;
        for (e, &p) in expected.iter_mut().zip(p) {
            *e += n_i * p;
        }
    }
    Ok(expected)
}

/// Correlation between expected and observed per-merchant visit totals.
pub fn cell_correlation(inputs: &CellModelInputs, params: &HuffParams) -> Result<Correlation> {
    check_scorable(inputs)?;
    let expected = expected_visit_distribution(inputs, params)?;
    pearson(&expected, &inputs.observed)
}

/// The fitting objective: Pearson r of expected vs observed visit totals.
pub fn cell_score(inputs: &CellModelInputs, params: &HuffParams) -> Result<f64> {
    cell_correlation(inputs, params).map(|c| c.r)
}

/// A cell can be scored only with ≥ 3 merchants and a non-constant observed
/// distribution.
fn check_scorable(inputs: &CellModelInputs) -> Result<()> {
    let n = inputs.n_merchants();
    if n < 3 {
        return Err(Error::InsufficientSample { needed: 3, got: n });
    }
    let first = inputs.observed[0];
    if inputs.observed.iter().all(|&o| o == first) {
        return Err(Error::DegenerateCorrelation);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Pso,
    LogLinear,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Pso => "pso",
            Estimator::LogLinear => "loglinear",
        })
    }
}

impl core::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pso" => Ok(Estimator::Pso),
            "loglinear" => Ok(Estimator::LogLinear),
            other => Err(Error::InvalidInput(alloc::format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HuffFitResult {
    pub key: CellKey,
    pub params: HuffParams,
    pub score: f64,
    pub p_value: f64,
    pub avg_distance_km: f64,
    pub estimator: Estimator,
    /// Whether α and β landed on the edge of the search box.
    pub at_bound: [bool; 2],
    pub n_customers: usize,
    pub n_merchants: usize,
}

fn finish(
    inputs: &CellModelInputs,
    params: HuffParams,
    estimator: Estimator,
    search: &SearchBox,
) -> Result<HuffFitResult> {
    let corr = cell_correlation(inputs, &params)?;
    Ok(HuffFitResult {
        key: inputs.key.clone(),
        params,
        score: corr.r,
        p_value: corr.p_value,
        avg_distance_km: inputs.mean_visit_distance(),
        estimator,
        at_bound: search.on_edge(&params),
        n_customers: inputs.n_customers(),
        n_merchants: inputs.n_merchants(),
    })
}

/// Fits `(α, β)` by maximizing [`cell_score`] with the particle swarm.
/// `config.bounds` must be two-dimensional (α then β).
///
/// The swarm moves in `u = ln(1 + x)` coordinates over the image of the box,
/// so small exponents get as much of the initial swarm as large ones; the
/// score surface is a narrow ridge near the origin and flat far from it.
pub fn fit_cell(inputs: &CellModelInputs, config: &SwarmConfig, seed: u64) -> Result<HuffFitResult> {
    fit_cell_traced(inputs, config, seed).map(|(fit, _)| fit)
}

fn to_search(x: f64) -> f64 {
    libm::log1p(x)
}

fn from_search(u: f64, (lo, hi): (f64, f64)) -> f64 {
    libm::expm1(u).clamp(lo, hi)
}

/// [`fit_cell`] plus the swarm's per-iteration incumbent, in `(α, β)`.
pub fn fit_cell_traced(
    inputs: &CellModelInputs,
    config: &SwarmConfig,
    seed: u64,
) -> Result<(HuffFitResult, Vec<TracePoint>)> {
    check_scorable(inputs)?;
    if config.bounds.len() != 2 {
        return Err(Error::InvalidInput("huff fit needs a two-dimensional search box".to_string()));
    }
    let search = SearchBox { alpha: config.bounds[0], beta: config.bounds[1] };
    if config.bounds.iter().any(|&(lo, _)| lo < 0.0) {
        return Err(Error::InvalidInput("huff exponents cannot be negative".to_string()));
    }
    let to_params =
        |u: &[f64]| HuffParams { alpha: from_search(u[0], search.alpha), beta: from_search(u[1], search.beta) };
    let mut transformed = config.clone();
    for b in &mut transformed.bounds {
        *b = (to_search(b.0), to_search(b.1));
    }
    let objective = |u: &[f64]| cell_score(inputs, &to_params(u)).unwrap_or(f64::NEG_INFINITY);
    let mut best = maximize(objective, &transformed, seed)?;
    let params = to_params(&best.best_point);
    for t in &mut best.trace {
        let p = to_params(&t.best_point);
        t.best_point = vec![p.alpha, p.beta];
    }
    Ok((finish(inputs, params, Estimator::Pso, &search)?, best.trace))
}

/// Unclamped log-linear estimates from observed shares.
///
/// Centering within each customer removes the normalizing denominator:
/// `ln(S_ij / G_i) = α (ln A_j − L_i) − β (ln D_ij − M_i)`, where `G_i`, `L_i`
/// and `M_i` are the customer's geometric means (logs of). Returns `(α, β)`.
pub fn loglinear_estimate(attractiveness: &[f64], distances: &[f64], shares: &[f64]) -> Result<(f64, f64)> {
    let n_m = attractiveness.len();
    if n_m == 0 || !distances.len().is_multiple_of(n_m) || shares.len() != distances.len() {
        return Err(Error::InvalidInput("log-linear: inconsistent dimensions".to_string()));
    }
    if shares.iter().any(|s| s.is_nan() || *s <= 0.0) {
        return Err(Error::InvalidInput("log-linear: shares must be strictly positive".to_string()));
    }
    let ln_a: Vec<f64> = attractiveness.iter().map(|&a| libm::log(a)).collect();
    let l_mean = ln_a.iter().sum::<f64>() / n_m as f64;
    let rows = distances.len() / n_m;
    let mut y = Vec::with_capacity(shares.len());
    let mut x_attr = Vec::with_capacity(shares.len());
    let mut x_dist = Vec::with_capacity(shares.len());
    for i in 0..rows {
        let s = &shares[i * n_m..(i + 1) * n_m];
        let d = &distances[i * n_m..(i + 1) * n_m];
        let ln_s: Vec<f64> = s.iter().map(|&v| libm::log(v)).collect();
        let ln_d: Vec<f64> = d.iter().map(|&v| libm::log(v)).collect();
        let g = ln_s.iter().sum::<f64>() / n_m as f64;
        let m = ln_d.iter().sum::<f64>() / n_m as f64;
        for j in 0..n_m {
            y.push(ln_s[j] - g);
            x_attr.push(ln_a[j] - l_mean);
            x_dist.push(ln_d[j] - m);
        }
    }
    let fit = least_squares(&[x_attr, x_dist], &y).map_err(|cols| {
        let names = ["log_attractiveness", "log_distance"];
        Error::SingularDesign(cols.into_iter().map(|k| names[k].to_string()).collect())
    })?;
    Ok((fit.coef[0], -fit.coef[1]))
}

/// Log-linear least-squares baseline. Zero shares are replaced by `0.5 / N_i`
/// before taking logs; estimates are clamped into the search box.
pub fn fit_loglinear(inputs: &CellModelInputs, search: &SearchBox) -> Result<HuffFitResult> {
    check_scorable(inputs)?;
    let n_m = inputs.n_merchants();
    let mut shares = Vec::with_capacity(inputs.n_customers() * n_m);
    for (i, &n_i) in inputs.row_totals.iter().enumerate() {
        for &v in inputs.visits.row(i) {
            let v = if v == 0 { 0.5 } else { f64::from(v) };
            shares.push(v / n_i);
        }
    }
    let (alpha, beta) = loglinear_estimate(&inputs.attractiveness, &inputs.distances, &shares)?;
    finish(inputs, search.clamp(alpha, beta), Estimator::LogLinear, search)
}

/// Mean absolute difference between two equally shaped probability matrices.
pub fn mean_absolute_deviation(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> CellKey {
        CellKey { district_id: "d".into(), category_id: "c".into() }
    }

    fn inputs(attr: Vec<f64>, dist: Vec<f64>, counts: Vec<u32>) -> CellModelInputs {
        let n_m = attr.len();
        let v = VisitMatrix::from_rows(counts.len() / n_m, n_m, counts).unwrap();
        CellModelInputs::new(key(), attr, dist, v).unwrap()
    }

    #[test]
    fn utility_cases() {
        let p = |a, b| HuffParams::new(a, b).unwrap();
        assert_eq!(utility(1.0, 1.0, &p(3.7, 1.2)).unwrap(), 1.0);
        assert_eq!(utility(123.0, 0.05, &p(0.0, 0.0)).unwrap(), 1.0);
        assert_eq!(utility(4.0, 2.0, &p(1.0, 2.0)).unwrap(), 1.0);
        assert!(utility(0.0, 1.0, &p(1.0, 1.0)).is_err());
        assert!(utility(1.0, -1.0, &p(1.0, 1.0)).is_err());
        assert!(HuffParams::new(-0.1, 0.0).is_err());
    }

    #[test]
    fn probabilities_simple_cases() {
        let one = inputs(vec![5.0], vec![2.0], vec![3]);
        assert_eq!(choice_probabilities(&one, &HuffParams { alpha: 1.0, beta: 1.0 }, 0).unwrap(), vec![1.0]);
        let two = inputs(vec![5.0, 5.0], vec![2.0, 2.0], vec![1, 1]);
        assert_eq!(choice_probabilities(&two, &HuffParams { alpha: 2.0, beta: 3.0 }, 0).unwrap(), vec![0.5, 0.5]);
        let four = inputs(vec![1.0, 9.0, 3.0, 7.0], vec![1.0, 2.0, 3.0, 4.0], vec![1, 0, 0, 1]);
        for p in choice_probabilities(&four, &HuffParams { alpha: 0.0, beta: 0.0 }, 0).unwrap() {
            assert!((p - 0.25).abs() < 1e-15);
        }
        assert!(choice_probabilities(&four, &HuffParams { alpha: 0.0, beta: 0.0 }, 1).is_err());
    }

    #[test]
    fn extreme_exponents_do_not_overflow() {
        let cell = inputs(vec![1e7, 2e7, 5e6], vec![0.05, 30.0, 1.0], vec![1, 1, 1]);
        let p = choice_probabilities(&cell, &HuffParams { alpha: 100.0, beta: 100.0 }, 0).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expected_visits_simple_cases() {
        let cell = inputs(vec![2.0, 2.0], vec![1.0, 1.0], vec![4, 2]);
        assert_eq!(expected_visit_distribution(&cell, &HuffParams { alpha: 1.0, beta: 1.0 }).unwrap(), vec![3.0, 3.0]);
        let uneven = inputs(vec![1.0, 5.0, 2.0], vec![1.0, 2.0, 3.0, 3.0, 2.0, 1.0], vec![5, 0, 1, 0, 0, 3]);
        let e = expected_visit_distribution(&uneven, &HuffParams { alpha: 0.0, beta: 0.0 }).unwrap();
        for v in e {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn proportional_observed_scores_one() {
        // Single customer: expected ∝ A when β = 0; observed counts ∝ A.
        let cell = inputs(vec![1.0, 2.0, 3.0, 4.0], vec![1.0; 4], vec![10, 20, 30, 40]);
        let s = cell_score(&cell, &HuffParams { alpha: 1.0, beta: 0.0 }).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn score_preconditions() {
        let small = inputs(vec![1.0, 2.0], vec![1.0, 1.0], vec![1, 2]);
        assert_eq!(
            cell_score(&small, &HuffParams { alpha: 1.0, beta: 0.0 }),
            Err(Error::InsufficientSample { needed: 3, got: 2 })
        );
        let flat = inputs(vec![1.0, 2.0, 3.0], vec![1.0; 3], vec![2, 2, 2]);
        assert_eq!(cell_score(&flat, &HuffParams { alpha: 1.0, beta: 0.0 }), Err(Error::DegenerateCorrelation));
        let single = inputs(vec![1.0], vec![1.0], vec![4]);
        let cfg = SwarmConfig::with_bounds(SearchBox::default().bounds());
        assert!(matches!(fit_cell(&single, &cfg, 0), Err(Error::InsufficientSample { .. })));
    }

    #[test]
    fn loglinear_singular_when_attractiveness_constant() {
        let err = loglinear_estimate(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0], &[0.2, 0.3, 0.5]).unwrap_err();
        assert_eq!(err, Error::SingularDesign(vec!["log_attractiveness".to_string()]));
    }

    #[test]
    fn inputs_validation() {
        let v = VisitMatrix::from_rows(1, 2, vec![1, 1]).unwrap();
        assert!(CellModelInputs::new(key(), vec![1.0], vec![1.0, 1.0], v.clone()).is_err());
        assert!(CellModelInputs::new(key(), vec![1.0, 0.0], vec![1.0, 1.0], v.clone()).is_err());
        assert!(CellModelInputs::new(key(), vec![1.0, 1.0], vec![1.0, 0.0], v).is_err());
    }
}

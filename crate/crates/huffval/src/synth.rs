//! Synthetic cities whose customers choose merchants by a known Huff model.
//!
//! Generation runs in two seeded phases per district. The first places
//! customers and merchants and draws every merchant's attractiveness. The
//! second draws each resident's visits: a destination district (home with a
//! per-district probability, otherwise a nearby district), then a merchant
//! of that district and category from the Huff choice distribution under the
//! category's true parameters. Each phase uses its own named substream per
//! district, so districts generate in parallel and adding a district leaves
//! the others untouched.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDate};
use huffval_core::data::{
    BoundingBox, CustomerProfile, District, DistrictTable, GeoPoint, MerchantProfile, Money, TransactionRecord,
};
use huffval_core::geo::{customer_merchant_distance, haversine_km, DistancePolicy};
use huffval_core::huff::{CellKey, HuffParams};
use huffval_core::seed::substream_rng;
use huffval_core::Id;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::{Error, Result};

/// Inclusive `[lo, hi]` range; a fixed value has `lo == hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Copy> Range<T> {
    pub const fn fixed(v: T) -> Self {
        Self { lo: v, hi: v }
    }
}

impl Range<usize> {
    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        rng.random_range(self.lo..=self.hi)
    }
}

impl Range<f64> {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub id: String,
    pub label: String,
    pub alpha: f64,
    pub beta: f64,
}

/// How per-visit transaction amounts relate to a merchant's attractiveness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TicketModel {
    /// Mean ticket of merchant j is `A_j / E[visits_j]`, so realized revenue
    /// equals the drawn attractiveness up to sampling noise.
    #[default]
    Calibrated,
    /// Every merchant in a category shares one ticket distribution; revenue
    /// then tracks visit counts.
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogNormalSpec {
    /// Median of the distribution (in currency units for money values).
    pub median: f64,
    pub sigma: f64,
}

impl LogNormalSpec {
    fn distribution(&self) -> Result<LogNormal<f64>> {
        LogNormal::new(self.median.ln(), self.sigma)
            .map_err(|e| Error::Config(format!("log-normal ({}, {}): {e}", self.median, self.sigma)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncomeSpec {
    pub median: f64,
    /// Log-scale spread, drawn once per district.
    pub sigma: Range<f64>,
    /// Probability that a customer reports zero income.
    pub zero_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub values: Vec<String>,
    /// Gamma shape used to draw each district's category probabilities;
    /// small values give districts with very different mixes.
    pub concentration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicSpec {
    pub gender: Vocabulary,
    pub marital_status: Vocabulary,
    pub education_level: Vocabulary,
    pub work_status: Vocabulary,
    /// Probability that any single attribute is left blank.
    pub missing_rate: f64,
}

impl Default for DemographicSpec {
    fn default() -> Self {
        let vocab = |values: &[&str], concentration| Vocabulary {
            values: values.iter().map(|s| s.to_string()).collect(),
            concentration,
        };
        Self {
            gender: vocab(&["F", "M"], 3.0),
            marital_status: vocab(&["single", "married", "divorced", "widowed"], 1.5),
            education_level: vocab(&["primary", "secondary", "high_school", "university", "graduate"], 1.5),
            work_status: vocab(&["private", "public", "self_employed", "unemployed", "retired", "student"], 1.5),
            missing_rate: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CityConfig {
    /// Set from the run's master seed.
    #[serde(skip)]
    pub seed: u64,
    pub n_districts: usize,
    /// South-west corner of the district grid, `[lat, lon]`.
    pub origin: [f64; 2],
    /// Side of each square district cell, in degrees.
    pub district_size_deg: f64,
    pub customers_per_district: usize,
    /// Merchants per (district, category).
    pub merchants_per_category: Range<usize>,
    /// Visits per customer per category.
    pub visits_per_customer: Range<usize>,
    /// Share of a resident's visits made in the home district, drawn per district.
    pub home_share: Range<f64>,
    /// Length scale of the preference for nearby districts on away visits.
    pub away_decay_km: f64,
    pub work_probability: f64,
    pub attractiveness: LogNormalSpec,
    pub ticket: LogNormalSpec,
    pub ticket_model: TicketModel,
    pub income: IncomeSpec,
    pub age: Range<usize>,
    pub demographics: DemographicSpec,
    /// Probability that a visit ignores the Huff model and picks a merchant
    /// of the destination cell uniformly.
    pub noise_rate: f64,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub floor_km: f64,
    pub categories: Vec<CategorySpec>,
    /// Record per-cell true probability matrices.
    pub record_probabilities: bool,
}

impl Default for CityConfig {
    fn default() -> Self {
        let cat = |id: &str, label: &str, alpha, beta| CategorySpec { id: id.into(), label: label.into(), alpha, beta };
        Self {
            seed: 0,
            n_districts: 17,
            origin: [41.0, 29.0],
            district_size_deg: 0.05,
            customers_per_district: 500,
            merchants_per_category: Range::fixed(20),
            visits_per_customer: Range::fixed(50),
            home_share: Range { lo: 0.8, hi: 0.95 },
            away_decay_km: 5.0,
            work_probability: 0.4,
            attractiveness: LogNormalSpec { median: 50_000.0, sigma: 0.6 },
            ticket: LogNormalSpec { median: 40.0, sigma: 0.5 },
            ticket_model: TicketModel::Calibrated,
            income: IncomeSpec { median: 3_000.0, sigma: Range { lo: 0.3, hi: 0.9 }, zero_mass: 0.03 },
            age: Range { lo: 18, hi: 80 },
            demographics: DemographicSpec::default(),
            noise_rate: 0.0,
            window_start: NaiveDate::from_ymd_opt(2014, 7, 1).expect("valid date"),
            window_end: NaiveDate::from_ymd_opt(2015, 6, 30).expect("valid date"),
            floor_km: DistancePolicy::DEFAULT_FLOOR_KM,
            categories: vec![
                cat("5411", "Grocery", 1.0, 2.0),
                cat("5541", "GS", 0.5, 1.0),
                cat("5691", "Clothing", 2.0, 0.5),
                cat("5812", "Restaurant", 0.0, 0.0),
            ],
            record_probabilities: true,
        }
    }
}

impl CityConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("city config: {msg}")));
        if self.n_districts == 0 || self.customers_per_district == 0 {
            return bad("n_districts and customers_per_district must be at least 1".into());
        }
        for (name, r) in [
            ("merchants_per_category", self.merchants_per_category),
            ("visits_per_customer", self.visits_per_customer),
            ("age", self.age),
        ] {
            if r.lo > r.hi || (r.lo == 0 && name != "age") {
                return bad(format!("{name} needs 1 <= lo <= hi, got [{}, {}]", r.lo, r.hi));
            }
        }
        if !(0.0 <= self.home_share.lo && self.home_share.lo <= self.home_share.hi && self.home_share.hi <= 1.0) {
            return bad("home_share must satisfy 0 <= lo <= hi <= 1".into());
        }
        for (name, p) in [
            ("work_probability", self.work_probability),
            ("noise_rate", self.noise_rate),
            ("income.zero_mass", self.income.zero_mass),
            ("demographics.missing_rate", self.demographics.missing_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if ![self.district_size_deg, self.away_decay_km, self.floor_km].iter().all(|&v| v > 0.0) {
            return bad("district_size_deg, away_decay_km and floor_km must be positive".into());
        }
        let lat_top = self.origin[0] + self.district_size_deg * self.grid_rows() as f64;
        let lon_right = self.origin[1] + self.district_size_deg * self.grid_columns() as f64;
        if GeoPoint::new(self.origin[0], self.origin[1]).is_err() || GeoPoint::new(lat_top, lon_right).is_err() {
            return bad("district grid leaves the valid coordinate range".into());
        }
        if self.income.sigma.lo > self.income.sigma.hi
            || self.income.sigma.lo < 0.0
            || self.income.median.is_nan()
            || self.income.median <= 0.0
        {
            return bad("income needs median > 0 and 0 <= sigma.lo <= sigma.hi".into());
        }
        for spec in [&self.attractiveness, &self.ticket] {
            if !(spec.median > 0.0 && spec.sigma >= 0.0) {
                return bad(format!(
                    "log-normal needs median > 0 and sigma >= 0, got ({}, {})",
                    spec.median, spec.sigma
                ));
            }
        }
        for v in [
            &self.demographics.gender,
            &self.demographics.marital_status,
            &self.demographics.education_level,
            &self.demographics.work_status,
        ] {
            if v.values.is_empty() || v.concentration.is_nan() || v.concentration <= 0.0 {
                return bad("every vocabulary needs values and a positive concentration".into());
            }
        }
        if self.window_end < self.window_start {
            return bad("window_end precedes window_start".into());
        }
        if self.categories.is_empty() {
            return bad("at least one category is required".into());
        }
        let mut ids = BTreeSet::new();
        for c in &self.categories {
            if !ids.insert(&c.id) {
                return bad(format!("duplicate category {}", c.id));
            }
            if !((0.0..=100.0).contains(&c.alpha) && (0.0..=100.0).contains(&c.beta)) {
                return bad(format!("true parameters of {} must lie in [0, 100]^2", c.id));
            }
        }
        Ok(())
    }

    fn grid_columns(&self) -> usize {
        (self.n_districts as f64).sqrt().ceil() as usize
    }

    fn grid_rows(&self) -> usize {
        self.n_districts.div_ceil(self.grid_columns())
    }

    pub fn district_ids(&self) -> Vec<Id> {
        (1..=self.n_districts).map(|k| Id::from(k.to_string())).collect()
    }

    /// Row-major grid of square cells starting at `origin`.
    pub fn district_table(&self) -> DistrictTable {
        let cols = self.grid_columns();
        let s = self.district_size_deg;
        let districts = self
            .district_ids()
            .into_iter()
            .enumerate()
            .map(|(k, id)| {
                let (row, col) = (k / cols, k % cols);
                let lat_min = self.origin[0] + s * row as f64;
                let lon_min = self.origin[1] + s * col as f64;
                District {
                    id,
                    bounds: Some(BoundingBox { lat_min, lat_max: lat_min + s, lon_min, lon_max: lon_min + s }),
                }
            })
            .collect();
        DistrictTable::new(districts).expect("generated ids are unique")
    }
}

/// One cell's generating probabilities for every customer who visited it.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTruth {
    pub key: CellKey,
    /// Every merchant of the cell, ordered by id.
    pub merchants: Vec<Id>,
    /// Customers with at least one visit, ordered by id.
    pub customers: Vec<Id>,
    /// Row-major customers × merchants.
    pub probabilities: Vec<f64>,
}

impl CellTruth {
    pub fn row(&self, customer: usize) -> &[f64] {
        let m = self.merchants.len();
        &self.probabilities[customer * m..(customer + 1) * m]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Truth {
    /// Category id → (label, true parameters), in configured order.
    pub params: Vec<(Id, String, HuffParams)>,
    /// Merchant id → attractiveness used when sampling.
    pub attractiveness: BTreeMap<Id, f64>,
    pub cells: Vec<CellTruth>,
}

impl Truth {
    pub fn cell(&self, district: &str, category: &str) -> Option<&CellTruth> {
        self.cells.iter().find(|c| &*c.key.district_id == district && &*c.key.category_id == category)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct City {
    pub dataset: Dataset,
    pub truth: Truth,
}

struct Layout {
    customers: Vec<CustomerProfile>,
    /// Per category (configured order), this district's merchants.
    merchants: Vec<Vec<MerchantProfile>>,
    attractiveness: Vec<Vec<f64>>,
    home_share: f64,
}

/// Category weights drawn as normalized gamma variates.
fn draw_mix(rng: &mut ChaCha8Rng, v: &Vocabulary) -> Result<WeightedIndex<f64>> {
    let g = Gamma::new(v.concentration, 1.0).map_err(|e| Error::Config(format!("vocabulary concentration: {e}")))?;
    let weights: Vec<f64> = (0..v.values.len()).map(|_| g.sample(rng).max(1e-12)).collect();
    WeightedIndex::new(weights).map_err(|e| Error::Config(format!("vocabulary weights: {e}")))
}

fn uniform_point(rng: &mut ChaCha8Rng, b: &BoundingBox) -> GeoPoint {
    let lat = b.lat_min + rng.random::<f64>() * (b.lat_max - b.lat_min);
    let lon = b.lon_min + rng.random::<f64>() * (b.lon_max - b.lon_min);
    GeoPoint::new(lat, lon).expect("inside a validated grid")
}

fn layout_district(config: &CityConfig, k: usize, boxes: &[BoundingBox], ids: &[Id]) -> Result<Layout> {
    let district = &ids[k];
    let mut rng = substream_rng(config.seed, &format!("synth.district.{district}"));
    let demo = &config.demographics;
    let mixes = [
        (&demo.gender, draw_mix(&mut rng, &demo.gender)?),
        (&demo.marital_status, draw_mix(&mut rng, &demo.marital_status)?),
        (&demo.education_level, draw_mix(&mut rng, &demo.education_level)?),
        (&demo.work_status, draw_mix(&mut rng, &demo.work_status)?),
    ];
    let income_sigma = config.income.sigma.sample(&mut rng);
    let income = LogNormalSpec { median: config.income.median, sigma: income_sigma }.distribution()?;
    let home_share = if ids.len() == 1 { 1.0 } else { config.home_share.sample(&mut rng) };

    let attraction = config.attractiveness.distribution()?;
    let mut merchants = Vec::with_capacity(config.categories.len());
    let mut attractiveness = Vec::with_capacity(config.categories.len());
    for cat in &config.categories {
        let n = config.merchants_per_category.sample(&mut rng);
        let width = config.merchants_per_category.hi.to_string().len();
        let mut ms = Vec::with_capacity(n);
        let mut attrs = Vec::with_capacity(n);
        for j in 0..n {
            ms.push(MerchantProfile {
                merchant_id: Id::from(format!("M{district}-{}-{j:0width$}", cat.id)),
                category_id: Id::from(cat.id.as_str()),
                district_id: district.clone(),
                location: uniform_point(&mut rng, &boxes[k]),
                revenue: Money::ZERO,
            });
            attrs.push(attraction.sample(&mut rng));
        }
        merchants.push(ms);
        attractiveness.push(attrs);
    }
    let width = config.customers_per_district.to_string().len();
    let mut customers = Vec::with_capacity(config.customers_per_district);
    for n in 0..config.customers_per_district {
        let home = uniform_point(&mut rng, &boxes[k]);
        let work = (rng.random::<f64>() < config.work_probability).then(|| {
            let b = rng.random_range(0..boxes.len());
            uniform_point(&mut rng, &boxes[b])
        });
        let mut attr = mixes.iter().map(|(vocab, mix)| {
            let value = Id::from(vocab.values[mix.sample(&mut rng)].as_str());
            (rng.random::<f64>() >= demo.missing_rate).then_some(value)
        });
        let (gender, marital_status, education_level, work_status) =
            (attr.next().flatten(), attr.next().flatten(), attr.next().flatten(), attr.next().flatten());
        let income = if rng.random::<f64>() < config.income.zero_mass {
            Money::ZERO
        } else {
            Money::from_minor((income.sample(&mut rng) * 100.0).round() as i64)
        };
        customers.push(CustomerProfile {
            customer_id: Id::from(format!("C{district}-{n:0width$}")),
            age: Some(config.age.sample(&mut rng) as u32),
            gender,
            marital_status,
            education_level,
            work_status,
            income,
            home,
            work,
        });
    }

    Ok(Layout { customers, merchants, attractiveness, home_share })
}

/// Choice probabilities over one cell: Huff in log space mixed with the
/// uniform noise rate.
fn choice_row(
    customer: &CustomerProfile,
    merchants: &[MerchantProfile],
    attractiveness: &[f64],
    params: &HuffParams,
    policy: &DistancePolicy,
    noise_rate: f64,
) -> Vec<f64> {
    let logits: Vec<f64> = merchants
        .iter()
        .zip(attractiveness)
        .map(|(m, &a)| {
            let d = customer_merchant_distance(customer, m, policy);
            params.alpha * a.ln() - params.beta * d.ln()
        })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let uniform = 1.0 / merchants.len() as f64;
    weights.iter().map(|w| (1.0 - noise_rate) * w / total + noise_rate * uniform).collect()
}

/// Where a resident of district `home` goes: home with `home_share`,
/// otherwise another district weighted by `exp(−distance / decay)` between
/// district centres.
fn destination_weights(home: usize, home_share: f64, centres: &[GeoPoint], decay_km: f64) -> Vec<f64> {
    let away: Vec<f64> = centres
        .iter()
        .enumerate()
        .map(|(k, c)| if k == home { 0.0 } else { (-haversine_km(&centres[home], c) / decay_km).exp() })
        .collect();
    let away_total: f64 = away.iter().sum();
    away.iter()
        .enumerate()
        .map(|(k, &w)| {
            if k == home {
                home_share
            } else if away_total > 0.0 {
                (1.0 - home_share) * w / away_total
            } else {
                0.0
            }
        })
        .collect()
}

pub fn generate_city(config: &CityConfig) -> Result<City> {
    config.validate()?;
    let table = config.district_table();
    let ids = table.ids();
    let boxes: Vec<BoundingBox> = table.districts().iter().map(|d| d.bounds.expect("grid has bounds")).collect();
    let centres: Vec<GeoPoint> = boxes
        .iter()
        .map(|b| GeoPoint::new((b.lat_min + b.lat_max) / 2.0, (b.lon_min + b.lon_max) / 2.0).expect("valid grid"))
        .collect();
    let policy = DistancePolicy::new(Default::default(), config.floor_km)?;
    let params: Vec<HuffParams> =
        config.categories.iter().map(|c| HuffParams::new(c.alpha, c.beta)).collect::<std::result::Result<_, _>>()?;

    let layouts: Vec<Layout> =
        (0..ids.len()).into_par_iter().map(|k| layout_district(config, k, &boxes, &ids)).collect::<Result<_>>()?;

    let n_cat = config.categories.len();
    let dest_weights: Vec<Vec<f64>> =
        (0..ids.len()).map(|k| destination_weights(k, layouts[k].home_share, &centres, config.away_decay_km)).collect();

    // Expected visits per merchant, needed to calibrate ticket sizes. Summed
    // per origin district, then across districts in order.
    let expected_visits = |origin: usize| -> Vec<Vec<Vec<f64>>> {
        let mut acc: Vec<Vec<Vec<f64>>> =
            layouts.iter().map(|l| l.merchants.iter().map(|ms| vec![0.0; ms.len()]).collect()).collect();
        let mean_visits = (config.visits_per_customer.lo + config.visits_per_customer.hi) as f64 / 2.0;
        for c in &layouts[origin].customers {
            for (dest, &w) in dest_weights[origin].iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for cat in 0..n_cat {
                    let ms = &layouts[dest].merchants[cat];
                    let row =
                        choice_row(c, ms, &layouts[dest].attractiveness[cat], &params[cat], &policy, config.noise_rate);
                    for (a, p) in acc[dest][cat].iter_mut().zip(row) {
                        *a += mean_visits * w * p;
                    }
                }
            }
        }
        acc
    };
    let mean_ticket: Vec<Vec<Vec<f64>>> = match config.ticket_model {
        TicketModel::Flat => layouts
            .iter()
            .map(|l| l.merchants.iter().map(|ms| vec![config.ticket.median; ms.len()]).collect())
            .collect(),
        TicketModel::Calibrated => {
            let partial: Vec<Vec<Vec<Vec<f64>>>> = (0..ids.len()).into_par_iter().map(expected_visits).collect();
            let mut total = partial[0].clone();
            for p in &partial[1..] {
                for (t, v) in total.iter_mut().flatten().flatten().zip(p.iter().flatten().flatten()) {
                    *t += v;
                }
            }
            total
                .iter()
                .zip(&layouts)
                .map(|(per_cat, l)| {
                    per_cat
                        .iter()
                        .zip(&l.attractiveness)
                        .map(|(e, a)| e.iter().zip(a).map(|(&e, &a)| if e > 0.0 { a / e } else { a }).collect())
                        .collect()
                })
                .collect()
        }
    };

    let window_start = config.window_start.and_hms_opt(0, 0, 0).expect("midnight");
    let window_secs = (config.window_end - config.window_start).num_seconds() + 86_399;
    // Unit-mean multiplicative noise on ticket sizes.
    let ticket_noise = LogNormal::new(-config.ticket.sigma * config.ticket.sigma / 2.0, config.ticket.sigma)
        .map_err(|e| Error::Config(format!("ticket sigma: {e}")))?;

    let visits: Vec<Vec<TransactionRecord>> = (0..ids.len())
        .into_par_iter()
        .map(|origin| {
            let mut rng = substream_rng(config.seed, &format!("synth.visits.{}", ids[origin]));
            let dest_index = WeightedIndex::new(&dest_weights[origin]).expect("home weight is positive or away exists");
            let mut records = Vec::new();
            for c in &layouts[origin].customers {
                for cat in 0..n_cat {
                    let mut rows: BTreeMap<usize, WeightedIndex<f64>> = BTreeMap::new();
                    for _ in 0..config.visits_per_customer.sample(&mut rng) {
                        let dest = dest_index.sample(&mut rng);
                        let l = &layouts[dest];
                        let choice = rows.entry(dest).or_insert_with(|| {
                            let row = choice_row(
                                c,
                                &l.merchants[cat],
                                &l.attractiveness[cat],
                                &params[cat],
                                &policy,
                                config.noise_rate,
                            );
                            WeightedIndex::new(row).expect("probabilities are finite and positive")
                        });
                        let j = choice.sample(&mut rng);
                        let amount = mean_ticket[dest][cat][j] * ticket_noise.sample(&mut rng);
                        let offset = rng.random_range(0..=window_secs);
                        records.push(TransactionRecord {
                            customer_id: c.customer_id.clone(),
                            merchant_id: l.merchants[cat][j].merchant_id.clone(),
                            amount: Money::from_minor(((amount * 100.0).round() as i64).max(1)),
                            timestamp: window_start + Duration::seconds(offset),
                            category_id: l.merchants[cat][j].category_id.clone(),
                        });
                    }
                }
            }
            records
        })
        .collect();
    let transactions: Vec<TransactionRecord> = visits.into_iter().flatten().collect();

    let mut truth = Truth {
        params: config
            .categories
            .iter()
            .zip(&params)
            .map(|(c, p)| (Id::from(c.id.as_str()), c.label.clone(), *p))
            .collect(),
        ..Truth::default()
    };
    for l in &layouts {
        for (ms, attrs) in l.merchants.iter().zip(&l.attractiveness) {
            for (m, &a) in ms.iter().zip(attrs) {
                truth.attractiveness.insert(m.merchant_id.clone(), a);
            }
        }
    }
    if config.record_probabilities {
        truth.cells = truth_cells(config, &layouts, &ids, &params, &policy, &transactions);
    }

    let customer_districts = layouts
        .iter()
        .zip(&ids)
        .flat_map(|(l, d)| l.customers.iter().map(move |c| (c.customer_id.clone(), d.clone())))
        .collect();
    let (customers, merchants): (Vec<_>, Vec<_>) =
        layouts.into_iter().map(|l| (l.customers, l.merchants.into_iter().flatten().collect::<Vec<_>>())).unzip();
    let dataset = Dataset {
        transactions,
        customers: customers.into_iter().flatten().collect(),
        merchants: merchants.into_iter().flatten().collect(),
        districts: table,
        customer_districts,
    };
    Ok(City { dataset, truth })
}

fn truth_cells(
    config: &CityConfig,
    layouts: &[Layout],
    ids: &[Id],
    params: &[HuffParams],
    policy: &DistancePolicy,
    transactions: &[TransactionRecord],
) -> Vec<CellTruth> {
    let mut merchant_cell: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (k, l) in layouts.iter().enumerate() {
        for (cat, ms) in l.merchants.iter().enumerate() {
            for m in ms {
                merchant_cell.insert(&m.merchant_id, (k, cat));
            }
        }
    }
    let customers: BTreeMap<&str, &CustomerProfile> =
        layouts.iter().flat_map(|l| l.customers.iter().map(|c| (&*c.customer_id, c))).collect();
    let mut visitors: BTreeMap<(usize, usize), BTreeSet<&str>> = BTreeMap::new();
    for t in transactions {
        let cell = merchant_cell[&*t.merchant_id];
        visitors.entry(cell).or_default().insert(&t.customer_id);
    }
    let keys: Vec<(usize, usize)> =
        (0..layouts.len()).flat_map(|k| (0..config.categories.len()).map(move |c| (k, c))).collect();
    keys.into_par_iter()
        .filter_map(|(k, cat)| {
            let who = visitors.get(&(k, cat))?;
            let l = &layouts[k];
            let mut order: Vec<usize> = (0..l.merchants[cat].len()).collect();
            order.sort_by(|&a, &b| l.merchants[cat][a].merchant_id.cmp(&l.merchants[cat][b].merchant_id));
            let mut probabilities = Vec::with_capacity(who.len() * order.len());
            for c in who {
                let row = choice_row(
                    customers[c],
                    &l.merchants[cat],
                    &l.attractiveness[cat],
                    &params[cat],
                    policy,
                    config.noise_rate,
                );
                probabilities.extend(order.iter().map(|&j| row[j]));
            }
            Some(CellTruth {
                key: CellKey { district_id: ids[k].clone(), category_id: Id::from(config.categories[cat].id.as_str()) },
                merchants: order.iter().map(|&j| l.merchants[cat][j].merchant_id.clone()).collect(),
                customers: who.iter().map(|c| Id::from(*c)).collect(),
                probabilities,
            })
        })
        .collect()
}

pub const TRUTH_PARAMS_FILE: &str = "truth_params.csv";
pub const TRUTH_ATTRACTIVENESS_FILE: &str = "truth_attractiveness.csv";
pub const TRUTH_PROBABILITIES_FILE: &str = "truth_probabilities.csv";

pub fn write_truth(dir: &std::path::Path, truth: &Truth) -> Result<()> {
    use crate::formats::{create, fmt_f64};
    let path = dir.join(TRUTH_PARAMS_FILE);
    let mut w = create(&path)?;
    w.write_record(["category_id", "label", "alpha", "beta"])?;
    for (id, label, p) in &truth.params {
        w.write_record([id.to_string(), label.clone(), fmt_f64(p.alpha), fmt_f64(p.beta)])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(TRUTH_ATTRACTIVENESS_FILE);
    let mut w = create(&path)?;
    w.write_record(["merchant_id", "attractiveness"])?;
    for (id, a) in &truth.attractiveness {
        w.write_record([id.to_string(), fmt_f64(*a)])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    if !truth.cells.is_empty() {
        let path = dir.join(TRUTH_PROBABILITIES_FILE);
        let mut w = create(&path)?;
        w.write_record(["district_id", "category_id", "customer_id", "merchant_id", "probability"])?;
        for cell in &truth.cells {
            for (i, c) in cell.customers.iter().enumerate() {
                for (m, p) in cell.merchants.iter().zip(cell.row(i)) {
                    w.write_record([&*cell.key.district_id, &*cell.key.category_id, c, m, &fmt_f64(*p)])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Merchant id → attractiveness, as written by [`write_truth`].
pub fn read_truth_attractiveness(path: &std::path::Path) -> Result<BTreeMap<Id, f64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let (header, rows) = crate::formats::read_table(std::io::BufReader::new(file))?;
    if header != ["merchant_id", "attractiveness"] {
        return Err(Error::MissingColumn { file: TRUTH_ATTRACTIVENESS_FILE.into(), column: "attractiveness".into() });
    }
    rows.into_iter()
        .map(|r| {
            let a: f64 = r[1].parse().map_err(|_| Error::Invalid(format!("bad attractiveness '{}'", r[1])))?;
            Ok((Id::from(r[0].as_str()), a))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CityConfig {
        CityConfig {
            seed: 5,
            n_districts: 3,
            customers_per_district: 30,
            merchants_per_category: Range { lo: 3, hi: 5 },
            visits_per_customer: Range { lo: 5, hi: 8 },
            ..CityConfig::default()
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_city(&small()).unwrap();
        let b = generate_city(&small()).unwrap();
        assert_eq!(a, b);
        let mut other = small();
        other.seed = 6;
        assert_ne!(a.dataset.transactions, generate_city(&other).unwrap().dataset.transactions);
    }

    #[test]
    fn adding_a_district_keeps_existing_layouts() {
        let a = generate_city(&small()).unwrap();
        let mut bigger = small();
        bigger.n_districts = 4;
        let b = generate_city(&bigger).unwrap();
        let first =
            |c: &City| c.dataset.merchants.iter().filter(|m| &*m.district_id == "1").cloned().collect::<Vec<_>>();
        // Both grids have two columns, so district 1 keeps its box.
        assert_eq!(first(&a), first(&b));
    }

    #[test]
    fn counts_and_ranges() {
        let cfg = small();
        let city = generate_city(&cfg).unwrap();
        assert_eq!(city.dataset.customers.len(), 90);
        let per_customer = city.dataset.transactions.len() as f64 / 90.0;
        assert!((4.0 * 5.0..=4.0 * 8.0).contains(&per_customer));
        let window = huffval_core::data::StudyWindow::new(cfg.window_start, cfg.window_end).unwrap();
        assert!(city.dataset.transactions.iter().all(|t| window.contains(&t.timestamp) && t.amount.is_positive()));
        for c in &city.truth.cells {
            for i in 0..c.customers.len() {
                let s: f64 = c.row(i).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_merchant_takes_every_visit() {
        let cfg = CityConfig { merchants_per_category: Range::fixed(1), ..small() };
        let city = generate_city(&cfg).unwrap();
        for c in &city.truth.cells {
            assert!(c.probabilities.iter().all(|&p| p == 1.0));
        }
    }

    #[test]
    fn rejects_infeasible_configs() {
        let mut cfg = small();
        cfg.merchants_per_category = Range::fixed(0);
        assert!(matches!(generate_city(&cfg), Err(Error::Config(_))));
        let mut cfg = small();
        cfg.categories[0].beta = 101.0;
        assert!(generate_city(&cfg).is_err());
        let mut cfg = small();
        cfg.home_share = Range { lo: 0.9, hi: 0.5 };
        assert!(cfg.validate().is_err());
    }
}

//! District-level diversity and inequality features. Entropies are in nats.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::data::{CustomerProfile, DemographicAttribute, MerchantProfile, Money, TransactionRecord};
use crate::{Error, Id, Result};

/// Number of largest merchants in the share-bias numerator.
pub const TOP_MERCHANTS: usize = 5;

/// `−Σ p ln p` over categories with positive counts.
pub fn shannon_entropy(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::UndefinedEntropy);
    }
    let total = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * libm::log(p)
        })
        .sum();
    // A single category gives exactly zero; avoid returning -0.0.
    Ok(h.max(0.0))
}

fn entropy_of<K>(tally: &BTreeMap<K, u64>) -> Result<f64> {
    shannon_entropy(&tally.values().copied().collect::<Vec<_>>())
}

/// Entropy of the destination districts of all transactions made by
/// residents of `district_id`.
pub fn mobility_diversity(
    district_id: &str,
    records: &[TransactionRecord],
    merchants: &[MerchantProfile],
    homes: &BTreeMap<Id, Id>,
) -> Result<f64> {
    let merchant_district: BTreeMap<&str, &Id> = merchants.iter().map(|m| (&*m.merchant_id, &m.district_id)).collect();
    let mut tally: BTreeMap<&Id, u64> = BTreeMap::new();
    for r in records {
        if homes.get(&r.customer_id).is_some_and(|h| &**h == district_id) {
            if let Some(dest) = merchant_district.get(&*r.merchant_id) {
                *tally.entry(dest).or_default() += 1;
            }
        }
    }
    entropy_of(&tally)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemographicEntropy {
    pub entropy: f64,
    /// Residents with the attribute missing; they are left out of the tally.
    pub missing: usize,
}

/// Entropy of one categorical attribute among residents of `district_id`.
pub fn demographic_diversity(
    district_id: &str,
    customers: &[CustomerProfile],
    homes: &BTreeMap<Id, Id>,
    attribute: DemographicAttribute,
) -> Result<DemographicEntropy> {
    let mut tally: BTreeMap<&Id, u64> = BTreeMap::new();
    let mut missing = 0;
    for c in customers {
        if !homes.get(&c.customer_id).is_some_and(|h| &**h == district_id) {
            continue;
        }
        match c.attribute(attribute) {
            Some(v) => *tally.entry(v).or_default() += 1,
            None => missing += 1,
        }
    }
    Ok(DemographicEntropy { entropy: entropy_of(&tally)?, missing })
}

/// Entropy of the merchant-category mix of a district.
pub fn merchant_diversity(district_id: &str, merchants: &[MerchantProfile]) -> Result<f64> {
    let mut tally: BTreeMap<&Id, u64> = BTreeMap::new();
    for m in merchants.iter().filter(|m| &*m.district_id == district_id) {
        *tally.entry(&m.category_id).or_default() += 1;
    }
    entropy_of(&tally)
}

/// Share of the district's transaction volume taken by its five largest
/// merchants by revenue.
pub fn merchant_share_bias(
    district_id: &str,
    records: &[TransactionRecord],
    merchants: &[MerchantProfile],
) -> Result<f64> {
    let in_district: BTreeMap<&str, ()> =
        merchants.iter().filter(|m| &*m.district_id == district_id).map(|m| (&*m.merchant_id, ())).collect();
    let mut revenue: BTreeMap<&Id, i64> = BTreeMap::new();
    for r in records.iter().filter(|r| in_district.contains_key(&*r.merchant_id)) {
        *revenue.entry(&r.merchant_id).or_default() += r.amount.minor();
    }
    share_of_top(revenue.into_iter().map(|(id, v)| (id.clone(), Money::from_minor(v))).collect())
}

fn share_of_top(mut revenues: Vec<(Id, Money)>) -> Result<f64> {
    let total: i64 = revenues.iter().map(|(_, m)| m.minor()).sum();
    if revenues.is_empty() || total <= 0 {
        return Err(Error::UndefinedShareBias);
    }
    revenues.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let top: i64 = revenues.iter().take(TOP_MERCHANTS).map(|(_, m)| m.minor()).sum();
    Ok(top as f64 / total as f64)
}

/// Gini coefficient `ΣΣ|x_i − x_j| / (2 n² x̄)` over the positive values;
/// zeros are filtered out first.
pub fn gini(incomes: &[f64]) -> Result<f64> {
    let mut xs: Vec<f64> = incomes.iter().copied().filter(|&x| x > 0.0).collect();
    let n = xs.len();
    if n < 2 {
        return Err(Error::UndefinedGini(n));
    }
    xs.sort_by(f64::total_cmp);
    // With ascending order, ΣΣ|x_i − x_j| = 2 Σ_i (2i − n + 1) x_i.
    let weighted: f64 = xs.iter().enumerate().map(|(i, &x)| (2.0 * i as f64 - n as f64 + 1.0) * x).sum();
    let sum: f64 = xs.iter().sum();
    Ok((weighted / (n as f64 * sum)).max(0.0))
}

/// The district feature row fed to the regression. `None` marks an undefined
/// indicator; the reason is listed in `undefined`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistrictIndicators {
    pub district_id: Id,
    pub mobility_diversity: Option<f64>,
    pub gender_diversity: Option<f64>,
    pub marital_diversity: Option<f64>,
    pub education_diversity: Option<f64>,
    pub job_diversity: Option<f64>,
    pub merchant_diversity: Option<f64>,
    pub merchant_share_bias: Option<f64>,
    pub income_gini: Option<f64>,
    pub n_customers_income: usize,
    pub missing_demographics: usize,
    pub undefined: Vec<(&'static str, String)>,
}

impl DistrictIndicators {
    pub fn is_complete(&self) -> bool {
        self.undefined.is_empty()
    }
}

/// Indicator rows for every district, computed from one pass over the data.
pub fn compute_indicators(
    districts: &[Id],
    records: &[TransactionRecord],
    customers: &[CustomerProfile],
    merchants: &[MerchantProfile],
    homes: &BTreeMap<Id, Id>,
) -> Vec<DistrictIndicators> {
    let merchant_district: BTreeMap<&str, &Id> = merchants.iter().map(|m| (&*m.merchant_id, &m.district_id)).collect();

    let mut mobility: BTreeMap<&Id, BTreeMap<&Id, u64>> = BTreeMap::new();
    let mut revenue: BTreeMap<&Id, BTreeMap<&Id, i64>> = BTreeMap::new();
    for r in records {
        let Some(dest) = merchant_district.get(&*r.merchant_id) else {
            continue;
        };
        if let Some(home) = homes.get(&r.customer_id) {
            *mobility.entry(home).or_default().entry(dest).or_default() += 1;
        }
        *revenue.entry(dest).or_default().entry(&r.merchant_id).or_default() += r.amount.minor();
    }

    let mut demo: BTreeMap<&Id, [BTreeMap<&Id, u64>; 4]> = BTreeMap::new();
    let mut missing: BTreeMap<&Id, usize> = BTreeMap::new();
    let mut incomes: BTreeMap<&Id, Vec<f64>> = BTreeMap::new();
    for c in customers {
        let Some(home) = homes.get(&c.customer_id) else {
            continue;
        };
        let slots = demo.entry(home).or_default();
        for (k, attr) in DemographicAttribute::ALL.iter().enumerate() {
            match c.attribute(*attr) {
                Some(v) => *slots[k].entry(v).or_default() += 1,
                None => *missing.entry(home).or_default() += 1,
            }
        }
        incomes.entry(home).or_default().push(c.income.as_f64());
    }

    let mut mix: BTreeMap<&Id, BTreeMap<&Id, u64>> = BTreeMap::new();
    for m in merchants {
        *mix.entry(&m.district_id).or_default().entry(&m.category_id).or_default() += 1;
    }

    let empty_tally = BTreeMap::new();
    districts
        .iter()
        .map(|d| {
            let mut undefined = Vec::new();
            let mut keep = |name: &'static str, r: Result<f64>| match r {
                Ok(v) => Some(v),
                Err(e) => {
                    undefined.push((name, e.to_string()));
                    None
                }
            };
            let mobility_diversity = keep("mobility_diversity", entropy_of(mobility.get(d).unwrap_or(&empty_tally)));
            let demo_slots = demo.get(d);
            let demo_h = |k: usize| entropy_of(demo_slots.map(|s| &s[k]).unwrap_or(&empty_tally));
            let gender_diversity = keep("gender_diversity", demo_h(0));
            let marital_diversity = keep("marital_diversity", demo_h(1));
            let education_diversity = keep("education_diversity", demo_h(2));
            let job_diversity = keep("job_diversity", demo_h(3));
            let merchant_diversity = keep("merchant_diversity", entropy_of(mix.get(d).unwrap_or(&empty_tally)));
            let share = revenue
                .get(d)
                .map(|per| per.iter().map(|(id, v)| ((*id).clone(), Money::from_minor(*v))).collect())
                .unwrap_or_default();
            let merchant_share_bias = keep("merchant_share_bias", share_of_top(share));
            let district_incomes = incomes.get(d).map(Vec::as_slice).unwrap_or(&[]);
            let income_gini = keep("income_gini", gini(district_incomes));
            DistrictIndicators {
                district_id: d.clone(),
                mobility_diversity,
                gender_diversity,
                marital_diversity,
                education_diversity,
                job_diversity,
                merchant_diversity,
                merchant_share_bias,
                income_gini,
                n_customers_income: district_incomes.iter().filter(|&&x| x > 0.0).count(),
                missing_demographics: missing.get(d).copied().unwrap_or(0),
                undefined,
            }
        })
        .collect()
}

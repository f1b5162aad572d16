//! Origin–destination mobility matrices: where residents of each district shop.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{MerchantProfile, TransactionRecord};
use crate::Id;

/// Row-stochastic districts × districts matrix. Entry (i, j) is the share of
/// transactions by residents of district i made at merchants in district j.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityMatrix {
    pub districts: Vec<Id>,
    /// `None` for districts whose residents have no transactions.
    pub rows: Vec<Option<Vec<f64>>>,
}

impl MobilityMatrix {
    pub fn get(&self, origin: usize, destination: usize) -> Option<f64> {
        self.rows[origin].as_ref().map(|r| r[destination])
    }
}

/// Tallies origin (home) × destination (merchant) districts, optionally for
/// one merchant category, and normalizes each row.
pub fn mobility_pattern_matrix(
    districts: &[Id],
    records: &[TransactionRecord],
    merchants: &[MerchantProfile],
    homes: &BTreeMap<Id, Id>,
    category: Option<&str>,
) -> MobilityMatrix {
    let index: BTreeMap<&str, usize> = districts.iter().enumerate().map(|(k, d)| (&**d, k)).collect();
    let merchant_district: BTreeMap<&str, usize> = merchants
        .iter()
        .filter(|m| category.is_none_or(|c| &*m.category_id == c))
        .filter_map(|m| index.get(&*m.district_id).map(|&k| (&*m.merchant_id, k)))
        .collect();
    let n = districts.len();
    let mut counts = vec![0u64; n * n];
    for r in records {
        let (Some(&dest), Some(home)) = (merchant_district.get(&*r.merchant_id), homes.get(&r.customer_id)) else {
            continue;
        };
        if let Some(&origin) = index.get(&**home) {
            counts[origin * n + dest] += 1;
        }
    }
    let rows = counts
        .chunks_exact(n.max(1))
        .take(n)
        .map(|row| {
            let total: u64 = row.iter().sum();
            (total > 0).then(|| row.iter().map(|&c| c as f64 / total as f64).collect())
        })
        .collect();
    MobilityMatrix { districts: districts.to_vec(), rows }
}

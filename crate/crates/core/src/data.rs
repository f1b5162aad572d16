//! Transaction, customer and merchant records, plus the operations that turn a
//! flat transaction log into per (district, category) study cells.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use chrono::{NaiveDate, NaiveDateTime};

use crate::{Error, Id, Result};

/// Customers with fewer transactions than this are dropped before modeling.
pub const DEFAULT_MIN_TRANSACTIONS: usize = 10;

/// A point on the sphere, in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    latitude: f64,
    longitude: f64,
}

impl GeoPoint {
    pub fn new(latitude: f64, longitude: f64) -> Result<Self> {
        if !latitude.is_finite() || !(-90.0..=90.0).contains(&latitude) {
            return Err(Error::InvalidInput(format!("latitude {latitude} out of range")));
        }
        if !longitude.is_finite() || !(-180.0..=180.0).contains(&longitude) {
            return Err(Error::InvalidInput(format!("longitude {longitude} out of range")));
        }
        Ok(Self { latitude, longitude })
    }

    pub fn latitude(&self) -> f64 {
        self.latitude
    }

    pub fn longitude(&self) -> f64 {
        self.longitude
    }
}

/// Money in integer minor units (cents). Aggregation stays exact; conversion
/// to floating point happens only when a value enters the model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_minor(minor: i64) -> Self {
        Money(minor)
    }

    pub const fn minor(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn checked_add(self, other: Money) -> Option<Money> {
        self.0.checked_add(other.0).map(Money)
    }

    /// Parses a plain decimal such as `12.5`, `-3.00` or `7` with at most two
    /// fractional digits.
    pub fn parse(s: &str) -> Option<Money> {
        let s = s.trim();
        let (negative, digits) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (whole, frac) = match digits.split_once('.') {
            Some((w, f)) => (w, f),
            None => (digits, ""),
        };
        if whole.is_empty() && frac.is_empty() {
            return None;
        }
        if frac.len() > 2 || !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let whole: i64 = if whole.is_empty() { 0 } else { whole.parse().ok()? };
        let mut cents: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
        if frac.len() == 1 {
            cents *= 10;
        }
        let minor = whole.checked_mul(100)?.checked_add(cents)?;
        Some(Money(if negative { -minor } else { minor }))
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl core::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        Money(iter.map(|m| m.0).sum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransactionRecord {
    pub customer_id: Id,
    pub merchant_id: Id,
    pub amount: Money,
    pub timestamp: NaiveDateTime,
    pub category_id: Id,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CustomerProfile {
    pub customer_id: Id,
    pub age: Option<u32>,
    pub gender: Option<Id>,
    pub marital_status: Option<Id>,
    pub education_level: Option<Id>,
    pub work_status: Option<Id>,
    pub income: Money,
    pub home: GeoPoint,
    pub work: Option<GeoPoint>,
}

/// Categorical customer attributes used by the demographic diversity indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DemographicAttribute {
    Gender,
    MaritalStatus,
    EducationLevel,
    WorkStatus,
}

impl DemographicAttribute {
    pub const ALL: [DemographicAttribute; 4] = [
        DemographicAttribute::Gender,
        DemographicAttribute::MaritalStatus,
        DemographicAttribute::EducationLevel,
        DemographicAttribute::WorkStatus,
    ];
}

impl CustomerProfile {
    pub fn attribute(&self, attribute: DemographicAttribute) -> Option<&Id> {
        match attribute {
            DemographicAttribute::Gender => self.gender.as_ref(),
            DemographicAttribute::MaritalStatus => self.marital_status.as_ref(),
            DemographicAttribute::EducationLevel => self.education_level.as_ref(),
            DemographicAttribute::WorkStatus => self.work_status.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MerchantProfile {
    pub merchant_id: Id,
    pub category_id: Id,
    pub district_id: Id,
    pub location: GeoPoint,
    /// Filled in by [`partition`]; zero on freshly ingested profiles.
    pub revenue: Money,
}

/// Inclusive range of calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudyWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl StudyWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidInput(format!("study window ends ({end}) before it starts ({start})")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, ts: &NaiveDateTime) -> bool {
        let day = ts.date();
        self.start <= day && day <= self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub period: StudyWindow,
    pub n_transactions: usize,
    pub n_customers: usize,
    pub avg_transactions_per_customer: f64,
}

impl DatasetSummary {
    pub fn new(period: StudyWindow, n_transactions: usize, n_customers: usize) -> Result<Self> {
        if n_customers == 0 {
            return Err(Error::UndefinedAverage);
        }
        Ok(Self {
            period,
            n_transactions,
            n_customers,
            avg_transactions_per_customer: n_transactions as f64 / n_customers as f64,
        })
    }
}

/// Keeps the records of customers with at least `min_count` transactions.
pub fn filter_active_customers(records: &[TransactionRecord], min_count: usize) -> Result<Vec<TransactionRecord>> {
    if min_count == 0 {
        return Err(Error::InvalidInput("min_count must be at least 1".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(&r.customer_id).or_default() += 1;
    }
    Ok(records.iter().filter(|r| counts[&*r.customer_id] >= min_count).cloned().collect())
}

/// Period and volume summary; customers are those with at least one record.
pub fn summarize(period: StudyWindow, records: &[TransactionRecord]) -> Result<DatasetSummary> {
    let customers: BTreeSet<&str> = records.iter().map(|r| &*r.customer_id).collect();
    DatasetSummary::new(period, records.len(), customers.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    pub fn contains(&self, p: &GeoPoint) -> bool {
        (self.lat_min..=self.lat_max).contains(&p.latitude()) && (self.lon_min..=self.lon_max).contains(&p.longitude())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct District {
    pub id: Id,
    pub bounds: Option<BoundingBox>,
}

/// The configured regions, in report order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DistrictTable {
    districts: Vec<District>,
}

impl DistrictTable {
    pub fn new(districts: Vec<District>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for d in &districts {
            if !seen.insert(d.id.clone()) {
                return Err(Error::InvalidInput(format!("duplicate district id {}", d.id)));
            }
        }
        Ok(Self { districts })
    }

    pub fn districts(&self) -> &[District] {
        &self.districts
    }

    pub fn ids(&self) -> Vec<Id> {
        self.districts.iter().map(|d| d.id.clone()).collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.districts.iter().any(|d| &*d.id == id)
    }

    /// First district whose box contains the point.
    pub fn locate(&self, p: &GeoPoint) -> Option<&Id> {
        self.districts.iter().find(|d| d.bounds.is_some_and(|b| b.contains(p))).map(|d| &d.id)
    }
}

/// Resolves each customer's home district. An explicit label wins over the
/// geometric lookup; customers matching neither are left out and logged.
pub fn assign_home_districts(
    customers: &[CustomerProfile],
    table: &DistrictTable,
    explicit: &BTreeMap<Id, Id>,
) -> BTreeMap<Id, Id> {
    let mut out = BTreeMap::new();
    let mut unassigned = 0usize;
    for c in customers {
        let district = explicit.get(&c.customer_id).filter(|d| table.contains(d)).or_else(|| table.locate(&c.home));
        match district {
            Some(d) => {
                out.insert(c.customer_id.clone(), d.clone());
            }
            None => unassigned += 1,
        }
    }
    if unassigned > 0 {
        log::warn!("{unassigned} customers could not be assigned a home district");
    }
    out
}

/// One (district, category) unit of analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyCell {
    pub district_id: Id,
    pub category_id: Id,
    /// Merchants with at least one transaction, ordered by id; revenue filled.
    pub merchants: Vec<MerchantProfile>,
    /// Customers with at least one in-cell transaction, ordered by id.
    pub customers: Vec<Id>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub cells: Vec<StudyCell>,
    /// (district, category) pairs with no merchant that has a transaction.
    pub omitted: Vec<(Id, Id)>,
}

/// Splits the transaction log into (district, category) cells, in
/// `regions`-major, `categories`-minor order.
pub fn partition(
    records: &[TransactionRecord],
    merchants: &[MerchantProfile],
    regions: &[Id],
    categories: &[Id],
) -> Result<Partition> {
    let region_set: BTreeSet<&str> = regions.iter().map(|r| &**r).collect();
    let mut by_id: BTreeMap<&str, &MerchantProfile> = BTreeMap::new();
    for m in merchants {
        if !region_set.contains(&*m.district_id) {
            return Err(Error::Integrity(format!(
                "merchant {} references unknown district {}",
                m.merchant_id, m.district_id
            )));
        }
        if by_id.insert(&m.merchant_id, m).is_some() {
            return Err(Error::Integrity(format!("duplicate merchant id {}", m.merchant_id)));
        }
    }

    // (district, category) -> merchant id -> (revenue, customers)
    type CellAcc<'a> = BTreeMap<&'a str, (Money, BTreeSet<&'a str>)>;
    let mut acc: BTreeMap<(&str, &str), CellAcc<'_>> = BTreeMap::new();
    for r in records {
        let m = by_id
            .get(&*r.merchant_id)
            .ok_or_else(|| Error::Integrity(format!("transaction references unknown merchant {}", r.merchant_id)))?;
        let entry = acc
            .entry((&m.district_id, &m.category_id))
            .or_default()
            .entry(&m.merchant_id)
            .or_insert((Money::ZERO, BTreeSet::new()));
        entry.0 = entry
            .0
            .checked_add(r.amount)
            .ok_or_else(|| Error::Integrity(format!("revenue overflow at merchant {}", r.merchant_id)))?;
        entry.1.insert(&r.customer_id);
    }

    let mut cells = Vec::new();
    let mut omitted = Vec::new();
    for district in regions {
        for category in categories {
            match acc.get(&(&**district, &**category)) {
                Some(per_merchant) if !per_merchant.is_empty() => {
                    let mut customers: BTreeSet<&str> = BTreeSet::new();
                    let mut cell_merchants = Vec::with_capacity(per_merchant.len());
                    for (mid, (revenue, custs)) in per_merchant {
                        let mut profile = by_id[mid].clone();
                        profile.revenue = *revenue;
                        cell_merchants.push(profile);
                        customers.extend(custs.iter().copied());
                    }
                    cells.push(StudyCell {
                        district_id: district.clone(),
                        category_id: category.clone(),
                        merchants: cell_merchants,
                        customers: customers.into_iter().map(Id::from).collect(),
                    });
                }
                _ => {
                    log::info!("cell ({district}, {category}) has no merchant with transactions; omitted");
                    omitted.push((district.clone(), category.clone()));
                }
            }
        }
    }
    Ok(Partition { cells, omitted })
}

/// Customers × merchants visit counts for one cell, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitMatrix {
    n_customers: usize,
    n_merchants: usize,
    counts: Vec<u32>,
}

impl VisitMatrix {
    /// Builds a matrix from row-major counts; every row must have a visit.
    pub fn from_rows(n_customers: usize, n_merchants: usize, counts: Vec<u32>) -> Result<Self> {
        if counts.len() != n_customers * n_merchants {
            return Err(Error::InvalidInput(format!(
                "visit matrix has {} entries, expected {n_customers}x{n_merchants}",
                counts.len()
            )));
        }
        let m = Self { n_customers, n_merchants, counts };
        if let Some(i) = (0..n_customers).find(|&i| m.row(i).iter().all(|&c| c == 0)) {
            return Err(Error::Integrity(format!("visit matrix row {i} has no visits")));
        }
        Ok(m)
    }

    pub fn n_customers(&self) -> usize {
        self.n_customers
    }

    pub fn n_merchants(&self) -> usize {
        self.n_merchants
    }

    pub fn get(&self, customer: usize, merchant: usize) -> u32 {
        self.counts[customer * self.n_merchants + merchant]
    }

    pub fn row(&self, customer: usize) -> &[u32] {
        &self.counts[customer * self.n_merchants..(customer + 1) * self.n_merchants]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.n_customers).map(|i| self.row(i).iter().map(|&c| u64::from(c)).sum()).collect()
    }

    /// Per-merchant visit totals: the observed visit distribution of the cell.
    pub fn column_sums(&self) -> Vec<u64> {
        let mut sums = vec![0u64; self.n_merchants];
        for row in self.counts.chunks_exact(self.n_merchants.max(1)) {
            for (s, &c) in sums.iter_mut().zip(row) {
                *s += u64::from(c);
            }
        }
        sums
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }
}

/// Tallies the cell's transactions; one record is one visit.
pub fn build_visit_matrix(cell: &StudyCell, records: &[TransactionRecord]) -> Result<VisitMatrix> {
    let mut out = build_visit_matrices(core::slice::from_ref(cell), records)?;
    Ok(out.pop().expect("one cell in, one matrix out"))
}

/// Same as [`build_visit_matrix`] for many cells in a single pass over the log.
pub fn build_visit_matrices(cells: &[StudyCell], records: &[TransactionRecord]) -> Result<Vec<VisitMatrix>> {
    let mut merchant_slot: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut customer_index: Vec<BTreeMap<&str, usize>> = Vec::with_capacity(cells.len());
    let mut counts: Vec<Vec<u32>> = Vec::with_capacity(cells.len());
    for (k, cell) in cells.iter().enumerate() {
        for (j, m) in cell.merchants.iter().enumerate() {
            if merchant_slot.insert(&m.merchant_id, (k, j)).is_some() {
                return Err(Error::Integrity(format!("merchant {} appears in two cells", m.merchant_id)));
            }
        }
        customer_index.push(cell.customers.iter().enumerate().map(|(i, c)| (&**c, i)).collect());
        counts.push(vec![0u32; cell.customers.len() * cell.merchants.len()]);
    }
    for r in records {
        let Some(&(k, j)) = merchant_slot.get(&*r.merchant_id) else {
            continue;
        };
        let i = *customer_index[k].get(&*r.customer_id).ok_or_else(|| {
            Error::Integrity(format!(
                "customer {} transacts in cell ({}, {}) but is not listed in it",
                r.customer_id, cells[k].district_id, cells[k].category_id
            ))
        })?;
        counts[k][i * cells[k].merchants.len() + j] += 1;
    }
    cells
        .iter()
        .zip(counts)
        .map(|(cell, c)| VisitMatrix::from_rows(cell.customers.len(), cell.merchants.len(), c))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Revenue {
    pub amount: Money,
    /// Set when the merchant has no transactions; such merchants never enter
    /// a Huff candidate set.
    pub excluded: bool,
}

/// Total transaction amount of one merchant: its attractiveness.
pub fn merchant_revenue(records: &[TransactionRecord], merchant_id: &str) -> Revenue {
    let mut n = 0usize;
    let amount = records.iter().filter(|r| &*r.merchant_id == merchant_id).inspect(|_| n += 1).map(|r| r.amount).sum();
    Revenue { amount, excluded: n == 0 }
}

/// Revenue of every merchant appearing in the log.
pub fn merchant_revenues(records: &[TransactionRecord]) -> BTreeMap<Id, Money> {
    let mut out: BTreeMap<Id, Money> = BTreeMap::new();
    for r in records {
        let slot = out.entry(r.merchant_id.clone()).or_default();
        *slot = Money(slot.0 + r.amount.0);
    }
    out
}

/// Why a record failed validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordIssue {
    NonPositiveAmount,
    OutOfWindow,
}

impl RecordIssue {
    pub fn reason(&self) -> &'static str {
        match self {
            RecordIssue::NonPositiveAmount => "non-positive amount",
            RecordIssue::OutOfWindow => "out of window",
        }
    }
}

/// Semantic checks that apply once a row has been parsed.
pub fn validate_transaction(
    record: &TransactionRecord,
    window: Option<&StudyWindow>,
) -> core::result::Result<(), RecordIssue> {
    if !record.amount.is_positive() {
        return Err(RecordIssue::NonPositiveAmount);
    }
    if let Some(w) = window {
        if !w.contains(&record.timestamp) {
            return Err(RecordIssue::OutOfWindow);
        }
    }
    Ok(())
}

/// Helper for error messages listing identifiers.
pub(crate) fn join_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> String {
    let mut s = String::new();
    for (k, id) in ids.into_iter().enumerate() {
        if k > 0 {
            s.push_str(", ");
        }
        s.push_str(id);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn ts() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2014, 8, 1).unwrap().and_hms_opt(12, 0, 0).unwrap()
    }

    fn tx(c: &str, m: &str, cents: i64) -> TransactionRecord {
        TransactionRecord {
            customer_id: c.into(),
            merchant_id: m.into(),
            amount: Money::from_minor(cents),
            timestamp: ts(),
            category_id: "5411".into(),
        }
    }

    fn merchant(id: &str, district: &str, category: &str) -> MerchantProfile {
        MerchantProfile {
            merchant_id: id.into(),
            category_id: category.into(),
            district_id: district.into(),
            location: GeoPoint::new(41.0, 29.0).unwrap(),
            revenue: Money::ZERO,
        }
    }

    #[test]
    fn money_parsing() {
        assert_eq!(Money::parse("12.50"), Some(Money::from_minor(1250)));
        assert_eq!(Money::parse("12.5"), Some(Money::from_minor(1250)));
        assert_eq!(Money::parse("7"), Some(Money::from_minor(700)));
        assert_eq!(Money::parse("-5.00"), Some(Money::from_minor(-500)));
        assert_eq!(Money::parse(".25"), Some(Money::from_minor(25)));
        assert_eq!(Money::parse("1.234"), None);
        assert_eq!(Money::parse("abc"), None);
        assert_eq!(Money::parse(""), None);
        assert_eq!(Money::from_minor(-1205).to_string(), "-12.05");
    }

    #[test]
    fn geopoint_range() {
        assert!(GeoPoint::new(90.0, 180.0).is_ok());
        assert!(GeoPoint::new(90.1, 0.0).is_err());
        assert!(GeoPoint::new(0.0, f64::NAN).is_err());
    }

    #[test]
    fn filter_boundaries() {
        let mut recs: Vec<_> = (0..9).map(|_| tx("a", "m", 100)).collect();
        recs.extend((0..10).map(|_| tx("b", "m", 100)));
        let kept = filter_active_customers(&recs, 10).unwrap();
        assert_eq!(kept.len(), 10);
        assert!(kept.iter().all(|r| &*r.customer_id == "b"));
        assert!(filter_active_customers(&[], 10).unwrap().is_empty());
        assert!(filter_active_customers(&recs, 0).is_err());
    }

    #[test]
    fn summary_quotient() {
        let w = StudyWindow::new(
            NaiveDate::from_ymd_opt(2014, 7, 1).unwrap(),
            NaiveDate::from_ymd_opt(2015, 6, 30).unwrap(),
        )
        .unwrap();
        let s = DatasetSummary::new(w, 4_254_652, 62_392).unwrap();
        assert!((s.avg_transactions_per_customer - 68.19).abs() <= 0.005);
        let one = summarize(w, &[tx("a", "m", 1)]).unwrap();
        assert_eq!(one.avg_transactions_per_customer, 1.0);
        assert_eq!(summarize(w, &[]), Err(Error::UndefinedAverage));
    }

    #[test]
    fn window_is_inclusive() {
        let w = StudyWindow::new(
            NaiveDate::from_ymd_opt(2014, 7, 1).unwrap(),
            NaiveDate::from_ymd_opt(2015, 6, 30).unwrap(),
        )
        .unwrap();
        let last = NaiveDate::from_ymd_opt(2015, 6, 30).unwrap().and_hms_opt(23, 59, 59).unwrap();
        let after = NaiveDate::from_ymd_opt(2015, 7, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        assert!(w.contains(&last));
        assert!(!w.contains(&after));
    }

    #[test]
    fn validation_reasons() {
        let bad = tx("a", "m", -500);
        assert_eq!(validate_transaction(&bad, None), Err(RecordIssue::NonPositiveAmount));
        assert_eq!(RecordIssue::NonPositiveAmount.reason(), "non-positive amount");
    }

    #[test]
    fn partition_single_cell_and_omissions() {
        let merchants = [merchant("m1", "d1", "5411"), merchant("m2", "d1", "5541")];
        let recs = [tx("a", "m1", 1000), tx("b", "m1", 250)];
        let regions: Vec<Id> = vec!["d1".into()];
        let cats: Vec<Id> = vec!["5411".into(), "5541".into()];
        let p = partition(&recs, &merchants, &regions, &cats).unwrap();
        assert_eq!(p.cells.len(), 1);
        assert_eq!(p.omitted, vec![(Id::from("d1"), Id::from("5541"))]);
        let cell = &p.cells[0];
        assert_eq!(cell.merchants[0].revenue, Money::from_minor(1250));
        assert_eq!(cell.customers, vec![Id::from("a"), Id::from("b")]);
    }

    #[test]
    fn partition_unknown_district_is_integrity_error() {
        let merchants = [merchant("m1", "nowhere", "5411")];
        let regions: Vec<Id> = vec!["d1".into()];
        let cats: Vec<Id> = vec!["5411".into()];
        assert!(matches!(partition(&[], &merchants, &regions, &cats), Err(Error::Integrity(_))));
    }

    #[test]
    fn visit_matrix_single_pair() {
        let merchants = [merchant("m1", "d1", "5411")];
        let recs: Vec<_> = (0..5).map(|_| tx("a", "m1", 100)).collect();
        let regions: Vec<Id> = vec!["d1".into()];
        let cats: Vec<Id> = vec!["5411".into()];
        let p = partition(&recs, &merchants, &regions, &cats).unwrap();
        let v = build_visit_matrix(&p.cells[0], &recs).unwrap();
        assert_eq!((v.n_customers(), v.n_merchants()), (1, 1));
        assert_eq!(v.get(0, 0), 5);
    }

    #[test]
    fn visit_matrix_rejects_empty_rows() {
        assert!(VisitMatrix::from_rows(2, 2, vec![1, 0, 0, 0]).is_err());
        assert!(VisitMatrix::from_rows(2, 2, vec![1, 0]).is_err());
    }

    #[test]
    fn revenue_sum_and_exclusion() {
        let recs = [tx("a", "m1", 1000), tx("a", "m1", 250)];
        assert_eq!(merchant_revenue(&recs, "m1"), Revenue { amount: Money::from_minor(1250), excluded: false });
        assert_eq!(merchant_revenue(&recs, "m2"), Revenue { amount: Money::ZERO, excluded: true });
    }

    #[test]
    fn home_district_explicit_label_wins() {
        let table = DistrictTable::new(vec![
            District {
                id: "d1".into(),
                bounds: Some(BoundingBox { lat_min: 0.0, lat_max: 1.0, lon_min: 0.0, lon_max: 1.0 }),
            },
            District { id: "d2".into(), bounds: None },
        ])
        .unwrap();
        let c = |id: &str, lat: f64| CustomerProfile {
            customer_id: id.into(),
            age: None,
            gender: None,
            marital_status: None,
            education_level: None,
            work_status: None,
            income: Money::ZERO,
            home: GeoPoint::new(lat, 0.5).unwrap(),
            work: None,
        };
        let customers = [c("a", 0.5), c("b", 0.5), c("z", 5.0)];
        let mut explicit = BTreeMap::new();
        explicit.insert(Id::from("b"), Id::from("d2"));
        let homes = assign_home_districts(&customers, &table, &explicit);
        assert_eq!(homes.get("a").map(|d| &**d), Some("d1"));
        assert_eq!(homes.get("b").map(|d| &**d), Some("d2"));
        assert!(!homes.contains_key("z"));
    }
}

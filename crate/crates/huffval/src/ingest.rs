//! Delimited-text ingestion with per-row validation. Bad rows are never
//! dropped silently: each one lands in a rejection report with its reason.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use huffval_core::data::{
    validate_transaction, BoundingBox, CustomerProfile, District, DistrictTable, GeoPoint, MerchantProfile, Money,
    StudyWindow, TransactionRecord,
};
use huffval_core::Id;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub row_number: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Ingested<T> {
    pub records: Vec<T>,
    /// 1-based data row of each accepted record.
    pub row_numbers: Vec<usize>,
    pub rejections: Vec<Rejection>,
    pub rows_read: usize,
}

impl<T> Ingested<T> {
    /// Accepted rows are exactly the rows without a rejection.
    fn new(records: Vec<T>, rejections: Vec<Rejection>, rows_read: usize) -> Self {
        let mut rejected = rejections.iter().map(|r| r.row_number).peekable();
        let mut row_numbers = Vec::with_capacity(records.len());
        for n in 1..=rows_read {
            if rejected.peek() == Some(&n) {
                rejected.next();
            } else {
                row_numbers.push(n);
            }
        }
        debug_assert_eq!(row_numbers.len(), records.len());
        Self { records, row_numbers, rejections, rows_read }
    }

    pub fn rejection_fraction(&self) -> f64 {
        if self.rows_read == 0 {
            0.0
        } else {
            self.rejections.len() as f64 / self.rows_read as f64
        }
    }
}

/// Maps logical column names to the header names used in a file. Columns not
/// listed keep their logical name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ColumnMapping(pub BTreeMap<String, String>);

impl ColumnMapping {
    fn header_for<'a>(&'a self, logical: &'a str) -> &'a str {
        self.0.get(logical).map(String::as_str).unwrap_or(logical)
    }
}

/// Allowed values per categorical customer attribute; unset means anything goes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabularies {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marital_status: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub education_level: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub work_status: Option<BTreeSet<String>>,
}

/// Deduplicates identifier allocations across a file.
#[derive(Default)]
pub(crate) struct Interner(HashMap<String, Id>);

impl Interner {
    pub(crate) fn get(&mut self, s: &str) -> Id {
        if let Some(id) = self.0.get(s) {
            return id.clone();
        }
        let id: Id = Id::from(s);
        self.0.insert(s.to_string(), id.clone());
        id
    }
}

struct Columns {
    index: BTreeMap<&'static str, usize>,
    width: usize,
}

impl Columns {
    fn resolve(
        headers: &csv::StringRecord,
        file: &str,
        mapping: &ColumnMapping,
        required: &[&'static str],
        optional: &[&'static str],
    ) -> Result<Self> {
        let mut index = BTreeMap::new();
        let position = |logical: &str| headers.iter().position(|h| h.trim() == mapping.header_for(logical));
        for &col in required {
            let k = position(col).ok_or_else(|| Error::MissingColumn {
                file: file.to_string(),
                column: mapping.header_for(col).to_string(),
            })?;
            index.insert(col, k);
        }
        for &col in optional {
            if let Some(k) = position(col) {
                index.insert(col, k);
            }
        }
        Ok(Self { index, width: headers.len() })
    }

    fn get<'r>(&self, row: &'r csv::StringRecord, col: &str) -> &'r str {
        self.index.get(col).and_then(|&k| row.get(k)).map(str::trim).unwrap_or("")
    }
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().flexible(true).has_headers(true).from_reader(source)
}

/// Walks data rows, numbering them from 1 (the header is not counted).
fn for_each_row<R: Read>(
    rdr: &mut csv::Reader<R>,
    cols: &Columns,
    rejections: &mut Vec<Rejection>,
    mut f: impl FnMut(&csv::StringRecord) -> std::result::Result<(), String>,
) -> usize {
    let mut n = 0;
    let mut row = csv::StringRecord::new();
    loop {
        n += 1;
        match rdr.read_record(&mut row) {
            Ok(false) => return n - 1,
            Ok(true) => {
                let outcome = if row.len() != cols.width {
                    Err(format!("wrong field count: {} (expected {})", row.len(), cols.width))
                } else {
                    f(&row)
                };
                if let Err(reason) = outcome {
                    rejections.push(Rejection { row_number: n, reason });
                }
            }
            Err(e) => {
                rejections.push(Rejection { row_number: n, reason: format!("unparseable row: {e}") });
                if !matches!(e.kind(), csv::ErrorKind::Utf8 { .. } | csv::ErrorKind::UnequalLengths { .. }) {
                    return n;
                }
            }
        }
    }
}

/// Accepts `2014-07-01T10:00:00`, fractional seconds, RFC 3339 with an
/// offset (converted to UTC), or a bare date.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f"))
        .ok()
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.naive_utc()))
        .or_else(|| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().and_then(|d| d.and_hms_opt(0, 0, 0)))
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format("%Y-%m-%dT%H:%M:%S").to_string()
}

fn required_id(interner: &mut Interner, value: &str, name: &str) -> std::result::Result<Id, String> {
    if value.is_empty() {
        Err(format!("missing {name}"))
    } else {
        Ok(interner.get(value))
    }
}

pub const TRANSACTION_COLUMNS: [&str; 5] = ["customer_id", "merchant_id", "amount", "timestamp", "category_id"];

pub fn ingest_transactions<R: Read>(
    source: R,
    mapping: &ColumnMapping,
    window: Option<&StudyWindow>,
) -> Result<Ingested<TransactionRecord>> {
    let mut rdr = reader(source);
    let cols = Columns::resolve(rdr.headers()?, "transactions", mapping, &TRANSACTION_COLUMNS, &[])?;
    let mut interner = Interner::default();
    let mut records = Vec::new();
    let mut rejections = Vec::new();
    let rows_read = for_each_row(&mut rdr, &cols, &mut rejections, |row| {
        let customer_id = required_id(&mut interner, cols.get(row, "customer_id"), "customer_id")?;
        let merchant_id = required_id(&mut interner, cols.get(row, "merchant_id"), "merchant_id")?;
        let category_id = required_id(&mut interner, cols.get(row, "category_id"), "category_id")?;
        let amount = Money::parse(cols.get(row, "amount")).ok_or_else(|| "invalid amount".to_string())?;
        let timestamp = parse_timestamp(cols.get(row, "timestamp")).ok_or_else(|| "invalid timestamp".to_string())?;
        let record = TransactionRecord { customer_id, merchant_id, amount, timestamp, category_id };
        validate_transaction(&record, window).map_err(|issue| issue.reason().to_string())?;
        records.push(record);
        Ok(())
    });
    Ok(Ingested::new(records, rejections, rows_read))
}

pub const CUSTOMER_COLUMNS: [&str; 11] = [
    "customer_id",
    "age",
    "gender",
    "marital_status",
    "education_level",
    "work_status",
    "income",
    "home_lat",
    "home_lon",
    "work_lat",
    "work_lon",
];

fn optional_id(
    interner: &mut Interner,
    value: &str,
    name: &str,
    vocabulary: Option<&BTreeSet<String>>,
) -> std::result::Result<Option<Id>, String> {
    if value.is_empty() {
        return Ok(None);
    }
    if vocabulary.is_some_and(|v| !v.contains(value)) {
        return Err(format!("{name} '{value}' not in vocabulary"));
    }
    Ok(Some(interner.get(value)))
}

fn point(lat: &str, lon: &str) -> Option<GeoPoint> {
    GeoPoint::new(lat.parse().ok()?, lon.parse().ok()?).ok()
}

pub fn ingest_customers<R: Read>(
    source: R,
    mapping: &ColumnMapping,
    vocab: &Vocabularies,
) -> Result<Ingested<CustomerProfile>> {
    let mut rdr = reader(source);
    let (required, optional) = CUSTOMER_COLUMNS.split_at(9);
    let cols = Columns::resolve(rdr.headers()?, "customers", mapping, required, optional)?;
    let mut interner = Interner::default();
    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    let mut rejections = Vec::new();
    let rows_read = for_each_row(&mut rdr, &cols, &mut rejections, |row| {
        let customer_id = required_id(&mut interner, cols.get(row, "customer_id"), "customer_id")?;
        if !seen.insert(customer_id.clone()) {
            return Err("duplicate customer_id".into());
        }
        let age = match cols.get(row, "age") {
            "" => None,
            a => Some(a.parse::<u32>().map_err(|_| "invalid age".to_string())?),
        };
        let income = Money::parse(cols.get(row, "income")).ok_or_else(|| "invalid income".to_string())?;
        if income.minor() < 0 {
            return Err("negative income".into());
        }
        let home = point(cols.get(row, "home_lat"), cols.get(row, "home_lon"))
            .ok_or_else(|| "invalid home location".to_string())?;
        let work = match (cols.get(row, "work_lat"), cols.get(row, "work_lon")) {
            ("", "") => None,
            (lat, lon) => Some(point(lat, lon).ok_or_else(|| "invalid work location".to_string())?),
        };
        let mut cat =
            |name: &str, v: Option<&BTreeSet<String>>| optional_id(&mut interner, cols.get(row, name), name, v);
        let gender = cat("gender", vocab.gender.as_ref())?;
        let marital_status = cat("marital_status", vocab.marital_status.as_ref())?;
        let education_level = cat("education_level", vocab.education_level.as_ref())?;
        let work_status = cat("work_status", vocab.work_status.as_ref())?;
        records.push(CustomerProfile {
            customer_id,
            age,
            gender,
            marital_status,
            education_level,
            work_status,
            income,
            home,
            work,
        });
        Ok(())
    });
    Ok(Ingested::new(records, rejections, rows_read))
}

pub const MERCHANT_COLUMNS: [&str; 5] = ["merchant_id", "category_id", "district_id", "lat", "lon"];

pub fn ingest_merchants<R: Read>(source: R, mapping: &ColumnMapping) -> Result<Ingested<MerchantProfile>> {
    let mut rdr = reader(source);
    let cols = Columns::resolve(rdr.headers()?, "merchants", mapping, &MERCHANT_COLUMNS, &[])?;
    let mut interner = Interner::default();
    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    let mut rejections = Vec::new();
    let rows_read = for_each_row(&mut rdr, &cols, &mut rejections, |row| {
        let merchant_id = required_id(&mut interner, cols.get(row, "merchant_id"), "merchant_id")?;
        if !seen.insert(merchant_id.clone()) {
            return Err("duplicate merchant_id".into());
        }
        let category_id = required_id(&mut interner, cols.get(row, "category_id"), "category_id")?;
        let district_id = required_id(&mut interner, cols.get(row, "district_id"), "district_id")?;
        let location =
            point(cols.get(row, "lat"), cols.get(row, "lon")).ok_or_else(|| "invalid location".to_string())?;
        records.push(MerchantProfile { merchant_id, category_id, district_id, location, revenue: Money::ZERO });
        Ok(())
    });
    Ok(Ingested::new(records, rejections, rows_read))
}

pub const DISTRICT_COLUMNS: [&str; 5] = ["district_id", "lat_min", "lat_max", "lon_min", "lon_max"];

/// District table: ids in report order, optionally with bounding boxes for
/// geometric home-district lookup. Any malformed row is a hard error.
pub fn read_district_table<R: Read>(source: R) -> Result<DistrictTable> {
    let mut rdr = reader(source);
    let cols = Columns::resolve(
        rdr.headers()?,
        "districts",
        &ColumnMapping::default(),
        &DISTRICT_COLUMNS[..1],
        &DISTRICT_COLUMNS[1..],
    )?;
    let mut districts = Vec::new();
    let mut problems = Vec::new();
    for_each_row(&mut rdr, &cols, &mut problems, |row| {
        let id = cols.get(row, "district_id");
        if id.is_empty() {
            return Err("missing district_id".into());
        }
        let raw: Vec<&str> = DISTRICT_COLUMNS[1..].iter().map(|c| cols.get(row, c)).collect();
        let bounds = if raw.iter().all(|v| v.is_empty()) {
            None
        } else {
            let v: Vec<f64> = raw
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| format!("district {id}: invalid bounds"))?;
            Some(BoundingBox { lat_min: v[0], lat_max: v[1], lon_min: v[2], lon_max: v[3] })
        };
        districts.push(District { id: Id::from(id), bounds });
        Ok(())
    });
    if let Some(p) = problems.first() {
        return Err(Error::Invalid(format!("districts row {}: {}", p.row_number, p.reason)));
    }
    Ok(DistrictTable::new(districts)?)
}

/// Explicit customer → home district labels.
pub fn read_customer_districts<R: Read>(source: R) -> Result<BTreeMap<Id, Id>> {
    let mut rdr = reader(source);
    let cols = Columns::resolve(
        rdr.headers()?,
        "customer_districts",
        &ColumnMapping::default(),
        &["customer_id", "district_id"],
        &[],
    )?;
    let mut out = BTreeMap::new();
    let mut interner = Interner::default();
    let mut problems = Vec::new();
    for_each_row(&mut rdr, &cols, &mut problems, |row| {
        let c = required_id(&mut interner, cols.get(row, "customer_id"), "customer_id")?;
        let d = required_id(&mut interner, cols.get(row, "district_id"), "district_id")?;
        out.insert(c, d);
        Ok(())
    });
    if let Some(p) = problems.first() {
        return Err(Error::Invalid(format!("customer_districts row {}: {}", p.row_number, p.reason)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "customer_id,merchant_id,amount,timestamp,category_id\n";

    #[test]
    fn valid_rows() {
        let data = format!(
            "{HEADER}c1,m1,12.50,2014-08-01T10:00:00,5411\nc1,m2,3,2014-08-02T11:30:00,5541\nc2,m1,0.99,2015-06-30,5411\n"
        );
        let out = ingest_transactions(data.as_bytes(), &ColumnMapping::default(), None).unwrap();
        assert_eq!(out.records.len(), 3);
        assert!(out.rejections.is_empty());
        assert_eq!(out.rows_read, 3);
        assert_eq!(out.records[0].amount, Money::from_minor(1250));
    }

    #[test]
    fn non_positive_amount_is_rejected_with_reason() {
        let data = format!("{HEADER}c1,m1,-5.00,2014-08-01T10:00:00,5411\n");
        let out = ingest_transactions(data.as_bytes(), &ColumnMapping::default(), None).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.rejections, vec![Rejection { row_number: 1, reason: "non-positive amount".into() }]);
    }

    #[test]
    fn out_of_window_and_malformed_rows() {
        let window = StudyWindow::new(
            NaiveDate::from_ymd_opt(2014, 7, 1).unwrap(),
            NaiveDate::from_ymd_opt(2015, 6, 30).unwrap(),
        )
        .unwrap();
        let data = format!(
            "{HEADER}c1,m1,1.00,2013-01-01T00:00:00,5411\nc1,m1,1.00,yesterday,5411\nc1,m1,1.00\n,m1,1.00,2014-08-01T00:00:00,5411\nc1,m1,1.001,2014-08-01T00:00:00,5411\n"
        );
        let out = ingest_transactions(data.as_bytes(), &ColumnMapping::default(), Some(&window)).unwrap();
        let reasons: Vec<&str> = out.rejections.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(reasons[0], "out of window");
        assert_eq!(reasons[1], "invalid timestamp");
        assert!(reasons[2].starts_with("wrong field count"));
        assert_eq!(reasons[3], "missing customer_id");
        assert_eq!(reasons[4], "invalid amount");
        assert_eq!(out.rows_read, 5);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let data = "customer_id,merchant_id,amount,timestamp\nc1,m1,1,2014-08-01\n";
        match ingest_transactions(data.as_bytes(), &ColumnMapping::default(), None) {
            Err(Error::MissingColumn { column, .. }) => assert_eq!(column, "category_id"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn column_mapping_renames() {
        let data = "cust,merchant_id,amount,timestamp,mcc\nc1,m1,1,2014-08-01,5411\n";
        let mut map = ColumnMapping::default();
        map.0.insert("customer_id".into(), "cust".into());
        map.0.insert("category_id".into(), "mcc".into());
        let out = ingest_transactions(data.as_bytes(), &map, None).unwrap();
        assert_eq!(&*out.records[0].category_id, "5411");
    }

    #[test]
    fn customers_validation() {
        let data = "customer_id,age,gender,marital_status,education_level,work_status,income,home_lat,home_lon,work_lat,work_lon\n\
            a,30,F,single,university,private,1000.00,41.0,29.0,,\n\
            a,31,M,single,university,private,1000.00,41.0,29.0,,\n\
            b,40,X,married,primary,public,0,41.0,29.0,41.1,29.1\n\
            c,40,M,married,primary,public,-3,41.0,29.0,,\n\
            d,40,M,,primary,public,10,95.0,29.0,,\n\
            e,40,M,married,primary,public,10,41.0,29.0,41.0,\n";
        let vocab = Vocabularies {
            gender: Some(["F", "M"].iter().map(|s| s.to_string()).collect()),
            ..Vocabularies::default()
        };
        let out = ingest_customers(data.as_bytes(), &ColumnMapping::default(), &vocab).unwrap();
        assert_eq!(out.records.len(), 1);
        let reasons: Vec<&str> = out.rejections.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(
            reasons,
            vec![
                "duplicate customer_id",
                "gender 'X' not in vocabulary",
                "negative income",
                "invalid home location",
                "invalid work location"
            ]
        );
    }

    #[test]
    fn district_table_with_and_without_bounds() {
        let data = "district_id,lat_min,lat_max,lon_min,lon_max\n4,41.0,41.05,29.0,29.05\n17,,,,\n";
        let t = read_district_table(data.as_bytes()).unwrap();
        assert_eq!(t.ids(), vec![Id::from("4"), Id::from("17")]);
        assert!(t.districts()[1].bounds.is_none());
        assert!(read_district_table("district_id\n4\n4\n".as_bytes()).is_err());
    }
}

//! A validated dataset and its on-disk layout.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use huffval_core::data::{
    assign_home_districts, CustomerProfile, DistrictTable, MerchantProfile, StudyWindow, TransactionRecord,
};
use huffval_core::Id;
use serde::{Deserialize, Serialize};

use crate::formats;
use crate::ingest::{self, ColumnMapping, Ingested, Rejection, Vocabularies};
use crate::{Error, Result};

pub const TRANSACTIONS_FILE: &str = "transactions.csv";
pub const CUSTOMERS_FILE: &str = "customers.csv";
pub const MERCHANTS_FILE: &str = "merchants.csv";
pub const DISTRICTS_FILE: &str = "districts.csv";
pub const CUSTOMER_DISTRICTS_FILE: &str = "customer_districts.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPaths {
    pub transactions: PathBuf,
    pub customers: PathBuf,
    pub merchants: PathBuf,
    pub districts: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub customer_districts: Option<PathBuf>,
}

impl InputPaths {
    /// The standard file names inside `dir`. The customer → district label
    /// file is picked up only if it exists.
    pub fn in_dir(dir: &Path) -> Self {
        let labels = dir.join(CUSTOMER_DISTRICTS_FILE);
        Self {
            transactions: dir.join(TRANSACTIONS_FILE),
            customers: dir.join(CUSTOMERS_FILE),
            merchants: dir.join(MERCHANTS_FILE),
            districts: dir.join(DISTRICTS_FILE),
            customer_districts: labels.exists().then_some(labels),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMappings {
    #[serde(default, skip_serializing_if = "is_empty_mapping")]
    pub transactions: ColumnMapping,
    #[serde(default, skip_serializing_if = "is_empty_mapping")]
    pub customers: ColumnMapping,
    #[serde(default, skip_serializing_if = "is_empty_mapping")]
    pub merchants: ColumnMapping,
}

fn is_empty_mapping(m: &ColumnMapping) -> bool {
    m.0.is_empty()
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub window: Option<StudyWindow>,
    pub columns: ColumnMappings,
    pub vocabularies: Vocabularies,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub transactions: Vec<TransactionRecord>,
    pub customers: Vec<CustomerProfile>,
    pub merchants: Vec<MerchantProfile>,
    pub districts: DistrictTable,
    /// Explicit home-district labels; customers without one are placed by
    /// their home coordinates.
    pub customer_districts: BTreeMap<Id, Id>,
}

/// Rows read and rejected for one input file.
#[derive(Debug, Clone, PartialEq)]
pub struct FileReport {
    pub file: String,
    pub rows_read: usize,
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub files: Vec<FileReport>,
}

impl IngestReport {
    pub fn rows_read(&self) -> usize {
        self.files.iter().map(|f| f.rows_read).sum()
    }

    pub fn rejected(&self) -> usize {
        self.files.iter().map(|f| f.rejections.len()).sum()
    }

    pub fn rejection_fraction(&self) -> f64 {
        match self.rows_read() {
            0 => 0.0,
            n => self.rejected() as f64 / n as f64,
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Drops records failing `check`, moving them to the rejection list.
fn retain_checked<T>(ingested: &mut Ingested<T>, mut check: impl FnMut(&T) -> Option<String>) {
    let records = std::mem::take(&mut ingested.records);
    let rows = std::mem::take(&mut ingested.row_numbers);
    for (record, row) in records.into_iter().zip(rows) {
        match check(&record) {
            Some(reason) => ingested.rejections.push(Rejection { row_number: row, reason }),
            None => {
                ingested.records.push(record);
                ingested.row_numbers.push(row);
            }
        }
    }
    ingested.rejections.sort_by_key(|r| r.row_number);
}

impl Dataset {
    /// Reads and validates every input file. Rows referencing unknown
    /// districts, merchants or customers are rejected like malformed rows.
    pub fn load(paths: &InputPaths, options: &IngestOptions) -> Result<(Self, IngestReport)> {
        let districts = ingest::read_district_table(open(&paths.districts)?)?;
        let customer_districts = match &paths.customer_districts {
            Some(p) => ingest::read_customer_districts(open(p)?)?,
            None => BTreeMap::new(),
        };

        let mut merchants = ingest::ingest_merchants(open(&paths.merchants)?, &options.columns.merchants)?;
        retain_checked(&mut merchants, |m| {
            (!districts.contains(&m.district_id)).then(|| format!("unknown district_id '{}'", m.district_id))
        });
        let customers =
            ingest::ingest_customers(open(&paths.customers)?, &options.columns.customers, &options.vocabularies)?;
        let mut transactions = ingest::ingest_transactions(
            open(&paths.transactions)?,
            &options.columns.transactions,
            options.window.as_ref(),
        )?;

        let merchant_category: BTreeMap<&str, &str> =
            merchants.records.iter().map(|m| (&*m.merchant_id, &*m.category_id)).collect();
        let known_customers: BTreeSet<&str> = customers.records.iter().map(|c| &*c.customer_id).collect();
        retain_checked(&mut transactions, |t| match merchant_category.get(&*t.merchant_id) {
            None => Some(format!("unknown merchant_id '{}'", t.merchant_id)),
            Some(&c) if c != &*t.category_id => {
                Some(format!("category_id '{}' disagrees with merchant category '{c}'", t.category_id))
            }
            _ if !known_customers.contains(&*t.customer_id) => Some(format!("unknown customer_id '{}'", t.customer_id)),
            _ => None,
        });

        let report = IngestReport {
            files: vec![
                FileReport {
                    file: file_name(&paths.transactions),
                    rows_read: transactions.rows_read,
                    rejections: transactions.rejections,
                },
                FileReport {
                    file: file_name(&paths.customers),
                    rows_read: customers.rows_read,
                    rejections: customers.rejections,
                },
                FileReport {
                    file: file_name(&paths.merchants),
                    rows_read: merchants.rows_read,
                    rejections: merchants.rejections,
                },
            ],
        };
        let dataset = Dataset {
            transactions: transactions.records,
            customers: customers.records,
            merchants: merchants.records,
            districts,
            customer_districts,
        };
        Ok((dataset, report))
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        formats::write_districts(&dir.join(DISTRICTS_FILE), &self.districts)?;
        formats::write_customers(&dir.join(CUSTOMERS_FILE), &self.customers)?;
        formats::write_merchants(&dir.join(MERCHANTS_FILE), &self.merchants)?;
        formats::write_transactions(&dir.join(TRANSACTIONS_FILE), &self.transactions)?;
        if !self.customer_districts.is_empty() {
            formats::write_customer_districts(&dir.join(CUSTOMER_DISTRICTS_FILE), &self.customer_districts)?;
        }
        Ok(())
    }

    pub fn homes(&self) -> BTreeMap<Id, Id> {
        assign_home_districts(&self.customers, &self.districts, &self.customer_districts)
    }

    /// Distinct merchant categories, sorted.
    pub fn categories(&self) -> Vec<Id> {
        let set: BTreeSet<&Id> = self.merchants.iter().map(|m| &m.category_id).collect();
        set.into_iter().cloned().collect()
    }
}

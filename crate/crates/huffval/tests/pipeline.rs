use std::collections::BTreeMap;
use std::fmt::Write as _;

use huffval::config::{CategoryLabel, RunConfig};
use huffval::dataset::{Dataset, IngestOptions, InputPaths};
use huffval::formats;
use huffval::ingest::{ingest_transactions, ColumnMapping};
use huffval::pipeline::{self, Status};
use huffval::synth::{generate_city, CategorySpec, City, CityConfig, Range, TRUTH_PROBABILITIES_FILE};
use huffval_core::huff::{mean_absolute_deviation, probability_matrix};
use huffval_core::Id;

fn city(config: CityConfig) -> City {
    generate_city(&config).unwrap()
}

#[test]
fn ingest_rejects_exactly_the_corrupted_rows() {
    let mut text = String::from("customer_id,merchant_id,amount,timestamp,category_id\n");
    let corrupted: Vec<usize> = (0..10).map(|k| 37 + 97 * k).collect();
    for row in 1..=1000 {
        let amount = if corrupted.contains(&row) {
            match row % 3 {
                0 => "abc".to_string(),
                1 => "-4.00".to_string(),
                _ => String::new(),
            }
        } else {
            format!("{}.{:02}", row % 90 + 1, row % 100)
        };
        writeln!(text, "c{},m{},{amount},2015-02-03 10:00:00,5411", row % 40, row % 7).unwrap();
    }
    let out = ingest_transactions(text.as_bytes(), &ColumnMapping::default(), None).unwrap();
    assert_eq!(out.rows_read, 1000);
    assert_eq!(out.records.len(), 990);
    let rejected: Vec<usize> = out.rejections.iter().map(|r| r.row_number).collect();
    assert_eq!(rejected, corrupted);
    assert!(out.rejections.iter().all(|r| !r.reason.is_empty()));
    assert!(!out.row_numbers.iter().any(|n| corrupted.contains(n)));
}

#[test]
fn synthetic_city_round_trips_through_ingestion() {
    let generated = city(CityConfig { seed: 11, n_districts: 4, customers_per_district: 40, ..CityConfig::default() });
    let dir = tempfile::tempdir().unwrap();
    generated.dataset.write_dir(dir.path()).unwrap();
    huffval::synth::write_truth(dir.path(), &generated.truth).unwrap();
    let (loaded, report) = Dataset::load(&InputPaths::in_dir(dir.path()), &IngestOptions::default()).unwrap();
    assert_eq!(report.rejected(), 0);
    assert_eq!(loaded, generated.dataset);

    let file = std::fs::File::open(dir.path().join(TRUTH_PROBABILITIES_FILE)).unwrap();
    let (_, rows) = formats::read_table(std::io::BufReader::new(file)).unwrap();
    let mut sums: BTreeMap<(String, String, String), f64> = BTreeMap::new();
    for r in rows {
        *sums.entry((r[0].clone(), r[1].clone(), r[2].clone())).or_default() += r[4].parse::<f64>().unwrap();
    }
    assert!(!sums.is_empty());
    for (key, s) in sums {
        assert!((s - 1.0).abs() <= 1e-12, "{key:?} sums to {s}");
    }
}

/// Column totals of each (district, category) cell against the truth:
/// given the per-customer visit counts, merchant choices are multinomial.
fn z_scores(c: &City, category: &str) -> Vec<f64> {
    let district_of: BTreeMap<&Id, &Id> =
        c.dataset.merchants.iter().map(|m| (&m.merchant_id, &m.district_id)).collect();
    let mut visits: BTreeMap<(&Id, &Id, &Id), f64> = BTreeMap::new();
    for t in c.dataset.transactions.iter().filter(|t| &*t.category_id == category) {
        *visits.entry((district_of[&t.merchant_id], &t.customer_id, &t.merchant_id)).or_default() += 1.0;
    }
    let mut out = Vec::new();
    for cell in c.truth.cells.iter().filter(|t| &*t.key.category_id == category) {
        let d = &cell.key.district_id;
        for (j, m) in cell.merchants.iter().enumerate() {
            let (mut observed, mut expected, mut var) = (0.0, 0.0, 0.0);
            for (i, cust) in cell.customers.iter().enumerate() {
                let n_i: f64 = cell.merchants.iter().map(|mm| visits.get(&(d, cust, mm)).copied().unwrap_or(0.0)).sum();
                let p = cell.row(i)[j];
                observed += visits.get(&(d, cust, m)).copied().unwrap_or(0.0);
                expected += n_i * p;
                var += n_i * p * (1.0 - p);
            }
            out.push((observed - expected) / var.sqrt());
        }
    }
    out
}

#[test]
fn synthetic_visits_follow_the_planted_probabilities() {
    let c = city(CityConfig { seed: 21, n_districts: 5, customers_per_district: 150, ..CityConfig::default() });
    let uniform = c.truth.cells.iter().filter(|t| &*t.key.category_id == "5812");
    for cell in uniform {
        let n_m = cell.merchants.len() as f64;
        assert!((0..cell.customers.len()).all(|i| cell.row(i).iter().all(|p| (p - 1.0 / n_m).abs() < 1e-12)));
    }
    for category in ["5812", "5411"] {
        let z = z_scores(&c, category);
        let outside = z.iter().filter(|z| z.abs() > 3.0).count();
        // About 0.3% of columns land outside 3σ by chance.
        assert!(z.len() >= 80 && outside <= 2, "{category}: {outside} of {} beyond 3σ", z.len());
    }
}

#[test]
fn identifiable_categories_are_recovered() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::default();
    config.seed = Some(5);
    config.out = dir.path().to_path_buf();
    config.synth = CityConfig {
        n_districts: 4,
        customers_per_district: 300,
        merchants_per_category: Range::fixed(12),
        visits_per_customer: Range::fixed(40),
        categories: vec![
            CategorySpec { id: "a".into(), label: "A".into(), alpha: 1.0, beta: 2.0 },
            CategorySpec { id: "b".into(), label: "B".into(), alpha: 2.0, beta: 0.5 },
        ],
        ..CityConfig::default()
    };
    config.categories =
        config.synth.categories.iter().map(|c| CategoryLabel { id: c.id.clone(), label: c.label.clone() }).collect();
    assert_eq!(pipeline::cmd_synth(&config).unwrap(), Status::Success);
    assert_eq!(pipeline::cmd_fit(&config).unwrap(), Status::Success);

    let mut synth = config.synth.clone();
    synth.seed = 5;
    let truth = generate_city(&synth).unwrap().truth;
    let (dataset, _) = pipeline::load(&config).unwrap();
    let prepared = pipeline::prepare(dataset, config.min_transactions, None).unwrap();
    let options = pipeline::FitOptions::from_config(&config, 5).unwrap();
    let jobs = pipeline::build_cells(&prepared, &options).unwrap();
    let rows = formats::read_fit_results(&dir.path().join(pipeline::FIT_RESULTS_FILE)).unwrap();
    assert_eq!(rows.len(), 8);

    for (job, row) in jobs.iter().zip(&rows) {
        assert_eq!(job.key(), row.key);
        let fit = row.outcome.as_ref().unwrap();
        assert!(fit.score >= 0.95, "{:?}: r = {}", row.key, fit.score);
        let inputs = job.inputs.as_ref().unwrap();
        let t = truth.cell(&job.cell.district_id, &job.cell.category_id).unwrap();
        let row_of: BTreeMap<&Id, usize> = t.customers.iter().enumerate().map(|(k, c)| (c, k)).collect();
        let cols: Vec<usize> =
            job.cell.merchants.iter().map(|m| t.merchants.iter().position(|x| *x == m.merchant_id).unwrap()).collect();
        let mut expected = Vec::new();
        for c in &job.cell.customers {
            let r = t.row(row_of[c]);
            let mass: f64 = cols.iter().map(|&j| r[j]).sum();
            expected.extend(cols.iter().map(|&j| r[j] / mass));
        }
        let fitted = probability_matrix(inputs, &fit.params).unwrap();
        let mad = mean_absolute_deviation(&fitted, &expected);
        assert!(mad <= 0.02, "{:?}: MAD {mad}", row.key);
    }
}

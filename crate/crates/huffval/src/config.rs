//! Run configuration: one TOML document, overridable from the command line
//! and echoed into the output directory as `effective_config.toml`.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use huffval_core::data::{StudyWindow, DEFAULT_MIN_TRANSACTIONS};
use huffval_core::geo::{Anchor, DistancePolicy};
use huffval_core::huff::{Estimator, SearchBox};
use huffval_core::optimize::SwarmConfig;
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnMappings, IngestOptions, InputPaths};
use crate::ingest::Vocabularies;
use crate::synth::CityConfig;
use crate::{Error, Result};

pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AnchorName {
    Home,
    Work,
    #[default]
    Min,
}

impl From<AnchorName> for Anchor {
    fn from(a: AnchorName) -> Self {
        match a {
            AnchorName::Home => Anchor::HomeOnly,
            AnchorName::Work => Anchor::WorkOnly,
            AnchorName::Min => Anchor::MinHomeWork,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorName {
    #[default]
    Pso,
    Loglinear,
}

impl From<EstimatorName> for Estimator {
    fn from(e: EstimatorName) -> Self {
        match e {
            EstimatorName::Pso => Estimator::Pso,
            EstimatorName::Loglinear => Estimator::LogLinear,
        }
    }
}

/// Where merchant attractiveness comes from when fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttractivenessSource {
    /// Total transaction revenue over the study window.
    #[default]
    Revenue,
    /// The generator's values from `truth_attractiveness.csv`.
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputsConfig {
    /// Directory holding the standard file names; defaults to the output
    /// directory. Explicit paths below take precedence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transactions: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub customers: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub merchants: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub districts: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub customer_districts: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_attractiveness: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceConfig {
    pub anchor: AnchorName,
    pub floor_km: f64,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self { anchor: AnchorName::Min, floor_km: DistancePolicy::DEFAULT_FLOOR_KM }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwarmSettings {
    pub swarm_size: usize,
    pub max_iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub tolerance: f64,
    pub stall_iterations: usize,
    pub alpha_max: f64,
    pub beta_max: f64,
}

impl Default for SwarmSettings {
    fn default() -> Self {
        let d = SwarmConfig::with_bounds(SearchBox::default().bounds());
        let b = SearchBox::default();
        Self {
            swarm_size: d.swarm_size,
            max_iterations: d.max_iterations,
            inertia: d.inertia,
            cognitive: d.cognitive,
            social: d.social,
            tolerance: d.tolerance,
            stall_iterations: d.stall_iterations,
            alpha_max: b.alpha.1,
            beta_max: b.beta.1,
        }
    }
}

impl SwarmSettings {
    pub fn search_box(&self) -> SearchBox {
        SearchBox { alpha: (0.0, self.alpha_max), beta: (0.0, self.beta_max) }
    }

    pub fn swarm_config(&self) -> Result<SwarmConfig> {
        let config = SwarmConfig {
            swarm_size: self.swarm_size,
            max_iterations: self.max_iterations,
            inertia: self.inertia,
            cognitive: self.cognitive,
            social: self.social,
            tolerance: self.tolerance,
            stall_iterations: self.stall_iterations,
            bounds: self.search_box().bounds(),
        };
        config.validate()?;
        Ok(config)
    }
}

/// A merchant category and its display label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryLabel {
    pub id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream derives from it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub min_transactions: usize,
    /// Inclusive study window; defaults to the span of the transactions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowConfig>,
    pub max_rejection_fraction: f64,
    /// Share of degenerate cells above which `fit` exits with status 2.
    pub max_degenerate_fraction: f64,
    pub estimator: EstimatorName,
    pub attractiveness: AttractivenessSource,
    pub bin_width_km: f64,
    /// Write the swarm's per-iteration incumbent for every cell.
    pub trace: bool,
    pub intercept: bool,
    /// Restrict fitting to these districts; empty means all.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub districts: Vec<String>,
    pub inputs: InputsConfig,
    pub distance: DistanceConfig,
    pub swarm: SwarmSettings,
    pub columns: ColumnMappings,
    pub vocabularies: Vocabularies,
    pub categories: Vec<CategoryLabel>,
    pub synth: CityConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = CityConfig::default();
        Self {
            seed: None,
            out: PathBuf::from("out"),
            workers: None,
            min_transactions: DEFAULT_MIN_TRANSACTIONS,
            window: None,
            max_rejection_fraction: 0.01,
            max_degenerate_fraction: 0.25,
            estimator: EstimatorName::Pso,
            attractiveness: AttractivenessSource::Revenue,
            bin_width_km: 0.25,
            trace: false,
            intercept: true,
            districts: Vec::new(),
            inputs: InputsConfig::default(),
            distance: DistanceConfig::default(),
            swarm: SwarmSettings::default(),
            columns: ColumnMappings::default(),
            vocabularies: Vocabularies::default(),
            categories: synth
                .categories
                .iter()
                .map(|c| CategoryLabel { id: c.id.clone(), label: c.label.clone() })
                .collect(),
            synth,
        }
    }
}

/// Command-line values that override the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub categories: Vec<String>,
    pub districts: Vec<String>,
    pub min_transactions: Option<usize>,
    pub anchor: Option<AnchorName>,
    pub floor_km: Option<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(out) = o.out {
            self.out = out;
        }
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
        if !o.categories.is_empty() {
            let known = std::mem::take(&mut self.categories);
            self.categories = o
                .categories
                .into_iter()
                .map(|id| {
                    let label = known.iter().find(|c| c.id == id).map_or_else(|| id.clone(), |c| c.label.clone());
                    CategoryLabel { id, label }
                })
                .collect();
        }
        if !o.districts.is_empty() {
            self.districts = o.districts;
        }
        if let Some(n) = o.min_transactions {
            self.min_transactions = n;
        }
        if let Some(a) = o.anchor {
            self.distance.anchor = a;
        }
        if let Some(f) = o.floor_km {
            self.distance.floor_km = f;
        }
    }

    pub fn require_seed(&self, command: &str) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config(format!("{command} needs a master seed (--seed or `seed` in the config)")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_transactions == 0 {
            return Err(Error::Config("min_transactions must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        for (name, v) in [
            ("max_rejection_fraction", self.max_rejection_fraction),
            ("max_degenerate_fraction", self.max_degenerate_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.bin_width_km.is_finite() && self.bin_width_km > 0.0) {
            return Err(Error::Config("bin_width_km must be positive".into()));
        }
        if self.categories.is_empty() {
            return Err(Error::Config("at least one category is required".into()));
        }
        self.distance_policy()?;
        self.swarm.swarm_config()?;
        self.study_window()?;
        Ok(())
    }

    pub fn distance_policy(&self) -> Result<DistancePolicy> {
        Ok(DistancePolicy::new(self.distance.anchor.into(), self.distance.floor_km)?)
    }

    pub fn study_window(&self) -> Result<Option<StudyWindow>> {
        self.window.as_ref().map(|w| StudyWindow::new(w.start, w.end).map_err(Error::from)).transpose()
    }

    fn inputs_dir(&self) -> &Path {
        self.inputs.dir.as_deref().unwrap_or(&self.out)
    }

    /// Resolved input paths; every referenced file must exist.
    pub fn input_paths(&self) -> Result<InputPaths> {
        let mut paths = InputPaths::in_dir(self.inputs_dir());
        let i = &self.inputs;
        for (slot, explicit) in [
            (&mut paths.transactions, &i.transactions),
            (&mut paths.customers, &i.customers),
            (&mut paths.merchants, &i.merchants),
            (&mut paths.districts, &i.districts),
        ] {
            if let Some(p) = explicit {
                *slot = p.clone();
            }
        }
        if i.customer_districts.is_some() {
            paths.customer_districts = i.customer_districts.clone();
        }
        let required = [&paths.transactions, &paths.customers, &paths.merchants, &paths.districts];
        for p in required.into_iter().chain(paths.customer_districts.as_ref()) {
            if !p.exists() {
                return Err(Error::Config(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(paths)
    }

    pub fn truth_attractiveness_path(&self) -> PathBuf {
        self.inputs
            .truth_attractiveness
            .clone()
            .unwrap_or_else(|| self.inputs_dir().join(crate::synth::TRUTH_ATTRACTIVENESS_FILE))
    }

    pub fn ingest_options(&self) -> Result<IngestOptions> {
        Ok(IngestOptions {
            window: self.study_window()?,
            columns: self.columns.clone(),
            vocabularies: self.vocabularies.clone(),
        })
    }

    pub fn label_of<'a>(&'a self, category: &'a str) -> &'a str {
        self.categories.iter().find(|c| c.id == category).map_or(category, |c| c.label.as_str())
    }

    pub fn write_effective(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let path = self.out.join(EFFECTIVE_CONFIG_FILE);
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let mut c = RunConfig { seed: Some(7), ..RunConfig::default() };
        c.window = Some(WindowConfig {
            start: NaiveDate::from_ymd_opt(2014, 7, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2015, 6, 30).unwrap(),
        });
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn partial_file_and_overrides() {
        let text = r#"
seed = 3
min_transactions = 5

[distance]
anchor = "home"

[swarm]
swarm_size = 10

[[categories]]
id = "5411"
label = "Grocery"

[[categories]]
id = "5812"
label = "Restaurant"
"#;
        let mut c = RunConfig::from_toml(text).unwrap();
        assert_eq!(c.swarm.max_iterations, 200);
        assert_eq!(c.distance.anchor, AnchorName::Home);
        c.apply(Overrides {
            seed: Some(9),
            anchor: Some(AnchorName::Work),
            categories: vec!["5812".into()],
            ..Overrides::default()
        });
        assert_eq!(c.seed, Some(9));
        assert_eq!(c.min_transactions, 5);
        assert_eq!(c.distance_policy().unwrap().anchor(), Anchor::WorkOnly);
        assert_eq!(c.categories, vec![CategoryLabel { id: "5812".into(), label: "Restaurant".into() }]);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml("sed = 1").is_err());
        let c = RunConfig { min_transactions: 0, ..RunConfig::default() };
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.distance.floor_km = 0.0;
        assert!(c.validate().is_err());
        assert!(RunConfig::default().require_seed("fit").is_err());
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::energy::{EmissionFactor, Meter};
use crate::features::FeatureOptions;
use crate::federation::{FedXgbPlan, FederationPlan};
use crate::forecasters::{ArxConfig, GbtConfig, ModelFamily, RnnConfig};
use crate::ingest::{CleaningRules, ColumnMap, SplitRatios, SyntheticProfile};
use crate::metrics::DEFAULT_SEASONAL_LAG;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        n_evse: usize,
        days: usize,
        #[serde(default)]
        profile: SyntheticProfile,
    },
    File {
        path: PathBuf,
        #[serde(default)]
        columns: ColumnMap,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic { n_evse: 8, days: 120, profile: SyntheticProfile::default() }
    }
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    pub sr_freq_hours: f64,
    pub split: SplitRatios,
    pub cleaning: CleaningRules,
    pub features: FeatureOptions,
    pub roster: Vec<ModelFamily>,
    pub seasonal_lag: usize,
    pub gbt: GbtConfig,
    pub rnn: RnnConfig,
    pub arx: ArxConfig,
    pub hubs: usize,
    pub federation: FederationPlan,
    pub fedxgb: FedXgbPlan,
    pub meter: Meter,
    pub emission_factor: EmissionFactor,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataSource::default(),
            sr_freq_hours: 12.0,
            split: SplitRatios::default(),
            cleaning: CleaningRules::default(),
            features: FeatureOptions::default(),
            roster: vec![ModelFamily::SeasonalNaive, ModelFamily::Arx, ModelFamily::Gbt, ModelFamily::Gru],
            seasonal_lag: DEFAULT_SEASONAL_LAG,
            gbt: GbtConfig::default(),
            rnn: RnnConfig::default(),
            arx: ArxConfig::default(),
            hubs: 4,
            federation: FederationPlan::default(),
            fedxgb: FedXgbPlan::default(),
            meter: Meter::default(),
            emission_factor: EmissionFactor::default(),
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sr_freq_hours.is_finite() && self.sr_freq_hours > 0.0) {
            return Err(Error::config("sr_freq_hours must be positive"));
        }
        if (self.sr_freq_hours * 3600.0).fract() != 0.0 {
            return Err(Error::config("sr_freq_hours must be a whole number of seconds"));
        }
        if self.roster.is_empty() {
            return Err(Error::config("model roster is empty"));
        }
        if self.hubs == 0 {
            return Err(Error::config("hub count must be at least 1"));
        }
        if self.seasonal_lag == 0 {
            return Err(Error::config("seasonal lag must be positive"));
        }
        if let DataSource::Synthetic { n_evse, days, .. } = &self.data {
            if *n_evse == 0 || *days == 0 {
                return Err(Error::config("synthetic data needs at least one EVSE and one day"));
            }
        }
        self.gbt.validate()?;
        self.rnn.validate()?;
        self.federation.validate()?;
        self.meter.validate()?;
        EmissionFactor::new(self.emission_factor.kg_per_kwh, self.emission_factor.vintage.clone())?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form; names the run directory.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

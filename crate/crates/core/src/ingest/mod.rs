//! Transaction ingest: parsing, cleaning, demand resampling, temporal splits
//! and a synthetic transaction generator.

mod clean;
mod parse;
mod resample;
mod split;
mod synthetic;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use clean::{clean_transactions, CleanOutcome, CleaningReport, CleaningRules, DropReason};
pub use parse::{parse_transactions, ColumnMap, ParseOutcome, Reject};
pub use resample::{common_origin, resample_demand, write_demand_csv};
pub use split::{split_temporal, SplitRatios, TemporalSplit};
pub use synthetic::{generate_synthetic, write_transactions_csv, EnergyProfile, SyntheticProfile};

/// Latitude/longitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn dist2(&self, other: &GeoPoint) -> f64 {
        let dlat = self.lat - other.lat;
        let dlon = self.lon - other.lon;
        dlat * dlat + dlon * dlon
    }
}

/// One charging event on one EVSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTransaction {
    pub evse_id: String,
    pub t_start: DateTime<Utc>,
    pub t_end: DateTime<Utc>,
    pub energy_kwh: f64,
    /// Always `energy_kwh / duration_hours`.
    pub avg_power_kw: f64,
    pub evse_model: String,
    pub location: GeoPoint,
    /// Nameplate power from dataset metadata, when the source provides it.
    pub nominal_power_kw: Option<f64>,
}

impl EnergyTransaction {
    /// Build a transaction, deriving the average power. Timestamps are
    /// truncated to whole seconds.
    pub fn new(
        evse_id: impl Into<String>,
        t_start: DateTime<Utc>,
        t_end: DateTime<Utc>,
        energy_kwh: f64,
    ) -> crate::Result<Self> {
        let t_start = truncate_to_second(t_start);
        let t_end = truncate_to_second(t_end);
        if t_end <= t_start {
            return Err(crate::Error::invalid("transaction end must be after start"));
        }
        let hours = (t_end - t_start).num_seconds() as f64 / 3600.0;
        Ok(Self {
            evse_id: evse_id.into(),
            t_start,
            t_end,
            energy_kwh,
            avg_power_kw: energy_kwh / hours,
            evse_model: "unknown".to_string(),
            location: GeoPoint::new(0.0, 0.0),
            nominal_power_kw: None,
        })
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.evse_model = model.into();
        self
    }

    pub fn with_location(mut self, location: GeoPoint) -> Self {
        self.location = location;
        self
    }

    pub fn with_nominal_power(mut self, kw: Option<f64>) -> Self {
        self.nominal_power_kw = kw;
        self
    }

    pub fn duration_seconds(&self) -> i64 {
        (self.t_end - self.t_start).num_seconds()
    }

    pub fn duration_hours(&self) -> f64 {
        self.duration_seconds() as f64 / 3600.0
    }
}

pub(crate) fn truncate_to_second(t: DateTime<Utc>) -> DateTime<Utc> {
    DateTime::from_timestamp(t.timestamp(), 0).expect("in-range timestamp")
}

/// Static EVSE attributes carried alongside its demand series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvseMeta {
    pub evse_id: String,
    pub evse_model: String,
    pub location: GeoPoint,
    pub nominal_power_kw: Option<f64>,
}

/// Regular per-EVSE series of average power per bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSeries {
    pub meta: EvseMeta,
    /// Start of bin 0.
    pub origin: DateTime<Utc>,
    pub sr_freq_seconds: i64,
    /// Average power (kW) per bin.
    pub values: Vec<f64>,
    pub sessions_per_bin: Vec<u32>,
    pub avg_charge_hours_per_bin: Vec<f64>,
}

impl DemandSeries {
    pub fn evse_id(&self) -> &str {
        &self.meta.evse_id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sr_freq_hours(&self) -> f64 {
        self.sr_freq_seconds as f64 / 3600.0
    }

    pub fn bin_start(&self, k: usize) -> DateTime<Utc> {
        self.origin + chrono::Duration::seconds(self.sr_freq_seconds * k as i64)
    }

    /// Total energy (kWh) represented by the series.
    pub fn total_energy_kwh(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.sr_freq_hours()
    }
}

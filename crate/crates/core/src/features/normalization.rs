use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::transforms::downtime_series;
use crate::ingest::{DemandSeries, TemporalSplit};
use crate::{Error, Result};

/// Charging durations are capped at this many hours by cleaning.
pub const CHARGE_HOURS_CAP: f64 = 48.0;

/// Scale factors, fitted once on training bins and then read-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    /// Per-EVSE maximum power (kW) used to scale every power feature.
    pub nominal_kw: BTreeMap<String, f64>,
    /// Largest per-EVSE maximum, used for the nominal power feature.
    pub fleet_nominal_kw: f64,
    pub downtime_max: f64,
    pub sessions_max: f64,
    pub charge_hours_cap: f64,
}

impl NormalizationSpec {
    /// Fit from the training block of every series.
    ///
    /// The per-EVSE maximum is the metadata nominal power, raised to the
    /// largest training demand when that is higher, so scaled training demand
    /// never exceeds 1. Downtime and session maxima are floored at 1.
    pub fn fit(series: &[DemandSeries], split: &TemporalSplit) -> Result<Self> {
        let mut nominal_kw = BTreeMap::new();
        let mut downtime_max = 0u32;
        let mut sessions_max = 0u32;
        for s in series {
            let end = split.train_end.min(s.len());
            let train = &s.values[..end];
            let observed = train.iter().copied().fold(0.0, f64::max);
            let nominal = s.meta.nominal_power_kw.unwrap_or(0.0).max(observed);
            if nominal <= 0.0 {
                return Err(Error::config(format!(
                    "EVSE {} has no nominal power and no training demand",
                    s.evse_id()
                )));
            }
            nominal_kw.insert(s.evse_id().to_string(), nominal);
            downtime_max = downtime_max.max(downtime_series(train).into_iter().max().unwrap_or(0));
            sessions_max = sessions_max.max(s.sessions_per_bin[..end].iter().copied().max().unwrap_or(0));
        }
        let fleet_nominal_kw = nominal_kw.values().copied().fold(0.0, f64::max);
        let spec = Self {
            nominal_kw,
            fleet_nominal_kw,
            downtime_max: downtime_max.max(1) as f64,
            sessions_max: sessions_max.max(1) as f64,
            charge_hours_cap: CHARGE_HOURS_CAP,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("fleet nominal power", self.fleet_nominal_kw),
            ("downtime maximum", self.downtime_max),
            ("sessions maximum", self.sessions_max),
            ("charge-hours cap", self.charge_hours_cap),
        ];
        for (name, v) in scalars {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be strictly positive, got {v}")));
            }
        }
        for (id, v) in &self.nominal_kw {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::config(format!("nominal power of EVSE {id} must be strictly positive")));
            }
        }
        Ok(())
    }

    pub fn nominal_for(&self, evse_id: &str) -> Result<f64> {
        self.nominal_kw
            .get(evse_id)
            .copied()
            .ok_or_else(|| Error::config(format!("no nominal power for EVSE {evse_id}")))
    }
}

//! Point-forecast accuracy metrics and cross-EVSE quantile summaries.
//!
//! Metrics whose denominator vanishes return `None` ("undefined") rather
//! than a sentinel, and are excluded from quantile summaries.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Seasonal lag for the scaled error: 12 days at 12-hour bins.
pub const DEFAULT_SEASONAL_LAG: usize = 24;

/// Frozen metric names, in report order.
pub const METRIC_NAMES: [&str; 7] = ["mase", "smape", "maape", "wape", "rmse", "mae", "r2"];

/// Linear-interpolation quantile (the `(n - 1) q` rule). `None` on empty input.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

fn check(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::Shape { expected: y.len(), actual: yhat.len() });
    }
    if y.is_empty() {
        return Err(Error::invalid("metrics need at least one observation"));
    }
    Ok(())
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    let mse = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt())
}

/// Symmetric absolute percentage error on the 0..200 scale; 0/0 terms count as 0.
pub fn smape(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    let s: f64 = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| {
            let den = a.abs() + b.abs();
            if den == 0.0 {
                0.0
            } else {
                200.0 * ((a - b).abs() / den)
            }
        })
        .sum();
    Ok(s / y.len() as f64)
}

/// Mean arctangent absolute percentage error, in radians.
pub fn maape(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    let s: f64 = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| {
            let err = (a - b).abs();
            if err == 0.0 {
                0.0
            } else if *a == 0.0 {
                FRAC_PI_2
            } else {
                (err / a.abs()).atan()
            }
        })
        .sum();
    Ok(s / y.len() as f64)
}

pub fn wape(y: &[f64], yhat: &[f64]) -> Result<Option<f64>> {
    check(y, yhat)?;
    let den: f64 = y.iter().map(|a| a.abs()).sum();
    if den == 0.0 {
        return Ok(None);
    }
    Ok(Some(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / den))
}

pub fn r2(y: &[f64], yhat: &[f64]) -> Result<Option<f64>> {
    check(y, yhat)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Ok(None);
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(Some(1.0 - ss_res / ss_tot))
}

/// In-sample MAE of the lag-`m` seasonal naive forecast on `train`.
pub fn seasonal_naive_mae(train: &[f64], m: usize) -> Result<f64> {
    if m == 0 || train.len() <= m {
        return Err(Error::invalid(format!("training series of length {} too short for lag {m}", train.len())));
    }
    let s: f64 = train[m..].iter().zip(train).map(|(a, b)| (a - b).abs()).sum();
    Ok(s / (train.len() - m) as f64)
}

/// Scaled error against the seasonal naive reference on the training series.
pub fn mase(y: &[f64], yhat: &[f64], train: &[f64], m: usize) -> Result<Option<f64>> {
    let num = mae(y, yhat)?;
    let den = seasonal_naive_mae(train, m)?;
    if den == 0.0 {
        return Ok(None);
    }
    Ok(Some(num / den))
}

/// All seven metrics for one EVSE. `None` marks an undefined value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvseMetrics {
    pub evse_id: String,
    pub mase: Option<f64>,
    pub smape: Option<f64>,
    pub maape: Option<f64>,
    pub wape: Option<f64>,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub r2: Option<f64>,
}

impl EvseMetrics {
    pub fn compute(evse_id: impl Into<String>, y: &[f64], yhat: &[f64], train: &[f64], m: usize) -> Result<Self> {
        Ok(Self {
            evse_id: evse_id.into(),
            mase: mase(y, yhat, train, m)?,
            smape: Some(smape(y, yhat)?),
            maape: Some(maape(y, yhat)?),
            wape: wape(y, yhat)?,
            rmse: Some(rmse(y, yhat)?),
            mae: Some(mae(y, yhat)?),
            r2: r2(y, yhat)?,
        })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "mase" => self.mase,
            "smape" => self.smape,
            "maape" => self.maape,
            "wape" => self.wape,
            "rmse" => self.rmse,
            "mae" => self.mae,
            "r2" => self.r2,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileSummary {
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub defined: usize,
    pub undefined: usize,
}

/// Per-EVSE records plus a quantile block per metric. Metrics with no
/// defined value are listed in `omitted` instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_evse: Vec<EvseMetrics>,
    pub quantiles: BTreeMap<String, QuantileSummary>,
    pub omitted: Vec<String>,
}

impl MetricsReport {
    pub fn median(&self, metric: &str) -> Option<f64> {
        self.quantiles.get(metric).map(|q| q.q50)
    }
}

pub fn quantile_report(per_evse: Vec<EvseMetrics>) -> MetricsReport {
    let mut quantiles = BTreeMap::new();
    let mut omitted = Vec::new();
    for name in METRIC_NAMES {
        let values: Vec<f64> = per_evse.iter().filter_map(|m| m.get(name)).collect();
        let undefined = per_evse.len() - values.len();
        match (quantile(&values, 0.25), quantile(&values, 0.5), quantile(&values, 0.75)) {
            (Some(q25), Some(q50), Some(q75)) => {
                quantiles.insert(name.to_string(), QuantileSummary { q25, q50, q75, defined: values.len(), undefined });
            }
            _ => omitted.push(name.to_string()),
        }
    }
    MetricsReport { per_evse, quantiles, omitted }
}

use std::io::Write;
use std::ops::Range;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::columns::{FeatureColumn, FeatureMask, ALL_COLUMNS};
use super::normalization::NormalizationSpec;
use super::transforms::{
    activity_score, cyclical_encode, downtime_series, linear_extrapolation, log_delta, rolling_features,
};
use crate::ingest::{DemandSeries, GeoPoint};
use crate::Result;

/// Rows before this index lack the longest lag and are excluded from
/// training views.
pub const LAG_WARMUP: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureOptions {
    /// Window (bins) for rolling std, EMA and linear extrapolation.
    pub rolling_window: usize,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self { rolling_window: 5 }
    }
}

/// Per-EVSE feature matrix aligned with its demand series.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub evse_id: String,
    pub evse_model: String,
    pub location: GeoPoint,
    /// Start of the bin each row describes.
    pub index: Vec<DateTime<Utc>>,
    /// Row-major, `ALL_COLUMNS.len()` values per row.
    data: Vec<f64>,
    /// Normalized demand of the next bin; NaN on the last row.
    pub target: Vec<f64>,
    /// Scale that maps normalized power back to kW.
    pub nominal_kw: f64,
    /// Raw demand (kW) of the underlying series.
    pub demand_kw: Vec<f64>,
}

impl FeatureFrame {
    pub const N_COLS: usize = ALL_COLUMNS.len();

    pub fn n_rows(&self) -> usize {
        self.index.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * Self::N_COLS..(k + 1) * Self::N_COLS]
    }

    pub fn value(&self, k: usize, col: FeatureColumn) -> f64 {
        self.data[k * Self::N_COLS + col.index()]
    }

    pub fn column(&self, col: FeatureColumn) -> Vec<f64> {
        (0..self.n_rows()).map(|k| self.value(k, col)).collect()
    }

    pub fn masked_row(&self, k: usize, mask: &FeatureMask) -> Vec<f64> {
        let row = self.row(k);
        mask.0.iter().map(|c| row[c.index()]).collect()
    }

    /// Rows `k >= warmup` whose target bin `k + 1` falls in `targets`.
    pub fn rows_with_target_in(&self, targets: Range<usize>, warmup: usize) -> Vec<usize> {
        let lo = targets.start.max(warmup + 1).max(1);
        let hi = targets.end.min(self.n_rows());
        (lo..hi).map(|t| t - 1).collect()
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.nominal_kw
    }

    /// Export with the frozen column order: `bin_start`, every feature, `target`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["bin_start"];
        header.extend(ALL_COLUMNS.iter().map(|c| c.name()));
        header.push("target");
        w.write_record(&header)?;
        for k in 0..self.n_rows() {
            let mut rec = vec![self.index[k].to_rfc3339_opts(SecondsFormat::Secs, true)];
            rec.extend(self.row(k).iter().map(|v| format!("{v}")));
            rec.push(if self.target[k].is_nan() { String::new() } else { format!("{}", self.target[k]) });
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// SHA-256 over the index, feature values and targets.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.evse_id.as_bytes());
        for t in &self.index {
            h.update(t.timestamp().to_le_bytes());
        }
        for v in self.data.iter().chain(&self.target) {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Assemble every feature column for one EVSE.
pub fn build_feature_frame(
    series: &DemandSeries,
    spec: &NormalizationSpec,
    options: &FeatureOptions,
) -> Result<FeatureFrame> {
    spec.validate()?;
    let nominal = spec.nominal_for(series.evse_id())?;
    let d = &series.values;
    let n = d.len();
    let window = options.rolling_window.max(1);
    let downtime = downtime_series(d);
    let rolling = rolling_features(d, window);

    let mut data = Vec::with_capacity(n * FeatureFrame::N_COLS);
    let mut index = Vec::with_capacity(n);
    for k in 0..n {
        let t = series.bin_start(k);
        index.push(t);
        let c = cyclical_encode(t);
        let lag = |l: usize| if k >= l { d[k - l] / nominal } else { 0.0 };
        let trailing = &d[(k + 1).saturating_sub(window)..=k];
        let row = [
            c.hour_sin,
            c.hour_cos,
            c.day_sin,
            c.day_cos,
            c.week_sin,
            c.week_cos,
            activity_score(downtime[k]),
            downtime[k] as f64 / spec.downtime_max,
            series.sessions_per_bin[k] as f64 / spec.sessions_max,
            series.avg_charge_hours_per_bin[k] / spec.charge_hours_cap,
            lag(0),
            lag(1),
            lag(5),
            lag(48),
            rolling.std[0][k] / nominal,
            rolling.std[1][k] / nominal,
            rolling.std[2][k] / nominal,
            rolling.ema[0][k] / nominal,
            rolling.ema[1][k] / nominal,
            rolling.ema[2][k] / nominal,
            if k >= 1 { log_delta(d[k], d[k - 1]) } else { 0.0 },
            linear_extrapolation(trailing).min(nominal) / nominal,
            nominal / spec.fleet_nominal_kw,
        ];
        data.extend_from_slice(&row);
    }
    let target = (0..n).map(|k| if k + 1 < n { d[k + 1] / nominal } else { f64::NAN }).collect();

    Ok(FeatureFrame {
        evse_id: series.evse_id().to_string(),
        evse_model: series.meta.evse_model.clone(),
        location: series.meta.location,
        index,
        data,
        target,
        nominal_kw: nominal,
        demand_kw: d.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{resample_demand, common_origin, generate_synthetic, split_temporal, SplitRatios, SyntheticProfile};
    use chrono::Duration;

    fn fixture() -> (Vec<DemandSeries>, NormalizationSpec) {
        let txs = generate_synthetic(3, 90, 5, &SyntheticProfile::default());
        let series = resample_demand(&txs, common_origin(&txs).unwrap(), Duration::hours(12)).unwrap();
        let split = split_temporal(series[0].len(), SplitRatios::default()).unwrap();
        let spec = NormalizationSpec::fit(&series, &split).unwrap();
        (series, spec)
    }

    #[test]
    fn lag_identity() {
        let (series, spec) = fixture();
        let f = build_feature_frame(&series[0], &spec, &FeatureOptions::default()).unwrap();
        for k in 0..f.n_rows() - 48 {
            assert_eq!(f.value(k, FeatureColumn::DemandLag0), f.value(k + 48, FeatureColumn::DemandLag48));
            assert_eq!(f.value(k + 48, FeatureColumn::DemandLag1), f.value(k + 47, FeatureColumn::DemandLag0));
        }
    }

    #[test]
    fn demand_scaled_by_nominal() {
        let (mut series, mut spec) = fixture();
        series[0].values[10] = 11.0;
        spec.nominal_kw.insert(series[0].evse_id().to_string(), 22.0);
        let f = build_feature_frame(&series[0], &spec, &FeatureOptions::default()).unwrap();
        assert_eq!(f.value(10, FeatureColumn::DemandLag0), 0.5);
        assert_eq!(f.target[9], 0.5);
        assert_eq!(f.denormalize(f.target[9]), 11.0);
    }

    #[test]
    fn zero_maximum_is_config_error() {
        let (series, mut spec) = fixture();
        spec.sessions_max = 0.0;
        let err = build_feature_frame(&series[0], &spec, &FeatureOptions::default()).unwrap_err();
        assert!(matches!(err, crate::Error::Config(_)));
    }

    #[test]
    fn prefix_frame_matches_full_frame() {
        let (series, spec) = fixture();
        let opts = FeatureOptions::default();
        let full = build_feature_frame(&series[1], &spec, &opts).unwrap();
        for n in [1, 2, 30, 49, 100, series[1].len() - 1] {
            let mut prefix = series[1].clone();
            prefix.values.truncate(n);
            prefix.sessions_per_bin.truncate(n);
            prefix.avg_charge_hours_per_bin.truncate(n);
            let short = build_feature_frame(&prefix, &spec, &opts).unwrap();
            for k in 0..n {
                assert_eq!(short.row(k), full.row(k), "row {k} of prefix {n}");
                if k + 1 < n {
                    assert_eq!(short.target[k], full.target[k]);
                }
            }
        }
    }

    #[test]
    fn training_power_features_within_unit_interval() {
        let (series, spec) = fixture();
        let split = split_temporal(series[0].len(), SplitRatios::default()).unwrap();
        for s in &series {
            let f = build_feature_frame(s, &spec, &FeatureOptions::default()).unwrap();
            for k in f.rows_with_target_in(split.train(), LAG_WARMUP) {
                for c in ALL_COLUMNS.iter().filter(|c| c.is_power()) {
                    let v = f.value(k, *c);
                    assert!((0.0..=1.0 + 1e-9).contains(&v), "{} = {v}", c.name());
                }
                assert!((0.0..=1.0 + 1e-9).contains(&f.target[k]));
            }
        }
    }

    #[test]
    fn csv_header_order() {
        let (series, spec) = fixture();
        let f = build_feature_frame(&series[0], &spec, &FeatureOptions::default()).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("bin_start,hour_sin,hour_cos,day_sin"));
        assert!(header.ends_with("linear_extrapolation,nominal_power_norm,target"));
        assert_eq!(text.lines().count(), f.n_rows() + 1);
    }

    #[test]
    fn row_selection_respects_warmup_and_split() {
        let (series, spec) = fixture();
        let f = build_feature_frame(&series[0], &spec, &FeatureOptions::default()).unwrap();
        let rows = f.rows_with_target_in(0..100, LAG_WARMUP);
        assert_eq!(rows.first(), Some(&48));
        assert_eq!(rows.last(), Some(&98));
        let last = f.rows_with_target_in(100..f.n_rows(), LAG_WARMUP);
        assert_eq!(last.first(), Some(&99));
        assert_eq!(*last.last().unwrap(), f.n_rows() - 2);
    }
}

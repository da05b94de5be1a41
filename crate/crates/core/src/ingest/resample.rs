use std::collections::BTreeMap;
use std::io::Write;

use chrono::{DateTime, Duration, SecondsFormat, TimeZone, Utc};

use super::{EnergyTransaction, EvseMeta, DemandSeries};
use crate::{Error, Result};

/// Midnight (UTC) on or before the earliest transaction start.
pub fn common_origin(txs: &[EnergyTransaction]) -> Option<DateTime<Utc>> {
    let earliest = txs.iter().map(|t| t.t_start).min()?;
    let day = earliest.date_naive().and_hms_opt(0, 0, 0)?;
    Some(Utc.from_utc_datetime(&day))
}

/// Aggregate transactions into overlap-weighted average power per bin.
///
/// Every EVSE shares one temporal axis starting at `origin` and ending at the
/// bin containing the latest transaction end. Bin `k` receives
/// `p * |bin_k ∩ [start, end]| / |bin_k|` from each transaction. Output is
/// ordered by EVSE id.
pub fn resample_demand(
    txs: &[EnergyTransaction],
    origin: DateTime<Utc>,
    sr_freq: Duration,
) -> Result<Vec<DemandSeries>> {
    let sr = sr_freq.num_seconds();
    if sr <= 0 {
        return Err(Error::invalid("sampling frequency must be positive"));
    }
    let Some(axis_end) = txs.iter().map(|t| t.t_end).max() else {
        return Ok(Vec::new());
    };
    let span = (axis_end - origin).num_seconds();
    let n_bins = if span > 0 { ((span + sr - 1) / sr) as usize } else { 0 };

    let mut by_evse: BTreeMap<&str, Vec<&EnergyTransaction>> = BTreeMap::new();
    for tx in txs {
        by_evse.entry(tx.evse_id.as_str()).or_default().push(tx);
    }

    let mut out = Vec::with_capacity(by_evse.len());
    for (_, mut group) in by_evse {
        // Canonical order makes the floating-point sums independent of input order.
        group.sort_by(|a, b| canonical_key(a).cmp(&canonical_key(b)));
        out.push(resample_one(&group, origin, sr, n_bins));
    }
    Ok(out)
}

type Key<'a> = (i64, i64, u64, &'a str, u64, u64);

fn canonical_key(t: &EnergyTransaction) -> Key<'_> {
    (
        t.t_start.timestamp(),
        t.t_end.timestamp(),
        t.energy_kwh.to_bits(),
        t.evse_model.as_str(),
        t.location.lat.to_bits(),
        t.location.lon.to_bits(),
    )
}

fn resample_one(group: &[&EnergyTransaction], origin: DateTime<Utc>, sr: i64, n_bins: usize) -> DemandSeries {
    let first = group[0];
    let nominal = group
        .iter()
        .filter_map(|t| t.nominal_power_kw)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    let meta = EvseMeta {
        evse_id: first.evse_id.clone(),
        evse_model: first.evse_model.clone(),
        location: first.location,
        nominal_power_kw: nominal,
    };

    let mut values = vec![0.0; n_bins];
    let mut sessions = vec![0u32; n_bins];
    let mut charge_hours = vec![0.0; n_bins];
    let axis_len = sr * n_bins as i64;
    let o = origin.timestamp();

    for tx in group {
        let s = (tx.t_start.timestamp() - o).max(0);
        let e = (tx.t_end.timestamp() - o).min(axis_len);
        if e <= s {
            continue;
        }
        let k0 = (s / sr) as usize;
        let k1 = ((e + sr - 1) / sr) as usize;
        for k in k0..k1 {
            let lo = s.max(k as i64 * sr);
            let hi = e.min((k as i64 + 1) * sr);
            let overlap = hi - lo;
            if overlap <= 0 {
                continue;
            }
            values[k] += tx.avg_power_kw * overlap as f64 / sr as f64;
            sessions[k] += 1;
            charge_hours[k] += overlap as f64 / 3600.0;
        }
    }
    let avg_charge_hours = charge_hours
        .iter()
        .zip(&sessions)
        .map(|(&h, &n)| if n > 0 { h / n as f64 } else { 0.0 })
        .collect();

    DemandSeries {
        meta,
        origin,
        sr_freq_seconds: sr,
        values,
        sessions_per_bin: sessions,
        avg_charge_hours_per_bin: avg_charge_hours,
    }
}

/// Write one series as `bin_start,power_kw,sessions,avg_charge_hours`.
pub fn write_demand_csv<W: Write>(series: &DemandSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_start", "power_kw", "sessions", "avg_charge_hours"])?;
    for k in 0..series.len() {
        w.write_record([
            series.bin_start(k).to_rfc3339_opts(SecondsFormat::Secs, true),
            format!("{}", series.values[k]),
            series.sessions_per_bin[k].to_string(),
            format!("{}", series.avg_charge_hours_per_bin[k]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

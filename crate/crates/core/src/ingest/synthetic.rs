//! Seeded generator of intermittent, lumpy charging transactions for
//! desk-scale experiments.

use std::io::Write;

use chrono::{DateTime, Datelike, Duration, SecondsFormat, TimeZone, Utc, Weekday};
use rand::Rng as _;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::{EnergyTransaction, GeoPoint};
use crate::rng;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnergyProfile {
    Fixed { kwh: f64 },
    /// Heavy-tailed session energies, truncated at `max_kwh`.
    LogNormal { median_kwh: f64, sigma: f64, max_kwh: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticProfile {
    pub start: DateTime<Utc>,
    /// Probability that an EVSE sees no session at all on a given day.
    pub idle_prob: f64,
    /// Arrival hour of each daily session slot.
    pub slot_hours: Vec<f64>,
    /// Probability that a slot is used on Saturdays and Sundays.
    pub weekend_slot_prob: f64,
    /// Uniform arrival jitter, +/- hours.
    pub arrival_jitter_hours: f64,
    pub energy: EnergyProfile,
    /// Fixed session length; when absent the length follows from energy and
    /// a charging rate below the nominal power.
    pub duration_hours: Option<f64>,
    pub n_sites: usize,
    pub site_spread_deg: f64,
    pub nominal_powers_kw: Vec<f64>,
    pub models: Vec<String>,
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        Self {
            start: Utc.with_ymd_and_hms(2018, 1, 1, 0, 0, 0).unwrap(),
            idle_prob: 0.1,
            slot_hours: vec![8.0, 17.0],
            weekend_slot_prob: 0.25,
            arrival_jitter_hours: 1.5,
            energy: EnergyProfile::LogNormal { median_kwh: 12.0, sigma: 0.6, max_kwh: 120.0 },
            duration_hours: None,
            n_sites: 4,
            site_spread_deg: 0.02,
            nominal_powers_kw: vec![7.4, 11.0, 22.0],
            models: vec!["ac-wallbox".into(), "ac-post".into(), "dc-fast".into()],
        }
    }
}

impl SyntheticProfile {
    /// One fixed session per day, every day.
    pub fn daily_fixed(kwh: f64, hours: f64, arrival_hour: f64) -> Self {
        Self {
            idle_prob: 0.0,
            slot_hours: vec![arrival_hour],
            weekend_slot_prob: 1.0,
            arrival_jitter_hours: 0.0,
            energy: EnergyProfile::Fixed { kwh },
            duration_hours: Some(hours),
            ..Self::default()
        }
    }

    /// Two long, well-utilised sessions per day on 11 kW chargers: a strong
    /// daily pattern with moderate energy noise.
    pub fn two_shift() -> Self {
        Self {
            idle_prob: 0.05,
            slot_hours: vec![1.0, 13.0],
            weekend_slot_prob: 1.0,
            arrival_jitter_hours: 0.5,
            energy: EnergyProfile::LogNormal { median_kwh: 70.0, sigma: 0.35, max_kwh: 110.0 },
            duration_hours: Some(10.0),
            nominal_powers_kw: vec![11.0],
            ..Self::default()
        }
    }
}

/// Generate transactions for `n_evse` chargers over `days` days.
///
/// Every produced transaction satisfies the default per-transaction cleaning
/// rules (positive energy of at most 200 kWh, at most 48 h), and sessions on
/// one EVSE never overlap.
pub fn generate_synthetic(n_evse: usize, days: usize, seed: u64, profile: &SyntheticProfile) -> Vec<EnergyTransaction> {
    let mut rng = rng::seeded(seed);
    let n_sites = profile.n_sites.max(1);
    let sites: Vec<GeoPoint> = (0..n_sites)
        .map(|s| GeoPoint::new(56.0 + 0.25 * (s / 3) as f64, -3.0 + 0.25 * (s % 3) as f64))
        .collect();

    let mut out = Vec::new();
    for e in 0..n_evse {
        let site = sites[e % n_sites];
        let location = GeoPoint::new(
            site.lat + rng.random_range(-1.0..1.0) * profile.site_spread_deg,
            site.lon + rng.random_range(-1.0..1.0) * profile.site_spread_deg,
        );
        let nominal = pick(&profile.nominal_powers_kw, &mut rng).unwrap_or(11.0);
        let model = pick(&profile.models, &mut rng).unwrap_or_else(|| "unknown".into());
        // Per-EVSE demand level, so chargers differ in scale.
        let scale = 0.6 + 0.8 * rng.random::<f64>();
        let id = format!("EVSE{e:03}");

        let mut last_end = profile.start - Duration::days(1);
        for day in 0..days {
            let day_start = profile.start + Duration::days(day as i64);
            let idle = rng.random::<f64>() < profile.idle_prob;
            let weekend = matches!(day_start.weekday(), Weekday::Sat | Weekday::Sun);
            for &hour in &profile.slot_hours {
                let used = !weekend || rng.random::<f64>() < profile.weekend_slot_prob;
                let jitter = if profile.arrival_jitter_hours > 0.0 {
                    rng.random_range(-profile.arrival_jitter_hours..profile.arrival_jitter_hours)
                } else {
                    0.0
                };
                let energy = match &profile.energy {
                    EnergyProfile::Fixed { kwh } => *kwh,
                    EnergyProfile::LogNormal { median_kwh, sigma, max_kwh } => {
                        let d = LogNormal::new((median_kwh * scale).ln(), *sigma).expect("valid lognormal");
                        d.sample(&mut rng).clamp(0.5, max_kwh.min(200.0))
                    }
                };
                let rate_fraction = 0.5 + 0.45 * rng.random::<f64>();
                if idle || !used {
                    continue;
                }
                let hours = match profile.duration_hours {
                    Some(h) => h,
                    None => (energy / (nominal * rate_fraction)).min(47.0),
                };
                let mut start = day_start + Duration::seconds(((hour + jitter) * 3600.0).round() as i64);
                if start < last_end {
                    start = last_end + Duration::minutes(15);
                }
                let end = start + Duration::seconds(((hours * 3600.0).round() as i64).max(60));
                last_end = end;
                let tx = EnergyTransaction::new(id.clone(), start, end, energy)
                    .expect("positive duration")
                    .with_model(model.clone())
                    .with_location(location)
                    .with_nominal_power(Some(nominal));
                out.push(tx);
            }
        }
    }
    out
}

fn pick<T: Clone>(items: &[T], rng: &mut rng::Rng) -> Option<T> {
    if items.is_empty() {
        None
    } else {
        Some(items[rng.random_range(0..items.len())].clone())
    }
}

/// Write transactions using the default column names of
/// [`ColumnMap`](super::ColumnMap).
pub fn write_transactions_csv<W: Write>(txs: &[EnergyTransaction], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["evse_id", "start", "end", "energy_kwh", "model", "lat", "lon", "nominal_power_kw"])?;
    for tx in txs {
        w.write_record([
            tx.evse_id.clone(),
            tx.t_start.to_rfc3339_opts(SecondsFormat::Secs, true),
            tx.t_end.to_rfc3339_opts(SecondsFormat::Secs, true),
            format!("{}", tx.energy_kwh),
            tx.evse_model.clone(),
            format!("{}", tx.location.lat),
            format!("{}", tx.location.lon),
            tx.nominal_power_kw.map(|v| format!("{v}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{clean_transactions, parse_transactions, CleaningRules, ColumnMap};

    fn csv_bytes(txs: &[EnergyTransaction]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_transactions_csv(txs, &mut buf).unwrap();
        buf
    }

    #[test]
    fn deterministic_given_seed() {
        let p = SyntheticProfile::default();
        let a = csv_bytes(&generate_synthetic(8, 120, 7, &p));
        let b = csv_bytes(&generate_synthetic(8, 120, 7, &p));
        assert_eq!(a, b);
        let c = csv_bytes(&generate_synthetic(8, 120, 8, &p));
        assert_ne!(a, c);
    }

    #[test]
    fn always_idle_gives_nothing() {
        let p = SyntheticProfile { idle_prob: 1.0, ..Default::default() };
        assert!(generate_synthetic(8, 30, 1, &p).is_empty());
    }

    #[test]
    fn daily_fixed_session_once_per_day() {
        let p = SyntheticProfile::daily_fixed(10.0, 2.0, 9.0);
        let txs = generate_synthetic(3, 50, 3, &p);
        assert_eq!(txs.len(), 3 * 50);
        for e in 0..3 {
            let id = format!("EVSE{e:03}");
            let mine: Vec<_> = txs.iter().filter(|t| t.evse_id == id).collect();
            assert_eq!(mine.len(), 50);
            for (day, t) in mine.iter().enumerate() {
                assert_eq!(t.t_start, p.start + Duration::days(day as i64) + Duration::hours(9));
                assert_eq!(t.avg_power_kw, 5.0);
            }
        }
    }

    #[test]
    fn outputs_pass_cleaning_and_round_trip() {
        let txs = generate_synthetic(8, 120, 7, &SyntheticProfile::default());
        let out = clean_transactions(txs.clone(), &CleaningRules::default());
        assert!(out.dropped.is_empty(), "{:?}", out.report());
        let parsed = parse_transactions(&csv_bytes(&txs)[..], &ColumnMap::default()).unwrap();
        assert!(parsed.rejects.is_empty());
        assert_eq!(parsed.transactions, txs);
    }

    #[test]
    fn sessions_do_not_overlap() {
        let txs = generate_synthetic(4, 60, 11, &SyntheticProfile::default());
        for w in txs.windows(2) {
            if w[0].evse_id == w[1].evse_id {
                assert!(w[1].t_start >= w[0].t_end);
            }
        }
    }
}

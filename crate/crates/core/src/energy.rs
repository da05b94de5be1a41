//! Training-energy accounting: meters, an append-only ledger, and
//! federated versus centralized comparisons with CO₂-equivalent overheads.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const JOULES_PER_KWH: f64 = 3.6e6;
pub const DEFAULT_JOULES_PER_OP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Centralized,
    FedHeavy,
    FedLight,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Centralized => "centralized",
            Phase::FedHeavy => "fed-heavy",
            Phase::FedLight => "fed-light",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Server,
    Client(usize),
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scope::Server => f.write_str("server"),
            Scope::Client(h) => write!(f, "client-{h}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Meter {
    /// Deterministic operation-count proxy.
    Proxy { joules_per_op: f64 },
    /// Elapsed seconds times an assumed device power.
    WallClock { watts: f64 },
}

impl Default for Meter {
    fn default() -> Self {
        Meter::Proxy { joules_per_op: DEFAULT_JOULES_PER_OP }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measurement {
    Operations(u64),
    Seconds(f64),
    Joules(f64),
}

impl Meter {
    pub fn validate(&self) -> Result<()> {
        let v = match self {
            Meter::Proxy { joules_per_op } => *joules_per_op,
            Meter::WallClock { watts } => *watts,
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::config("meter constant must be positive"));
        }
        Ok(())
    }

    pub fn joules(&self, m: Measurement) -> Result<f64> {
        let j = match (self, m) {
            (Meter::Proxy { joules_per_op }, Measurement::Operations(n)) => n as f64 * joules_per_op,
            (Meter::WallClock { watts }, Measurement::Seconds(s)) => s * watts,
            (_, Measurement::Joules(j)) => j,
            (Meter::Proxy { .. }, Measurement::Seconds(_)) => {
                return Err(Error::invalid("proxy meter expects an operation count"))
            }
            (Meter::WallClock { .. }, Measurement::Operations(_)) => {
                return Err(Error::invalid("wall-clock meter expects elapsed seconds"))
            }
        };
        if !(j.is_finite() && j >= 0.0) {
            return Err(Error::invalid(format!("energy measurement must be non-negative, got {j}")));
        }
        Ok(j)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub phase: Phase,
    pub model: String,
    pub scope: Scope,
    pub round: usize,
    pub epoch: usize,
    pub joules: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub meter: Meter,
    entries: Vec<LedgerEntry>,
}

fn stable_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.into_iter().fold(0.0, |acc, v| acc + v)
}

impl EnergyLedger {
    pub fn new(meter: Meter) -> Result<Self> {
        meter.validate()?;
        Ok(Self { meter, entries: Vec::new() })
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn record(
        &mut self,
        model: &str,
        scope: Scope,
        phase: Phase,
        round: usize,
        epoch: usize,
        measurement: Measurement,
    ) -> Result<&LedgerEntry> {
        let joules = self.meter.joules(measurement)?;
        self.entries.push(LedgerEntry { phase, model: model.to_string(), scope, round, epoch, joules });
        Ok(self.entries.last().expect("just pushed"))
    }

    pub fn extend(&mut self, other: &EnergyLedger) {
        self.entries.extend(other.entries.iter().cloned());
    }

    /// Total joules of matching entries, summed in sorted order so the
    /// result does not depend on insertion order.
    pub fn total_where(&self, pred: impl Fn(&LedgerEntry) -> bool) -> f64 {
        stable_sum(self.entries.iter().filter(|e| pred(e)).map(|e| e.joules).collect())
    }

    pub fn total(&self) -> f64 {
        self.total_where(|_| true)
    }

    pub fn total_for(&self, model: &str, phase: Phase) -> f64 {
        self.total_where(|e| e.model == model && e.phase == phase)
    }

    /// Delimited export: `phase,model,scope,round,epoch,joules`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["phase", "model", "scope", "round", "epoch", "joules"])?;
        for e in &self.entries {
            w.write_record([
                e.phase.name().to_string(),
                e.model.clone(),
                e.scope.to_string(),
                e.round.to_string(),
                e.epoch.to_string(),
                format!("{}", e.joules),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `log10(federated / centralized)`.
pub fn log_ratio(fed_joules: f64, central_joules: f64) -> Result<f64> {
    if !(fed_joules > 0.0 && central_joules > 0.0) {
        return Err(Error::invalid("energy totals for a log ratio must be positive"));
    }
    Ok((fed_joules / central_joules).log10())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionFactor {
    /// kg CO₂e per kWh.
    pub kg_per_kwh: f64,
    pub vintage: String,
}

impl EmissionFactor {
    pub fn new(kg_per_kwh: f64, vintage: impl Into<String>) -> Result<Self> {
        if !(kg_per_kwh.is_finite() && kg_per_kwh > 0.0) {
            return Err(Error::config("emission factor must be positive"));
        }
        Ok(Self { kg_per_kwh, vintage: vintage.into() })
    }
}

impl Default for EmissionFactor {
    fn default() -> Self {
        Self { kg_per_kwh: 0.289, vintage: "EU-27 grid 2018".to_string() }
    }
}

/// Grams CO₂e attributable to `delta_kwh` of extra consumption.
pub fn co2_overhead(delta_kwh: f64, ef: &EmissionFactor) -> Result<f64> {
    if !(delta_kwh.is_finite() && delta_kwh >= 0.0) {
        return Err(Error::invalid("energy delta must be non-negative"));
    }
    Ok(delta_kwh * ef.kg_per_kwh * 1000.0)
}

/// Percentage reduction of `light` relative to `heavy`.
pub fn savings_percent(heavy: f64, light: f64) -> Result<f64> {
    if !(heavy > 0.0) || light < 0.0 {
        return Err(Error::invalid("savings need a positive heavy total and non-negative light total"));
    }
    Ok((heavy - light) / heavy * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationRow {
    pub configuration: Phase,
    pub total_joules: f64,
    pub total_kwh: f64,
    /// Mean joules per (client, round) entry; `None` for centralized runs.
    pub per_client_round_joules: Option<f64>,
    pub log_ratio: Option<f64>,
    pub co2_overhead_g: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub model: String,
    pub rows: Vec<ConfigurationRow>,
    pub light_vs_heavy_savings_percent: Option<f64>,
}

/// Compare centralized, heavy and light federated energy per model.
pub fn phase_comparison(central: &EnergyLedger, heavy: &EnergyLedger, light: &EnergyLedger, ef: &EmissionFactor) -> Result<Vec<ModelComparison>> {
    if central.is_empty() || heavy.is_empty() || light.is_empty() {
        return Err(Error::invalid("phase comparison needs three non-empty ledgers"));
    }
    let mut models: Vec<String> =
        [central, heavy, light].iter().flat_map(|l| l.entries.iter().map(|e| e.model.clone())).collect();
    models.sort();
    models.dedup();
    let mut out = Vec::new();
    for model in models {
        let c = central.total_for(&model, Phase::Centralized);
        let mut rows = vec![ConfigurationRow {
            configuration: Phase::Centralized,
            total_joules: c,
            total_kwh: c / JOULES_PER_KWH,
            per_client_round_joules: None,
            log_ratio: None,
            co2_overhead_g: None,
        }];
        let mut fed_totals = Vec::new();
        for (ledger, phase) in [(heavy, Phase::FedHeavy), (light, Phase::FedLight)] {
            let f = ledger.total_for(&model, phase);
            let client_entries: Vec<f64> = ledger
                .entries
                .iter()
                .filter(|e| e.model == model && e.phase == phase && matches!(e.scope, Scope::Client(_)) && e.round > 0)
                .map(|e| e.joules)
                .collect();
            let per = (!client_entries.is_empty()).then(|| stable_sum(client_entries.clone()) / client_entries.len() as f64);
            let ratio = if f > 0.0 && c > 0.0 { Some(log_ratio(f, c)?) } else { None };
            let delta_kwh = ((f - c) / JOULES_PER_KWH).max(0.0);
            rows.push(ConfigurationRow {
                configuration: phase,
                total_joules: f,
                total_kwh: f / JOULES_PER_KWH,
                per_client_round_joules: per,
                log_ratio: ratio,
                co2_overhead_g: Some(co2_overhead(delta_kwh, ef)?),
            });
            fed_totals.push(f);
        }
        let savings = if fed_totals[0] > 0.0 { Some(savings_percent(fed_totals[0], fed_totals[1])?) } else { None };
        out.push(ModelComparison { model, rows, light_vs_heavy_savings_percent: savings });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn meters() {
        let p = Meter::default();
        assert_eq!(p.joules(Measurement::Operations(1_000_000)).unwrap(), 1e-3);
        let w = Meter::WallClock { watts: 50.0 };
        assert_eq!(w.joules(Measurement::Seconds(2.0)).unwrap(), 100.0);
        assert!(w.joules(Measurement::Seconds(-1.0)).is_err());
        assert!(p.joules(Measurement::Seconds(1.0)).is_err());
        assert!(p.joules(Measurement::Joules(f64::NAN)).is_err());
    }

    #[test]
    fn ratios_and_emissions() {
        assert_eq!(log_ratio(5.0, 5.0).unwrap(), 0.0);
        assert!((log_ratio(100.0, 1.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(log_ratio(0.0, 1.0).is_err());
        let ef = EmissionFactor::default();
        assert!((co2_overhead(1.23e-3, &ef).unwrap() - 0.35547).abs() < 1e-12);
        assert_eq!(co2_overhead(0.0, &ef).unwrap(), 0.0);
        assert!(co2_overhead(-1.0, &ef).is_err());
        assert!(EmissionFactor::new(0.0, "x").is_err());
        assert_eq!(savings_percent(2.0, 2.0).unwrap(), 0.0);
    }

    fn ledger(phase: Phase, epochs: usize) -> EnergyLedger {
        let mut l = EnergyLedger::new(Meter::default()).unwrap();
        for round in 1..=3 {
            for hub in 0..2 {
                for epoch in 1..=epochs {
                    l.record("gru", Scope::Client(hub), phase, round, epoch, Measurement::Operations(1_000)).unwrap();
                }
            }
        }
        l
    }

    #[test]
    fn light_cheaper_than_heavy() {
        let mut c = EnergyLedger::new(Meter::default()).unwrap();
        c.record("gru", Scope::Server, Phase::Centralized, 0, 1, Measurement::Operations(500)).unwrap();
        let cmp = phase_comparison(&c, &ledger(Phase::FedHeavy, 5), &ledger(Phase::FedLight, 1), &EmissionFactor::default())
            .unwrap();
        assert_eq!(cmp.len(), 1);
        let heavy = cmp[0].rows[1].total_joules;
        let light = cmp[0].rows[2].total_joules;
        assert!(light < heavy);
        assert!((heavy / light - 5.0).abs() < 1e-12);
        assert!((cmp[0].light_vs_heavy_savings_percent.unwrap() - 80.0).abs() < 1e-9);
        assert!(phase_comparison(&c, &EnergyLedger::new(Meter::default()).unwrap(), &c, &EmissionFactor::default()).is_err());
    }

    #[test]
    fn csv_export() {
        let mut buf = Vec::new();
        ledger(Phase::FedLight, 1).write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("phase,model,scope,round,epoch,joules\n"));
        assert_eq!(s.lines().count(), 7);
        assert!(s.contains("fed-light,gru,client-1,3,1,"));
    }

    proptest! {
        #[test]
        fn totals_permutation_invariant(mut ops in prop::collection::vec(0u64..1_000_000_000, 1..40), seed in any::<u64>()) {
            let build = |ops: &[u64]| {
                let mut l = EnergyLedger::new(Meter::default()).unwrap();
                for (i, o) in ops.iter().enumerate() {
                    l.record("m", Scope::Client(i), Phase::FedHeavy, 1, 1, Measurement::Operations(*o)).unwrap();
                }
                l.total()
            };
            let a = build(&ops);
            use rand::seq::SliceRandom;
            ops.shuffle(&mut crate::rng::seeded(seed));
            prop_assert_eq!(a.to_bits(), build(&ops).to_bits());
        }

        #[test]
        fn co2_linear(a in 0.0f64..10.0, b in 0.0f64..10.0, k in 0.01f64..5.0) {
            let ef = EmissionFactor::default();
            let lhs = co2_overhead(a + b, &ef).unwrap();
            let rhs = co2_overhead(a, &ef).unwrap() + co2_overhead(b, &ef).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs));
            let ef2 = EmissionFactor::new(0.289 * k, "scaled").unwrap();
            prop_assert!((co2_overhead(a, &ef2).unwrap() - k * co2_overhead(a, &ef).unwrap()).abs() <= 1e-12 * (1.0 + a));
        }
    }
}

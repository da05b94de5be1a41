use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::EnergyTransaction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningRules {
    pub max_energy_kwh: f64,
    pub max_duration_hours: f64,
    pub min_transactions_per_evse: usize,
}

impl Default for CleaningRules {
    fn default() -> Self {
        Self {
            max_energy_kwh: 200.0,
            max_duration_hours: 48.0,
            min_transactions_per_evse: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NonFiniteEnergy,
    NonPositiveEnergy,
    EnergyAboveMax,
    DurationAboveMax,
    EvseBelowMinCount,
}

impl DropReason {
    pub fn code(&self) -> &'static str {
        match self {
            DropReason::NonFiniteEnergy => "non_finite_energy",
            DropReason::NonPositiveEnergy => "non_positive_energy",
            DropReason::EnergyAboveMax => "energy_above_max",
            DropReason::DurationAboveMax => "duration_above_max",
            DropReason::EvseBelowMinCount => "evse_below_min_count",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Human-readable forms for the default thresholds.
        let s = match self {
            DropReason::NonFiniteEnergy => "non-finite energy",
            DropReason::NonPositiveEnergy => "energy <= 0 kWh",
            DropReason::EnergyAboveMax => "energy > 200 kWh",
            DropReason::DurationAboveMax => "duration > 48 h",
            DropReason::EvseBelowMinCount => "EVSE below 100 transactions",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CleanOutcome {
    pub kept: Vec<EnergyTransaction>,
    pub dropped: Vec<(EnergyTransaction, DropReason)>,
}

impl CleanOutcome {
    pub fn report(&self) -> CleaningReport {
        let mut by_reason = BTreeMap::new();
        for (_, r) in &self.dropped {
            *by_reason.entry(r.code().to_string()).or_insert(0usize) += 1;
        }
        let mut kept_per_evse = BTreeMap::new();
        for tx in &self.kept {
            *kept_per_evse.entry(tx.evse_id.clone()).or_insert(0usize) += 1;
        }
        CleaningReport {
            input: self.kept.len() + self.dropped.len(),
            kept: self.kept.len(),
            dropped: self.dropped.len(),
            dropped_by_reason: by_reason,
            kept_per_evse,
        }
    }
}

/// Summary of a cleaning pass, serialized into run artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input: usize,
    pub kept: usize,
    pub dropped: usize,
    pub dropped_by_reason: BTreeMap<String, usize>,
    pub kept_per_evse: BTreeMap<String, usize>,
}

/// Drop invalid and outlier transactions, then EVSEs with too few sessions.
///
/// The per-EVSE count filter runs after the per-transaction filters, so the
/// count only includes transactions that are otherwise valid. Input order is
/// preserved in both output lists.
pub fn clean_transactions(txs: Vec<EnergyTransaction>, rules: &CleaningRules) -> CleanOutcome {
    let mut out = CleanOutcome::default();
    let mut survivors = Vec::with_capacity(txs.len());
    for tx in txs {
        match transaction_fault(&tx, rules) {
            Some(reason) => out.dropped.push((tx, reason)),
            None => survivors.push(tx),
        }
    }

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for tx in &survivors {
        *counts.entry(tx.evse_id.as_str()).or_default() += 1;
    }
    let small: std::collections::BTreeSet<String> = counts
        .into_iter()
        .filter(|&(_, n)| n < rules.min_transactions_per_evse)
        .map(|(id, _)| id.to_string())
        .collect();

    for tx in survivors {
        if small.contains(&tx.evse_id) {
            out.dropped.push((tx, DropReason::EvseBelowMinCount));
        } else {
            out.kept.push(tx);
        }
    }
    out
}

fn transaction_fault(tx: &EnergyTransaction, rules: &CleaningRules) -> Option<DropReason> {
    if !tx.energy_kwh.is_finite() || !tx.avg_power_kw.is_finite() {
        Some(DropReason::NonFiniteEnergy)
    } else if tx.energy_kwh <= 0.0 {
        Some(DropReason::NonPositiveEnergy)
    } else if tx.energy_kwh > rules.max_energy_kwh {
        Some(DropReason::EnergyAboveMax)
    } else if tx.duration_hours() > rules.max_duration_hours {
        Some(DropReason::DurationAboveMax)
    } else {
        None
    }
}

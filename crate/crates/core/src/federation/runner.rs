//! Round orchestration: broadcast, local training, aggregation, global
//! validation and early stopping.

use std::io::Write;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::aggregate::{fedavg_aggregate, ClientUpdate};
use crate::rng;
use crate::{Error, Result};

const SELECT_STREAM: u64 = 0x5E1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Strategy {
    FedAvg,
    FedProx { mu: f64 },
}

impl Strategy {
    fn prox_mu(self) -> Option<f64> {
        match self {
            Strategy::FedAvg => None,
            Strategy::FedProx { mu } => Some(mu),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FederationPlan {
    pub rounds: usize,
    pub local_epochs: usize,
    /// Client-side early stopping on local validation loss; `None` always
    /// runs every local epoch.
    pub local_patience: Option<usize>,
    /// Server-side early stopping on the global validation loss.
    pub global_patience: Option<usize>,
    pub strategy: Strategy,
    pub seed: u64,
}

impl Default for FederationPlan {
    fn default() -> Self {
        Self {
            rounds: 50,
            local_epochs: 5,
            local_patience: Some(2),
            global_patience: None,
            strategy: Strategy::FedProx { mu: 0.1 },
            seed: 0,
        }
    }
}

impl FederationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.local_epochs == 0 {
            return Err(Error::config("local epochs must be at least 1"));
        }
        if let Strategy::FedProx { mu } = self.strategy {
            if !(mu.is_finite() && mu >= 0.0) {
                return Err(Error::config("proximal coefficient must be non-negative"));
            }
        }
        if self.local_patience == Some(0) || self.global_patience == Some(0) {
            return Err(Error::config("patience must be positive"));
        }
        Ok(())
    }

    /// More than one local epoch per round is the "heavy" configuration.
    pub fn is_heavy(&self) -> bool {
        self.local_epochs > 1
    }
}

/// One federated participant holding its own data and optimizer state.
pub trait LocalModel: Send {
    fn parameters(&self) -> Vec<f64>;
    fn set_parameters(&mut self, params: &[f64]) -> Result<()>;
    /// One local epoch; `prox` carries the anchor and coefficient of the
    /// proximal term. Returns the mean training loss.
    fn train_epoch(&mut self, prox: Option<(&[f64], f64)>) -> Result<f64>;
    fn validation_loss(&self) -> f64;
    fn n_train(&self) -> usize;
    fn n_valid(&self) -> usize;
    /// Operation estimate for one training epoch.
    fn ops_per_epoch(&self) -> u64;
    /// Operation estimate for one validation pass.
    fn ops_per_validation(&self) -> u64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRecord {
    pub hub: usize,
    pub epochs: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub update_norm: f64,
    pub ops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub clients: Vec<ClientRecord>,
    pub global_valid_loss: f64,
    pub aggregation_ops: u64,
    pub snapshot: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub rounds: Vec<RoundRecord>,
    pub stop_reason: Option<String>,
}

impl RoundLog {
    /// One JSON object per round, newline-delimited.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.rounds {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        if let Some(reason) = &self.stop_reason {
            serde_json::to_writer(&mut out, &serde_json::json!({ "stop_reason": reason }))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationOutcome {
    pub initial_participant: usize,
    pub initial_params: Vec<f64>,
    pub final_params: Vec<f64>,
    pub best_params: Vec<f64>,
    pub best_round: usize,
    pub log: RoundLog,
}

pub fn snapshot_hash(params: &[f64]) -> String {
    let mut h = Sha256::new();
    for p in params {
        h.update(p.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

struct LocalResult {
    params: Vec<f64>,
    record: ClientRecord,
}

fn local_round<C: LocalModel>(c: &mut C, hub: usize, global: &[f64], plan: &FederationPlan) -> Result<LocalResult> {
    c.set_parameters(global)?;
    let prox = plan.strategy.prox_mu().map(|mu| (global, mu));
    let (mut best, mut wait) = (f64::INFINITY, 0);
    let (mut tl, mut vl, mut epochs) = (f64::NAN, f64::NAN, 0);
    let mut ops = 0;
    for _ in 0..plan.local_epochs {
        tl = c.train_epoch(prox)?;
        vl = c.validation_loss();
        epochs += 1;
        ops += c.ops_per_epoch() + c.ops_per_validation();
        if !tl.is_finite() || !vl.is_finite() {
            return Err(Error::Numerical(format!("non-finite local loss after {epochs} epochs")));
        }
        if vl < best {
            best = vl;
            wait = 0;
        } else if let Some(p) = plan.local_patience {
            wait += 1;
            if wait >= p {
                break;
            }
        }
    }
    let params = c.parameters();
    let update_norm = params.iter().zip(global).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(LocalResult { params, record: ClientRecord { hub, epochs, train_loss: tl, valid_loss: vl, update_norm, ops } })
}

/// Run `plan.rounds` rounds with full participation. `clients[i]` is hub `i`.
///
/// The initial global model is the current model of one randomly selected
/// participant. Clients train concurrently; aggregation order is fixed by
/// hub id, so the outcome does not depend on scheduling.
pub fn run_federation<C: LocalModel>(plan: &FederationPlan, clients: &mut [C]) -> Result<FederationOutcome> {
    plan.validate()?;
    if clients.is_empty() {
        return Err(Error::Federation("no participating hubs".into()));
    }
    if clients.iter().all(|c| c.n_train() == 0) {
        return Err(Error::Federation("every hub has an empty training set".into()));
    }
    let initial_participant = rng::seeded(rng::derive(plan.seed, SELECT_STREAM)).random_range(0..clients.len());
    let initial_params = clients[initial_participant].parameters();
    let mut global = initial_params.clone();
    let mut best_params = global.clone();
    let (mut best_loss, mut best_round, mut wait) = (f64::INFINITY, 0, 0);
    let mut log = RoundLog::default();

    for round in 1..=plan.rounds {
        let results: Vec<Result<LocalResult>> = clients
            .par_iter_mut()
            .enumerate()
            .map(|(hub, c)| {
                if c.n_train() == 0 {
                    c.set_parameters(&global)?;
                    let record = ClientRecord {
                        hub,
                        epochs: 0,
                        train_loss: 0.0,
                        valid_loss: c.validation_loss(),
                        update_norm: 0.0,
                        ops: 0,
                    };
                    return Ok(LocalResult { params: global.clone(), record });
                }
                local_round(c, hub, &global, plan)
            })
            .collect();
        let mut updates = Vec::with_capacity(clients.len());
        let mut records = Vec::with_capacity(clients.len());
        for (hub, r) in results.into_iter().enumerate() {
            let r = r.map_err(|e| Error::Federation(format!("round {round}, hub {hub}: {e}")))?;
            updates.push(ClientUpdate { hub, params: r.params, weight: clients[hub].n_train() as f64 });
            records.push(r.record);
        }
        global = fedavg_aggregate(&updates)?;
        let aggregation_ops = (updates.len() * global.len() * 3) as u64;

        let mut num = 0.0;
        let mut den = 0.0;
        for c in clients.iter_mut() {
            c.set_parameters(&global)?;
            let w = c.n_valid() as f64;
            if w > 0.0 {
                num += w * c.validation_loss();
                den += w;
            }
        }
        let global_loss = if den > 0.0 {
            num / den
        } else {
            let w: f64 = records.iter().map(|r| clients[r.hub].n_train() as f64).sum();
            records.iter().map(|r| clients[r.hub].n_train() as f64 * r.train_loss).sum::<f64>() / w
        };
        if !global_loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite global validation loss in round {round}")));
        }
        log.rounds.push(RoundRecord {
            round,
            clients: records,
            global_valid_loss: global_loss,
            aggregation_ops,
            snapshot: snapshot_hash(&global),
        });

        if global_loss < best_loss {
            best_loss = global_loss;
            best_params.copy_from_slice(&global);
            best_round = round;
            wait = 0;
        } else if let Some(p) = plan.global_patience {
            wait += 1;
            if wait >= p {
                log.stop_reason = Some(format!("no global validation improvement for {p} rounds"));
                break;
            }
        }
    }
    Ok(FederationOutcome { initial_participant, initial_params, final_params: global, best_params, best_round, log })
}

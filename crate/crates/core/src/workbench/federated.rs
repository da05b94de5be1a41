use std::collections::BTreeMap;

use log::info;

use super::centralized::init_rnn;
use super::config::ExperimentConfig;
use super::data::{hub_members, tabular_rows, Prepared};
use super::models::{pooled_sequences, rnn_rows_train, rnn_rows_valid, Trained};
use crate::energy::{EnergyLedger, Measurement, Phase, Scope};
use crate::error::StageExt;
use crate::features::{FeatureFrame, FeatureMask, LAG_WARMUP};
use crate::federation::{
    cluster_hubs, fedxgb_fit, run_federation, FedXgbPlan, FederationPlan, HubAssignment, HubTabular, RnnClient, RoundLog,
};
use crate::forecasters::{ModelFamily, RnnTrainer};
use crate::metrics::MetricsReport;
use crate::Result;

#[derive(Debug, Clone)]
pub struct FederatedModelRun {
    pub family: ModelFamily,
    pub trained: Trained,
    pub report: MetricsReport,
    pub per_hub: BTreeMap<usize, MetricsReport>,
    pub log: RoundLog,
    pub initial_participant: usize,
    pub best_round: usize,
}

#[derive(Debug, Clone)]
pub struct FederatedRun {
    pub prepared: Prepared,
    pub hubs: HubAssignment,
    pub phase: Phase,
    pub models: Vec<FederatedModelRun>,
    /// Roster families trained per EVSE only and therefore not federated.
    pub skipped: Vec<ModelFamily>,
    pub ledger: EnergyLedger,
}

impl FederatedRun {
    pub fn model(&self, family: ModelFamily) -> Option<&FederatedModelRun> {
        self.models.iter().find(|m| m.family == family)
    }
}

fn record_rounds(ledger: &mut EnergyLedger, model: &str, phase: Phase, log: &RoundLog) -> Result<()> {
    for r in &log.rounds {
        for c in &r.clients {
            ledger.record(model, Scope::Client(c.hub), phase, r.round, c.epochs, Measurement::Operations(c.ops))?;
        }
        ledger.record(model, Scope::Server, phase, r.round, 0, Measurement::Operations(r.aggregation_ops))?;
    }
    Ok(())
}

pub fn run_federated(cfg: &ExperimentConfig) -> Result<FederatedRun> {
    let prep = Prepared::from_config(cfg)?;
    run_federated_on(cfg, prep)
}

/// Cluster EVSEs into hubs, federate every recurrent and tree family of
/// the roster, and score the global models per EVSE and per hub. The
/// top-level seed drives every plan.
pub fn run_federated_on(cfg: &ExperimentConfig, prep: Prepared) -> Result<FederatedRun> {
    let hubs = cluster_hubs(&prep.locations(), cfg.hubs, cfg.seed).stage("cluster")?;
    let members = hub_members(&hubs.hub_of, hubs.k);
    let hub_frames: Vec<Vec<&FeatureFrame>> =
        members.iter().map(|ids| ids.iter().filter_map(|id| prep.frame(id)).collect()).collect();
    let plan = FederationPlan { seed: cfg.seed, ..cfg.federation.clone() };
    let phase = if plan.is_heavy() { Phase::FedHeavy } else { Phase::FedLight };
    let mut ledger = EnergyLedger::new(cfg.meter)?;
    let mut models = Vec::new();
    let mut skipped = Vec::new();

    for &family in &cfg.roster {
        let (trained, log, initial_participant, best_round) = match family {
            ModelFamily::SeasonalNaive | ModelFamily::Arx => {
                skipped.push(family);
                continue;
            }
            ModelFamily::Gbt => {
                info!("federated: FedXGBllr over {} hubs", hubs.k);
                let xplan = FedXgbPlan { seed: cfg.seed, strategy: plan.strategy, ..cfg.fedxgb.clone() };
                let mask = FeatureMask::gbt();
                let data: Vec<HubTabular> = hub_frames
                    .iter()
                    .enumerate()
                    .map(|(hub, fs)| HubTabular {
                        hub,
                        train: tabular_rows(fs.iter().copied(), &mask, |f| prep.train_rows(f, LAG_WARMUP)),
                        valid: tabular_rows(fs.iter().copied(), &mask, |f| prep.valid_rows(f, LAG_WARMUP)),
                    })
                    .collect();
                let out = fedxgb_fit(&data, &cfg.gbt, &xplan).stage("federate")?;
                for (hub, m) in out.client_models.iter().enumerate() {
                    ledger.record(family.name(), Scope::Client(hub), phase, 0, 1, Measurement::Operations(m.fit_info.ops))?;
                }
                record_rounds(&mut ledger, family.name(), phase, &out.federation.log)?;
                (Trained::FedXgb(out.model), out.federation.log, out.federation.initial_participant, out.federation.best_round)
            }
            _ => {
                info!("federated: {family} over {} hubs, {} rounds x {} epochs", hubs.k, plan.rounds, plan.local_epochs);
                let init = init_rnn(cfg, &prep, family)?;
                let seq = init.config.sequence_length;
                let mut clients: Vec<RnnClient> = hub_frames
                    .iter()
                    .map(|fs| RnnClient {
                        trainer: RnnTrainer::new(init.clone(), cfg.seed),
                        train: pooled_sequences(fs.iter().copied(), rnn_rows_train(&prep, seq), &init),
                        valid: pooled_sequences(fs.iter().copied(), rnn_rows_valid(&prep, seq), &init),
                    })
                    .collect();
                let out = run_federation(&plan, &mut clients).stage("federate")?;
                record_rounds(&mut ledger, family.name(), phase, &out.log)?;
                let mut model = init;
                model.params = out.best_params.clone();
                model.fit_info.epochs = out.log.rounds.len();
                model.fit_info.best_epoch = out.best_round;
                model.fit_info.valid_losses = out.log.rounds.iter().map(|r| r.global_valid_loss).collect();
                (Trained::Rnn(model), out.log, out.initial_participant, out.best_round)
            }
        };
        let report = trained.evaluate(&prep, &prep.frames, cfg.seasonal_lag).stage("evaluate")?;
        let mut per_hub = BTreeMap::new();
        for (hub, fs) in hub_frames.iter().enumerate() {
            per_hub.insert(hub, trained.evaluate(&prep, fs.iter().copied(), cfg.seasonal_lag).stage("evaluate")?);
        }
        models.push(FederatedModelRun { family, trained, report, per_hub, log, initial_participant, best_round });
    }
    Ok(FederatedRun { prepared: prep, hubs, phase, models, skipped, ledger })
}

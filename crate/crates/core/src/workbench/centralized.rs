use std::collections::BTreeMap;

use log::info;

use super::config::ExperimentConfig;
use super::data::{tabular_rows, Prepared};
use super::models::{fit_arx_for, pooled_sequences, rnn_rows_train, rnn_rows_valid, Trained};
use crate::energy::{EnergyLedger, Measurement, Phase, Scope};
use crate::error::StageExt;
use crate::features::{FeatureMask, LAG_WARMUP};
use crate::forecasters::{fit_gbt, fit_rnn, FitInfo, ModelFamily, RnnConfig, RnnModel};
use crate::metrics::MetricsReport;
use crate::Result;

#[derive(Debug, Clone)]
pub struct ModelRun {
    pub family: ModelFamily,
    pub trained: Trained,
    pub report: MetricsReport,
    pub fit_info: FitInfo,
}

#[derive(Debug, Clone)]
pub struct CentralizedRun {
    pub prepared: Prepared,
    pub models: Vec<ModelRun>,
    pub ledger: EnergyLedger,
}

impl CentralizedRun {
    pub fn model(&self, family: ModelFamily) -> Option<&ModelRun> {
        self.models.iter().find(|m| m.family == family)
    }
}

/// Initial recurrent model for `family` with vocabularies from the run.
pub fn init_rnn(cfg: &ExperimentConfig, prep: &Prepared, family: ModelFamily) -> Result<RnnModel> {
    let (cell, bidirectional) = family.rnn_shape().expect("recurrent family");
    let rcfg = RnnConfig { cell, bidirectional, ..cfg.rnn.clone() };
    let (loc, models) = prep.vocabularies();
    RnnModel::init(rcfg, FeatureMask::rnn().len(), loc, models, cfg.seed)
}

/// Fit one family on pooled training data (ARX per EVSE).
pub fn fit_family(cfg: &ExperimentConfig, prep: &Prepared, family: ModelFamily) -> Result<(Trained, FitInfo)> {
    match family {
        ModelFamily::SeasonalNaive => Ok((Trained::SeasonalNaive { lag: cfg.seasonal_lag }, FitInfo::default())),
        ModelFamily::Arx => {
            let mut models = BTreeMap::new();
            let mut info = FitInfo::default();
            for f in &prep.frames {
                let m = fit_arx_for(prep, f, &cfg.arx)?;
                info.ops += m.fit_info.ops;
                info.warnings.extend(m.fit_info.warnings.iter().map(|w| format!("{}: {w}", f.evse_id)));
                models.insert(f.evse_id.clone(), m);
            }
            info.epochs = 1;
            Ok((Trained::Arx(models), info))
        }
        ModelFamily::Gbt => {
            let data = tabular_rows(&prep.frames, &FeatureMask::gbt(), |f| prep.train_rows(f, LAG_WARMUP));
            let m = fit_gbt(&data, &cfg.gbt, cfg.seed)?;
            let info = m.fit_info.clone();
            Ok((Trained::Gbt(m), info))
        }
        _ => {
            let init = init_rnn(cfg, prep, family)?;
            let seq = init.config.sequence_length;
            let train = pooled_sequences(&prep.frames, rnn_rows_train(prep, seq), &init);
            let valid = pooled_sequences(&prep.frames, rnn_rows_valid(prep, seq), &init);
            let m = fit_rnn(&train, &valid, init, cfg.seed)?;
            let info = m.fit_info.clone();
            Ok((Trained::Rnn(m), info))
        }
    }
}

pub fn run_centralized(cfg: &ExperimentConfig) -> Result<CentralizedRun> {
    let prep = Prepared::from_config(cfg)?;
    run_centralized_on(cfg, prep)
}

/// Fit every roster family on already prepared data and score it on the
/// test block of each EVSE.
pub fn run_centralized_on(cfg: &ExperimentConfig, prep: Prepared) -> Result<CentralizedRun> {
    let mut ledger = EnergyLedger::new(cfg.meter)?;
    let mut models = Vec::new();
    for &family in &cfg.roster {
        info!("centralized: fitting {family} on {} EVSEs", prep.frames.len());
        let (trained, fit_info) = fit_family(cfg, &prep, family).stage("fit")?;
        if fit_info.ops > 0 {
            ledger.record(
                family.name(),
                Scope::Server,
                Phase::Centralized,
                0,
                fit_info.epochs,
                Measurement::Operations(fit_info.ops),
            )?;
        }
        let report = trained.evaluate(&prep, &prep.frames, cfg.seasonal_lag).stage("evaluate")?;
        if let Some(m) = report.median("mase") {
            info!("centralized: {family} median MASE {m:.4}");
        }
        models.push(ModelRun { family, trained, report, fit_info });
    }
    Ok(CentralizedRun { prepared: prep, models, ledger })
}

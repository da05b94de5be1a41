use std::collections::BTreeMap;

use super::data::{rnn_warmup, sequence_samples, Prepared};
use crate::features::{FeatureFrame, FeatureMask};
use crate::federation::FedXgbModel;
use crate::forecasters::{
    fit_arx, ArxConfig, ArxModel, Exog, ForecastModel, GbtModel, ModelContainer, ModelFamily, RnnModel,
};
use crate::metrics::{quantile_report, EvseMetrics, MetricsReport};
use crate::{Error, Result};

/// A fitted model able to forecast the next bin for any EVSE of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum Trained {
    SeasonalNaive { lag: usize },
    /// One model per EVSE id.
    Arx(BTreeMap<String, ArxModel>),
    Gbt(GbtModel),
    FedXgb(FedXgbModel),
    Rnn(RnnModel),
}

/// Exogenous rows aligned with targets: row `t` holds the features of bin
/// `t − 1`, the latest information available when forecasting bin `t`.
pub fn aligned_exog(f: &FeatureFrame, mask: &FeatureMask, len: usize) -> Vec<f64> {
    (0..len).flat_map(|t| f.masked_row(t.saturating_sub(1), mask)).collect()
}

pub fn normalized_demand(f: &FeatureFrame) -> Vec<f64> {
    f.demand_kw.iter().map(|v| v / f.nominal_kw).collect()
}

/// Per-EVSE ARX on the training block; the order is capped at a quarter of
/// the training length.
pub fn fit_arx_for(prep: &Prepared, f: &FeatureFrame, cfg: &ArxConfig) -> Result<ArxModel> {
    let n = prep.split.train_end;
    let order = cfg.order.min(n / 4).max(1);
    let cfg = ArxConfig { order, ..cfg.clone() };
    let y = normalized_demand(f);
    let ex = aligned_exog(f, &cfg.exogenous, n);
    fit_arx(&y[..n], Exog { data: &ex, width: cfg.exogenous.len() }, &cfg)
        .map_err(|e| Error::invalid(format!("ARX for {}: {e}", f.evse_id)))
}

impl Trained {
    pub fn family(&self) -> ModelFamily {
        match self {
            Trained::SeasonalNaive { .. } => ModelFamily::SeasonalNaive,
            Trained::Arx(_) => ModelFamily::Arx,
            Trained::Gbt(_) | Trained::FedXgb(_) => ModelFamily::Gbt,
            Trained::Rnn(m) => m.family(),
        }
    }

    /// kW forecasts of bin `k + 1` for each row `k`, clipped at zero.
    pub fn forecast_kw(&self, f: &FeatureFrame, rows: &[usize]) -> Result<Vec<f64>> {
        let raw: Vec<f64> = match self {
            Trained::SeasonalNaive { lag } => rows
                .iter()
                .map(|&k| {
                    (k + 1).checked_sub(*lag).map(|t| f.demand_kw[t]).ok_or_else(|| {
                        Error::invalid(format!("bin {} precedes the seasonal lag {lag}", k + 1))
                    })
                })
                .collect::<Result<_>>()?,
            Trained::Arx(models) => {
                let m = models
                    .get(&f.evse_id)
                    .ok_or_else(|| Error::invalid(format!("no ARX model for EVSE {}", f.evse_id)))?;
                let y = normalized_demand(f);
                let ex = aligned_exog(f, &m.config.exogenous, y.len());
                let exog = Exog { data: &ex, width: m.n_exog };
                rows.iter()
                    .map(|&k| m.raw_forecast(&y, exog, k + 1).map(|v| v * f.nominal_kw))
                    .collect::<Result<_>>()?
            }
            Trained::Gbt(m) => {
                let mask = FeatureMask::gbt();
                if mask.len() != m.n_features {
                    return Err(Error::Shape { expected: m.n_features, actual: mask.len() });
                }
                rows.iter().map(|&k| m.predict_row_normalized(&f.masked_row(k, &mask)) * f.nominal_kw).collect()
            }
            Trained::FedXgb(m) => {
                let mask = FeatureMask::gbt();
                if mask.len() != m.ensemble.n_features {
                    return Err(Error::Shape { expected: m.ensemble.n_features, actual: mask.len() });
                }
                rows.iter().map(|&k| m.predict_row_normalized(&f.masked_row(k, &mask)) * f.nominal_kw).collect()
            }
            Trained::Rnn(m) => {
                let vocab = (m.locations.clone(), m.models.clone());
                let seq = m.config.sequence_length;
                if rows.iter().any(|&k| k + 1 < seq) {
                    return Err(Error::invalid(format!("row precedes the {seq}-step input window")));
                }
                let samples = sequence_samples(f, rows, seq, &vocab);
                m.predict(&samples)?.into_iter().map(|v| v * f.nominal_kw).collect()
            }
        };
        if let Some(bad) = raw.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite forecast {bad} for {}", f.evse_id)));
        }
        Ok(raw.into_iter().map(|v| v.max(0.0)).collect())
    }

    /// Test-block metrics for the given EVSEs.
    pub fn evaluate<'a>(
        &self,
        prep: &Prepared,
        frames: impl IntoIterator<Item = &'a FeatureFrame>,
        seasonal_lag: usize,
    ) -> Result<MetricsReport> {
        let mut per = Vec::new();
        for f in frames {
            let rows = prep.test_rows(f);
            let y: Vec<f64> = rows.iter().map(|k| f.demand_kw[k + 1]).collect();
            let yhat = self.forecast_kw(f, &rows)?;
            per.push(EvseMetrics::compute(&f.evse_id, &y, &yhat, prep.train_demand(f), seasonal_lag)?);
        }
        Ok(quantile_report(per))
    }

    /// Model files keyed by relative name.
    pub fn containers(&self, prep: &Prepared) -> Vec<(String, ModelContainer)> {
        let spec = Some(prep.spec.clone());
        match self {
            Trained::SeasonalNaive { lag } => vec![(
                "seasonal-naive".into(),
                ModelContainer::new(ForecastModel::SeasonalNaive { lag: *lag }, FeatureMask(vec![]), spec),
            )],
            Trained::Arx(models) => models
                .iter()
                .map(|(id, m)| {
                    let c = ModelContainer::new(ForecastModel::Arx(m.clone()), m.config.exogenous.clone(), spec.clone())
                        .for_evse(id.clone());
                    (format!("arx-{id}"), c)
                })
                .collect(),
            Trained::Gbt(m) => {
                vec![("gbt".into(), ModelContainer::new(ForecastModel::Gbt(m.clone()), FeatureMask::gbt(), spec))]
            }
            Trained::FedXgb(m) => vec![(
                "gbt-fedxgb".into(),
                ModelContainer::new(ForecastModel::FedXgb(m.clone()), FeatureMask::gbt(), spec),
            )],
            Trained::Rnn(m) => vec![(
                m.family().name().to_string(),
                ModelContainer::new(ForecastModel::Rnn(m.clone()), FeatureMask::rnn(), spec),
            )],
        }
    }

    /// Rebuild from one or more containers of the same family.
    pub fn from_containers(containers: Vec<ModelContainer>) -> Result<Self> {
        let mut arx = BTreeMap::new();
        let mut single = None;
        for c in containers {
            match c.model {
                ForecastModel::Arx(m) => {
                    let id = c.evse_id.ok_or_else(|| Error::config("ARX model file lacks an EVSE id"))?;
                    arx.insert(id, m);
                }
                ForecastModel::SeasonalNaive { lag } => single = Some(Trained::SeasonalNaive { lag }),
                ForecastModel::Gbt(m) => single = Some(Trained::Gbt(m)),
                ForecastModel::FedXgb(m) => single = Some(Trained::FedXgb(m)),
                ForecastModel::Rnn(m) => single = Some(Trained::Rnn(m)),
            }
        }
        match (single, arx.is_empty()) {
            (Some(t), true) => Ok(t),
            (None, false) => Ok(Trained::Arx(arx)),
            (None, true) => Err(Error::config("no model files given")),
            (Some(_), false) => Err(Error::config("model files mix families")),
        }
    }
}

/// Recurrent samples for every frame, in frame order.
pub fn pooled_sequences<'a>(
    frames: impl IntoIterator<Item = &'a FeatureFrame>,
    rows: impl Fn(&FeatureFrame) -> Vec<usize>,
    m: &RnnModel,
) -> Vec<crate::forecasters::SequenceSample> {
    let vocab = (m.locations.clone(), m.models.clone());
    frames
        .into_iter()
        .flat_map(|f| sequence_samples(f, &rows(f), m.config.sequence_length, &vocab))
        .collect()
}

pub fn rnn_rows_train(prep: &Prepared, seq_len: usize) -> impl Fn(&FeatureFrame) -> Vec<usize> + '_ {
    let w = rnn_warmup(seq_len);
    move |f| prep.train_rows(f, w)
}

pub fn rnn_rows_valid(prep: &Prepared, seq_len: usize) -> impl Fn(&FeatureFrame) -> Vec<usize> + '_ {
    let w = rnn_warmup(seq_len);
    move |f| prep.valid_rows(f, w)
}

//! Shared ingest → features path used by every pipeline.

use std::collections::BTreeMap;

use chrono::Duration;

use super::config::{DataSource, ExperimentConfig};
use crate::error::StageExt;
use crate::features::{build_feature_frame, FeatureColumn, FeatureFrame, FeatureMask, NormalizationSpec, LAG_WARMUP};
use crate::forecasters::{SequenceSample, Tabular, Vocabulary};
use crate::ingest::{
    clean_transactions, common_origin, generate_synthetic, parse_transactions, resample_demand, split_temporal,
    CleaningReport, DemandSeries, EnergyTransaction, GeoPoint, Reject, TemporalSplit,
};
use crate::{Error, Result};

/// Cleaned, resampled, split and featurized data for one experiment.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub series: Vec<DemandSeries>,
    pub split: TemporalSplit,
    pub spec: NormalizationSpec,
    pub frames: Vec<FeatureFrame>,
    pub cleaning: CleaningReport,
    pub rejects: Vec<Reject>,
}

pub fn load_transactions(cfg: &ExperimentConfig) -> Result<(Vec<EnergyTransaction>, Vec<Reject>)> {
    match &cfg.data {
        DataSource::Synthetic { n_evse, days, profile } => Ok((generate_synthetic(*n_evse, *days, cfg.seed, profile), Vec::new())),
        DataSource::File { path, columns } => {
            let f = std::fs::File::open(path)
                .map_err(|e| Error::config(format!("cannot open transactions {}: {e}", path.display())))?;
            let out = parse_transactions(std::io::BufReader::new(f), columns)?;
            Ok((out.transactions, out.rejects))
        }
    }
}

pub fn location_key(p: &GeoPoint) -> String {
    format!("{:.6},{:.6}", p.lat, p.lon)
}

impl Prepared {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let (txs, rejects) = load_transactions(cfg).stage("ingest")?;
        Self::from_transactions(cfg, txs, rejects)
    }

    pub fn from_transactions(cfg: &ExperimentConfig, txs: Vec<EnergyTransaction>, rejects: Vec<Reject>) -> Result<Self> {
        let cleaned = clean_transactions(txs, &cfg.cleaning);
        let cleaning = cleaned.report();
        if cleaned.kept.is_empty() {
            return Err(Error::invalid("no transactions survive cleaning")).stage("clean");
        }
        let origin = common_origin(&cleaned.kept).expect("non-empty");
        let freq = Duration::seconds((cfg.sr_freq_hours * 3600.0) as i64);
        let series = resample_demand(&cleaned.kept, origin, freq).stage("resample")?;
        let len = series[0].len();
        let split = split_temporal(len, cfg.split).stage("split")?;
        let spec = NormalizationSpec::fit(&series, &split).stage("normalize")?;
        let frames = series
            .iter()
            .map(|s| build_feature_frame(s, &spec, &cfg.features))
            .collect::<Result<Vec<_>>>()
            .stage("features")?;
        Ok(Self { series, split, spec, frames, cleaning, rejects })
    }

    pub fn evse_ids(&self) -> Vec<String> {
        self.frames.iter().map(|f| f.evse_id.clone()).collect()
    }

    pub fn frame(&self, evse_id: &str) -> Option<&FeatureFrame> {
        self.frames.iter().find(|f| f.evse_id == evse_id)
    }

    pub fn locations(&self) -> Vec<(String, GeoPoint)> {
        self.frames.iter().map(|f| (f.evse_id.clone(), f.location)).collect()
    }

    /// Rows whose target lies in the training block.
    pub fn train_rows(&self, f: &FeatureFrame, warmup: usize) -> Vec<usize> {
        f.rows_with_target_in(self.split.train(), warmup)
    }

    pub fn valid_rows(&self, f: &FeatureFrame, warmup: usize) -> Vec<usize> {
        f.rows_with_target_in(self.split.valid(), warmup)
    }

    /// Every row whose target lies in the test block (no warmup cut).
    pub fn test_rows(&self, f: &FeatureFrame) -> Vec<usize> {
        f.rows_with_target_in(self.split.test(), 0)
    }

    /// Raw training demand (kW), the scaling reference for MASE.
    pub fn train_demand<'a>(&self, f: &'a FeatureFrame) -> &'a [f64] {
        &f.demand_kw[..self.split.train_end]
    }

    pub fn vocabularies(&self) -> (Vocabulary, Vocabulary) {
        (
            Vocabulary::from_values(self.frames.iter().map(|f| location_key(&f.location))),
            Vocabulary::from_values(self.frames.iter().map(|f| f.evse_model.clone())),
        )
    }
}

/// Pool `rows(frame)` of the given frames into one table.
pub fn tabular_rows<'a>(
    frames: impl IntoIterator<Item = &'a FeatureFrame>,
    mask: &FeatureMask,
    rows: impl Fn(&FeatureFrame) -> Vec<usize>,
) -> Tabular {
    let mut t = Tabular::new(mask.len());
    for f in frames {
        for k in rows(f) {
            t.push(&f.masked_row(k, mask), f.target[k]).expect("mask width");
        }
    }
    t
}

/// Recurrent samples ending at each row in `rows`.
pub fn sequence_samples(
    f: &FeatureFrame,
    rows: &[usize],
    seq_len: usize,
    vocab: &(Vocabulary, Vocabulary),
) -> Vec<SequenceSample> {
    let mask = FeatureMask::rnn();
    let location = vocab.0.index(&location_key(&f.location));
    let model = vocab.1.index(&f.evse_model);
    rows.iter()
        .filter(|&&k| k + 1 >= seq_len)
        .map(|&k| SequenceSample {
            inputs: (k + 1 - seq_len..=k).flat_map(|j| f.masked_row(j, &mask)).collect(),
            location,
            model,
            nominal: f.value(k, FeatureColumn::NominalPowerNorm),
            target: f.target[k],
        })
        .collect()
}

/// Warmup for recurrent windows: enough rows for both the lags and the window.
pub fn rnn_warmup(seq_len: usize) -> usize {
    LAG_WARMUP.max(seq_len.saturating_sub(1))
}

/// Group EVSE ids by hub.
pub fn hub_members(hub_of: &BTreeMap<String, usize>, k: usize) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new(); k];
    for (id, h) in hub_of {
        out[*h].push(id.clone());
    }
    out
}

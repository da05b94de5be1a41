//! Recurrent forecasters (GRU/LSTM, optionally bidirectional) with
//! location and model embeddings joined at the dense layer.

mod network;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::optim::{add_proximal, Adam, AdamConfig};
use super::pinball::PinballConfig;
use super::{FitInfo, ModelFamily, ParameterLayout};
use crate::rng::{self, Rng};
use crate::{Error, Result};
use network::Net;

const INIT_STREAM: u64 = 0x11;
const TRAIN_STREAM: u64 = 0x22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Gru,
    Lstm,
}

impl CellKind {
    pub fn gates(self) -> usize {
        match self {
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RnnConfig {
    pub cell: CellKind,
    pub bidirectional: bool,
    pub hidden: usize,
    pub location_embedding: usize,
    pub model_embedding: usize,
    pub dropout: f64,
    pub dense: usize,
    pub output: usize,
    pub sequence_length: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam: AdamConfig,
    pub alpha: PinballConfig,
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self {
            cell: CellKind::Gru,
            bidirectional: false,
            hidden: 12,
            location_embedding: 15,
            model_embedding: 3,
            dropout: 0.13,
            dense: 12,
            output: 1,
            sequence_length: 48,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            adam: AdamConfig::default(),
            alpha: PinballConfig::default(),
        }
    }
}

impl RnnConfig {
    pub fn for_family(family: ModelFamily) -> Option<Self> {
        let (cell, bidirectional) = family.rnn_shape()?;
        Some(Self { cell, bidirectional, ..Self::default() })
    }

    pub fn family(&self) -> ModelFamily {
        match (self.cell, self.bidirectional) {
            (CellKind::Gru, false) => ModelFamily::Gru,
            (CellKind::Lstm, false) => ModelFamily::Lstm,
            (CellKind::Gru, true) => ModelFamily::BiGru,
            (CellKind::Lstm, true) => ModelFamily::BiLstm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.hidden,
            self.location_embedding,
            self.model_embedding,
            self.dense,
            self.sequence_length,
            self.batch_size,
            self.patience,
        ];
        if dims.contains(&0) {
            return Err(Error::config("recurrent network dimensions must be positive"));
        }
        if self.output != 1 {
            return Err(Error::config("only one-step-ahead output (output = 1) is supported"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must lie in [0, 1)"));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Categorical vocabulary; index 0 is reserved for unseen values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub entries: Vec<String>,
}

impl Vocabulary {
    /// Sorted, de-duplicated vocabulary.
    pub fn from_values<I: IntoIterator<Item = String>>(values: I) -> Self {
        let mut entries: Vec<String> = values.into_iter().collect();
        entries.sort();
        entries.dedup();
        Self { entries }
    }

    pub fn index(&self, value: &str) -> usize {
        self.entries.binary_search_by(|e| e.as_str().cmp(value)).map_or(0, |i| i + 1)
    }

    /// Embedding rows including the unknown slot.
    pub fn size(&self) -> usize {
        self.entries.len() + 1
    }
}

/// One training or prediction example: a window of per-step inputs and
/// the normalized next-bin target.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    /// `sequence_length × d_in`, oldest step first.
    pub inputs: Vec<f64>,
    pub location: usize,
    pub model: usize,
    pub nominal: f64,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnModel {
    pub config: RnnConfig,
    pub d_in: usize,
    pub locations: Vocabulary,
    pub models: Vocabulary,
    pub params: Vec<f64>,
    pub fit_info: FitInfo,
}

impl RnnModel {
    /// Freshly initialized model.
    pub fn init(config: RnnConfig, d_in: usize, locations: Vocabulary, models: Vocabulary, seed: u64) -> Result<Self> {
        config.validate()?;
        if d_in == 0 {
            return Err(Error::config("recurrent input width must be positive"));
        }
        let net = Net::new(&config, d_in, locations.size(), models.size());
        let params = net.init(&mut rng::seeded(rng::derive(seed, INIT_STREAM)));
        Ok(Self { config, d_in, locations, models, params, fit_info: FitInfo::default() })
    }

    fn net(&self) -> Net {
        Net::new(&self.config, self.d_in, self.locations.size(), self.models.size())
    }

    pub fn family(&self) -> ModelFamily {
        self.config.family()
    }

    pub fn layout(&self) -> ParameterLayout {
        self.net().layout()
    }

    /// Number of parameters in the recurrent cells (all directions).
    pub fn recurrent_parameter_count(&self) -> usize {
        self.net().recurrent_len()
    }

    pub fn check_sample(&self, s: &SequenceSample) -> Result<()> {
        let want = self.config.sequence_length * self.d_in;
        if s.inputs.len() != want {
            return Err(Error::Shape { expected: want, actual: s.inputs.len() });
        }
        Ok(())
    }

    /// Normalized one-step forecasts (dropout off).
    pub fn predict(&self, samples: &[SequenceSample]) -> Result<Vec<f64>> {
        let net = self.net();
        samples
            .iter()
            .map(|s| {
                self.check_sample(s)?;
                Ok(net.predict(&self.params, s))
            })
            .collect()
    }

    /// Mean pinball loss with dropout off.
    pub fn loss(&self, samples: &[SequenceSample]) -> f64 {
        mean_loss(&self.net(), &self.params, samples, self.config.alpha.alpha())
    }

    /// Mean pinball loss and its gradient, with optional fixed dropout masks.
    pub fn loss_and_gradient(&self, samples: &[SequenceSample], masks: Option<&[Vec<f64>]>) -> (f64, Vec<f64>) {
        let net = self.net();
        let mut grad = vec![0.0; net.total];
        let batch: Vec<&SequenceSample> = samples.iter().collect();
        let loss = net.batch_loss_grad(&self.params, &batch, masks, self.config.alpha.alpha(), &mut grad);
        (loss, grad)
    }
}

fn mean_loss(net: &Net, p: &[f64], samples: &[SequenceSample], alpha: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let s: f64 = samples.iter().map(|s| super::pinball::pinball(s.target, net.predict(p, s), alpha)).sum();
    s / samples.len() as f64
}

/// Stateful trainer: parameters, optimizer moments and the shuffle/dropout
/// generator persist across calls, so repeated epochs (or federated
/// rounds) continue one trajectory.
#[derive(Debug, Clone)]
pub struct RnnTrainer {
    pub model: RnnModel,
    net: Net,
    adam: Adam,
    rng: Rng,
}

impl RnnTrainer {
    pub fn new(model: RnnModel, seed: u64) -> Self {
        let net = model.net();
        let adam = Adam::new(model.config.adam, net.total);
        Self { model, net, adam, rng: rng::seeded(rng::derive(seed, TRAIN_STREAM)) }
    }

    pub fn params(&self) -> &[f64] {
        &self.model.params
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.net.total {
            return Err(Error::Shape { expected: self.net.total, actual: p.len() });
        }
        self.model.params.copy_from_slice(p);
        Ok(())
    }

    pub fn ops_per_epoch(&self, n_samples: usize) -> u64 {
        self.net.ops_per_sample() * n_samples as u64
    }

    /// One pass over `samples` in shuffled mini-batches. With `prox`, the
    /// objective gains `(mu/2)·‖w − anchor‖²`. Returns the mean training loss.
    pub fn train_epoch(&mut self, samples: &[SequenceSample], prox: Option<(&[f64], f64)>) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::invalid("empty training set"));
        }
        let cfg = &self.model.config;
        let alpha = cfg.alpha.alpha();
        let p_drop = cfg.dropout;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        let mut grad = vec![0.0; self.net.total];
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&SequenceSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let masks: Option<Vec<Vec<f64>>> = (p_drop > 0.0).then(|| {
                let keep = 1.0 / (1.0 - p_drop);
                (0..batch.len())
                    .map(|_| {
                        (0..self.net.concat)
                            .map(|_| if self.rng.random::<f64>() < p_drop { 0.0 } else { keep })
                            .collect()
                    })
                    .collect()
            });
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut loss = self.net.batch_loss_grad(&self.model.params, &batch, masks.as_deref(), alpha, &mut grad);
            if let Some((anchor, mu)) = prox {
                loss += add_proximal(&mut grad, &self.model.params, anchor, mu);
            }
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("non-finite training loss after {} optimizer steps", self.adam.steps())));
            }
            total += loss * batch.len() as f64;
            self.adam.step(&mut self.model.params, &grad);
        }
        Ok(total / samples.len() as f64)
    }

    pub fn loss(&self, samples: &[SequenceSample]) -> f64 {
        mean_loss(&self.net, &self.model.params, samples, self.model.config.alpha.alpha())
    }
}

/// Train with early stopping on validation loss and return the
/// best-validation parameters. Without validation samples the training
/// loss drives early stopping.
pub fn fit_rnn(
    train: &[SequenceSample],
    valid: &[SequenceSample],
    init: RnnModel,
    seed: u64,
) -> Result<RnnModel> {
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    for s in train.iter().chain(valid) {
        init.check_sample(s)?;
    }
    let mut trainer = RnnTrainer::new(init, seed);
    let cfg = trainer.model.config.clone();
    let mut info = FitInfo::default();
    let mut best = trainer.model.params.clone();
    let mut best_loss = f64::INFINITY;
    let mut wait = 0;
    for epoch in 1..=cfg.max_epochs {
        let tl = trainer.train_epoch(train, None)?;
        let vl = if valid.is_empty() { tl } else { trainer.loss(valid) };
        if !vl.is_finite() {
            return Err(Error::Numerical(format!("non-finite validation loss at epoch {epoch}")));
        }
        info.epochs = epoch;
        info.train_losses.push(tl);
        info.valid_losses.push(vl);
        info.ops += trainer.ops_per_epoch(train.len()) + trainer.net.ops_per_sample() / 3 * valid.len() as u64;
        if vl < best_loss {
            best_loss = vl;
            best.copy_from_slice(&trainer.model.params);
            info.best_epoch = epoch;
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                break;
            }
        }
    }
    let mut model = trainer.model;
    model.params = best;
    model.fit_info = info;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy(cfg: &RnnConfig, d_in: usize, n: usize, seed: u64) -> Vec<SequenceSample> {
        let mut r = rng::seeded(seed);
        (0..n)
            .map(|i| SequenceSample {
                inputs: (0..cfg.sequence_length * d_in).map(|_| r.random_range(-1.0..1.0)).collect(),
                location: i % 3,
                model: (i + 1) % 2,
                nominal: 0.5,
                target: if i % 2 == 0 { 3.0 } else { -3.0 },
            })
            .collect()
    }

    fn small(cell: CellKind, bidirectional: bool) -> RnnConfig {
        RnnConfig {
            cell,
            bidirectional,
            hidden: 4,
            location_embedding: 3,
            model_embedding: 2,
            dense: 5,
            sequence_length: 6,
            batch_size: 4,
            dropout: 0.0,
            ..Default::default()
        }
    }

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary::from_values((0..n).map(|i| format!("v{i}")))
    }

    fn grad_check(cell: CellKind, bidi: bool) -> f64 {
        let cfg = small(cell, bidi);
        let mut m = RnnModel::init(cfg.clone(), 3, vocab(2), vocab(1), 5).unwrap();
        let samples = toy(&cfg, 3, 2, 9);
        let (_, g) = m.loss_and_gradient(&samples, None);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..m.params.len() {
            let orig = m.params[i];
            m.params[i] = orig + h;
            let lp = m.loss(&samples);
            m.params[i] = orig - h;
            let lm = m.loss(&samples);
            m.params[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        for cell in [CellKind::Gru, CellKind::Lstm] {
            for bidi in [false, true] {
                let e = grad_check(cell, bidi);
                assert!(e <= 1e-4, "{cell:?} bidi={bidi}: {e}");
            }
        }
    }

    #[test]
    fn bidirectional_doubles_recurrent_parameters() {
        for cell in [CellKind::Gru, CellKind::Lstm] {
            let uni = RnnModel::init(RnnConfig { cell, ..Default::default() }, 13, vocab(4), vocab(3), 0).unwrap();
            let bi = RnnModel::init(RnnConfig { cell, bidirectional: true, ..Default::default() }, 13, vocab(4), vocab(3), 0)
                .unwrap();
            assert_eq!(2 * uni.recurrent_parameter_count(), bi.recurrent_parameter_count());
            assert_eq!(uni.layout().total(), uni.params.len());
        }
    }

    #[test]
    fn deterministic_trajectories() {
        let cfg = RnnConfig { max_epochs: 3, ..small(CellKind::Lstm, true) };
        let data = toy(&cfg, 3, 10, 1);
        let run = || {
            let init = RnnModel::init(cfg.clone(), 3, vocab(2), vocab(1), 4).unwrap();
            fit_rnn(&data, &data[..4], init, 4).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.params, b.params);
        assert_eq!(a.fit_info.train_losses, b.fit_info.train_losses);
    }

    #[test]
    fn zero_target_descends() {
        let cfg = RnnConfig { max_epochs: 30, adam: AdamConfig { lr: 1e-2, ..Default::default() }, ..small(CellKind::Gru, false) };
        let mut data = toy(&cfg, 3, 16, 2);
        data.iter_mut().for_each(|s| s.target = 0.0);
        let init = RnnModel::init(cfg.clone(), 3, vocab(2), vocab(1), 0).unwrap();
        let before = init.loss(&data);
        let m = fit_rnn(&data, &[], init, 0).unwrap();
        assert!(m.loss(&data) <= before);
        assert!(m.predict(&data).unwrap().iter().all(|p| p.abs() < 0.5));
    }

    #[test]
    fn empty_training_rejected() {
        let cfg = small(CellKind::Gru, false);
        let init = RnnModel::init(cfg, 3, vocab(1), vocab(1), 0).unwrap();
        assert!(fit_rnn(&[], &[], init, 0).is_err());
    }

    #[test]
    fn bad_window_rejected() {
        let cfg = small(CellKind::Gru, false);
        let m = RnnModel::init(cfg.clone(), 3, vocab(1), vocab(1), 0).unwrap();
        let mut s = toy(&cfg, 3, 1, 0);
        s[0].inputs.pop();
        assert!(m.predict(&s).is_err());
    }

    #[test]
    fn vocabulary_unknown_is_zero() {
        let v = Vocabulary::from_values(["b".to_string(), "a".to_string(), "b".to_string()]);
        assert_eq!(v.size(), 3);
        assert_eq!(v.index("a"), 1);
        assert_eq!(v.index("z"), 0);
    }

    #[test]
    fn dropout_config_bounds() {
        assert!(RnnConfig { dropout: 1.0, ..Default::default() }.validate().is_err());
        assert!(RnnConfig { output: 2, ..Default::default() }.validate().is_err());
    }
}

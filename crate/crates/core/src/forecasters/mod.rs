//! Forecasting model families sharing a flat-parameter representation.

pub mod arx;
pub mod container;
pub mod gbt;
pub mod naive;
pub mod optim;
pub mod pinball;
pub mod rnn;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use arx::{fit_arx, ArxConfig, ArxModel, Exog};
pub use container::ModelContainer;
pub use gbt::{fit_gbt, GbtConfig, GbtModel, RegressionTree};
pub use naive::{seasonal_naive, seasonal_naive_at};
pub use optim::{add_proximal, Adam, AdamConfig};
pub use pinball::{pinball, pinball_grad, pinball_loss, pinball_subgradient, PinballConfig};
pub use rnn::{fit_rnn, CellKind, RnnConfig, RnnModel, RnnTrainer, SequenceSample, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    SeasonalNaive,
    Arx,
    Gbt,
    Gru,
    Lstm,
    BiGru,
    BiLstm,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 7] = [
        ModelFamily::SeasonalNaive,
        ModelFamily::Arx,
        ModelFamily::Gbt,
        ModelFamily::Gru,
        ModelFamily::Lstm,
        ModelFamily::BiGru,
        ModelFamily::BiLstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::SeasonalNaive => "seasonal-naive",
            ModelFamily::Arx => "arx",
            ModelFamily::Gbt => "gbt",
            ModelFamily::Gru => "gru",
            ModelFamily::Lstm => "lstm",
            ModelFamily::BiGru => "bi-gru",
            ModelFamily::BiLstm => "bi-lstm",
        }
    }

    pub fn is_recurrent(self) -> bool {
        self.rnn_shape().is_some()
    }

    /// Cell kind and bidirectional flag for the recurrent families.
    pub fn rnn_shape(self) -> Option<(CellKind, bool)> {
        match self {
            ModelFamily::Gru => Some((CellKind::Gru, false)),
            ModelFamily::Lstm => Some((CellKind::Lstm, false)),
            ModelFamily::BiGru => Some((CellKind::Gru, true)),
            ModelFamily::BiLstm => Some((CellKind::Lstm, true)),
            _ => None,
        }
    }
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        ModelFamily::ALL
            .into_iter()
            .find(|f| f.name() == norm || (norm == "naive" && *f == ModelFamily::SeasonalNaive))
            .ok_or_else(|| Error::config(format!("unknown model family '{s}'")))
    }
}

/// Training diagnostics attached to a fitted model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub epochs: usize,
    pub train_losses: Vec<f64>,
    pub valid_losses: Vec<f64>,
    pub best_epoch: usize,
    /// Arithmetic-operation estimate for the energy proxy meter.
    pub ops: u64,
    pub warnings: Vec<String>,
}

/// Named contiguous segments of a flat parameter vector.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterLayout {
    pub segments: Vec<(String, usize)>,
}

impl ParameterLayout {
    pub fn push(&mut self, name: impl Into<String>, len: usize) {
        self.segments.push((name.into(), len));
    }

    pub fn total(&self) -> usize {
        self.segments.iter().map(|(_, n)| n).sum()
    }

    /// Offset and length of the named segment.
    pub fn find(&self, name: &str) -> Option<(usize, usize)> {
        let mut off = 0;
        for (n, len) in &self.segments {
            if n == name {
                return Some((off, *len));
            }
            off += len;
        }
        None
    }
}

/// Row-major feature matrix with one target per row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tabular {
    n_features: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Tabular {
    pub fn new(n_features: usize) -> Self {
        Self { n_features, x: Vec::new(), y: Vec::new() }
    }

    pub fn from_parts(n_features: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if n_features == 0 || x.len() != n_features * y.len() {
            return Err(Error::Shape { expected: n_features * y.len(), actual: x.len() });
        }
        Ok(Self { n_features, x, y })
    }

    pub fn push(&mut self, row: &[f64], target: f64) -> Result<()> {
        if row.len() != self.n_features {
            return Err(Error::Shape { expected: self.n_features, actual: row.len() });
        }
        self.x.extend_from_slice(row);
        self.y.push(target);
        Ok(())
    }

    /// Append all rows of `other`.
    pub fn extend(&mut self, other: &Tabular) -> Result<()> {
        if other.n_features != self.n_features {
            return Err(Error::Shape { expected: self.n_features, actual: other.n_features });
        }
        self.x.extend_from_slice(&other.x);
        self.y.extend_from_slice(&other.y);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn get(&self, i: usize, f: usize) -> f64 {
        self.x[i * self.n_features + f]
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }
}

/// A fitted model of any family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ForecastModel {
    SeasonalNaive { lag: usize },
    Arx(ArxModel),
    Gbt(GbtModel),
    /// Federated tree ensemble with learned per-tree weights.
    FedXgb(crate::federation::FedXgbModel),
    Rnn(RnnModel),
}

impl ForecastModel {
    pub fn family(&self) -> ModelFamily {
        match self {
            ForecastModel::SeasonalNaive { .. } => ModelFamily::SeasonalNaive,
            ForecastModel::Arx(_) => ModelFamily::Arx,
            ForecastModel::Gbt(_) | ForecastModel::FedXgb(_) => ModelFamily::Gbt,
            ForecastModel::Rnn(m) => m.family(),
        }
    }

    pub fn parameters(&self) -> Vec<f64> {
        match self {
            ForecastModel::SeasonalNaive { .. } => Vec::new(),
            ForecastModel::Arx(m) => m.parameters(),
            ForecastModel::Gbt(m) => m.parameters(),
            ForecastModel::FedXgb(m) => m.weights.clone(),
            ForecastModel::Rnn(m) => m.params.clone(),
        }
    }

    pub fn layout(&self) -> ParameterLayout {
        match self {
            ForecastModel::SeasonalNaive { .. } => ParameterLayout::default(),
            ForecastModel::Arx(m) => m.layout(),
            ForecastModel::Gbt(m) => m.layout(),
            ForecastModel::FedXgb(m) => {
                let mut l = ParameterLayout::default();
                l.push("tree_weights", m.ensemble.n_trees());
                l.push("bias", 1);
                l
            }
            ForecastModel::Rnn(m) => m.layout(),
        }
    }

    pub fn fit_info(&self) -> FitInfo {
        match self {
            ForecastModel::SeasonalNaive { .. } => FitInfo::default(),
            ForecastModel::Arx(m) => m.fit_info.clone(),
            ForecastModel::Gbt(m) => m.fit_info.clone(),
            ForecastModel::FedXgb(_) => FitInfo::default(),
            ForecastModel::Rnn(m) => m.fit_info.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_names_round_trip() {
        for f in ModelFamily::ALL {
            assert_eq!(f.name().parse::<ModelFamily>().unwrap(), f);
        }
        assert!("transformer".parse::<ModelFamily>().is_err());
    }

    #[test]
    fn layout_offsets() {
        let mut l = ParameterLayout::default();
        l.push("a", 3);
        l.push("b", 2);
        assert_eq!(l.total(), 5);
        assert_eq!(l.find("b"), Some((3, 2)));
        assert_eq!(l.find("c"), None);
    }

    #[test]
    fn tabular_shape_checks() {
        let mut t = Tabular::new(2);
        assert!(t.push(&[1.0], 0.0).is_err());
        t.push(&[1.0, 2.0], 3.0).unwrap();
        assert_eq!(t.row(0), &[1.0, 2.0]);
        assert!(Tabular::from_parts(2, vec![1.0; 3], vec![0.0]).is_err());
    }
}

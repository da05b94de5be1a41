use super::runner::LocalModel;
use crate::forecasters::{RnnTrainer, SequenceSample};
use crate::Result;

/// A hub training a recurrent model on its pooled EVSE sequences.
#[derive(Debug, Clone)]
pub struct RnnClient {
    pub trainer: RnnTrainer,
    pub train: Vec<SequenceSample>,
    pub valid: Vec<SequenceSample>,
}

impl LocalModel for RnnClient {
    fn parameters(&self) -> Vec<f64> {
        self.trainer.params().to_vec()
    }

    fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        self.trainer.set_params(params)
    }

    fn train_epoch(&mut self, prox: Option<(&[f64], f64)>) -> Result<f64> {
        self.trainer.train_epoch(&self.train, prox)
    }

    fn validation_loss(&self) -> f64 {
        if self.valid.is_empty() {
            self.trainer.loss(&self.train)
        } else {
            self.trainer.loss(&self.valid)
        }
    }

    fn n_train(&self) -> usize {
        self.train.len()
    }

    fn n_valid(&self) -> usize {
        self.valid.len()
    }

    fn ops_per_epoch(&self) -> u64 {
        self.trainer.ops_per_epoch(self.train.len())
    }

    fn ops_per_validation(&self) -> u64 {
        self.trainer.ops_per_epoch(self.valid.len()) / 3
    }
}

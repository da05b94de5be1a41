//! Federated boosted trees with learnable per-tree learning rates.
//!
//! Each hub fits `M` trees locally. The server concatenates the ensembles in
//! hub order and broadcasts them; the trees are then frozen and a small
//! weight model (one scalar per tree plus a bias, equivalent to a 1-D
//! convolution with kernel = stride = `M` followed by a sum) is trained
//! federatedly on the pinball loss.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::runner::{run_federation, FederationOutcome, FederationPlan, LocalModel, Strategy};
use crate::forecasters::optim::{add_proximal, Adam, AdamConfig};
use crate::forecasters::pinball::{pinball, pinball_grad};
use crate::forecasters::{fit_gbt, GbtConfig, GbtModel, RegressionTree, Tabular};
use crate::rng::{self, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FedXgbPlan {
    pub trees_per_client: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub patience: usize,
    pub strategy: Strategy,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for FedXgbPlan {
    fn default() -> Self {
        Self {
            trees_per_client: 37,
            rounds: 40,
            local_epochs: 10,
            patience: 3,
            strategy: Strategy::FedAvg,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl FedXgbPlan {
    pub fn federation_plan(&self) -> FederationPlan {
        FederationPlan {
            rounds: self.rounds,
            local_epochs: self.local_epochs,
            local_patience: Some(self.patience),
            global_patience: None,
            strategy: self.strategy,
            seed: self.seed,
        }
    }
}

/// Concatenated client ensembles, ordered by hub id then tree index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedEnsemble {
    pub trees_per_client: usize,
    pub n_features: usize,
    pub trees: Vec<RegressionTree>,
    pub client_inits: Vec<f64>,
    pub client_learning_rates: Vec<f64>,
}

impl AggregatedEnsemble {
    pub fn n_clients(&self) -> usize {
        self.client_inits.len()
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn tree_outputs(&self, row: &[f64]) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict_row(row)).collect()
    }

    /// Weight model reproducing the average of the clients' standalone
    /// predictions: each tree weighted by its client's learning rate over
    /// `N`, bias equal to the mean client initial prediction.
    pub fn averaging_weights(&self) -> Vec<f64> {
        let n = self.n_clients() as f64;
        let mut w: Vec<f64> = self
            .client_learning_rates
            .iter()
            .flat_map(|lr| std::iter::repeat(lr / n).take(self.trees_per_client))
            .collect();
        w.push(self.client_inits.iter().sum::<f64>() / n);
        w
    }
}

/// Concatenate `(hub, model)` ensembles in ascending hub order.
pub fn fedxgb_aggregate_ensembles(clients: &[(usize, GbtModel)], trees_per_client: usize) -> Result<AggregatedEnsemble> {
    let mut order: Vec<&(usize, GbtModel)> = clients.iter().collect();
    order.sort_by_key(|(h, _)| *h);
    let first = order.first().ok_or_else(|| Error::Federation("no client ensembles".into()))?;
    let n_features = first.1.n_features;
    let mut agg = AggregatedEnsemble {
        trees_per_client,
        n_features,
        trees: Vec::with_capacity(order.len() * trees_per_client),
        client_inits: Vec::new(),
        client_learning_rates: Vec::new(),
    };
    for (hub, m) in order {
        if m.trees.len() != trees_per_client {
            return Err(Error::Federation(format!(
                "hub {hub} contributed {} trees, expected {trees_per_client}",
                m.trees.len()
            )));
        }
        if m.n_features != n_features {
            return Err(Error::Shape { expected: n_features, actual: m.n_features });
        }
        agg.trees.extend(m.trees.iter().cloned());
        agg.client_inits.push(m.init);
        agg.client_learning_rates.push(m.config.learning_rate);
    }
    Ok(agg)
}

/// Aggregated trees plus learned weights `[w_1..w_{N·M}, bias]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedXgbModel {
    pub ensemble: AggregatedEnsemble,
    pub weights: Vec<f64>,
}

fn combine(weights: &[f64], outputs: &[f64]) -> f64 {
    let (w, bias) = weights.split_at(weights.len() - 1);
    bias[0] + w.iter().zip(outputs).map(|(a, b)| a * b).sum::<f64>()
}

impl FedXgbModel {
    pub fn predict_row_normalized(&self, row: &[f64]) -> f64 {
        combine(&self.weights, &self.ensemble.tree_outputs(row))
    }

    pub fn predict_normalized(&self, rows: &Tabular) -> Result<Vec<f64>> {
        if rows.n_features() != self.ensemble.n_features {
            return Err(Error::Shape { expected: self.ensemble.n_features, actual: rows.n_features() });
        }
        Ok((0..rows.n_rows()).map(|i| self.predict_row_normalized(rows.row(i))).collect())
    }
}

/// Hub client training the weight model on precomputed tree outputs.
#[derive(Debug, Clone)]
pub struct WeightClient {
    weights: Vec<f64>,
    width: usize,
    train_x: Vec<f64>,
    train_y: Vec<f64>,
    valid_x: Vec<f64>,
    valid_y: Vec<f64>,
    alpha: f64,
    batch_size: usize,
    adam: Adam,
    rng: Rng,
}

impl WeightClient {
    pub fn new(ens: &AggregatedEnsemble, train: &Tabular, valid: &Tabular, alpha: f64, plan: &FedXgbPlan) -> Self {
        let outputs = |t: &Tabular| -> Vec<f64> { (0..t.n_rows()).flat_map(|i| ens.tree_outputs(t.row(i))).collect() };
        let weights = ens.averaging_weights();
        Self {
            width: ens.n_trees(),
            train_x: outputs(train),
            train_y: train.targets().to_vec(),
            valid_x: outputs(valid),
            valid_y: valid.targets().to_vec(),
            alpha,
            batch_size: plan.batch_size.max(1),
            adam: Adam::new(plan.adam, weights.len()),
            rng: rng::seeded(rng::derive(plan.seed, 0x77)),
            weights,
        }
    }

    fn loss_on(&self, x: &[f64], y: &[f64]) -> f64 {
        if y.is_empty() {
            return 0.0;
        }
        let s: f64 = y
            .iter()
            .enumerate()
            .map(|(i, t)| pinball(*t, combine(&self.weights, &x[i * self.width..(i + 1) * self.width]), self.alpha))
            .sum();
        s / y.len() as f64
    }
}

impl LocalModel for WeightClient {
    fn parameters(&self) -> Vec<f64> {
        self.weights.clone()
    }

    fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.weights.len() {
            return Err(Error::Shape { expected: self.weights.len(), actual: params.len() });
        }
        self.weights.copy_from_slice(params);
        Ok(())
    }

    fn train_epoch(&mut self, prox: Option<(&[f64], f64)>) -> Result<f64> {
        let n = self.train_y.len();
        if n == 0 {
            return Err(Error::invalid("empty training set"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        let mut grad = vec![0.0; self.weights.len()];
        let mut total = 0.0;
        for chunk in order.chunks(self.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let m = chunk.len() as f64;
            let mut loss = 0.0;
            for &i in chunk {
                let x = &self.train_x[i * self.width..(i + 1) * self.width];
                let yhat = combine(&self.weights, x);
                loss += pinball(self.train_y[i], yhat, self.alpha) / m;
                let g = pinball_grad(self.train_y[i], yhat, self.alpha) / m;
                for (gj, xj) in grad.iter_mut().zip(x) {
                    *gj += g * xj;
                }
                grad[self.width] += g;
            }
            if let Some((anchor, mu)) = prox {
                loss += add_proximal(&mut grad, &self.weights, anchor, mu);
            }
            total += loss * m;
            self.adam.step(&mut self.weights, &grad);
        }
        Ok(total / n as f64)
    }

    fn validation_loss(&self) -> f64 {
        if self.valid_y.is_empty() {
            self.loss_on(&self.train_x, &self.train_y)
        } else {
            self.loss_on(&self.valid_x, &self.valid_y)
        }
    }

    fn n_train(&self) -> usize {
        self.train_y.len()
    }

    fn n_valid(&self) -> usize {
        self.valid_y.len()
    }

    fn ops_per_epoch(&self) -> u64 {
        (self.train_y.len() * (self.width + 1) * 4) as u64
    }

    fn ops_per_validation(&self) -> u64 {
        (self.valid_y.len() * (self.width + 1) * 2) as u64
    }
}

/// Per-hub training and validation rows.
#[derive(Debug, Clone)]
pub struct HubTabular {
    pub hub: usize,
    pub train: Tabular,
    pub valid: Tabular,
}

#[derive(Debug, Clone)]
pub struct FedXgbOutcome {
    pub model: FedXgbModel,
    pub client_models: Vec<GbtModel>,
    pub federation: FederationOutcome,
}

/// Fit local ensembles, aggregate them, then train the weight model
/// federatedly and keep the best-validation weights.
pub fn fedxgb_fit(hubs: &[HubTabular], gbt: &GbtConfig, plan: &FedXgbPlan) -> Result<FedXgbOutcome> {
    let local_cfg = GbtConfig { n_estimators: plan.trees_per_client, ..gbt.clone() };
    let client_models = hubs
        .iter()
        .map(|h| fit_gbt(&h.train, &local_cfg, plan.seed).map_err(|e| Error::Federation(format!("hub {}: {e}", h.hub))))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, GbtModel)> = hubs.iter().map(|h| h.hub).zip(client_models.iter().cloned()).collect();
    let ensemble = fedxgb_aggregate_ensembles(&pairs, plan.trees_per_client)?;
    let alpha = gbt.alpha.alpha();
    let mut clients: Vec<WeightClient> =
        hubs.iter().map(|h| WeightClient::new(&ensemble, &h.train, &h.valid, alpha, plan)).collect();
    let federation = run_federation(&plan.federation_plan(), &mut clients)?;
    let model = FedXgbModel { ensemble, weights: federation.best_params.clone() };
    Ok(FedXgbOutcome { model, client_models, federation })
}

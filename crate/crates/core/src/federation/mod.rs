//! In-process federated-learning simulation: geographic hub clustering,
//! round orchestration with FedAvg/FedProx aggregation, and federated
//! boosted trees with learnable per-tree weights.

mod aggregate;
mod clients;
mod fedxgb;
mod hubs;
mod runner;

pub use aggregate::{fedavg_aggregate, ClientUpdate};
pub use clients::RnnClient;
pub use fedxgb::{
    fedxgb_aggregate_ensembles, fedxgb_fit, AggregatedEnsemble, FedXgbModel, FedXgbOutcome, FedXgbPlan, HubTabular,
    WeightClient,
};
pub use hubs::{cluster_hubs, HubAssignment, MAX_LLOYD_ITERATIONS};
pub use runner::{
    run_federation, snapshot_hash, ClientRecord, FederationOutcome, FederationPlan, LocalModel, RoundLog, RoundRecord,
    Strategy,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecasters::{fit_gbt, GbtConfig, Tabular};
    use crate::Result;

    /// Quadratic client `(1/2)‖w − t‖²` that minimizes its (proximal)
    /// objective exactly in each epoch.
    struct Quadratic {
        w: Vec<f64>,
        target: Vec<f64>,
        n: usize,
    }

    impl LocalModel for Quadratic {
        fn parameters(&self) -> Vec<f64> {
            self.w.clone()
        }
        fn set_parameters(&mut self, p: &[f64]) -> Result<()> {
            self.w = p.to_vec();
            Ok(())
        }
        fn train_epoch(&mut self, prox: Option<(&[f64], f64)>) -> Result<f64> {
            for (j, w) in self.w.iter_mut().enumerate() {
                *w = match prox {
                    Some((a, mu)) => (self.target[j] + mu * a[j]) / (1.0 + mu),
                    None => self.target[j],
                };
            }
            Ok(self.validation_loss())
        }
        fn validation_loss(&self) -> f64 {
            0.5 * self.w.iter().zip(&self.target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        }
        fn n_train(&self) -> usize {
            self.n
        }
        fn n_valid(&self) -> usize {
            self.n
        }
        fn ops_per_epoch(&self) -> u64 {
            10
        }
        fn ops_per_validation(&self) -> u64 {
            1
        }
    }

    fn clients() -> Vec<Quadratic> {
        vec![
            Quadratic { w: vec![0.0, 0.0], target: vec![1.0, 2.0], n: 1 },
            Quadratic { w: vec![0.0, 0.0], target: vec![5.0, -2.0], n: 3 },
        ]
    }

    #[test]
    fn fedavg_of_exact_minimizers_is_weighted_target_mean() {
        let plan = FederationPlan { rounds: 3, strategy: Strategy::FedAvg, ..Default::default() };
        let out = run_federation(&plan, &mut clients()).unwrap();
        assert_eq!(out.final_params, vec![4.0, -1.0]);
        assert_eq!(out.log.rounds.len(), 3);
    }

    #[test]
    fn large_mu_pins_clients_to_global() {
        let plan = FederationPlan { rounds: 1, local_epochs: 1, strategy: Strategy::FedProx { mu: 1e6 }, ..Default::default() };
        let mut cs = clients();
        let out = run_federation(&plan, &mut cs).unwrap();
        for r in &out.log.rounds[0].clients {
            assert!(r.update_norm < 1e-3);
        }
    }

    #[test]
    fn zero_rounds_returns_initial_participant() {
        let mut cs = clients();
        cs[1].w = vec![7.0, 7.0];
        let plan = FederationPlan { rounds: 0, ..Default::default() };
        let out = run_federation(&plan, &mut cs).unwrap();
        assert!(out.log.rounds.is_empty());
        assert_eq!(out.final_params, cs[out.initial_participant].w);
    }

    #[test]
    fn global_patience_stops_early() {
        let plan = FederationPlan { rounds: 20, global_patience: Some(2), strategy: Strategy::FedAvg, ..Default::default() };
        let out = run_federation(&plan, &mut clients()).unwrap();
        assert_eq!(out.log.rounds.len(), 3);
        assert!(out.log.stop_reason.is_some());
        let mut buf = Vec::new();
        out.log.write_jsonl(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }

    #[test]
    fn ensemble_sizes_and_mismatch() {
        let mut t = Tabular::new(1);
        for i in 0..10 {
            t.push(&[i as f64], (i % 3) as f64).unwrap();
        }
        let m = fit_gbt(&t, &GbtConfig { n_estimators: 37, ..Default::default() }, 0).unwrap();
        let eight: Vec<_> = (0..8).map(|h| (h, m.clone())).collect();
        assert_eq!(fedxgb_aggregate_ensembles(&eight, 37).unwrap().n_trees(), 296);
        assert_eq!(fedxgb_aggregate_ensembles(&eight[..4], 37).unwrap().n_trees(), 148);
        let one = fedxgb_aggregate_ensembles(&eight[..1], 37).unwrap();
        assert_eq!(one.trees, m.trees);
        assert!(fedxgb_aggregate_ensembles(&eight, 36).is_err());
    }
}

use evdemand_core::federation::*;
use evdemand_core::forecasters::*;
use evdemand_core::rng;
use rand::Rng as _;

fn small_config(cell: CellKind, bidirectional: bool) -> RnnConfig {
    RnnConfig {
        cell,
        bidirectional,
        hidden: 4,
        location_embedding: 2,
        model_embedding: 2,
        dense: 4,
        sequence_length: 5,
        batch_size: 8,
        dropout: 0.0,
        adam: AdamConfig { lr: 1e-2, ..Default::default() },
        ..Default::default()
    }
}

fn vocab(n: usize) -> Vocabulary {
    Vocabulary::from_values((0..n).map(|i| format!("v{i}")))
}

fn samples(cfg: &RnnConfig, d_in: usize, n: usize, seed: u64) -> Vec<SequenceSample> {
    let mut r = rng::seeded(seed);
    (0..n)
        .map(|i| {
            let inputs: Vec<f64> = (0..cfg.sequence_length * d_in).map(|_| r.random_range(0.0..1.0)).collect();
            let target = inputs.iter().rev().take(d_in).sum::<f64>() / d_in as f64;
            SequenceSample { inputs, location: 1 + i % 2, model: 1, nominal: 0.5, target }
        })
        .collect()
}

fn client(cfg: &RnnConfig, seed: u64, data_seed: u64) -> RnnClient {
    let model = RnnModel::init(cfg.clone(), 3, vocab(2), vocab(1), seed).unwrap();
    RnnClient { trainer: RnnTrainer::new(model, seed), train: samples(cfg, 3, 40, data_seed), valid: samples(cfg, 3, 10, data_seed + 1) }
}

fn plan(strategy: Strategy, rounds: usize, epochs: usize) -> FederationPlan {
    FederationPlan { rounds, local_epochs: epochs, local_patience: None, global_patience: None, strategy, seed: 3 }
}

#[test]
fn single_client_fedavg_matches_centralized_training() {
    let cfg = small_config(CellKind::Gru, false);
    let (rounds, epochs) = (4, 3);

    let mut central = client(&cfg, 11, 100);
    for _ in 0..rounds * epochs {
        central.trainer.train_epoch(&central.train, None).unwrap();
    }

    let mut clients = vec![client(&cfg, 11, 100)];
    let out = run_federation(&plan(Strategy::FedAvg, rounds, epochs), &mut clients).unwrap();
    let worst = out
        .final_params
        .iter()
        .zip(central.trainer.params())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-10, "max coordinate difference {worst:e}");
}

#[test]
fn fedprox_with_zero_mu_is_fedavg() {
    let cfg = small_config(CellKind::Lstm, true);
    let run = |strategy| {
        let mut clients: Vec<RnnClient> = (0..3).map(|h| client(&cfg, 20 + h, 200 + 10 * h)).collect();
        run_federation(&plan(strategy, 3, 2), &mut clients).unwrap()
    };
    let avg = run(Strategy::FedAvg);
    let prox = run(Strategy::FedProx { mu: 0.0 });
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&avg.final_params), bits(&prox.final_params));
    assert_eq!(avg.initial_participant, prox.initial_participant);
    for (a, b) in avg.log.rounds.iter().zip(&prox.log.rounds) {
        assert_eq!(a.snapshot, b.snapshot);
    }
}

#[test]
fn identical_clients_reduce_to_one() {
    let cfg = small_config(CellKind::Gru, true);
    let mut one = vec![client(&cfg, 5, 50)];
    let mut three: Vec<RnnClient> = (0..3).map(|_| client(&cfg, 5, 50)).collect();
    let p = plan(Strategy::FedProx { mu: 0.1 }, 3, 2);
    let a = run_federation(&p, &mut one).unwrap();
    let b = run_federation(&p, &mut three).unwrap();
    for (x, y) in a.final_params.iter().zip(&b.final_params) {
        assert!((x - y).abs() <= 1e-12);
    }
}

#[test]
fn proximal_gradient_matches_finite_differences() {
    let cfg = small_config(CellKind::Lstm, false);
    let mut model = RnnModel::init(cfg.clone(), 3, vocab(2), vocab(1), 8).unwrap();
    let data = samples(&cfg, 3, 6, 9);
    let mut r = rng::seeded(1);
    let anchor: Vec<f64> = model.params.iter().map(|w| w + r.random_range(-0.2..0.2)).collect();
    let mu = 0.5;
    let objective = |m: &RnnModel| {
        m.loss(&data) + 0.5 * mu * m.params.iter().zip(&anchor).map(|(w, a)| (w - a) * (w - a)).sum::<f64>()
    };
    let (_, mut grad) = model.loss_and_gradient(&data, None);
    let params = model.params.clone();
    add_proximal(&mut grad, &params, &anchor, mu);

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..model.params.len() {
        let w = model.params[i];
        model.params[i] = w + h;
        let lp = objective(&model);
        model.params[i] = w - h;
        let lm = objective(&model);
        model.params[i] = w;
        let fd = (lp - lm) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6));
    }
    assert!(worst <= 1e-6, "worst relative error {worst:e}");
}

#[test]
fn federated_rounds_reduce_validation_loss() {
    let cfg = small_config(CellKind::Gru, false);
    let mut clients: Vec<RnnClient> = (0..4).map(|h| client(&cfg, 30 + h, 300 + 10 * h)).collect();
    let out = run_federation(&plan(Strategy::FedProx { mu: 0.01 }, 6, 2), &mut clients).unwrap();
    let first = out.log.rounds.first().unwrap().global_valid_loss;
    let best = out.log.rounds.iter().map(|r| r.global_valid_loss).fold(f64::INFINITY, f64::min);
    assert!(best <= first);
    assert!(out.best_round >= 1);
}

fn hub_data(hub: usize, n: usize, n_features: usize) -> HubTabular {
    let mut r = rng::seeded(1000 + hub as u64);
    let mut make = |n| {
        let mut t = Tabular::new(n_features);
        for _ in 0..n {
            let row: Vec<f64> = (0..n_features).map(|_| r.random_range(0.0..1.0)).collect();
            let y = 0.6 * row[0] + 0.2 * (row[1] > 0.5) as u8 as f64 + 0.05 * r.random_range(0.0..1.0);
            t.push(&row, y).unwrap();
        }
        t
    };
    HubTabular { hub, train: make(n), valid: make(n / 4) }
}

#[test]
fn averaging_weights_reproduce_the_client_mean() {
    let cfg = GbtConfig { n_estimators: 37, max_depth: 3, ..Default::default() };
    let hubs: Vec<HubTabular> = (0..3).map(|h| hub_data(h, 80, 4)).collect();
    let models: Vec<(usize, GbtModel)> = hubs.iter().map(|h| (h.hub, fit_gbt(&h.train, &cfg, 0).unwrap())).collect();
    let ens = fedxgb_aggregate_ensembles(&models, 37).unwrap();
    assert_eq!(ens.n_trees(), 111);
    let fx = FedXgbModel { weights: ens.averaging_weights(), ensemble: ens };
    let probe = &hubs[0].valid;
    for i in 0..probe.n_rows() {
        let row = probe.row(i);
        let mean = models.iter().map(|(_, m)| m.predict_row_normalized(row)).sum::<f64>() / models.len() as f64;
        assert!((fx.predict_row_normalized(row) - mean).abs() <= 1e-9);
    }
}

#[test]
fn fedxgb_weight_learning_does_not_increase_loss() {
    let cfg = GbtConfig { n_estimators: 37, max_depth: 3, ..Default::default() };
    let hubs: Vec<HubTabular> = (0..3).map(|h| hub_data(h, 120, 4)).collect();
    let plan = FedXgbPlan { rounds: 5, local_epochs: 2, seed: 4, ..Default::default() };
    let out = fedxgb_fit(&hubs, &cfg, &plan).unwrap();
    assert_eq!(out.model.ensemble.n_trees(), 3 * 37);
    assert_eq!(out.model.weights.len(), 3 * 37 + 1);

    let alpha = cfg.alpha.alpha();
    let loss = |pred: &[f64], y: &[f64]| pinball_loss(y, pred, alpha).unwrap();
    let mut before = 0.0;
    let mut after = 0.0;
    let init = FedXgbModel { weights: out.model.ensemble.averaging_weights(), ensemble: out.model.ensemble.clone() };
    for h in &hubs {
        before += loss(&init.predict_normalized(&h.valid).unwrap(), h.valid.targets()) * h.valid.n_rows() as f64;
        after += loss(&out.model.predict_normalized(&h.valid).unwrap(), h.valid.targets()) * h.valid.n_rows() as f64;
    }
    assert!(after <= before * (1.0 + 1e-9), "before {before}, after {after}");
}

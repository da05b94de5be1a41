use evdemand_core::energy::Phase;
use evdemand_core::federation::{FederationPlan, Strategy};
use evdemand_core::forecasters::{ModelFamily, RnnConfig};
use evdemand_core::ingest::SyntheticProfile;
use evdemand_core::workbench::*;

fn tiny_rnn() -> RnnConfig {
    RnnConfig {
        hidden: 6,
        location_embedding: 2,
        model_embedding: 2,
        dense: 6,
        sequence_length: 6,
        batch_size: 32,
        max_epochs: 4,
        patience: 100,
        dropout: 0.0,
        ..Default::default()
    }
}

fn config(roster: Vec<ModelFamily>) -> ExperimentConfig {
    ExperimentConfig {
        seed: 5,
        data: DataSource::Synthetic { n_evse: 4, days: 90, profile: SyntheticProfile::two_shift() },
        roster,
        rnn: tiny_rnn(),
        hubs: 2,
        ..Default::default()
    }
}

#[test]
fn reruns_are_bit_identical() {
    let cfg = config(vec![ModelFamily::SeasonalNaive, ModelFamily::Arx, ModelFamily::Gbt]);
    let a = run_centralized(&cfg).unwrap();
    let b = run_centralized(&cfg).unwrap();
    for (x, y) in a.models.iter().zip(&b.models) {
        assert_eq!(serde_json::to_string(&x.report).unwrap(), serde_json::to_string(&y.report).unwrap());
        let cx = serde_json::to_string(&x.trained.containers(&a.prepared)).unwrap();
        let cy = serde_json::to_string(&y.trained.containers(&b.prepared)).unwrap();
        assert_eq!(cx, cy);
    }
}

#[test]
fn single_family_roster_gives_one_model() {
    let cfg = config(vec![ModelFamily::SeasonalNaive]);
    let run = run_centralized(&cfg).unwrap();
    assert_eq!(run.models.len(), 1);
    assert_eq!(run.models[0].family, ModelFamily::SeasonalNaive);
    assert!(run.ledger.is_empty());
}

#[test]
fn centralized_and_federated_share_feature_frames() {
    let cfg = config(vec![ModelFamily::SeasonalNaive]);
    let c = Prepared::from_config(&cfg).unwrap();
    let f = run_federated(&cfg).unwrap();
    let hashes = |p: &Prepared| p.frames.iter().map(|f| f.content_hash()).collect::<Vec<_>>();
    assert_eq!(hashes(&c), hashes(&f.prepared));
    assert_eq!(f.skipped, vec![ModelFamily::SeasonalNaive]);
}

#[test]
fn one_hub_federation_matches_centralized_training() {
    let mut cfg = config(vec![ModelFamily::Gru]);
    cfg.hubs = 1;
    cfg.federation = FederationPlan {
        rounds: cfg.rnn.max_epochs,
        local_epochs: 1,
        local_patience: None,
        global_patience: None,
        strategy: Strategy::FedAvg,
        seed: 0,
    };
    let central = run_centralized(&cfg).unwrap();
    let fed = run_federated(&cfg).unwrap();
    let (Trained::Rnn(a), Trained::Rnn(b)) = (&central.models[0].trained, &fed.models[0].trained) else {
        panic!("expected recurrent models");
    };
    assert_eq!(a.fit_info.best_epoch, b.fit_info.best_epoch);
    let worst = a.params.iter().zip(&b.params).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-10, "max coordinate difference {worst:e}");
}

#[test]
fn heavy_federation_costs_more_than_light() {
    let mut cfg = config(vec![ModelFamily::Gru]);
    let plan = |epochs| FederationPlan { rounds: 3, local_epochs: epochs, global_patience: None, ..Default::default() };
    cfg.federation = plan(5);
    let heavy = run_federated(&cfg).unwrap();
    cfg.federation = plan(1);
    let light = run_federated(&cfg).unwrap();
    assert_eq!(heavy.phase, Phase::FedHeavy);
    assert_eq!(light.phase, Phase::FedLight);
    let h = heavy.ledger.total_for("gru", Phase::FedHeavy);
    let l = light.ledger.total_for("gru", Phase::FedLight);
    assert!(h > l && l > 0.0, "heavy {h} J, light {l} J");
}

#[test]
fn written_manifests_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(vec![ModelFamily::SeasonalNaive, ModelFamily::Gbt]);
    cfg.output_dir = dir.path().to_path_buf();
    let inv = Invocation { command: "train".into(), overrides: vec!["--model gbt".into()] };
    let mut bytes = Vec::new();
    for _ in 0..2 {
        let run = run_centralized(&cfg).unwrap();
        let (root, manifest) = write_centralized(&run, &cfg, &inv).unwrap();
        assert!(manifest.files.iter().any(|f| f.path == "metrics.json"));
        assert_eq!(manifest.overrides, inv.overrides);
        bytes.push(std::fs::read(root.join(MANIFEST_FILE)).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

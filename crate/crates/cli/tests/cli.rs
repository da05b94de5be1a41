use std::path::Path;
use std::process::{Command, Output};

fn evdemand(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evdemand"))
        .args(args)
        .current_dir(dir)
        .env_remove("EVDEMAND_OUT")
        .output()
        .unwrap()
}

#[test]
fn help_documents_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str]); 6] = [
        ("synth", &["--evse", "--days", "--seed", "--profile", "--out"]),
        ("ingest", &["--config", "--input", "--seed", "--out"]),
        ("train", &["--config", "--input", "--seed", "--out", "--model"]),
        ("federate", &["--config", "--strategy", "--mu", "--rounds", "--epochs", "--hubs", "--model", "--out"]),
        ("evaluate", &["--run", "--out"]),
        ("report", &["--central", "--heavy", "--light", "--ef", "--out"]),
    ];
    for (sub, flags) in cases {
        let out = evdemand(&[sub, "--help"], dir.path());
        assert_eq!(out.status.code(), Some(0), "{sub} --help");
        let text = String::from_utf8(out.stdout).unwrap();
        for flag in flags {
            assert!(text.contains(flag), "{sub} --help lacks {flag}");
        }
    }
    assert_eq!(evdemand(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(evdemand(&["train", "--no-such-flag"], p).status.code(), Some(1));
    assert_eq!(evdemand(&[], p).status.code(), Some(1));
    assert_eq!(evdemand(&["train", "--config", "missing.toml"], p).status.code(), Some(1));
    assert_eq!(evdemand(&["train", "--model", "transformer"], p).status.code(), Some(1));
    assert_eq!(evdemand(&["federate", "--strategy", "fedavg", "--mu", "0.1"], p).status.code(), Some(1));
    assert_eq!(evdemand(&["synth", "--evse", "0", "--out", "d"], p).status.code(), Some(1));

    std::fs::write(p.join("bad.toml"), "roster = []\n").unwrap();
    assert_eq!(evdemand(&["train", "--config", "bad.toml"], p).status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let run = p.join("run");
    std::fs::create_dir_all(run.join("models")).unwrap();
    std::fs::write(run.join("config.json"), "{}").unwrap();
    std::fs::write(run.join("models/gbt.json"), "{ truncated").unwrap();
    let out = evdemand(&["evaluate", "--run", "run", "--out", "ev"], p);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_then_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let ok = |args: &[&str]| {
        let out = evdemand(args, p);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stdout.is_empty(), "artifacts must not go to stdout");
    };
    ok(&["synth", "--evse", "4", "--days", "90", "--seed", "3", "--profile", "two-shift", "--out", "data"]);
    assert!(p.join("data/transactions.csv").is_file());
    assert!(p.join("data/manifest.json").is_file());

    ok(&["train", "--input", "data/transactions.csv", "--model", "seasonal-naive,gbt", "--out", "runs"]);
    let run = std::fs::read_dir(p.join("runs")).unwrap().next().unwrap().unwrap().path();
    let manifest = std::fs::read_to_string(run.join("manifest.json")).unwrap();
    assert!(manifest.contains("--model=seasonal-naive,gbt"));
    assert!(run.join("models/gbt.json").is_file());

    let run_arg = run.to_str().unwrap().to_string();
    ok(&["evaluate", "--run", &run_arg, "--out", "eval"]);
    let eval = std::fs::read_dir(p.join("eval")).unwrap().next().unwrap().unwrap().path();
    let metrics: serde_json::Value =
        serde_json::from_slice(&std::fs::read(eval.join("metrics.json")).unwrap()).unwrap();
    let trained: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["gbt"], trained["gbt"]);
}

#[test]
fn output_root_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_evdemand"))
        .args(["synth", "--evse", "2", "--days", "60"])
        .current_dir(dir.path())
        .env("EVDEMAND_OUT", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("from-env/transactions.csv").is_file());
}

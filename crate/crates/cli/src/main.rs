//! `evdemand` command-line interface.
//!
//! Precedence for every setting: command-line flag, then environment
//! (`EVDEMAND_OUT` for the output root), then the config file, then the
//! built-in default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};

use evdemand_core::energy::{phase_comparison, EmissionFactor, EnergyLedger, ModelComparison};
use evdemand_core::federation::Strategy;
use evdemand_core::forecasters::{ModelContainer, ModelFamily};
use evdemand_core::ingest::{generate_synthetic, write_transactions_csv, SyntheticProfile};
use evdemand_core::workbench::{
    run_centralized, run_federated, write_centralized, write_federated, write_ingested, DataSource,
    ExperimentConfig, Invocation, Prepared, RunWriter, Trained,
};
use evdemand_core::{Error, MetricsReport, Result};

const OUT_ENV: &str = "EVDEMAND_OUT";

#[derive(Debug, Parser)]
#[command(name = "evdemand", version, about = "EV charging demand forecasting and federated training workbench")]
struct Cli {
    /// More log output on stderr (-v debug, -vv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic transaction file.
    Synth(SynthArgs),
    /// Clean, resample and featurize transactions without training.
    Ingest(IngestArgs),
    /// Train the model roster centrally and score it on the test block.
    Train(TrainArgs),
    /// Train the roster federatedly over geographic EVSE hubs.
    Federate(FederateArgs),
    /// Re-score the models stored in a previous run directory.
    Evaluate(EvaluateArgs),
    /// Compare the energy ledgers of centralized, heavy and light runs.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Profile {
    /// Two commuter-like slots per day with weekend dropout.
    Default,
    /// Two long, well-utilised sessions every day.
    TwoShift,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Number of EVSEs.
    #[arg(long, default_value_t = 8)]
    evse: usize,
    /// Number of days.
    #[arg(long, default_value_t = 120)]
    days: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Session pattern.
    #[arg(long, value_enum, default_value_t = Profile::Default)]
    profile: Profile,
    /// Output directory for `transactions.csv` and the manifest.
    #[arg(long, env = OUT_ENV)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Transaction CSV replacing the configured data source.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; the run lands in `<out>/<command>-<config hash>`.
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Model family to train (repeatable): seasonal-naive, arx, gbt, gru, lstm, bi-gru, bi-lstm.
    #[arg(long = "model", value_delimiter = ',')]
    models: Vec<ModelFamily>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Fedavg,
    Fedprox,
}

#[derive(Debug, Args)]
struct FederateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Model family to federate (repeatable); seasonal-naive and arx are skipped.
    #[arg(long = "model", value_delimiter = ',')]
    models: Vec<ModelFamily>,
    /// Aggregation strategy.
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// FedProx proximal coefficient.
    #[arg(long)]
    mu: Option<f64>,
    /// Global rounds, for recurrent models and tree-weight learning alike.
    #[arg(long)]
    rounds: Option<usize>,
    /// Local epochs per round (1 = light, more = heavy), for every federated family.
    #[arg(long)]
    epochs: Option<usize>,
    /// Number of geographic hubs (clients).
    #[arg(long)]
    hubs: Option<usize>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Directory written by `train` or `federate`.
    #[arg(long)]
    run: PathBuf,
    /// Output root; defaults to the evaluated run's output root.
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Run directory of a `train` invocation.
    #[arg(long)]
    central: PathBuf,
    /// Run directory of a heavy `federate` invocation.
    #[arg(long)]
    heavy: PathBuf,
    /// Run directory of a light `federate` invocation.
    #[arg(long)]
    light: PathBuf,
    /// Emission factor, kg CO2e per kWh.
    #[arg(long, default_value_t = 0.289)]
    ef: f64,
    /// Output directory for the report and its manifest.
    #[arg(long, env = OUT_ENV)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => {
            let (cfg, inv) = prepare_config("ingest", &a.run, Vec::new())?;
            let prep = Prepared::from_config(&cfg)?;
            info!("prepared {} EVSEs, {} bins each", prep.frames.len(), prep.series[0].len());
            finish(write_ingested(&prep, &cfg, &inv)?.0)
        }
        Command::Train(a) => {
            let ov = roster_override(&a.models).into_iter().collect();
            let (cfg, inv) = prepare_config("train", &a.run, ov)?;
            let run = run_centralized(&cfg)?;
            log_reports(run.models.iter().map(|m| (m.family, &m.report)));
            finish(write_centralized(&run, &cfg, &inv)?.0)
        }
        Command::Federate(a) => federate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
    }
}

type Override = Box<dyn FnOnce(&mut ExperimentConfig) -> Result<()>>;

fn roster_override(models: &[ModelFamily]) -> Option<(String, Override)> {
    if models.is_empty() {
        return None;
    }
    let names: Vec<&str> = models.iter().map(|m| m.name()).collect();
    let roster = models.to_vec();
    Some((format!("--model={}", names.join(",")), Box::new(move |c| {
        c.roster = roster;
        Ok(())
    })))
}

/// Load the config, apply flag overrides in order and validate.
fn prepare_config(
    command: &str,
    args: &RunArgs,
    extra: Vec<(String, Override)>,
) -> Result<(ExperimentConfig, Invocation)> {
    let mut cfg = match &args.config {
        Some(path) => {
            info!("config {}", path.display());
            ExperimentConfig::load(path)?
        }
        None => ExperimentConfig::default(),
    };
    let mut overrides = Vec::new();
    if let Some(path) = &args.input {
        let columns = match &cfg.data {
            DataSource::File { columns, .. } => columns.clone(),
            DataSource::Synthetic { .. } => Default::default(),
        };
        cfg.data = DataSource::File { path: path.clone(), columns };
        overrides.push(format!("--input={}", path.display()));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        overrides.push(format!("--seed={seed}"));
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
        overrides.push(format!("--out={}", out.display()));
    }
    for (flag, apply) in extra {
        apply(&mut cfg)?;
        overrides.push(flag);
    }
    cfg.validate()?;
    Ok((cfg, Invocation { command: command.to_string(), overrides }))
}

fn federate(a: FederateArgs) -> Result<()> {
    let mut ov: Vec<(String, Override)> = roster_override(&a.models).into_iter().collect();
    match (a.strategy, a.mu) {
        (Some(StrategyArg::Fedavg), Some(_)) => return Err(Error::config("--mu only applies to --strategy fedprox")),
        (Some(StrategyArg::Fedavg), None) => ov.push(("--strategy=fedavg".into(), Box::new(|c| {
            c.federation.strategy = Strategy::FedAvg;
            Ok(())
        }))),
        (Some(StrategyArg::Fedprox), mu) | (None, mu @ Some(_)) => {
            let flag = match mu {
                Some(mu) => format!("--strategy=fedprox --mu={mu}"),
                None => "--strategy=fedprox".into(),
            };
            ov.push((flag, Box::new(move |c| {
                let current = match c.federation.strategy {
                    Strategy::FedProx { mu } => mu,
                    Strategy::FedAvg => 0.1,
                };
                let mu = mu.unwrap_or(current);
                if !(mu.is_finite() && mu >= 0.0) {
                    return Err(Error::config("--mu must be a non-negative number"));
                }
                c.federation.strategy = Strategy::FedProx { mu };
                Ok(())
            })));
        }
        (None, None) => {}
    }
    if let Some(r) = a.rounds {
        ov.push((format!("--rounds={r}"), Box::new(move |c| {
            c.federation.rounds = r;
            c.fedxgb.rounds = r;
            Ok(())
        })));
    }
    if let Some(e) = a.epochs {
        ov.push((format!("--epochs={e}"), Box::new(move |c| {
            c.federation.local_epochs = e;
            c.fedxgb.local_epochs = e;
            Ok(())
        })));
    }
    if let Some(h) = a.hubs {
        ov.push((format!("--hubs={h}"), Box::new(move |c| {
            c.hubs = h;
            Ok(())
        })));
    }
    let (cfg, inv) = prepare_config("federate", &a.run, ov)?;
    let run = run_federated(&cfg)?;
    info!("{} hubs, phase {}", run.hubs.k, run.phase.name());
    for f in &run.skipped {
        info!("{f} is not federated; skipped");
    }
    log_reports(run.models.iter().map(|m| (m.family, &m.report)));
    finish(write_federated(&run, &cfg, &inv)?.0)
}

fn synth(a: SynthArgs) -> Result<()> {
    if a.evse == 0 || a.days == 0 {
        return Err(Error::config("--evse and --days must be positive"));
    }
    let profile = match a.profile {
        Profile::Default => SyntheticProfile::default(),
        Profile::TwoShift => SyntheticProfile::two_shift(),
    };
    let txs = generate_synthetic(a.evse, a.days, a.seed, &profile);
    info!("generated {} transactions for {} EVSEs over {} days", txs.len(), a.evse, a.days);
    let mut w = RunWriter::create(&a.out)?;
    w.write_with("transactions.csv", |b| write_transactions_csv(&txs, b))?;
    let profile_name = a.profile.to_possible_value().expect("named variant").get_name().to_string();
    let inv = Invocation {
        command: "synth".into(),
        overrides: vec![
            format!("--evse={}", a.evse),
            format!("--days={}", a.days),
            format!("--seed={}", a.seed),
            format!("--profile={profile_name}"),
        ],
    };
    w.finish(&inv, None, a.seed)?;
    finish(a.out)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut cfg: ExperimentConfig = read_json(&a.run.join("config.json"))?;
    let mut overrides = vec![format!("--run={}", a.run.display())];
    if let Some(out) = &a.out {
        cfg.output_dir = out.clone();
        overrides.push(format!("--out={}", out.display()));
    }
    cfg.validate()?;

    let models_dir = a.run.join("models");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&models_dir)
        .map_err(|e| Error::invalid(format!("cannot list {}: {e}", models_dir.display())))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|x| x == "json"));
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!("no model files in {}", models_dir.display())));
    }
    let mut groups: BTreeMap<String, Vec<ModelContainer>> = BTreeMap::new();
    for path in &files {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let key = if stem.starts_with("arx-") { "arx".to_string() } else { stem };
        groups.entry(key).or_default().push(ModelContainer::load(path)?);
    }

    let prep = Prepared::from_config(&cfg)?;
    let mut reports: BTreeMap<String, MetricsReport> = BTreeMap::new();
    for (name, containers) in groups {
        let trained = Trained::from_containers(containers)?;
        let report = trained.evaluate(&prep, &prep.frames, cfg.seasonal_lag)?;
        if let Some(m) = report.median("mase") {
            info!("{name}: median MASE {m:.4}");
        }
        reports.insert(name, report);
    }
    let inv = Invocation { command: "evaluate".into(), overrides };
    let mut w = RunWriter::for_config(&cfg, "evaluate")?;
    w.write_json("metrics.json", &reports)?;
    let root = w.root().to_path_buf();
    w.finish(&inv, Some(&cfg), cfg.seed)?;
    finish(root)
}

fn report(a: ReportArgs) -> Result<()> {
    let ef = EmissionFactor::new(a.ef, "command line")?;
    let central: EnergyLedger = read_json(&a.central.join("ledger.json"))?;
    let heavy: EnergyLedger = read_json(&a.heavy.join("ledger.json"))?;
    let light: EnergyLedger = read_json(&a.light.join("ledger.json"))?;
    let cmp = phase_comparison(&central, &heavy, &light, &ef)?;
    log_comparison(&cmp);
    let mut w = RunWriter::create(&a.out)?;
    w.write_json("energy_report.json", &cmp)?;
    let inv = Invocation {
        command: "report".into(),
        overrides: vec![
            format!("--central={}", a.central.display()),
            format!("--heavy={}", a.heavy.display()),
            format!("--light={}", a.light.display()),
            format!("--ef={}", a.ef),
        ],
    };
    w.finish(&inv, None, 0)?;
    finish(a.out)
}

fn log_reports<'a>(reports: impl Iterator<Item = (ModelFamily, &'a MetricsReport)>) {
    for (family, r) in reports {
        let show = |m: &str| r.median(m).map_or("n/a".to_string(), |v| format!("{v:.4}"));
        info!("{family:>15}: median MASE {} SMAPE {} MAE {}", show("mase"), show("smape"), show("mae"));
    }
}

fn log_comparison(cmp: &[ModelComparison]) {
    for m in cmp {
        for row in &m.rows {
            info!(
                "{:>15} {:>12}: {:.6e} kWh, log ratio {}",
                m.model,
                row.configuration.name(),
                row.total_kwh,
                row.log_ratio.map_or("-".to_string(), |v| format!("{v:.3}"))
            );
        }
        if let Some(s) = m.light_vs_heavy_savings_percent {
            info!("{:>15}: light saves {s:.2}% vs heavy", m.model);
        }
    }
}

fn finish(dir: PathBuf) -> Result<()> {
    info!("artifacts in {}", dir.display());
    Ok(())
}

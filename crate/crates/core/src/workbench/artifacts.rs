//! Run directories with content-addressed manifests.
//!
//! Every file written through [`RunWriter`] is hashed; the manifest lists
//! relative paths, sizes and SHA-256 digests plus the invocation, and
//! contains no timestamps or absolute paths, so identical runs produce
//! byte-identical manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::centralized::CentralizedRun;
use super::config::ExperimentConfig;
use super::federated::FederatedRun;
use crate::ingest::write_demand_csv;
use crate::metrics::MetricsReport;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invocation {
    pub command: String,
    /// Flag overrides applied on top of the config file, as `key=value`.
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub overrides: Vec<String>,
    pub config_fingerprint: Option<String>,
    pub seed: u64,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub struct RunWriter {
    root: PathBuf,
    files: BTreeMap<String, FileEntry>,
}

impl RunWriter {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self { root, files: BTreeMap::new() })
    }

    /// `<output_dir>/<command>-<config fingerprint prefix>`.
    pub fn for_config(cfg: &ExperimentConfig, command: &str) -> Result<Self> {
        Self::create(cfg.output_dir.join(format!("{command}-{}", &cfg.fingerprint()[..12])))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        self.files.insert(
            rel.to_string(),
            FileEntry { path: rel.to_string(), bytes: bytes.len() as u64, sha256: hex::encode(Sha256::digest(bytes)) },
        );
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut buf = serde_json::to_vec_pretty(value)?;
        buf.push(b'\n');
        self.write_bytes(rel, &buf)
    }

    pub fn write_with(&mut self, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write_bytes(rel, &buf)
    }

    pub fn finish(mut self, invocation: &Invocation, cfg: Option<&ExperimentConfig>, seed: u64) -> Result<Manifest> {
        let manifest = Manifest {
            tool: "evdemand".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: invocation.command.clone(),
            overrides: invocation.overrides.clone(),
            config_fingerprint: cfg.map(|c| c.fingerprint()),
            seed,
            files: self.files.values().cloned().collect(),
        };
        self.files.clear();
        let mut buf = serde_json::to_vec_pretty(&manifest)?;
        buf.push(b'\n');
        std::fs::write(self.root.join(MANIFEST_FILE), buf)?;
        Ok(manifest)
    }
}

fn write_common(w: &mut RunWriter, cfg: &ExperimentConfig, run_prep: &super::data::Prepared) -> Result<()> {
    w.write_json("config.json", cfg)?;
    w.write_json("cleaning.json", &run_prep.cleaning)?;
    w.write_json("normalization.json", &run_prep.spec)?;
    if !run_prep.rejects.is_empty() {
        w.write_json("rejects.json", &run_prep.rejects)?;
    }
    Ok(())
}

/// Demand series and feature frames of a prepared run.
pub fn write_prepared(w: &mut RunWriter, prep: &super::data::Prepared) -> Result<()> {
    w.write_json("split.json", &prep.split)?;
    for s in &prep.series {
        w.write_with(&format!("demand/{}.csv", s.evse_id()), |b| write_demand_csv(s, b))?;
    }
    for f in &prep.frames {
        w.write_with(&format!("features/{}.csv", f.evse_id), |b| f.write_csv(b))?;
    }
    let hashes: BTreeMap<&str, String> = prep.frames.iter().map(|f| (f.evse_id.as_str(), f.content_hash())).collect();
    w.write_json("features/hashes.json", &hashes)
}

/// Cleaning report, normalization and feature frames of an ingest-only run.
pub fn write_ingested(
    prep: &super::data::Prepared,
    cfg: &ExperimentConfig,
    invocation: &Invocation,
) -> Result<(PathBuf, Manifest)> {
    let mut w = RunWriter::for_config(cfg, &invocation.command)?;
    write_common(&mut w, cfg, prep)?;
    write_prepared(&mut w, prep)?;
    let root = w.root().to_path_buf();
    Ok((root, w.finish(invocation, Some(cfg), cfg.seed)?))
}

pub fn write_centralized(
    run: &CentralizedRun,
    cfg: &ExperimentConfig,
    invocation: &Invocation,
) -> Result<(PathBuf, Manifest)> {
    let mut w = RunWriter::for_config(cfg, &invocation.command)?;
    write_common(&mut w, cfg, &run.prepared)?;
    let mut reports: BTreeMap<&str, &MetricsReport> = BTreeMap::new();
    for m in &run.models {
        for (name, c) in m.trained.containers(&run.prepared) {
            w.write_json(&format!("models/{name}.json"), &c)?;
        }
        reports.insert(m.family.name(), &m.report);
    }
    w.write_json("metrics.json", &reports)?;
    w.write_json("ledger.json", &run.ledger)?;
    w.write_with("energy.csv", |b| run.ledger.write_csv(b))?;
    let root = w.root().to_path_buf();
    Ok((root, w.finish(invocation, Some(cfg), cfg.seed)?))
}

#[derive(Serialize)]
struct FederatedMetrics<'a> {
    overall: &'a MetricsReport,
    per_hub: &'a BTreeMap<usize, MetricsReport>,
    initial_participant: usize,
    best_round: usize,
}

pub fn write_federated(run: &FederatedRun, cfg: &ExperimentConfig, invocation: &Invocation) -> Result<(PathBuf, Manifest)> {
    let mut w = RunWriter::for_config(cfg, &invocation.command)?;
    write_common(&mut w, cfg, &run.prepared)?;
    w.write_json("hubs.json", &run.hubs)?;
    let mut reports = BTreeMap::new();
    for m in &run.models {
        for (name, c) in m.trained.containers(&run.prepared) {
            w.write_json(&format!("models/{name}.json"), &c)?;
        }
        w.write_with(&format!("rounds/{}.jsonl", m.family.name()), |b| m.log.write_jsonl(b))?;
        reports.insert(
            m.family.name(),
            FederatedMetrics {
                overall: &m.report,
                per_hub: &m.per_hub,
                initial_participant: m.initial_participant,
                best_round: m.best_round,
            },
        );
    }
    w.write_json("metrics.json", &reports)?;
    if !run.skipped.is_empty() {
        let names: Vec<&str> = run.skipped.iter().map(|f| f.name()).collect();
        w.write_json("skipped.json", &serde_json::json!({ "not_federated": names }))?;
    }
    w.write_json("ledger.json", &run.ledger)?;
    w.write_with("energy.csv", |b| run.ledger.write_csv(b))?;
    let root = w.root().to_path_buf();
    Ok((root, w.finish(invocation, Some(cfg), cfg.seed)?))
}

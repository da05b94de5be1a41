//! Experiment orchestration: configuration, the shared data path, the
//! centralized and federated pipelines, and run artifacts.

mod artifacts;
mod centralized;
mod config;
mod data;
mod federated;
mod models;

pub use artifacts::{
    write_centralized, write_federated, write_ingested, write_prepared, FileEntry, Invocation, Manifest, RunWriter, MANIFEST_FILE,
};
pub use centralized::{fit_family, init_rnn, run_centralized, run_centralized_on, CentralizedRun, ModelRun};
pub use config::{DataSource, ExperimentConfig};
pub use data::{location_key, load_transactions, sequence_samples, tabular_rows, Prepared};
pub use federated::{run_federated, run_federated_on, FederatedModelRun, FederatedRun};
pub use models::{aligned_exog, fit_arx_for, normalized_demand, Trained};

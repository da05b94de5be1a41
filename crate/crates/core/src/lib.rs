//! Demand forecasting for EV supply equipment (EVSE) charging transactions,
//! with a deterministic in-process federated-learning simulator and a
//! training-energy ledger.
//!
//! The crate is organised as a pipeline:
//!
//! * [`ingest`] turns raw charging transactions into regular demand series.
//! * [`features`] builds leakage-free feature frames and normalization.
//! * [`forecasters`] holds the model families (boosted trees, recurrent
//!   networks, autoregressive baseline, seasonal naive).
//! * [`federation`] simulates hub clustering and federated training rounds.
//! * [`metrics`] and [`energy`] score accuracy and training cost.
//! * [`workbench`] wires everything into reproducible experiment runs.

pub mod energy;
pub mod error;
pub mod features;
pub mod federation;
pub mod forecasters;
pub mod ingest;
pub mod metrics;
pub mod rng;
pub mod workbench;

pub use error::{Error, Result};
pub use features::{FeatureFrame, NormalizationSpec};
pub use forecasters::{ForecastModel, ModelFamily};
pub use ingest::{DemandSeries, EnergyTransaction, GeoPoint, TemporalSplit};
pub use metrics::MetricsReport;

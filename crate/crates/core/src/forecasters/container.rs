//! Self-describing JSON model files.
//!
//! Floats are written with shortest round-trip formatting, so a saved and
//! reloaded model has bit-identical parameters.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ForecastModel, ModelFamily};
use crate::features::{FeatureMask, NormalizationSpec};
use crate::{Error, Result};

pub const CONTAINER_FORMAT: &str = "evdemand-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelContainer {
    pub format: String,
    pub family: ModelFamily,
    /// Set for per-EVSE models.
    pub evse_id: Option<String>,
    pub feature_mask: FeatureMask,
    pub normalization: Option<NormalizationSpec>,
    pub model: ForecastModel,
}

impl ModelContainer {
    pub fn new(model: ForecastModel, feature_mask: FeatureMask, normalization: Option<NormalizationSpec>) -> Self {
        Self { format: CONTAINER_FORMAT.to_string(), family: model.family(), evse_id: None, feature_mask, normalization, model }
    }

    pub fn for_evse(mut self, evse_id: impl Into<String>) -> Self {
        self.evse_id = Some(evse_id.into());
        self
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let c: Self = serde_json::from_reader(input)?;
        if c.format != CONTAINER_FORMAT {
            return Err(Error::config(format!("unsupported model format '{}'", c.format)));
        }
        if c.family != c.model.family() {
            return Err(Error::config("model family tag does not match payload"));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

//! Versioned JSON model files tied to a site configuration hash.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::TrainedModel;
use crate::config::MixtureConstants;
use crate::error::{DflError, Result};
use crate::site::Site;

use super::atomic_write;

pub const MODEL_FORMAT: &str = "dfl-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub site_hash: String,
    pub constants: MixtureConstants,
    pub buffer_len: usize,
    #[serde(flatten)]
    pub model: TrainedModel,
}

impl ModelFile {
    pub fn new(site: &Site, model: TrainedModel) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            site_hash: site.config_hash().to_string(),
            constants: site.config().mixture,
            buffer_len: site.config().calibration.buffer_len,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| DflError::Invariant(format!("model serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: ModelFile = serde_json::from_str(text)
            .map_err(|e| DflError::Parse { line: e.line(), msg: e.to_string() })?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(DflError::Input(format!("unsupported model format {} v{}", m.format, m.version)));
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_json()?.as_bytes())
    }

    /// Load and check that the model was trained for `site`.
    pub fn load(path: &Path, site: &Site) -> Result<TrainedModel> {
        let m = Self::from_json(&std::fs::read_to_string(path)?)?;
        if m.site_hash != site.config_hash() {
            return Err(DflError::Input(format!(
                "model was trained for site configuration {} but the site is {}",
                m.site_hash,
                site.config_hash()
            )));
        }
        m.model.link_models(site)?;
        Ok(m.model)
    }
}

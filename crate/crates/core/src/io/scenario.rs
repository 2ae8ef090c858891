//! Declarative simulation scenarios (TOML).
//!
//! ```toml
//! seed = 7
//! loss_prob = 0.01
//! site = "site.toml"          # or an inline [site] table
//! empty_room_prologue = true  # mark the vacant prologue as an empty-room segment
//!
//! [trajectory]
//! prologue_s = 30
//! waypoints = [{ x = 1.0, y = 1.0, dwell_s = 120 }]
//!
//! [[events]]
//! time_s = 300
//! shifts = [{ link = { tx = 0, rx = 1, channel = 11 }, shift_db = 6.0 }]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::SiteConfig;
use crate::error::{DflError, Result};
use crate::simulator::{
    generate_trajectory, random_link_params, synthesize_trace, EnvironmentEvent, GroundTruthTrace, TrajectorySpec,
};
use crate::site::Site;

use super::trace::TraceFile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SiteRef {
    Path(PathBuf),
    Inline(Box<SiteConfig>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub site: SiteRef,
    #[serde(default)]
    pub seed: u64,
    /// Seed for the per-link generating parameters; defaults to `seed`.
    #[serde(default)]
    pub link_params_seed: Option<u64>,
    #[serde(default = "default_loss")]
    pub loss_prob: f64,
    #[serde(default)]
    pub empty_room_prologue: bool,
    #[serde(default)]
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub events: Vec<EnvironmentEvent>,
}

fn default_loss() -> f64 {
    0.01
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| DflError::Config(format!("scenario: {e}")))
    }

    /// Load a scenario; a relative site path is resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut s = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        if let SiteRef::Path(p) = &mut s.site {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(s)
    }

    pub fn site(&self) -> Result<Site> {
        let cfg = match &self.site {
            SiteRef::Path(p) => SiteConfig::load(p)?,
            SiteRef::Inline(c) => (**c).clone(),
        };
        Site::new(cfg)
    }

    pub fn simulate(&self, site: &Site) -> Result<GroundTruthTrace> {
        let trajectory = generate_trajectory(&self.trajectory, site)?;
        let params = random_link_params(site, self.link_params_seed.unwrap_or(self.seed))?;
        synthesize_trace(site, &params, &trajectory, &self.events, self.loss_prob, self.seed)
    }

    pub fn to_trace_file(&self, site: &Site, trace: &GroundTruthTrace) -> TraceFile {
        let cfg = site.config();
        let mut nodes: Vec<u32> = cfg.nodes.iter().map(|n| n.id).collect();
        nodes.sort_unstable();
        let mut channels = cfg.channels.clone();
        channels.sort_unstable();
        let empty_segments = if self.empty_room_prologue && self.trajectory.prologue_s > 0.0 {
            vec![(0.0, self.trajectory.prologue_s)]
        } else {
            Vec::new()
        };
        TraceFile {
            site_name: cfg.name.clone(),
            site_hash: site.config_hash().to_string(),
            period_s: trace.trajectory.period_s,
            nodes,
            channels,
            empty_segments,
            frames: trace.frames.clone(),
            truth: Some(trace.trajectory.positions.clone()),
        }
    }
}

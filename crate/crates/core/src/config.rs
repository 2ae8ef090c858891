//! Site configuration and every tunable constant, with defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{DflError, Result};
use crate::geometry::{Bounds, Channel, NodeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteConfig {
    #[serde(default = "default_site_name")]
    pub name: String,
    pub nodes: Vec<NodeConfig>,
    #[serde(default = "default_channels")]
    pub channels: Vec<Channel>,
    #[serde(default)]
    pub walls: Vec<[[f64; 2]; 2]>,
    #[serde(default)]
    pub entrances: Vec<[f64; 2]>,
    pub grid: GridConfig,
    #[serde(default)]
    pub alphabet: AlphabetConfig,
    #[serde(default)]
    pub mixture: MixtureConstants,
    #[serde(default)]
    pub motion: MotionParams,
    #[serde(default)]
    pub calibration: CalibrationParams,
    #[serde(default)]
    pub imaging: ImagingParams,
    #[serde(default)]
    pub lda: LdaParams,
}

fn default_site_name() -> String {
    "site".to_string()
}

fn default_channels() -> Vec<Channel> {
    vec![11]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub bounds: Bounds,
    #[serde(default = "default_spacing")]
    pub spacing_m: f64,
}

fn default_spacing() -> f64 {
    0.6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphabetConfig {
    pub min_dbm: i32,
    pub max_dbm: i32,
}

impl Default for AlphabetConfig {
    fn default() -> Self {
        AlphabetConfig { min_dbm: -110, max_dbm: -10 }
    }
}

/// Constants of the affected/unaffected RSS model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureConstants {
    /// Mean drop of the affected distribution (dBm).
    pub delta_db: f64,
    /// Variance inflation of the affected distribution.
    pub eta: f64,
    /// Standard-deviation floor (dBm).
    pub omega_db: f64,
    /// Probability floor of every pmf entry, and the mass of a missing sample.
    pub epsilon: f64,
    /// Affected probability of every link when the person is out of the area.
    pub sentinel_affected: f64,
}

impl Default for MixtureConstants {
    fn default() -> Self {
        MixtureConstants {
            delta_db: 3.0,
            eta: 2.5,
            omega_db: 0.75,
            epsilon: 1e-5,
            sentinel_affected: 1e-3,
        }
    }
}

impl MixtureConstants {
    pub fn min_variance(&self) -> f64 {
        self.omega_db * self.omega_db
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionParams {
    pub max_step_m: f64,
    pub max_speed_mps: f64,
    pub self_transition: f64,
    pub non_neighbor_floor: f64,
    pub initial_out_prob: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        MotionParams {
            max_step_m: 0.75,
            max_speed_mps: 3.0,
            self_transition: 0.9,
            non_neighbor_floor: 1e-200,
            initial_out_prob: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationParams {
    pub buffer_len: usize,
    pub update_threshold_db: f64,
    pub weight_candidates: usize,
    pub weight_min: f64,
    pub bin_width_m: f64,
    pub min_bin_count: usize,
    pub fallback_beta: f64,
    pub fallback_lambda_m: f64,
    pub lambda_min_m: f64,
    pub lambda_max_m: f64,
    pub lambda_grid: usize,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        CalibrationParams {
            buffer_len: 15,
            update_threshold_db: 1.0,
            weight_candidates: 100,
            weight_min: 1e-5,
            bin_width_m: 0.1,
            min_bin_count: 20,
            fallback_beta: 0.6,
            fallback_lambda_m: 0.3,
            lambda_min_m: 0.01,
            lambda_max_m: 50.0,
            lambda_grid: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingParams {
    /// Excess path length (m) inside which a pixel carries weight for a link.
    pub ellipse_width_m: f64,
    /// Weight of the pixel-difference penalty.
    pub regularization: f64,
    /// Small identity term added to the normal matrix.
    pub ridge: f64,
    /// An image is "present" when its peak reaches this fraction of recent peaks.
    pub vacancy_fraction: f64,
    pub peak_window_frames: usize,
    pub krti_short_frames: usize,
    pub krti_long_frames: usize,
    pub krti_bandwidth_db: f64,
    pub vrti_window_frames: usize,
}

impl Default for ImagingParams {
    fn default() -> Self {
        ImagingParams {
            ellipse_width_m: 0.1,
            regularization: 2.0,
            ridge: 1e-3,
            vacancy_fraction: 0.5,
            peak_window_frames: 60,
            krti_short_frames: 6,
            krti_long_frames: 30,
            krti_bandwidth_db: 2.0,
            vrti_window_frames: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaParams {
    /// Fixed shrinkage intensity; `None` estimates it from the data.
    pub shrinkage: Option<f64>,
}

impl Default for LdaParams {
    fn default() -> Self {
        LdaParams { shrinkage: Some(0.2) }
    }
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(DflError::Config(what.to_string()))
    }
}

impl SiteConfig {
    /// Site with default tunables, one channel and no walls or entrances.
    pub fn new(nodes: Vec<NodeConfig>, grid: GridConfig) -> Self {
        SiteConfig {
            name: default_site_name(),
            nodes,
            channels: default_channels(),
            walls: Vec::new(),
            entrances: Vec::new(),
            grid,
            alphabet: AlphabetConfig::default(),
            mixture: MixtureConstants::default(),
            motion: MotionParams::default(),
            calibration: CalibrationParams::default(),
            imaging: ImagingParams::default(),
            lda: LdaParams::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SiteConfig =
            toml::from_str(s).map_err(|e| DflError::Config(format!("site config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DflError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| DflError::Config(format!("site config: {e}")))
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("site config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<()> {
        check(self.nodes.len() >= 2, "at least two nodes are required")?;
        check(!self.channels.is_empty(), "channel list is empty")?;
        check(
            self.alphabet.min_dbm < self.alphabet.max_dbm,
            "alphabet min must be below max",
        )?;
        let m = &self.mixture;
        check(m.delta_db.is_finite(), "mixture.delta_db must be finite")?;
        check(m.eta > 0.0, "mixture.eta must be positive")?;
        check(m.omega_db > 0.0, "mixture.omega_db must be positive")?;
        check(m.epsilon > 0.0 && m.epsilon < 0.01, "mixture.epsilon must be in (0, 0.01)")?;
        check(
            m.sentinel_affected > 0.0 && m.sentinel_affected < 1.0,
            "mixture.sentinel_affected must be in (0, 1)",
        )?;
        let mo = &self.motion;
        check(mo.max_step_m > 0.0, "motion.max_step_m must be positive")?;
        check(
            mo.max_speed_mps > 0.0 && mo.max_speed_mps <= 3.0,
            "motion.max_speed_mps must be in (0, 3]",
        )?;
        check(
            mo.self_transition > 0.0 && mo.self_transition < 1.0,
            "motion.self_transition must be in (0, 1)",
        )?;
        check(
            mo.non_neighbor_floor >= 0.0 && mo.non_neighbor_floor < 1e-6,
            "motion.non_neighbor_floor must be in [0, 1e-6)",
        )?;
        check(
            mo.initial_out_prob > 0.0 && mo.initial_out_prob < 1.0,
            "motion.initial_out_prob must be in (0, 1)",
        )?;
        let c = &self.calibration;
        check(c.buffer_len >= 2, "calibration.buffer_len must be at least 2")?;
        check(c.update_threshold_db >= 0.0, "calibration.update_threshold_db must be >= 0")?;
        check(c.weight_candidates >= 2, "calibration.weight_candidates must be at least 2")?;
        check(
            c.weight_min > 0.0 && c.weight_min < 1.0,
            "calibration.weight_min must be in (0, 1)",
        )?;
        check(c.bin_width_m > 0.0, "calibration.bin_width_m must be positive")?;
        check(c.min_bin_count >= 1, "calibration.min_bin_count must be at least 1")?;
        check(
            c.fallback_beta > 0.0 && c.fallback_beta < 1.0,
            "calibration.fallback_beta must be in (0, 1)",
        )?;
        check(c.fallback_lambda_m > 0.0, "calibration.fallback_lambda_m must be positive")?;
        check(
            c.lambda_min_m > 0.0 && c.lambda_min_m < c.lambda_max_m,
            "calibration lambda search bounds are invalid",
        )?;
        check(c.lambda_grid >= 3, "calibration.lambda_grid must be at least 3")?;
        let i = &self.imaging;
        check(i.ellipse_width_m > 0.0, "imaging.ellipse_width_m must be positive")?;
        check(i.regularization >= 0.0, "imaging.regularization must be >= 0")?;
        check(i.ridge >= 0.0, "imaging.ridge must be >= 0")?;
        check(
            i.regularization > 0.0 || i.ridge > 0.0,
            "imaging needs a positive regularization or ridge",
        )?;
        check(
            i.vacancy_fraction > 0.0 && i.vacancy_fraction <= 1.0,
            "imaging.vacancy_fraction must be in (0, 1]",
        )?;
        check(i.peak_window_frames >= 1, "imaging.peak_window_frames must be >= 1")?;
        check(
            i.krti_short_frames >= 1 && i.krti_long_frames > i.krti_short_frames,
            "imaging KRTI windows must satisfy 1 <= short < long",
        )?;
        check(i.krti_bandwidth_db > 0.0, "imaging.krti_bandwidth_db must be positive")?;
        check(i.vrti_window_frames >= 2, "imaging.vrti_window_frames must be >= 2")?;
        if let Some(nu) = self.lda.shrinkage {
            check((0.0..=1.0).contains(&nu), "lda.shrinkage must be in [0, 1]")?;
        }
        Ok(())
    }
}

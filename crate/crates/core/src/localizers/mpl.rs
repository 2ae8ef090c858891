//! Mixture-model localization with VRTI-gated continuous recalibration.

use std::sync::Arc;

use crate::calibration::{LinkBuffer, TrainedModel};
use crate::config::{CalibrationParams, MixtureConstants};
use crate::error::{DflError, Result};
use crate::geometry::NeighborMode;
use crate::rss_model::{likelihood_map, AffectedTable, DeltaTable, LinkModel, LinkStateParams, RssFrame};
use crate::site::Site;

use super::forward::{hmml_step, mll_estimate, ForwardState};
use super::imaging::ImagingModel;
use super::rti::VrtiLocalizer;
use super::transition::{build_transition_model, TransitionModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MplMethod {
    Mll,
    Hmml,
}

#[derive(Debug, Clone)]
pub struct MplLocalizer {
    method: MplMethod,
    models: Vec<LinkModel>,
    affected: AffectedTable,
    transition: TransitionModel,
    forward: ForwardState,
    vrti: VrtiLocalizer,
    deltas: DeltaTable,
    max_deltas: Vec<f64>,
    buffers: Vec<LinkBuffer>,
    consts: MixtureConstants,
    threshold: f64,
    recalibrate: bool,
    commits: usize,
}

impl MplLocalizer {
    pub fn new(
        site: &Site,
        model: &TrainedModel,
        method: MplMethod,
        mode: NeighborMode,
        imaging: Arc<ImagingModel>,
    ) -> Result<Self> {
        let cfg = site.config();
        let models = model.link_models(site)?;
        let affected = AffectedTable::new(site.deltas(), &model.spatial(), &cfg.mixture)?;
        let transition = build_transition_model(&site.adjacency(mode), &cfg.motion)?;
        let CalibrationParams { buffer_len, update_threshold_db, .. } = cfg.calibration;
        Ok(MplLocalizer {
            method,
            buffers: models.iter().map(|m| LinkBuffer::new(buffer_len, m.state().mu_u)).collect(),
            forward: ForwardState::new(site.grid().num_states()),
            vrti: VrtiLocalizer::new(imaging, &cfg.imaging),
            models,
            affected,
            transition,
            deltas: site.deltas().clone(),
            max_deltas: site.max_deltas().to_vec(),
            consts: cfg.mixture,
            threshold: update_threshold_db,
            recalibrate: true,
            commits: 0,
        })
    }

    /// Turn continuous recalibration on or off (on by default).
    pub fn with_recalibration(mut self, on: bool) -> Self {
        self.recalibrate = on;
        self
    }

    pub fn method(&self) -> MplMethod {
        self.method
    }

    pub fn state(&self, link: usize) -> &LinkStateParams {
        self.models[link].state()
    }

    pub fn buffer(&self, link: usize) -> &LinkBuffer {
        &self.buffers[link]
    }

    /// Number of committed per-link parameter updates so far.
    pub fn commits(&self) -> usize {
        self.commits
    }

    /// Estimate the pixel for one frame (`P` means vacant), then feed the
    /// recalibration buffers.
    pub fn process(&mut self, frame: &RssFrame) -> Result<usize> {
        if frame.values.len() != self.models.len() {
            return Err(DflError::Input(format!(
                "frame at t={} has {} samples for {} links",
                frame.timestamp,
                frame.values.len(),
                self.models.len()
            )));
        }
        let map = likelihood_map(frame, &self.models, &self.affected)?;
        let estimate = match self.method {
            MplMethod::Mll => mll_estimate(&map),
            MplMethod::Hmml => hmml_step(&mut self.forward, &map, &self.transition)?,
        };
        let vrti = self.vrti.process(frame)?;
        if self.recalibrate {
            let vacant = estimate == self.deltas.num_pixels();
            for (l, r) in frame.values.iter().enumerate() {
                let excess = vrti.map(|k| self.deltas.get(k, l));
                let buffer = &mut self.buffers[l];
                if buffer.push_unaffected(*r, excess, self.max_deltas[l], vacant) {
                    if let Some(state) = buffer.recalibrate(self.threshold, &self.consts) {
                        self.models[l].set_state(state)?;
                        self.commits += 1;
                    }
                }
            }
        }
        Ok(estimate)
    }
}

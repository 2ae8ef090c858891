//! Regularized least-squares imaging shared by RTI, KRTI and VRTI.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::config::ImagingParams;
use crate::error::{DflError, Result};
use crate::geometry::{Grid, LinkGeometry};
use crate::rss_model::DeltaTable;

use super::forward::argmax;

/// Elliptical weight model and the precomputed solve
/// `z = (W^T W + reg * D^T D + ridge * I)^-1 W^T y`.
#[derive(Debug, Clone)]
pub struct ImagingModel {
    num_links: usize,
    num_pixels: usize,
    /// `W`, link-major.
    weights: Vec<f64>,
    /// Solve operator, pixel-major (`P x L`).
    projection: Vec<f64>,
}

impl ImagingModel {
    pub fn new(grid: &Grid, links: &[LinkGeometry], deltas: &DeltaTable, params: &ImagingParams) -> Result<Self> {
        let l = links.len();
        let p = grid.len();
        if deltas.num_links() != l || deltas.num_pixels() != p {
            return Err(DflError::Input("delta table does not match the grid and links".into()));
        }
        let mut w = DMatrix::<f64>::zeros(l, p);
        for (li, link) in links.iter().enumerate() {
            let weight = 1.0 / link.length.sqrt();
            for k in 0..p {
                if deltas.get(k, li) <= params.ellipse_width_m {
                    w[(li, k)] = weight;
                }
            }
        }
        let mut normal = w.transpose() * &w;
        for (a, b) in grid.lattice_edges() {
            normal[(a, a)] += params.regularization;
            normal[(b, b)] += params.regularization;
            normal[(a, b)] -= params.regularization;
            normal[(b, a)] -= params.regularization;
        }
        for k in 0..p {
            normal[(k, k)] += params.ridge;
        }
        let chol = normal.cholesky().ok_or_else(|| {
            DflError::Config("imaging normal matrix is singular; increase the regularization".into())
        })?;
        let projection = chol.solve(&w.transpose());
        Ok(ImagingModel {
            num_links: l,
            num_pixels: p,
            weights: w.transpose().as_slice().to_vec(),
            projection: projection.transpose().as_slice().to_vec(),
        })
    }

    pub fn num_links(&self) -> usize {
        self.num_links
    }

    pub fn num_pixels(&self) -> usize {
        self.num_pixels
    }

    /// Weight of `pixel` in `link`'s row of `W`.
    pub fn weight(&self, link: usize, pixel: usize) -> f64 {
        self.weights[link * self.num_pixels + pixel]
    }

    /// `W x` for an image `x`.
    pub fn forward_project(&self, image: &[f64]) -> Vec<f64> {
        (0..self.num_links)
            .map(|l| {
                self.weights[l * self.num_pixels..(l + 1) * self.num_pixels]
                    .iter()
                    .zip(image)
                    .map(|(w, x)| w * x)
                    .sum()
            })
            .collect()
    }
}

pub fn solve_rti_image(y: &[f64], model: &ImagingModel) -> Result<Vec<f64>> {
    if y.len() != model.num_links {
        return Err(DflError::Input(format!(
            "score vector has {} entries for {} links",
            y.len(),
            model.num_links
        )));
    }
    Ok(model
        .projection
        .chunks_exact(model.num_links)
        .map(|row| row.iter().zip(y).map(|(a, b)| a * b).sum())
        .collect())
}

/// Presence test on image peaks relative to the largest recent peak.
#[derive(Debug, Clone)]
pub struct VacancyGate {
    fraction: f64,
    window: usize,
    min_peak: f64,
    peaks: VecDeque<f64>,
}

impl VacancyGate {
    pub fn new(params: &ImagingParams) -> Self {
        VacancyGate {
            fraction: params.vacancy_fraction,
            window: params.peak_window_frames,
            min_peak: 1e-9,
            peaks: VecDeque::with_capacity(params.peak_window_frames),
        }
    }

    /// Record `peak` and report whether it counts as a detection.
    pub fn observe(&mut self, peak: f64) -> bool {
        if self.peaks.len() == self.window {
            self.peaks.pop_front();
        }
        self.peaks.push_back(peak);
        let running = self.peaks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        peak > self.min_peak && peak >= self.fraction * running
    }
}

/// Image argmax, or the sentinel index `P` when the gate reports vacancy.
pub fn image_estimate(image: &[f64], gate: &mut VacancyGate) -> usize {
    let k = argmax(image);
    let peak = image.get(k).copied().unwrap_or(0.0);
    if gate.observe(peak) {
        k
    } else {
        image.len()
    }
}

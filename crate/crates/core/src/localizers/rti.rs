//! Attenuation RTI (empty-room calibrated), kernel-distance RTI and
//! variance RTI.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::config::ImagingParams;
use crate::error::{DflError, Result};
use crate::rss_model::{Alphabet, RssFrame, RssValue};
use crate::stats;

use super::imaging::{image_estimate, solve_rti_image, ImagingModel, VacancyGate};

/// Per-link mean RSS recorded while the area was empty.
#[derive(Debug, Clone, PartialEq)]
pub struct EmptyRoomMeans {
    means: Vec<Option<f64>>,
}

impl EmptyRoomMeans {
    pub fn from_frames<'a>(frames: impl IntoIterator<Item = &'a RssFrame>, num_links: usize) -> Result<Self> {
        let mut sum = vec![0.0; num_links];
        let mut count = vec![0usize; num_links];
        let mut any = false;
        for f in frames {
            any = true;
            if f.values.len() != num_links {
                return Err(DflError::Input("calibration frame has the wrong number of links".into()));
            }
            for (l, v) in f.values.iter().enumerate() {
                if let RssValue::Dbm(v) = v {
                    sum[l] += *v as f64;
                    count[l] += 1;
                }
            }
        }
        if !any {
            return Err(DflError::NotCalibrated("no empty-room frames available for RTI".into()));
        }
        Ok(EmptyRoomMeans {
            means: sum
                .iter()
                .zip(&count)
                .map(|(s, c)| (*c > 0).then(|| s / *c as f64))
                .collect(),
        })
    }

    pub fn from_means(means: Vec<Option<f64>>) -> Self {
        EmptyRoomMeans { means }
    }

    pub fn means(&self) -> &[Option<f64>] {
        &self.means
    }
}

/// `|r - mean|` per link; missing samples and uncalibrated links score zero.
pub fn rti_scores(frame: &RssFrame, empty: &EmptyRoomMeans) -> Result<Vec<f64>> {
    if frame.values.len() != empty.means.len() {
        return Err(DflError::Input("frame and calibration disagree on the link count".into()));
    }
    Ok(frame
        .values
        .iter()
        .zip(&empty.means)
        .map(|(r, m)| match (r, m) {
            (RssValue::Dbm(v), Some(m)) => (*v as f64 - m).abs(),
            _ => 0.0,
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct RtiLocalizer {
    model: Arc<ImagingModel>,
    empty: Option<EmptyRoomMeans>,
    gate: VacancyGate,
}

impl RtiLocalizer {
    pub fn new(model: Arc<ImagingModel>, empty: Option<EmptyRoomMeans>, params: &ImagingParams) -> Self {
        RtiLocalizer { model, empty, gate: VacancyGate::new(params) }
    }

    pub fn process(&mut self, frame: &RssFrame) -> Result<usize> {
        let empty = self
            .empty
            .as_ref()
            .ok_or_else(|| DflError::NotCalibrated("RTI has no empty-room calibration".into()))?;
        let y = rti_scores(frame, empty)?;
        let z = solve_rti_image(&y, &self.model)?;
        Ok(image_estimate(&z, &mut self.gate))
    }
}

/// Exponentially forgotten RSS histograms of one link.
#[derive(Debug, Clone)]
struct LinkHistograms {
    short: Vec<f64>,
    long: Vec<f64>,
    lo: usize,
    hi: usize,
    seen: bool,
}

/// Kernel distance between long- and short-term histograms on every link.
#[derive(Debug, Clone)]
pub struct KernelHistograms {
    alphabet: Alphabet,
    links: Vec<LinkHistograms>,
    short_rate: f64,
    long_rate: f64,
    /// Gaussian kernel by index offset, truncated where it drops below 1e-6.
    kernel: Vec<f64>,
}

impl KernelHistograms {
    pub fn new(num_links: usize, alphabet: Alphabet, params: &ImagingParams) -> Self {
        let n = alphabet.len();
        let reach = ((2.0 * 1e6f64.ln()).sqrt() * params.krti_bandwidth_db).ceil() as usize;
        let kernel = (0..=reach.min(n))
            .map(|d| (-((d * d) as f64) / (2.0 * params.krti_bandwidth_db.powi(2))).exp())
            .collect();
        KernelHistograms {
            alphabet,
            links: vec![
                LinkHistograms { short: vec![0.0; n], long: vec![0.0; n], lo: 0, hi: 0, seen: false };
                num_links
            ],
            short_rate: 1.0 / params.krti_short_frames as f64,
            long_rate: 1.0 / params.krti_long_frames as f64,
            kernel,
        }
    }

    /// Fold one frame into the histograms and return the per-link distances.
    pub fn update(&mut self, frame: &RssFrame) -> Result<Vec<f64>> {
        if frame.values.len() != self.links.len() {
            return Err(DflError::Input("frame has the wrong number of links".into()));
        }
        let mut out = Vec::with_capacity(self.links.len());
        for (h, r) in self.links.iter_mut().zip(&frame.values) {
            if let Some(i) = r.dbm().and_then(|v| self.alphabet.index(v)) {
                if !h.seen {
                    h.short[i] = 1.0;
                    h.long[i] = 1.0;
                    h.lo = i;
                    h.hi = i;
                    h.seen = true;
                } else {
                    for v in &mut h.short[h.lo..=h.hi] {
                        *v *= 1.0 - self.short_rate;
                    }
                    for v in &mut h.long[h.lo..=h.hi] {
                        *v *= 1.0 - self.long_rate;
                    }
                    h.short[i] += self.short_rate;
                    h.long[i] += self.long_rate;
                    h.lo = h.lo.min(i);
                    h.hi = h.hi.max(i);
                }
            }
            out.push(if h.seen { kernel_distance(h, &self.kernel) } else { 0.0 });
        }
        Ok(out)
    }
}

/// `(s - l)^T K (s - l)` over the occupied support.
fn kernel_distance(h: &LinkHistograms, kernel: &[f64]) -> f64 {
    let diff: Vec<f64> = (h.lo..=h.hi).map(|i| h.short[i] - h.long[i]).collect();
    let mut total = 0.0;
    for (i, di) in diff.iter().enumerate() {
        total += di * di;
        for (off, k) in kernel.iter().enumerate().skip(1) {
            match diff.get(i + off) {
                Some(dj) => total += 2.0 * k * di * dj,
                None => break,
            }
        }
    }
    total.max(0.0)
}

#[derive(Debug, Clone)]
pub struct KrtiLocalizer {
    model: Arc<ImagingModel>,
    histograms: KernelHistograms,
    gate: VacancyGate,
    warmup: usize,
    frames: usize,
}

impl KrtiLocalizer {
    pub fn new(model: Arc<ImagingModel>, alphabet: Alphabet, params: &ImagingParams) -> Self {
        KrtiLocalizer {
            histograms: KernelHistograms::new(model.num_links(), alphabet, params),
            model,
            gate: VacancyGate::new(params),
            warmup: params.krti_short_frames,
            frames: 0,
        }
    }

    pub fn process(&mut self, frame: &RssFrame) -> Result<usize> {
        let y = self.histograms.update(frame)?;
        self.frames += 1;
        if self.frames < self.warmup {
            return Ok(self.model.num_pixels());
        }
        let z = solve_rti_image(&y, &self.model)?;
        Ok(image_estimate(&z, &mut self.gate))
    }
}

/// Sliding windows of recent samples for the variance image.
#[derive(Debug, Clone)]
pub struct VrtiLocalizer {
    model: Arc<ImagingModel>,
    windows: Vec<VecDeque<RssValue>>,
    window: usize,
    gate: VacancyGate,
}

impl VrtiLocalizer {
    pub fn new(model: Arc<ImagingModel>, params: &ImagingParams) -> Self {
        VrtiLocalizer {
            windows: vec![VecDeque::with_capacity(params.vrti_window_frames); model.num_links()],
            model,
            window: params.vrti_window_frames,
            gate: VacancyGate::new(params),
        }
    }

    /// Sample variance of each link's window; fewer than two samples score zero.
    pub fn scores(&self) -> Vec<f64> {
        self.windows
            .iter()
            .map(|w| {
                let v: Vec<f64> = w.iter().filter_map(|r| r.dbm()).map(f64::from).collect();
                stats::sample_variance(&v).unwrap_or(0.0)
            })
            .collect()
    }

    /// Returns the moving-person pixel, or `None` when the image shows no motion.
    pub fn process(&mut self, frame: &RssFrame) -> Result<Option<usize>> {
        if frame.values.len() != self.windows.len() {
            return Err(DflError::Input("frame has the wrong number of links".into()));
        }
        for (w, r) in self.windows.iter_mut().zip(&frame.values) {
            if w.len() == self.window {
                w.pop_front();
            }
            w.push_back(*r);
        }
        let z = solve_rti_image(&self.scores(), &self.model)?;
        let k = image_estimate(&z, &mut self.gate);
        Ok((k < self.model.num_pixels()).then_some(k))
    }
}

//! Error metrics, detection rates and multi-method experiment runs.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use crate::calibration::TrainedModel;
use crate::error::{DflError, Result};
use crate::geometry::{NeighborMode, Point};
use crate::localizers::imaging::ImagingModel;
use crate::localizers::lda::{lda_classify, lda_train, FingerprintModel, Shrinkage};
use crate::localizers::mpl::{MplLocalizer, MplMethod};
use crate::localizers::rti::{EmptyRoomMeans, KrtiLocalizer, RtiLocalizer, VrtiLocalizer};
use crate::rss_model::{RssFrame, RssValue};
use crate::site::Site;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimate {
    At(Point),
    Vacant,
}

impl Estimate {
    pub fn from_pixel(site: &Site, k: usize) -> Estimate {
        site.pixel_point(k).map_or(Estimate::Vacant, Estimate::At)
    }

    pub fn point(self) -> Option<Point> {
        match self {
            Estimate::At(p) => Some(p),
            Estimate::Vacant => None,
        }
    }
}

/// How one frame's estimate compares with the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrameOutcome {
    Distance(f64),
    CorrectRejection,
    MissedDetection,
    FalseAlarm,
}

pub fn localization_error(estimate: Estimate, truth: Option<Point>) -> FrameOutcome {
    match (estimate, truth) {
        (Estimate::At(e), Some(t)) => FrameOutcome::Distance(e.distance(&t)),
        (Estimate::Vacant, None) => FrameOutcome::CorrectRejection,
        (Estimate::Vacant, Some(_)) => FrameOutcome::MissedDetection,
        (Estimate::At(_), None) => FrameOutcome::FalseAlarm,
    }
}

/// Median of the in-area error series; `None` when there is none.
pub fn median_error(series: &[f64]) -> Option<f64> {
    stats::median(series)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRates {
    /// Percentage of in-area frames reported vacant.
    pub missed_pct: Option<f64>,
    /// Percentage of vacant frames reported in-area.
    pub false_alarm_pct: Option<f64>,
    pub inside_frames: usize,
    pub outside_frames: usize,
}

fn check_aligned(estimates: &[Estimate], truth: &[Option<Point>]) -> Result<()> {
    if estimates.len() != truth.len() {
        return Err(DflError::Input(format!(
            "{} estimates for {} ground-truth frames",
            estimates.len(),
            truth.len()
        )));
    }
    Ok(())
}

pub fn detection_rates(estimates: &[Estimate], truth: &[Option<Point>]) -> Result<DetectionRates> {
    check_aligned(estimates, truth)?;
    let (mut inside, mut outside, mut missed, mut false_alarms) = (0, 0, 0, 0);
    for (e, t) in estimates.iter().zip(truth) {
        match localization_error(*e, *t) {
            FrameOutcome::Distance(_) => inside += 1,
            FrameOutcome::MissedDetection => {
                inside += 1;
                missed += 1;
            }
            FrameOutcome::CorrectRejection => outside += 1,
            FrameOutcome::FalseAlarm => {
                outside += 1;
                false_alarms += 1;
            }
        }
    }
    let pct = |n: usize, d: usize| (d > 0).then(|| 100.0 * n as f64 / d as f64);
    Ok(DetectionRates {
        missed_pct: pct(missed, inside),
        false_alarm_pct: pct(false_alarms, outside),
        inside_frames: inside,
        outside_frames: outside,
    })
}

/// Errors of the frames where both truth and estimate are in the area.
pub fn error_series(estimates: &[Estimate], truth: &[Option<Point>]) -> Result<Vec<f64>> {
    check_aligned(estimates, truth)?;
    Ok(estimates
        .iter()
        .zip(truth)
        .filter_map(|(e, t)| match localization_error(*e, *t) {
            FrameOutcome::Distance(d) => Some(d),
            _ => None,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Mll,
    Hmml,
    Rti,
    Krti,
    Lda,
    Vrti,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Mll, Method::Hmml, Method::Rti, Method::Krti, Method::Lda, Method::Vrti];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mll => "mll",
            Method::Hmml => "hmml",
            Method::Rti => "rti",
            Method::Krti => "krti",
            Method::Lda => "lda",
            Method::Vrti => "vrti",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = DflError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| DflError::Input(format!("unknown method '{s}'")))
    }
}

/// Trained fingerprint classifier plus the location of each class.
#[derive(Debug, Clone)]
pub struct Fingerprints {
    pub model: FingerprintModel,
    pub labels: Vec<Estimate>,
}

impl Fingerprints {
    /// Classes are the grid pixels nearest to the labeled positions, plus one
    /// vacant class; classes with fewer than two frames are dropped.
    pub fn train(site: &Site, frames: &[RssFrame], truth: &[Option<Point>], shrinkage: Shrinkage) -> Result<Self> {
        if frames.len() != truth.len() {
            return Err(DflError::Input("fingerprint frames and labels differ in length".into()));
        }
        let grid = site.grid();
        let mut groups: Vec<Vec<Vec<RssValue>>> = vec![Vec::new(); grid.num_states()];
        for (f, t) in frames.iter().zip(truth) {
            let k = t.map_or(grid.sentinel(), |p| grid.nearest(p));
            groups[k].push(f.values.clone());
        }
        let mut classes = Vec::new();
        let mut labels = Vec::new();
        for (k, g) in groups.into_iter().enumerate() {
            if g.len() >= 2 {
                classes.push(g);
                labels.push(Estimate::from_pixel(site, k));
            }
        }
        if classes.is_empty() {
            return Err(DflError::NotCalibrated("no fingerprint location has two or more frames".into()));
        }
        Ok(Fingerprints { model: lda_train(&classes, shrinkage)?, labels })
    }
}

/// Calibration data available to an experiment.
#[derive(Debug, Clone, Default)]
pub struct Calibrations {
    pub model: Option<TrainedModel>,
    pub empty_room: Option<EmptyRoomMeans>,
    pub fingerprints: Option<Fingerprints>,
}

/// A localizer of any kind, consuming frames in order.
pub enum Runner {
    Mpl(Box<MplLocalizer>),
    Rti(RtiLocalizer),
    Krti(KrtiLocalizer),
    Vrti(VrtiLocalizer),
    Lda(Fingerprints),
}

impl Runner {
    pub fn new(
        method: Method,
        site: &Site,
        calib: &Calibrations,
        imaging: Arc<ImagingModel>,
        mode: NeighborMode,
    ) -> Result<Self> {
        let params = &site.config().imaging;
        Ok(match method {
            Method::Mll | Method::Hmml => {
                let model = calib
                    .model
                    .as_ref()
                    .ok_or_else(|| DflError::NotCalibrated(format!("{method} needs a trained model")))?;
                let m = if method == Method::Mll { MplMethod::Mll } else { MplMethod::Hmml };
                Runner::Mpl(Box::new(MplLocalizer::new(site, model, m, mode, imaging)?))
            }
            Method::Rti => {
                let empty = calib
                    .empty_room
                    .clone()
                    .ok_or_else(|| DflError::NotCalibrated("rti needs an empty-room segment".into()))?;
                Runner::Rti(RtiLocalizer::new(imaging, Some(empty), params))
            }
            Method::Krti => Runner::Krti(KrtiLocalizer::new(imaging, site.alphabet(), params)),
            Method::Vrti => Runner::Vrti(VrtiLocalizer::new(imaging, params)),
            Method::Lda => Runner::Lda(
                calib
                    .fingerprints
                    .clone()
                    .ok_or_else(|| DflError::NotCalibrated("lda needs labeled fingerprints".into()))?,
            ),
        })
    }

    pub fn process(&mut self, site: &Site, frame: &RssFrame) -> Result<Estimate> {
        let k = match self {
            Runner::Mpl(m) => m.process(frame)?,
            Runner::Rti(r) => r.process(frame)?,
            Runner::Krti(r) => r.process(frame)?,
            Runner::Vrti(r) => r.process(frame)?.unwrap_or(site.grid().len()),
            Runner::Lda(f) => return Ok(f.labels[lda_classify(&frame.values, &f.model)?]),
        };
        Ok(Estimate::from_pixel(site, k))
    }

    /// The MPL localizer, for inspecting its recalibration state.
    pub fn as_mpl(&self) -> Option<&MplLocalizer> {
        match self {
            Runner::Mpl(m) => Some(m),
            _ => None,
        }
    }
}

pub fn run_method(
    method: Method,
    site: &Site,
    calib: &Calibrations,
    imaging: Arc<ImagingModel>,
    mode: NeighborMode,
    frames: &[RssFrame],
) -> Result<Vec<Estimate>> {
    let mut runner = Runner::new(method, site, calib, imaging, mode)?;
    frames.iter().map(|f| runner.process(site, f)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    NotCalibrated(String),
    Failed(String),
}

/// One method's line in a report.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRow {
    pub method: String,
    pub status: RowStatus,
    pub frames: usize,
    pub error_frames: usize,
    pub median_m: Option<f64>,
    pub p25_m: Option<f64>,
    pub p75_m: Option<f64>,
    pub p90_m: Option<f64>,
    pub rates: Option<DetectionRates>,
    /// Wall-clock seconds; kept out of the deterministic report body.
    pub runtime_s: Option<f64>,
}

impl MethodRow {
    pub fn evaluate(method: &str, estimates: &[Estimate], truth: &[Option<Point>]) -> Result<Self> {
        let errors = error_series(estimates, truth)?;
        Ok(MethodRow {
            method: method.to_string(),
            status: RowStatus::Ok,
            frames: estimates.len(),
            error_frames: errors.len(),
            median_m: median_error(&errors),
            p25_m: stats::quantile(&errors, 0.25),
            p75_m: stats::quantile(&errors, 0.75),
            p90_m: stats::quantile(&errors, 0.90),
            rates: Some(detection_rates(estimates, truth)?),
            runtime_s: None,
        })
    }

    pub fn unavailable(method: &str, status: RowStatus) -> Self {
        MethodRow {
            method: method.to_string(),
            status,
            frames: 0,
            error_frames: 0,
            median_m: None,
            p25_m: None,
            p75_m: None,
            p90_m: None,
            rates: None,
            runtime_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvaluationReport {
    pub rows: Vec<MethodRow>,
}

/// Replay `frames` through every method; missing calibrations become
/// per-method rows instead of errors.
pub fn run_experiment(
    site: &Site,
    calib: &Calibrations,
    frames: &[RssFrame],
    truth: &[Option<Point>],
    methods: &[Method],
    mode: NeighborMode,
) -> Result<EvaluationReport> {
    if frames.len() != truth.len() {
        return Err(DflError::Input("test frames and ground truth differ in length".into()));
    }
    let cfg = site.config();
    let imaging = Arc::new(ImagingModel::new(site.grid(), site.links(), site.deltas(), &cfg.imaging)?);
    let mut rows = Vec::with_capacity(methods.len());
    for m in methods {
        let start = Instant::now();
        let row = match run_method(*m, site, calib, imaging.clone(), mode, frames) {
            Ok(est) => {
                let mut row = MethodRow::evaluate(m.name(), &est, truth)?;
                row.runtime_s = Some(start.elapsed().as_secs_f64());
                row
            }
            Err(DflError::NotCalibrated(msg)) => MethodRow::unavailable(m.name(), RowStatus::NotCalibrated(msg)),
            Err(e @ DflError::Invariant(_)) => return Err(e),
            Err(e) => MethodRow::unavailable(m.name(), RowStatus::Failed(e.to_string())),
        };
        rows.push(row);
    }
    Ok(EvaluationReport { rows })
}

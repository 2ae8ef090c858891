//! Parameter learning: robust unaffected estimates, the unsupervised
//! spatial fit and runtime recalibration buffers.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::{CalibrationParams, MixtureConstants};
use crate::error::{DflError, Result};
use crate::geometry::{excess_path_length, LinkId, Point};
use crate::localizers::imaging::ImagingModel;
use crate::localizers::rti::KrtiLocalizer;
use crate::rss_model::{
    build_conditional_pmf, Alphabet, ConditionalPmf, LinkModel, LinkStateParams, RssFrame, RssValue,
    SpatialParams,
};
use crate::site::Site;
use crate::stats;

/// MAD scale factor for a Gaussian.
const MAD_SCALE: f64 = 1.48;

/// Median and MAD-based variance, floored at `omega^2`.
pub fn robust_unaffected_estimate(samples: &[f64], omega: f64) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(DflError::InsufficientData(format!(
            "robust estimate needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let mu = stats::median(samples).expect("non-empty");
    let mad = stats::mad(samples).expect("non-empty");
    Ok((mu, (MAD_SCALE * mad).powi(2).max(omega * omega)))
}

/// FIFO of recent unaffected samples for one link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBuffer {
    samples: VecDeque<i32>,
    capacity: usize,
    committed_mu: f64,
}

impl LinkBuffer {
    pub fn new(capacity: usize, committed_mu: f64) -> Self {
        LinkBuffer { samples: VecDeque::with_capacity(capacity), capacity, committed_mu }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() == self.capacity
    }

    pub fn samples(&self) -> impl Iterator<Item = i32> + '_ {
        self.samples.iter().copied()
    }

    pub fn committed_mu(&self) -> f64 {
        self.committed_mu
    }

    /// Append `r` when VRTI places the person far from the link or MPL says the
    /// area is empty. `vrti_excess` is `None` when VRTI sees no motion.
    /// Returns whether the sample was kept.
    pub fn push_unaffected(&mut self, r: RssValue, vrti_excess: Option<f64>, max_excess: f64, vacant: bool) -> bool {
        let Some(v) = r.dbm() else { return false };
        let far = vrti_excess.is_some_and(|d| d > max_excess / 2.0);
        if !(far || vacant) {
            return false;
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(v);
        true
    }

    /// Commit the buffer estimate when it drifted past `threshold` dBm from the
    /// committed mean. Only evaluated on a full buffer.
    pub fn recalibrate(&mut self, threshold: f64, consts: &MixtureConstants) -> Option<LinkStateParams> {
        if !self.is_full() {
            return None;
        }
        let v: Vec<f64> = self.samples.iter().map(|x| *x as f64).collect();
        let mean = stats::mean(&v)?;
        if (self.committed_mu - mean).abs() <= threshold {
            return None;
        }
        let var = stats::sample_variance(&v)?.max(consts.min_variance());
        let state = LinkStateParams::from_unaffected(mean, var, consts).ok()?;
        self.committed_mu = mean;
        Some(state)
    }
}

/// `(rss, excess path length)` pairs gathered during training, per link.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTuples {
    links: Vec<Vec<(RssValue, f64)>>,
}

impl TrainingTuples {
    pub fn new(num_links: usize) -> Self {
        TrainingTuples { links: vec![Vec::new(); num_links] }
    }

    pub fn push(&mut self, link: usize, r: RssValue, excess: f64) {
        self.links[link].push((r, excess.max(0.0)));
    }

    pub fn link(&self, link: usize) -> &[(RssValue, f64)] {
        &self.links[link]
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }
}

/// Normalized RSS histograms per excess-path-length bin of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedHistograms {
    /// Mean excess path length of the tuples in each retained bin.
    pub centers: Vec<f64>,
    pub histograms: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
}

/// Group tuples into `width`-wide excess bins (`[m w, (m+1) w)`), dropping
/// bins with fewer than `min_count` samples.
pub fn bin_training_tuples(
    tuples: &[(RssValue, f64)],
    alphabet: Alphabet,
    width: f64,
    min_count: usize,
) -> Result<BinnedHistograms> {
    if tuples.is_empty() {
        return Err(DflError::InsufficientData("no training tuples".into()));
    }
    let mut bins: BTreeMap<u64, (f64, Vec<usize>)> = BTreeMap::new();
    for (r, d) in tuples {
        let Some(i) = r.dbm().and_then(|v| alphabet.index(v)) else { continue };
        let key = (d / width + 1e-9).floor().max(0.0) as u64;
        let entry = bins.entry(key).or_insert_with(|| (0.0, Vec::new()));
        entry.0 += d;
        entry.1.push(i);
    }
    let mut out = BinnedHistograms { centers: Vec::new(), histograms: Vec::new(), counts: Vec::new() };
    for (sum, idx) in bins.into_values() {
        if idx.len() < min_count {
            continue;
        }
        let n = idx.len() as f64;
        let mut h = vec![0.0; alphabet.len()];
        for i in &idx {
            h[*i] += 1.0 / n;
        }
        out.centers.push(sum / n);
        out.histograms.push(h);
        out.counts.push(idx.len());
    }
    if out.centers.is_empty() {
        return Err(DflError::InsufficientData(format!("no excess bin holds {min_count} samples")));
    }
    Ok(out)
}

/// `n` equally spaced weights from `min` to 1.
pub fn weight_candidates(n: usize, min: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                min * (1.0 - t) + t
            })
            .collect(),
    }
}

/// Squared residual of the mixture `b pmf_a + (1 - b) pmf_u` against `h`.
pub fn mixture_residual(h: &[f64], pmf_a: &ConditionalPmf, pmf_u: &ConditionalPmf, b: f64) -> f64 {
    h.iter()
        .zip(pmf_a.masses().iter().zip(pmf_u.masses()))
        .map(|(h, (a, u))| (b * a + (1.0 - b) * u - h).powi(2))
        .sum()
}

/// Candidate weight whose mixture best matches `h`; ties go to the smaller weight.
pub fn fit_mixture_weight(h: &[f64], pmf_a: &ConditionalPmf, pmf_u: &ConditionalPmf, candidates: &[f64]) -> f64 {
    let mut best = (f64::INFINITY, candidates.first().copied().unwrap_or(0.0));
    for &b in candidates {
        let r = mixture_residual(h, pmf_a, pmf_u, b);
        if r < best.0 {
            best = (r, b);
        }
    }
    best.1
}

const BETA_MIN: f64 = 1e-9;
const BETA_MAX: f64 = 1.0 - 1e-9;

fn optimal_beta(curve: &[(f64, f64)], lambda: f64) -> f64 {
    let (num, den) = curve.iter().fold((0.0, 0.0), |(n, d), (delta, b)| {
        let e = (-delta / lambda).exp();
        (n + b * e, d + e * e)
    });
    if den > 0.0 {
        (num / den).clamp(BETA_MIN, BETA_MAX)
    } else {
        BETA_MIN
    }
}

fn curve_cost(curve: &[(f64, f64)], lambda: f64) -> (f64, f64) {
    let beta = optimal_beta(curve, lambda);
    let cost = curve.iter().map(|(d, b)| (beta * (-d / lambda).exp() - b).powi(2)).sum();
    (cost, beta)
}

/// Least-squares `b = beta exp(-delta / lambda)` over `(delta, b)` points.
pub fn fit_spatial_params(curve: &[(f64, f64)], params: &CalibrationParams) -> Result<SpatialParams> {
    let mut distinct: Vec<f64> = curve.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(DflError::InsufficientData("spatial fit needs at least 2 distinct excess values".into()));
    }
    let (lo, hi) = (params.lambda_min_m.ln(), params.lambda_max_m.ln());
    let n = params.lambda_grid.max(2);
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let cost = |log_l: f64| curve_cost(curve, log_l.exp()).0;
    let best = grid
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, g)| {
            let c = cost(*g);
            if c < acc.1 {
                (i, c)
            } else {
                acc
            }
        })
        .0;
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n - 1)]);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (cost(c), cost(d));
    while b - a > 1e-10 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = cost(d);
        }
    }
    let mut log_l = 0.5 * (a + b);
    if cost(grid[best]) < cost(log_l) {
        log_l = grid[best];
    }
    let lambda = log_l.exp();
    SpatialParams::new(curve_cost(curve, lambda).1, lambda)
}

/// Where the training excess path lengths come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainingSource {
    /// Unsupervised: KRTI estimates on the training trace.
    Krti,
    /// Ground-truth positions per frame; `None` while the area is empty.
    TrueLocations(Vec<Option<Point>>),
    /// Skip the spatial fit and use these parameters on every link.
    Fixed(SpatialParams),
}

/// Learned parameters of one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkCalibration {
    pub link: LinkId,
    pub state: LinkStateParams,
    pub spatial: SpatialParams,
    /// The spatial fit fell back to the configured defaults.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub links: Vec<LinkCalibration>,
}

impl TrainedModel {
    pub fn spatial(&self) -> Vec<SpatialParams> {
        self.links.iter().map(|l| l.spatial).collect()
    }

    pub fn link_models(&self, site: &Site) -> Result<Vec<LinkModel>> {
        if self.links.len() != site.num_links() {
            return Err(DflError::Input(format!(
                "model has {} links, site has {}",
                self.links.len(),
                site.num_links()
            )));
        }
        self.links
            .iter()
            .zip(site.links())
            .map(|(c, g)| {
                if c.link != g.id {
                    return Err(DflError::Input(format!("model link {} does not match site link {}", c.link, g.id)));
                }
                LinkModel::new(c.state, c.spatial, site.alphabet(), site.config().mixture.epsilon)
            })
            .collect()
    }
}

fn collect_tuples(frames: &[RssFrame], site: &Site, source: &TrainingSource) -> Result<TrainingTuples> {
    let l = site.num_links();
    let mut tuples = TrainingTuples::new(l);
    match source {
        TrainingSource::Krti => {
            let cfg = site.config();
            let model = Arc::new(ImagingModel::new(site.grid(), site.links(), site.deltas(), &cfg.imaging)?);
            let mut krti = KrtiLocalizer::new(model, site.alphabet(), &cfg.imaging);
            for f in frames {
                let k = krti.process(f)?;
                if k >= site.grid().len() {
                    continue;
                }
                for (li, r) in f.values.iter().enumerate() {
                    tuples.push(li, *r, site.deltas().get(k, li));
                }
            }
        }
        TrainingSource::TrueLocations(truth) => {
            if truth.len() != frames.len() {
                return Err(DflError::Input(format!(
                    "{} ground-truth positions for {} frames",
                    truth.len(),
                    frames.len()
                )));
            }
            for (f, p) in frames.iter().zip(truth) {
                let Some(p) = p else { continue };
                for ((li, r), g) in f.values.iter().enumerate().zip(site.links()) {
                    tuples.push(li, *r, excess_path_length(*p, g));
                }
            }
        }
        TrainingSource::Fixed(_) => {}
    }
    Ok(tuples)
}

/// Spatial fit of one link; `None` when the data cannot support it.
fn fit_link(
    tuples: &[(RssValue, f64)],
    state: &LinkStateParams,
    alphabet: Alphabet,
    consts: &MixtureConstants,
    params: &CalibrationParams,
    candidates: &[f64],
) -> Result<Option<SpatialParams>> {
    let bins = match bin_training_tuples(tuples, alphabet, params.bin_width_m, params.min_bin_count) {
        Ok(b) => b,
        Err(DflError::InsufficientData(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let pmf_u = build_conditional_pmf(state.mu_u, state.var_u, alphabet, consts.epsilon)?;
    let pmf_a = build_conditional_pmf(state.mu_a, state.var_a, alphabet, consts.epsilon)?;
    let curve: Vec<(f64, f64)> = bins
        .centers
        .iter()
        .zip(&bins.histograms)
        .map(|(d, h)| (*d, fit_mixture_weight(h, &pmf_a, &pmf_u, candidates)))
        .collect();
    // a link that never looked affected carries no spatial information
    if curve.iter().all(|(_, b)| *b <= candidates[0]) {
        return Ok(None);
    }
    match fit_spatial_params(&curve, params) {
        Ok(s) => Ok(Some(s)),
        Err(DflError::InsufficientData(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Learn every link's state and spatial parameters from a training trace.
pub fn train_spatial_model(frames: &[RssFrame], site: &Site, source: &TrainingSource) -> Result<TrainedModel> {
    if frames.is_empty() {
        return Err(DflError::InsufficientData("training trace is empty".into()));
    }
    let cfg = site.config();
    let consts = &cfg.mixture;
    let params = &cfg.calibration;
    let l = site.num_links();
    if let Some(f) = frames.iter().find(|f| f.values.len() != l) {
        return Err(DflError::Input(format!("training frame at t={} has {} samples for {l} links", f.timestamp, f.values.len())));
    }
    let fallback = SpatialParams::new(params.fallback_beta, params.fallback_lambda_m)?;
    let tuples = collect_tuples(frames, site, source)?;
    let candidates = weight_candidates(params.weight_candidates, params.weight_min);
    let mut links = Vec::with_capacity(l);
    for (li, g) in site.links().iter().enumerate() {
        let samples: Vec<f64> = frames.iter().filter_map(|f| f.values[li].dbm()).map(f64::from).collect();
        let (mu, var) = robust_unaffected_estimate(&samples, consts.omega_db)
            .map_err(|e| DflError::InsufficientData(format!("link {}: {e}", g.id)))?;
        let state = LinkStateParams::from_unaffected(mu, var, consts)?;
        let fitted = match source {
            TrainingSource::Fixed(s) => Some(*s),
            _ => fit_link(tuples.link(li), &state, site.alphabet(), consts, params, &candidates)?,
        };
        links.push(LinkCalibration {
            link: g.id,
            state,
            spatial: fitted.unwrap_or(fallback),
            fallback: fitted.is_none(),
        });
    }
    Ok(TrainedModel { links })
}

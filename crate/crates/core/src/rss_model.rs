//! RSS alphabet, affected/unaffected pmfs, the spatial mixture weight and the
//! per-pixel likelihood map.

use serde::{Deserialize, Serialize};

use crate::config::MixtureConstants;
use crate::error::{DflError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RssValue {
    Dbm(i32),
    Missing,
}

impl RssValue {
    pub fn dbm(self) -> Option<i32> {
        match self {
            RssValue::Dbm(v) => Some(v),
            RssValue::Missing => None,
        }
    }

    pub fn is_missing(self) -> bool {
        matches!(self, RssValue::Missing)
    }
}

/// Integer dBm range `[min, max]`; missing samples are handled separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alphabet {
    min: i32,
    max: i32,
}

impl Alphabet {
    pub fn new(min: i32, max: i32) -> Result<Self> {
        if min >= max {
            return Err(DflError::Config(format!("empty RSS alphabet [{min}, {max}]")));
        }
        Ok(Alphabet { min, max })
    }

    pub fn min(&self) -> i32 {
        self.min
    }

    pub fn max(&self) -> i32 {
        self.max
    }

    /// Number of dBm values (missing excluded).
    pub fn len(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, v: i32) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn index(&self, v: i32) -> Option<usize> {
        self.contains(v).then(|| (v - self.min) as usize)
    }

    pub fn value(&self, index: usize) -> i32 {
        self.min + index as i32
    }

    pub fn values(&self) -> impl Iterator<Item = i32> {
        self.min..=self.max
    }

    /// Clamp a real-valued draw to the range, then round to the nearest integer.
    pub fn quantize(&self, x: f64) -> i32 {
        x.clamp(self.min as f64, self.max as f64).round() as i32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RssFrame {
    pub timestamp: f64,
    pub values: Vec<RssValue>,
}

/// Gaussian parameters of both link states (dBm, dBm^2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkStateParams {
    pub mu_u: f64,
    pub var_u: f64,
    pub mu_a: f64,
    pub var_a: f64,
}

impl LinkStateParams {
    /// Unaffected parameters with the affected pair derived from them.
    pub fn from_unaffected(mu_u: f64, var_u: f64, consts: &MixtureConstants) -> Result<Self> {
        let (mu_a, var_a) =
            derive_affected_params(mu_u, var_u, consts.delta_db, consts.eta, consts.omega_db)?;
        Ok(LinkStateParams { mu_u, var_u, mu_a, var_a })
    }
}

pub fn derive_affected_params(
    mu_u: f64,
    var_u: f64,
    delta: f64,
    eta: f64,
    omega: f64,
) -> Result<(f64, f64)> {
    if !(var_u >= omega * omega) || !mu_u.is_finite() {
        return Err(DflError::Parameter(format!(
            "unaffected variance {var_u} is below the floor {}",
            omega * omega
        )));
    }
    Ok((mu_u - delta, eta * var_u))
}

/// `beta` is the affected probability on the link line, `lambda` its decay length (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialParams {
    pub beta: f64,
    pub lambda: f64,
}

impl SpatialParams {
    pub fn new(beta: f64, lambda: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) || !(lambda > 0.0) || !lambda.is_finite() {
            return Err(DflError::Parameter(format!(
                "spatial parameters out of range: beta={beta}, lambda={lambda}"
            )));
        }
        Ok(SpatialParams { beta, lambda })
    }
}

/// Probability that a link is affected given the person's pixel.
pub fn affected_probability(
    spatial: &SpatialParams,
    excess: f64,
    is_sentinel: bool,
    consts: &MixtureConstants,
) -> f64 {
    if is_sentinel {
        consts.sentinel_affected
    } else {
        spatial.beta * (-excess / spatial.lambda).exp()
    }
}

/// Discretized Gaussian over the alphabet, floored at epsilon.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPmf {
    alphabet: Alphabet,
    masses: Vec<f64>,
    epsilon: f64,
}

impl ConditionalPmf {
    pub fn prob(&self, r: RssValue) -> f64 {
        match r {
            RssValue::Missing => self.epsilon,
            RssValue::Dbm(v) => match self.alphabet.index(v) {
                Some(i) => self.masses[i],
                None => self.epsilon,
            },
        }
    }

    /// Masses of the dBm values, in alphabet order.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    /// Total mass including the missing symbol.
    pub fn total(&self) -> f64 {
        self.masses.iter().sum::<f64>() + self.epsilon
    }
}

pub fn build_conditional_pmf(mu: f64, var: f64, alphabet: Alphabet, epsilon: f64) -> Result<ConditionalPmf> {
    if !(var > 0.0) || !var.is_finite() || !mu.is_finite() {
        return Err(DflError::Parameter(format!("invalid Gaussian N({mu}, {var})")));
    }
    // shift exponents by the smallest squared distance so the largest weight is 1
    let nearest = (mu.clamp(alphabet.min() as f64, alphabet.max() as f64).round() - mu).powi(2);
    let mut masses: Vec<f64> = alphabet
        .values()
        .map(|v| {
            let d = v as f64 - mu;
            (-(d * d - nearest) / (2.0 * var)).exp()
        })
        .collect();
    let gamma: f64 = masses.iter().sum();
    for m in &mut masses {
        *m = (*m / gamma).max(epsilon);
    }
    Ok(ConditionalPmf { alphabet, masses, epsilon })
}

pub fn mixture_probability(r: RssValue, pmf_a: &ConditionalPmf, pmf_u: &ConditionalPmf, p_a: f64) -> f64 {
    p_a * pmf_a.prob(r) + (1.0 - p_a) * pmf_u.prob(r)
}

/// Everything the likelihood needs about one link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    state: LinkStateParams,
    spatial: SpatialParams,
    pmf_u: ConditionalPmf,
    pmf_a: ConditionalPmf,
}

impl LinkModel {
    pub fn new(
        state: LinkStateParams,
        spatial: SpatialParams,
        alphabet: Alphabet,
        epsilon: f64,
    ) -> Result<Self> {
        Ok(LinkModel {
            pmf_u: build_conditional_pmf(state.mu_u, state.var_u, alphabet, epsilon)?,
            pmf_a: build_conditional_pmf(state.mu_a, state.var_a, alphabet, epsilon)?,
            state,
            spatial,
        })
    }

    pub fn state(&self) -> &LinkStateParams {
        &self.state
    }

    pub fn spatial(&self) -> &SpatialParams {
        &self.spatial
    }

    pub fn pmf_u(&self) -> &ConditionalPmf {
        &self.pmf_u
    }

    pub fn pmf_a(&self) -> &ConditionalPmf {
        &self.pmf_a
    }

    /// Replace the state parameters and rebuild both pmfs.
    pub fn set_state(&mut self, state: LinkStateParams) -> Result<()> {
        let alphabet = self.pmf_u.alphabet;
        let eps = self.pmf_u.epsilon;
        *self = LinkModel::new(state, self.spatial, alphabet, eps)?;
        Ok(())
    }
}

/// Excess path length of every (in-area pixel, link) pair, stored pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTable {
    num_links: usize,
    num_pixels: usize,
    values: Vec<f64>,
}

impl DeltaTable {
    pub fn new(grid: &crate::geometry::Grid, links: &[crate::geometry::LinkGeometry]) -> Self {
        let mut values = Vec::with_capacity(grid.len() * links.len());
        for p in grid.points() {
            values.extend(links.iter().map(|l| crate::geometry::excess_path_length(*p, l)));
        }
        DeltaTable { num_links: links.len(), num_pixels: grid.len(), values }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, num_links: usize) -> Result<Self> {
        if rows.iter().any(|r| r.len() != num_links) {
            return Err(DflError::Input("delta table rows must all have one entry per link".into()));
        }
        Ok(DeltaTable {
            num_links,
            num_pixels: rows.len(),
            values: rows.into_iter().flatten().collect(),
        })
    }

    pub fn num_links(&self) -> usize {
        self.num_links
    }

    pub fn num_pixels(&self) -> usize {
        self.num_pixels
    }

    /// Excess path lengths of pixel `k` to every link.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.num_links..(k + 1) * self.num_links]
    }

    pub fn get(&self, k: usize, link: usize) -> f64 {
        self.values[k * self.num_links + link]
    }

    /// Largest excess path length of each link over the in-area pixels.
    pub fn max_per_link(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.num_links];
        for k in 0..self.num_pixels {
            for (m, d) in out.iter_mut().zip(self.row(k)) {
                *m = m.max(*d);
            }
        }
        out
    }
}

/// Affected probability of every (state, link) pair, including the sentinel row.
#[derive(Debug, Clone, PartialEq)]
pub struct AffectedTable {
    num_links: usize,
    num_states: usize,
    values: Vec<f64>,
}

impl AffectedTable {
    pub fn new(deltas: &DeltaTable, spatial: &[SpatialParams], consts: &MixtureConstants) -> Result<Self> {
        if spatial.len() != deltas.num_links() {
            return Err(DflError::Input(format!(
                "{} spatial parameter sets for {} links",
                spatial.len(),
                deltas.num_links()
            )));
        }
        let l = deltas.num_links();
        let mut values = Vec::with_capacity((deltas.num_pixels() + 1) * l);
        for k in 0..deltas.num_pixels() {
            values.extend(
                deltas
                    .row(k)
                    .iter()
                    .zip(spatial)
                    .map(|(d, s)| affected_probability(s, *d, false, consts)),
            );
        }
        values.extend(std::iter::repeat_n(consts.sentinel_affected, l));
        Ok(AffectedTable { num_links: l, num_states: deltas.num_pixels() + 1, values })
    }

    pub fn num_links(&self) -> usize {
        self.num_links
    }

    /// `P + 1`.
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.num_links..(k + 1) * self.num_links]
    }
}

/// Per-state likelihoods normalized so the largest equals one.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodMap {
    probs: Vec<f64>,
    log_likelihoods: Vec<f64>,
    psi: f64,
}

impl LikelihoodMap {
    pub fn from_log_likelihoods(log_likelihoods: Vec<f64>) -> Result<Self> {
        if log_likelihoods.is_empty() {
            return Err(DflError::Input("likelihood map needs at least one state".into()));
        }
        let psi = log_likelihoods.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !psi.is_finite() {
            return Err(DflError::Invariant("likelihood map has no finite entry".into()));
        }
        let probs = log_likelihoods.iter().map(|v| (v - psi).exp()).collect();
        Ok(LikelihoodMap { probs, log_likelihoods, psi })
    }

    /// From raw (positive) emission probabilities.
    pub fn from_probabilities(probs: &[f64]) -> Result<Self> {
        if probs.iter().any(|p| !(*p > 0.0)) {
            return Err(DflError::Input("emission probabilities must be positive".into()));
        }
        Self::from_log_likelihoods(probs.iter().map(|p| p.ln()).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_likelihoods(&self) -> &[f64] {
        &self.log_likelihoods
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Log-domain product of the per-link mixture probabilities for every state.
pub fn likelihood_map(frame: &RssFrame, models: &[LinkModel], affected: &AffectedTable) -> Result<LikelihoodMap> {
    let l = models.len();
    if frame.values.len() != l || affected.num_links() != l {
        return Err(DflError::Input(format!(
            "frame has {} samples but {} links are configured",
            frame.values.len(),
            l
        )));
    }
    let mut p_aff = Vec::with_capacity(l);
    let mut p_unaff = Vec::with_capacity(l);
    for (r, m) in frame.values.iter().zip(models) {
        p_aff.push(m.pmf_a.prob(*r));
        p_unaff.push(m.pmf_u.prob(*r));
    }
    let logs = (0..affected.num_states())
        .map(|k| {
            affected
                .row(k)
                .iter()
                .zip(p_aff.iter().zip(&p_unaff))
                .map(|(pa, (a, u))| (u + pa * (a - u)).ln())
                .sum::<f64>()
        })
        .collect();
    LikelihoodMap::from_log_likelihoods(logs)
}

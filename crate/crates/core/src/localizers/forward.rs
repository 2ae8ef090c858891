//! Maximum-likelihood and forward-filtered (HMM) pixel estimates.

use crate::error::{DflError, Result};
use crate::rss_model::LikelihoodMap;

use super::transition::TransitionKernel;

/// Index of the largest value, ties toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    best
}

/// Per-frame maximum likelihood estimate; the last index means "vacant".
pub fn mll_estimate(likelihoods: &LikelihoodMap) -> usize {
    argmax(likelihoods.probs())
}

/// Scaled forward vector. The true forward probabilities are
/// `scaled[k] * exp(log_scale)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardState {
    scaled: Vec<f64>,
    log_scale: f64,
    frames: usize,
    scratch: Vec<f64>,
}

impl ForwardState {
    pub fn new(num_states: usize) -> Self {
        ForwardState {
            scaled: vec![0.0; num_states],
            log_scale: 0.0,
            frames: 0,
            scratch: vec![0.0; num_states],
        }
    }

    pub fn scaled(&self) -> &[f64] {
        &self.scaled
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Unscaled forward probabilities (may underflow for long runs).
    pub fn unscaled(&self) -> Vec<f64> {
        let s = self.log_scale.exp();
        self.scaled.iter().map(|a| a * s).collect()
    }

    pub fn reset(&mut self) {
        self.scaled.iter_mut().for_each(|a| *a = 0.0);
        self.log_scale = 0.0;
        self.frames = 0;
    }
}

/// Advance the forward recursion by one frame and return the filtered argmax.
pub fn hmml_step<T: TransitionKernel + ?Sized>(
    state: &mut ForwardState,
    likelihoods: &LikelihoodMap,
    transition: &T,
) -> Result<usize> {
    let n = transition.num_states();
    if likelihoods.len() != n || state.scaled.len() != n {
        return Err(DflError::Input(format!(
            "forward step over {n} states got a map of {} and a state of {}",
            likelihoods.len(),
            state.scaled.len()
        )));
    }
    let emission = likelihoods.probs();
    if state.frames == 0 {
        for ((a, pi), e) in state.scaled.iter_mut().zip(transition.initial()).zip(emission) {
            *a = pi * e;
        }
    } else {
        transition.propagate(&state.scaled, &mut state.scratch);
        for ((a, prior), e) in state.scaled.iter_mut().zip(&state.scratch).zip(emission) {
            *a = prior * e;
        }
    }
    let peak = state.scaled.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(DflError::Invariant("forward vector vanished".into()));
    }
    state.scaled.iter_mut().for_each(|a| *a /= peak);
    state.log_scale += likelihoods.psi() + peak.ln();
    state.frames += 1;
    Ok(argmax(&state.scaled))
}

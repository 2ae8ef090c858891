use crate::config::MotionParams;
use crate::error::{DflError, Result};
use crate::geometry::Adjacency;

/// One step of probability propagation: `out[k] = sum_w alpha[w] * p(w -> k)`.
pub trait TransitionKernel {
    fn num_states(&self) -> usize;
    fn propagate(&self, alpha: &[f64], out: &mut [f64]);
    fn initial(&self) -> &[f64];
}

/// Sparse row-stochastic motion model over the `P + 1` grid states.
///
/// Every row holds a self probability, an equal share for each neighbor and a
/// constant floor for every other state.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    adjacency: Adjacency,
    self_prob: Vec<f64>,
    neighbor_prob: Vec<f64>,
    floor: f64,
    initial: Vec<f64>,
}

pub fn build_transition_model(adjacency: &Adjacency, motion: &MotionParams) -> Result<TransitionModel> {
    let n = adjacency.num_states();
    if n < 2 {
        return Err(DflError::Config("transition model needs at least one in-area pixel".into()));
    }
    let p = n - 1;
    let floor = motion.non_neighbor_floor;
    let mut self_prob = Vec::with_capacity(n);
    let mut neighbor_prob = Vec::with_capacity(n);
    for k in 0..n {
        let deg = adjacency.of(k).len();
        let non_neighbors = (n - 1 - deg) as f64;
        let remaining = 1.0 - motion.self_transition - floor * non_neighbors;
        if deg == 0 {
            // isolated state keeps the neighbor share for itself
            self_prob.push(1.0 - floor * non_neighbors);
            neighbor_prob.push(0.0);
        } else {
            self_prob.push(motion.self_transition);
            neighbor_prob.push(remaining / deg as f64);
        }
    }
    let mut initial = vec![(1.0 - motion.initial_out_prob) / p as f64; n];
    initial[p] = motion.initial_out_prob;
    Ok(TransitionModel {
        adjacency: adjacency.clone(),
        self_prob,
        neighbor_prob,
        floor,
        initial,
    })
}

impl TransitionModel {
    pub fn probability(&self, from: usize, to: usize) -> f64 {
        if from == to {
            self.self_prob[from]
        } else if self.adjacency.are_neighbors(from, to) {
            self.neighbor_prob[from]
        } else {
            self.floor
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.num_states();
        (0..n)
            .map(|w| (0..n).map(|k| self.probability(w, k)).collect())
            .collect()
    }
}

impl TransitionKernel for TransitionModel {
    fn num_states(&self) -> usize {
        self.self_prob.len()
    }

    fn propagate(&self, alpha: &[f64], out: &mut [f64]) {
        let total: f64 = alpha.iter().sum();
        let base = self.floor * total;
        for (k, o) in out.iter_mut().enumerate() {
            *o = base + alpha[k] * (self.self_prob[k] - self.floor);
        }
        for (w, &a) in alpha.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let share = a * (self.neighbor_prob[w] - self.floor);
            for &k in self.adjacency.of(w) {
                out[k] += share;
            }
        }
    }

    fn initial(&self) -> &[f64] {
        &self.initial
    }
}

/// Dense transition matrix with an explicit initial distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTransition {
    matrix: Vec<Vec<f64>>,
    initial: Vec<f64>,
}

impl DenseTransition {
    pub fn new(matrix: Vec<Vec<f64>>, initial: Vec<f64>) -> Result<Self> {
        let n = initial.len();
        if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
            return Err(DflError::Input("transition matrix must be square and match the initial vector".into()));
        }
        Ok(DenseTransition { matrix, initial })
    }
}

impl TransitionKernel for DenseTransition {
    fn num_states(&self) -> usize {
        self.initial.len()
    }

    fn propagate(&self, alpha: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (row, a) in self.matrix.iter().zip(alpha) {
            for (o, p) in out.iter_mut().zip(row) {
                *o += a * p;
            }
        }
    }

    fn initial(&self) -> &[f64] {
        &self.initial
    }
}

//! Fingerprint classifier: class means with a shrunk pooled covariance.

use nalgebra::{DMatrix, DVector};

use crate::error::{DflError, Result};
use crate::rss_model::RssValue;

use super::forward::argmax;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shrinkage {
    Fixed(f64),
    /// Data-driven intensity (Ledoit and Wolf's estimator on the pooled residuals).
    LedoitWolf,
}

#[derive(Debug, Clone)]
pub struct FingerprintModel {
    means: Vec<DVector<f64>>,
    grand_mean: DVector<f64>,
    covariance: DMatrix<f64>,
    pooled: DMatrix<f64>,
    shrinkage: f64,
    ridge_scale: f64,
    counts: Vec<usize>,
    /// `Sigma^-1 mu_k` per class.
    directions: Vec<DVector<f64>>,
    /// `0.5 mu_k^T Sigma^-1 mu_k` per class.
    offsets: Vec<f64>,
}

impl FingerprintModel {
    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn mean(&self, class: usize) -> &DVector<f64> {
        &self.means[class]
    }

    /// Shrunk covariance.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Pooled within-class covariance before shrinkage.
    pub fn pooled(&self) -> &DMatrix<f64> {
        &self.pooled
    }

    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    pub fn ridge_scale(&self) -> f64 {
        self.ridge_scale
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Linear discriminant score of every class.
    pub fn scores(&self, frame: &[RssValue]) -> Result<Vec<f64>> {
        let l = self.grand_mean.len();
        if frame.len() != l {
            return Err(DflError::Input(format!("frame has {} links, model has {l}", frame.len())));
        }
        let r = DVector::from_iterator(
            l,
            frame
                .iter()
                .zip(self.grand_mean.iter())
                .map(|(v, g)| v.dbm().map(f64::from).unwrap_or(*g)),
        );
        Ok(self
            .directions
            .iter()
            .zip(&self.offsets)
            .map(|(d, c)| r.dot(d) - c)
            .collect())
    }
}

/// Fit class means and the shrunk pooled covariance. Each class is a list of
/// frames; missing samples are imputed with that class's mean.
pub fn lda_train(classes: &[Vec<Vec<RssValue>>], shrinkage: Shrinkage) -> Result<FingerprintModel> {
    if classes.is_empty() {
        return Err(DflError::InsufficientData("no fingerprint classes".into()));
    }
    let l = classes[0].first().map(Vec::len).unwrap_or(0);
    for (c, frames) in classes.iter().enumerate() {
        if frames.len() < 2 {
            return Err(DflError::InsufficientData(format!("fingerprint class {c} has fewer than 2 frames")));
        }
        if frames.iter().any(|f| f.len() != l) {
            return Err(DflError::Input(format!("fingerprint class {c} has frames of the wrong length")));
        }
    }
    if l == 0 {
        return Err(DflError::Input("fingerprints have no links".into()));
    }

    // per-link fallback for classes that never observed a link
    let mut global_sum = vec![0.0; l];
    let mut global_n = vec![0usize; l];
    for f in classes.iter().flatten() {
        for (i, v) in f.iter().enumerate() {
            if let Some(v) = v.dbm() {
                global_sum[i] += v as f64;
                global_n[i] += 1;
            }
        }
    }
    let global: Vec<f64> = global_sum
        .iter()
        .zip(&global_n)
        .map(|(s, n)| if *n > 0 { s / *n as f64 } else { 0.0 })
        .collect();

    let mut means = Vec::with_capacity(classes.len());
    let mut filled: Vec<Vec<DVector<f64>>> = Vec::with_capacity(classes.len());
    for frames in classes {
        let mut sum = vec![0.0; l];
        let mut n = vec![0usize; l];
        for f in frames {
            for (i, v) in f.iter().enumerate() {
                if let Some(v) = v.dbm() {
                    sum[i] += v as f64;
                    n[i] += 1;
                }
            }
        }
        let mean = DVector::from_iterator(
            l,
            (0..l).map(|i| if n[i] > 0 { sum[i] / n[i] as f64 } else { global[i] }),
        );
        filled.push(
            frames
                .iter()
                .map(|f| {
                    DVector::from_iterator(
                        l,
                        f.iter().enumerate().map(|(i, v)| v.dbm().map(f64::from).unwrap_or(mean[i])),
                    )
                })
                .collect(),
        );
        means.push(mean);
    }

    let total: usize = classes.iter().map(Vec::len).sum();
    let k_prime = classes.len() - 1;
    let dof = total - k_prime;
    let mut residuals = DMatrix::<f64>::zeros(l, total);
    let mut col = 0;
    for (frames, mean) in filled.iter().zip(&means) {
        for f in frames {
            residuals.set_column(col, &(f - mean));
            col += 1;
        }
    }
    let pooled = (&residuals * residuals.transpose()) / dof as f64;
    let ridge_scale = pooled.trace() / l as f64;
    let nu = match shrinkage {
        Shrinkage::Fixed(nu) => {
            if !(0.0..=1.0).contains(&nu) {
                return Err(DflError::Parameter(format!("shrinkage {nu} outside [0, 1]")));
            }
            nu
        }
        Shrinkage::LedoitWolf => ledoit_wolf_intensity(&residuals, &pooled, ridge_scale),
    };
    let covariance =
        &pooled * (1.0 - nu) + DMatrix::<f64>::identity(l, l) * (nu * ridge_scale);
    let chol = covariance.clone().cholesky().ok_or_else(|| {
        DflError::InsufficientData("shrunk covariance is not positive definite; increase shrinkage".into())
    })?;
    let directions: Vec<DVector<f64>> = means.iter().map(|m| chol.solve(m)).collect();
    let offsets = means.iter().zip(&directions).map(|(m, d)| 0.5 * m.dot(d)).collect();
    let grand_mean = DVector::from_vec(global);
    Ok(FingerprintModel {
        means,
        grand_mean,
        covariance,
        pooled,
        shrinkage: nu,
        ridge_scale,
        counts: classes.iter().map(Vec::len).collect(),
        directions,
        offsets,
    })
}

fn ledoit_wolf_intensity(residuals: &DMatrix<f64>, pooled: &DMatrix<f64>, rho: f64) -> f64 {
    let t = residuals.ncols() as f64;
    let l = pooled.nrows();
    let mut target_gap = pooled.clone();
    for i in 0..l {
        target_gap[(i, i)] -= rho;
    }
    let d2 = target_gap.norm_squared();
    if d2 <= 0.0 {
        return 1.0;
    }
    let mut b2 = 0.0;
    for x in residuals.column_iter() {
        let outer = x * x.transpose();
        b2 += (outer - pooled).norm_squared();
    }
    b2 /= t * t;
    (b2 / d2).clamp(0.0, 1.0)
}

/// Index of the best-scoring fingerprint class, ties toward the lowest index.
pub fn lda_classify(frame: &[RssValue], model: &FingerprintModel) -> Result<usize> {
    Ok(argmax(&model.scores(frame)?))
}

//! Process-noise identification from steady tracking data.

use super::Dataset;
use crate::linalg::{self, Mat, Vector};
use crate::lq::{DiscreteLti, NoiseModel};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEstimationConfig {
    /// Leading transitions of every trajectory that are discarded before the
    /// tracking is considered steady.
    pub cut_in: usize,
    /// Fewer residual samples than this is an error.
    pub min_samples: usize,
}

impl Default for NoiseEstimationConfig {
    fn default() -> Self {
        Self { cut_in: 0, min_samples: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEstimate {
    pub model: NoiseModel,
    pub mean: Vector,
    pub samples: usize,
}

/// Residuals `w_t = B^†(x_{t+1} − A x_t)` pooled over all trajectories; the
/// covariance uses the unbiased `1/(k-1)` normalisation.
pub fn estimate_noise_covariance(ds: &Dataset, sys: &DiscreteLti, cfg: &NoiseEstimationConfig) -> Result<NoiseEstimate> {
    let pinv = linalg::left_pinv(sys.b())?;
    if ds.n() != sys.n() {
        return Err(Error::Dimension("dataset and system state dimensions differ".into()));
    }
    let m = sys.m();
    let mut residuals: Vec<Vector> = Vec::new();
    for tr in ds.trajectories() {
        let xs = tr.states();
        if xs.len() < 2 {
            return Err(Error::InvalidInput(format!("trajectory `{}` has fewer than two states", tr.id())));
        }
        for pair in xs.windows(2).skip(cfg.cut_in) {
            residuals.push(&pinv * (&pair[1] - sys.a() * &pair[0]));
        }
    }
    let k = residuals.len();
    if k < cfg.min_samples.max(2) {
        return Err(Error::InvalidInput(format!(
            "{k} noise samples, at least {} required",
            cfg.min_samples.max(2)
        )));
    }
    let mean = residuals.iter().fold(Vector::zeros(m), |acc, w| acc + w) / k as f64;
    let mut cov = Mat::zeros(m, m);
    for w in &residuals {
        let d = w - &mean;
        cov += &d * d.transpose();
    }
    cov /= (k - 1) as f64;
    Ok(NoiseEstimate { model: NoiseModel::new(linalg::symmetrize(&cov))?, mean, samples: k })
}

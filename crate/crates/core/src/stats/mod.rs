//! Model-comparison statistics: coefficient of determination, multinomial
//! likelihoods, fringe fitting and buildup bands.

mod band;
mod fit;
mod likelihood;

pub use band::{quantile, r2_band, EventSource, R2Band, R2_TARGET};
pub use fit::{
    fit_counts, fit_gradient_fd, fit_pattern, fit_ssr, visibility, FitResult, BOOTSTRAP_RESAMPLES, FIT_MIN_TOTAL,
    PHASE_STARTS,
};
pub use likelihood::{log_likelihood_ratio, multinomial_log_pmf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optics::{ModelDistribution, OpticsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("histogram has {got} pixels, model has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("histogram is flat (zero total variance)")]
    FlatHistogram,
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("histogram total {total} below the minimum {min} for fitting")]
    TooFewCounts { total: f64, min: f64 },
    #[error("log-likelihood ratio is indeterminate: data impossible under both models")]
    Indeterminate,
    #[error("fit did not converge within {iterations} iterations (best R^2 {r_squared})", iterations = .0.iterations, r_squared = .0.r_squared)]
    NotConverged(Box<FitResult>),
    #[error("need at least {min} runs, got {got}")]
    TooFewRuns { min: usize, got: usize },
    #[error("N grid must be nonempty and strictly increasing with N >= 1")]
    BadGrid,
    #[error("event source failed: {0}")]
    Source(String),
    #[error(transparent)]
    Optics(#[from] OpticsError),
}

/// Photon counts per pixel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    counts: Vec<u64>,
}

impl Histogram {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn zeros(n_pixels: usize) -> Self {
        Self {
            counts: vec![0; n_pixels],
        }
    }

    /// Bins a sequence of pixel indices; indices out of range are an error.
    pub fn from_pixels(pixels: &[usize], n_pixels: usize) -> Result<Self, StatsError> {
        let mut h = Self::zeros(n_pixels);
        for &p in pixels {
            if p >= n_pixels {
                return Err(StatsError::DimensionMismatch {
                    expected: n_pixels,
                    got: p + 1,
                });
            }
            h.counts[p] += 1;
        }
        Ok(h)
    }

    pub fn add(&mut self, pixel: usize) {
        self.counts[pixel] += 1;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&k| k as f64).collect()
    }
}

fn check_dims(len: usize, model: &ModelDistribution) -> Result<(), StatsError> {
    if len != model.len() {
        return Err(StatsError::DimensionMismatch {
            expected: model.len(),
            got: len,
        });
    }
    Ok(())
}

/// `1 - sum (k - c p)^2 / sum (k - mean k)^2`.
///
/// With `fit_intensity_only` the scale `c` is the least-squares optimum
/// `sum k p / sum p^2`; otherwise `c` is the histogram total.
pub fn r_squared(hist: &Histogram, reference: &ModelDistribution, fit_intensity_only: bool) -> Result<f64, StatsError> {
    r_squared_counts(&hist.as_f64(), reference.probs(), fit_intensity_only)
}

/// [`r_squared`] on real-valued counts against unnormalized reference weights.
pub fn r_squared_counts(counts: &[f64], reference: &[f64], fit_intensity_only: bool) -> Result<f64, StatsError> {
    if counts.len() != reference.len() {
        return Err(StatsError::DimensionMismatch {
            expected: reference.len(),
            got: counts.len(),
        });
    }
    if counts.is_empty() {
        return Err(StatsError::EmptyHistogram);
    }
    let n: f64 = counts.iter().sum();
    let mean = n / counts.len() as f64;
    let ss_tot: f64 = counts.iter().map(|k| (k - mean) * (k - mean)).sum();
    if !(ss_tot > 0.0) {
        return Err(StatsError::FlatHistogram);
    }
    let scale = if fit_intensity_only {
        let num: f64 = counts.iter().zip(reference).map(|(k, p)| k * p).sum();
        let den: f64 = reference.iter().map(|p| p * p).sum();
        num / den
    } else {
        n
    };
    let ss_res: f64 = counts
        .iter()
        .zip(reference)
        .map(|(k, p)| {
            let r = k - scale * p;
            r * r
        })
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

//! Levenberg-Marquardt fit of the fringe model to a pixel histogram.
//!
//! Parameters: intensity, shift (pixel pitches), magnification, fringe
//! phase and contrast. The model is `intensity * shape_distribution`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{Histogram, StatsError};
use crate::optics::{shape_distribution, FringeShape, OpticsConfig};
use crate::rng::substream;

pub const FIT_MIN_TOTAL: f64 = 50.0;
pub const PHASE_STARTS: usize = 8;
pub const BOOTSTRAP_RESAMPLES: usize = 200;

const MAX_ITERATIONS: usize = 500;
const STEP_TOLERANCE: f64 = 1e-10;
const N_PARAMS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub intensity: f64,
    /// Envelope centre in metres.
    pub shift: f64,
    pub magnification: f64,
    /// In `[0, 2 pi)`.
    pub fringe_phase: f64,
    /// Contrast of the continuous model, clamped to `[0, 1]`.
    pub fringe_visibility: f64,
    /// Unclamped contrast parameter.
    pub contrast: f64,
    pub r_squared: f64,
    pub ssr: f64,
    pub iterations: usize,
}

impl FitResult {
    pub fn shape(&self) -> FringeShape {
        FringeShape {
            shift: self.shift,
            magnification: self.magnification,
            phase: self.fringe_phase,
            contrast: self.contrast,
        }
    }

    fn params(&self, cfg: &OpticsConfig) -> [f64; N_PARAMS] {
        [
            self.intensity,
            self.shift / cfg.pitch(),
            self.magnification,
            self.fringe_phase,
            self.contrast,
        ]
    }
}

fn shape_of(p: &[f64], cfg: &OpticsConfig) -> FringeShape {
    FringeShape {
        shift: p[1] * cfg.pitch(),
        magnification: p[2],
        phase: p[3],
        contrast: p[4],
    }
}

fn model(p: &[f64], cfg: &OpticsConfig) -> Option<Vec<f64>> {
    if !p.iter().all(|v| v.is_finite()) || p[2].abs() < 1e-3 {
        return None;
    }
    let dist = shape_distribution(&shape_of(p, cfg), cfg).ok()?;
    Some(dist.probs().iter().map(|q| p[0] * q).collect())
}

fn residuals(p: &[f64], counts: &[f64], cfg: &OpticsConfig) -> Option<Vec<f64>> {
    model(p, cfg).map(|m| m.iter().zip(counts).map(|(m, k)| m - k).collect())
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Sum of squared residuals at raw parameters
/// `[intensity, shift/pitch, magnification, phase, contrast]`.
pub fn fit_ssr(params: &[f64; N_PARAMS], counts: &[f64], cfg: &OpticsConfig) -> f64 {
    residuals(params, counts, cfg).map_or(f64::INFINITY, |r| sum_sq(&r))
}

fn step_scale(p: &[f64], j: usize) -> f64 {
    if j == 0 {
        p[0].abs().max(1.0)
    } else {
        1.0
    }
}

fn jacobian(p: &[f64], counts: &[f64], cfg: &OpticsConfig) -> Option<DMatrix<f64>> {
    let n = counts.len();
    let mut jac = DMatrix::zeros(n, N_PARAMS);
    for j in 0..N_PARAMS {
        let h = 1e-6 * step_scale(p, j);
        let mut hi = p.to_vec();
        let mut lo = p.to_vec();
        hi[j] += h;
        lo[j] -= h;
        let (mh, ml) = (model(&hi, cfg)?, model(&lo, cfg)?);
        for i in 0..n {
            jac[(i, j)] = (mh[i] - ml[i]) / (2.0 * h);
        }
    }
    Some(jac)
}

/// Central-difference gradient of [`fit_ssr`], for checking optimality.
pub fn fit_gradient_fd(fit: &FitResult, counts: &[f64], cfg: &OpticsConfig) -> [f64; N_PARAMS] {
    let p = fit.params(cfg);
    let mut g = [0.0; N_PARAMS];
    for j in 0..N_PARAMS {
        let h = 1e-6 * step_scale(&p, j);
        let mut hi = p;
        let mut lo = p;
        hi[j] += h;
        lo[j] -= h;
        g[j] = (fit_ssr(&hi, counts, cfg) - fit_ssr(&lo, counts, cfg)) / (2.0 * h);
    }
    g
}

struct Lm {
    params: Vec<f64>,
    ssr: f64,
    iterations: usize,
    converged: bool,
}

fn levenberg_marquardt(start: &[f64], counts: &[f64], cfg: &OpticsConfig) -> Option<Lm> {
    let mut p = start.to_vec();
    let mut r = residuals(&p, counts, cfg)?;
    let mut ssr = sum_sq(&r);
    let mut lambda = 1e-3;
    for iter in 1..=MAX_ITERATIONS {
        if ssr == 0.0 {
            return Some(Lm { params: p, ssr, iterations: iter - 1, converged: true });
        }
        let jac = jacobian(&p, counts, cfg)?;
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * DVector::from_column_slice(&r);
        let floor = 1e-12 * (0..N_PARAMS).map(|j| a[(j, j)]).fold(0.0, f64::max);
        let mut accepted = None;
        while lambda < 1e16 {
            let mut m = a.clone();
            for j in 0..N_PARAMS {
                m[(j, j)] += lambda * a[(j, j)].max(floor);
            }
            let Some(delta) = m.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            match residuals(&trial, counts, cfg) {
                Some(tr) if sum_sq(&tr) <= ssr => {
                    accepted = Some((trial, tr, delta));
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        let Some((trial, tr, delta)) = accepted else {
            // No downhill step at any damping: a numerical minimum.
            return Some(Lm { params: p, ssr, iterations: iter, converged: true });
        };
        let rel_step = (0..N_PARAMS)
            .map(|j| delta[j].abs() / (p[j].abs() + step_scale(&p, j)))
            .fold(0.0, f64::max);
        p = trial;
        ssr = sum_sq(&tr);
        r = tr;
        lambda = (lambda / 10.0).max(1e-12);
        if rel_step < STEP_TOLERANCE {
            return Some(Lm { params: p, ssr, iterations: iter, converged: true });
        }
    }
    Some(Lm { params: p, ssr, iterations: MAX_ITERATIONS, converged: false })
}

fn finish(lm: Lm, counts: &[f64], cfg: &OpticsConfig) -> Result<FitResult, StatsError> {
    let mut p = lm.params;
    if p[4] < 0.0 {
        p[4] = -p[4];
        p[3] += PI;
    }
    p[3] = p[3].rem_euclid(2.0 * PI);
    let m = model(&p, cfg).ok_or(StatsError::Source("fit left the model domain".into()))?;
    let ssr = sum_sq(&m.iter().zip(counts).map(|(m, k)| m - k).collect::<Vec<_>>());
    let fit = FitResult {
        intensity: p[0],
        shift: p[1] * cfg.pitch(),
        magnification: p[2],
        fringe_phase: p[3],
        fringe_visibility: p[4].clamp(0.0, 1.0),
        contrast: p[4],
        r_squared: r_squared_from_ssr(counts, ssr)?,
        ssr,
        iterations: lm.iterations,
    };
    if lm.converged {
        Ok(fit)
    } else {
        Err(StatsError::NotConverged(Box::new(fit)))
    }
}

fn r_squared_from_ssr(counts: &[f64], ssr: f64) -> Result<f64, StatsError> {
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    let ss_tot: f64 = counts.iter().map(|k| (k - mean).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return Err(StatsError::FlatHistogram);
    }
    Ok(1.0 - ssr / ss_tot)
}

fn check_counts(counts: &[f64], cfg: &OpticsConfig) -> Result<f64, StatsError> {
    if counts.len() != cfg.n_pixels {
        return Err(StatsError::DimensionMismatch {
            expected: cfg.n_pixels,
            got: counts.len(),
        });
    }
    let total: f64 = counts.iter().sum();
    if !(total >= FIT_MIN_TOTAL) {
        return Err(StatsError::TooFewCounts {
            total,
            min: FIT_MIN_TOTAL,
        });
    }
    Ok(total)
}

/// Fits real-valued pixel counts; `contrast_guess` seeds the contrast and the
/// phase is multistarted over [`PHASE_STARTS`] values.
pub fn fit_counts(counts: &[f64], cfg: &OpticsConfig, contrast_guess: f64) -> Result<FitResult, StatsError> {
    cfg.validate()?;
    let total = check_counts(counts, cfg)?;
    let centroid = counts
        .iter()
        .enumerate()
        .map(|(i, k)| k * cfg.pixel_center(i) / cfg.pitch())
        .sum::<f64>()
        / total;
    let contrast = contrast_guess.clamp(0.1, 1.0);
    let mut best: Option<Lm> = None;
    for s in 0..PHASE_STARTS {
        let phase = 2.0 * PI * s as f64 / PHASE_STARTS as f64;
        let start = [total, centroid, 1.0, phase, contrast];
        if let Some(lm) = levenberg_marquardt(&start, counts, cfg) {
            if best.as_ref().is_none_or(|b| lm.ssr < b.ssr) {
                best = Some(lm);
            }
        }
    }
    let best = best.ok_or(StatsError::Source("no fit start produced a valid model".into()))?;
    finish(best, counts, cfg)
}

/// Fits a histogram; requires at least [`FIT_MIN_TOTAL`] counts.
pub fn fit_pattern(hist: &Histogram, cfg: &OpticsConfig) -> Result<FitResult, StatsError> {
    fit_counts(&hist.as_f64(), cfg, 0.5)
}

/// Refit starting from a previous solution (no multistart).
fn refit(counts: &[f64], cfg: &OpticsConfig, from: &FitResult) -> Result<FitResult, StatsError> {
    check_counts(counts, cfg)?;
    let lm = levenberg_marquardt(&from.params(cfg), counts, cfg)
        .ok_or(StatsError::Source("refit left the model domain".into()))?;
    finish(lm, counts, cfg)
}

/// Visibility of a fit and its standard error from a Poisson parametric
/// bootstrap of [`BOOTSTRAP_RESAMPLES`] resampled histograms.
pub fn visibility(fit: &FitResult, cfg: &OpticsConfig, seed: u64) -> Result<(f64, f64), StatsError> {
    let expected: Vec<f64> = shape_distribution(&fit.shape(), cfg)?
        .probs()
        .iter()
        .map(|p| p * fit.intensity)
        .collect();
    let mut rng = substream(seed, "visibility-bootstrap", 0);
    let mut samples = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let counts: Vec<f64> = expected
            .iter()
            .map(|&lam| if lam > 0.0 { Poisson::new(lam).map_or(0.0, |d| d.sample(&mut rng)) } else { 0.0 })
            .collect();
        let v = match refit(&counts, cfg, fit) {
            Ok(f) => f.fringe_visibility,
            Err(StatsError::NotConverged(f)) => f.fringe_visibility,
            Err(e) => return Err(e),
        };
        samples.push(v);
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
    Ok((fit.fringe_visibility, var.sqrt()))
}

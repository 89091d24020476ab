//! Event-based corpuscular model: messengers carry a path phase from one slit
//! to one pixel, and each pixel is a deterministic learning machine (DLM)
//! whose internal unit-disk vector adapts to the messages it receives.
//!
//! Update at the struck pixel, with message `e = (cos phi, sin phi)`:
//! `mu = gamma (1 - w)`, `p <- mu p + (1 - mu) e`,
//! `w <- kappa w + (1 - kappa) |p_new - p_old| / 2`.
//! A click is recorded when a uniform draw falls below `|p|^2`.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optics::{envelope_distribution, Branch, ModelDistribution, OpticsConfig, OpticsError};
use crate::rng::{substream, SimRng};
use crate::stats::{EventSource, Histogram, StatsError};

/// Messengers allowed per requested click before a run is declared stuck.
const MESSENGER_BUDGET: u64 = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpuscularError {
    #[error("DLM parameter `{0}` must lie in (0,1), got {1}")]
    Param(&'static str, f64),
    #[error("no click after {0} messengers")]
    Stalled(u64),
    #[error("ensemble needs at least one run")]
    NoRuns,
    #[error("N grid must be nonempty and every N >= 1")]
    BadGrid,
    #[error(transparent)]
    Optics(#[from] OpticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DlmParams {
    pub kappa: f64,
    pub gamma: f64,
}

impl Default for DlmParams {
    fn default() -> Self {
        Self { kappa: 0.99, gamma: 0.99 }
    }
}

impl DlmParams {
    pub fn new(kappa: f64, gamma: f64) -> Result<Self, CorpuscularError> {
        let p = Self { kappa, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CorpuscularError> {
        for (name, v) in [("kappa", self.kappa), ("gamma", self.gamma)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(CorpuscularError::Param(name, v));
            }
        }
        Ok(())
    }
}

/// Internal state of every pixel's learning machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlmState {
    pub p: Vec<[f64; 2]>,
    pub w: Vec<f64>,
    /// Messages processed so far.
    pub k: u64,
}

impl DlmState {
    /// `p = 0`, `w = 1` everywhere: the first message at a pixel is adopted whole.
    pub fn new(n_pixels: usize) -> Self {
        Self {
            p: vec![[0.0, 0.0]; n_pixels],
            w: vec![1.0; n_pixels],
            k: 0,
        }
    }

    pub fn click_probability(&self, pixel: usize) -> f64 {
        let [a, b] = self.p[pixel];
        a * a + b * b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Messenger {
    pub slit: Branch,
    pub pixel: usize,
    pub phase: f64,
}

/// Applies one message to the struck pixel; other pixels are untouched.
pub fn dlm_update(state: &mut DlmState, m: &Messenger, params: &DlmParams) {
    let i = m.pixel;
    let mu = params.gamma * (1.0 - state.w[i]);
    let e = [m.phase.cos(), m.phase.sin()];
    let old = state.p[i];
    let new = [mu * old[0] + (1.0 - mu) * e[0], mu * old[1] + (1.0 - mu) * e[1]];
    let step = ((new[0] - old[0]).powi(2) + (new[1] - old[1]).powi(2)).sqrt();
    state.p[i] = new;
    state.w[i] = params.kappa * state.w[i] + (1.0 - params.kappa) * 0.5 * step;
    state.k += 1;
}

/// Precomputed messenger routing: pixel CDF and per-slit path phases.
#[derive(Debug, Clone)]
pub struct MessengerSource {
    cdf: Vec<f64>,
    phases: [Vec<f64>; 2],
}

/// `2 pi L / lambda mod 2 pi` for the path from a slit centre to pixel `i`,
/// computed as `f/lambda` plus `(L - f)/lambda` to keep the fractional part exact.
pub fn path_phase(i: usize, slit: Branch, cfg: &OpticsConfig) -> f64 {
    let f = cfg.focal();
    let lambda = cfg.wavelength();
    let u = cfg.pixel_center(i) + slit.sign() * 0.5 * cfg.displacement();
    let l = (f * f + u * u).sqrt();
    let excess = u * u / (f + l);
    let cycles = (f / lambda).fract() + excess / lambda;
    (2.0 * PI * cycles.fract()).rem_euclid(2.0 * PI)
}

impl MessengerSource {
    pub fn new(cfg: &OpticsConfig) -> Result<Self, CorpuscularError> {
        cfg.validate()?;
        let env = envelope_distribution(&cfg.without_dark())?;
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = env
            .probs()
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        let phases = [Branch::Plus, Branch::Minus].map(|b| (0..cfg.n_pixels).map(|i| path_phase(i, b, cfg)).collect());
        Ok(Self { cdf, phases })
    }

    pub fn n_pixels(&self) -> usize {
        self.cdf.len()
    }

    /// Slit 50/50, pixel from the single-slit envelope, phase from the path length.
    pub fn emit(&self, rng: &mut SimRng) -> Messenger {
        let slit = if rng.random::<bool>() { Branch::Plus } else { Branch::Minus };
        let u: f64 = rng.random();
        let pixel = self.cdf.partition_point(|c| *c <= u).min(self.cdf.len() - 1);
        let phase = self.phases[(slit == Branch::Minus) as usize][pixel];
        Messenger { slit, pixel, phase }
    }
}

pub fn propagate_messenger(rng: &mut SimRng, source: &MessengerSource) -> Messenger {
    source.emit(rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpuscularRun {
    /// Pixel of each recorded click, in order.
    pub clicks: Vec<usize>,
    pub histogram: Histogram,
    pub state: DlmState,
    pub messengers: u64,
}

/// Streams messengers through the detector array until `n_clicks` clicks.
pub struct ClickStream<'a> {
    source: &'a MessengerSource,
    params: DlmParams,
    pub state: DlmState,
    pub messengers: u64,
}

impl<'a> ClickStream<'a> {
    pub fn new(source: &'a MessengerSource, params: DlmParams) -> Self {
        Self {
            source,
            params,
            state: DlmState::new(source.n_pixels()),
            messengers: 0,
        }
    }

    /// Next click's pixel; non-clicking messengers are consumed silently.
    pub fn next_click(&mut self, rng: &mut SimRng) -> Result<usize, CorpuscularError> {
        for _ in 0..MESSENGER_BUDGET {
            let m = self.source.emit(rng);
            dlm_update(&mut self.state, &m, &self.params);
            self.messengers += 1;
            if rng.random::<f64>() < self.state.click_probability(m.pixel) {
                return Ok(m.pixel);
            }
        }
        Err(CorpuscularError::Stalled(MESSENGER_BUDGET))
    }
}

pub fn simulate_corpuscular(
    n_clicks: usize,
    params: &DlmParams,
    geometry: &OpticsConfig,
    rng: &mut SimRng,
) -> Result<CorpuscularRun, CorpuscularError> {
    params.validate()?;
    let source = MessengerSource::new(geometry)?;
    let mut stream = ClickStream::new(&source, *params);
    let mut clicks = Vec::with_capacity(n_clicks);
    let mut histogram = Histogram::zeros(geometry.n_pixels);
    for _ in 0..n_clicks {
        let px = stream.next_click(rng)?;
        clicks.push(px);
        histogram.add(px);
    }
    Ok(CorpuscularRun {
        clicks,
        histogram,
        state: stream.state,
        messengers: stream.messengers,
    })
}

/// Per-N pixel distributions of the N-th click over an ensemble of runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpuscularEnsemble {
    pub runs: usize,
    pub n_grid: Vec<usize>,
    /// Raw N-th-click counts per grid entry.
    pub counts: Vec<Vec<u64>>,
    /// Add-one smoothed distributions, one per grid entry.
    pub distributions: Vec<ModelDistribution>,
}

impl CorpuscularEnsemble {
    pub fn distribution_at(&self, n: usize) -> Option<&ModelDistribution> {
        self.n_grid.iter().position(|&g| g == n).map(|i| &self.distributions[i])
    }

    pub fn from_counts(runs: usize, n_grid: Vec<usize>, counts: Vec<Vec<u64>>) -> Result<Self, CorpuscularError> {
        let distributions = counts
            .iter()
            .map(|c| ModelDistribution::from_weights(&c.iter().map(|&k| k as f64 + 1.0).collect::<Vec<_>>()))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            runs,
            n_grid,
            counts,
            distributions,
        })
    }
}

pub fn corpuscular_distribution(
    runs: usize,
    n_grid: &[usize],
    params: &DlmParams,
    geometry: &OpticsConfig,
    seed: u64,
) -> Result<CorpuscularEnsemble, CorpuscularError> {
    params.validate()?;
    if runs == 0 {
        return Err(CorpuscularError::NoRuns);
    }
    if n_grid.is_empty() || n_grid.contains(&0) {
        return Err(CorpuscularError::BadGrid);
    }
    let source = MessengerSource::new(geometry)?;
    let n_max = *n_grid.iter().max().expect("grid is nonempty");
    let per_run: Vec<Vec<usize>> = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, "corpuscular-ensemble", r);
            let mut stream = ClickStream::new(&source, *params);
            let clicks = (0..n_max).map(|_| stream.next_click(&mut rng)).collect::<Result<Vec<_>, _>>()?;
            Ok(n_grid.iter().map(|&n| clicks[n - 1]).collect())
        })
        .collect::<Result<_, CorpuscularError>>()?;
    let mut counts = vec![vec![0u64; geometry.n_pixels]; n_grid.len()];
    for row in &per_run {
        for (g, &px) in row.iter().enumerate() {
            counts[g][px] += 1;
        }
    }
    CorpuscularEnsemble::from_counts(runs, n_grid.to_vec(), counts)
}

/// Independent DLM runs as an [`EventSource`] for R^2 bands.
pub struct CorpuscularSource {
    source: MessengerSource,
    params: DlmParams,
}

impl CorpuscularSource {
    pub fn new(params: DlmParams, geometry: &OpticsConfig) -> Result<Self, CorpuscularError> {
        params.validate()?;
        Ok(Self {
            source: MessengerSource::new(geometry)?,
            params,
        })
    }
}

impl EventSource for CorpuscularSource {
    fn name(&self) -> &str {
        "corpuscular"
    }

    fn n_pixels(&self) -> usize {
        self.source.n_pixels()
    }

    fn draw(&self, rng: &mut SimRng, n: usize) -> Result<Vec<usize>, StatsError> {
        let mut stream = ClickStream::new(&self.source, self.params);
        (0..n)
            .map(|_| stream.next_click(rng).map_err(|e| StatsError::Source(e.to_string())))
            .collect()
    }
}

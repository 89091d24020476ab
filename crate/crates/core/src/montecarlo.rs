//! Detector event streams: multinomial pixel sampling, time tags with jitter
//! and dark counts, herald streams and coincidence filtering.
//!
//! Array channels are `0..n_pixels`; the herald detectors follow as
//! `n_pixels` (D1) and `n_pixels + 1` (D2), i.e. 28 and 29 for the default
//! array.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use rand_distr::{Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optics::ModelDistribution;
use crate::polarization::Port;
use crate::rng::{substream, SimRng};
use crate::stats::{EventSource, StatsError};

/// Length of one generation segment for long runs.
pub const SEGMENT_S: f64 = 1.0;

const PS_PER_S: f64 = 1e12;
/// FWHM / sigma of a Gaussian.
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonteCarloError {
    #[error("invalid rate parameter `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("{stream} stream is not time-sorted at record {index}")]
    Unsorted { stream: &'static str, index: usize },
    #[error("pixel {pixel} outside the {n_pixels}-pixel array")]
    Pixel { pixel: usize, n_pixels: usize },
    #[error("pair source failed: {0}")]
    Source(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateConfig {
    pub pair_rate_hz: f64,
    pub dark_rate_hz_per_pixel: f64,
    pub jitter_fwhm_ps: f64,
    pub coincidence_window_ps: i64,
    /// Unpaired clicks at D1 and D2 together.
    pub herald_singles_hz: f64,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            pair_rate_hz: 2000.0,
            dark_rate_hz_per_pixel: 100.0,
            jitter_fwhm_ps: 150.0,
            coincidence_window_ps: 5000,
            herald_singles_hz: 3.6e5,
        }
    }
}

impl RateConfig {
    pub fn validate(&self) -> Result<(), MonteCarloError> {
        let bad = |field, v: f64| MonteCarloError::Invalid {
            field,
            reason: format!("must be finite and >= 0, got {v}"),
        };
        for (field, v) in [
            ("pair_rate_hz", self.pair_rate_hz),
            ("dark_rate_hz_per_pixel", self.dark_rate_hz_per_pixel),
            ("jitter_fwhm_ps", self.jitter_fwhm_ps),
            ("herald_singles_hz", self.herald_singles_hz),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(field, v));
            }
        }
        if self.coincidence_window_ps < 0 {
            return Err(bad("coincidence_window_ps", self.coincidence_window_ps as f64));
        }
        Ok(())
    }

    pub fn jitter_sigma_ps(&self) -> f64 {
        self.jitter_fwhm_ps / FWHM_PER_SIGMA
    }

    /// Expected accidental coincidences per second: array darks landing in
    /// the window around an unpaired herald click.
    pub fn expected_accidental_hz(&self, n_pixels: usize) -> f64 {
        n_pixels as f64 * self.dark_rate_hz_per_pixel * self.herald_singles_hz * self.coincidence_window_ps as f64
            / PS_PER_S
    }
}

/// `Signal` events belong to a detected pair; everything else is `Dark`
/// (array dark counts and unpaired herald clicks).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Signal,
    Dark,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            EventKind::Signal => "signal",
            EventKind::Dark => "dark",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "signal" => Some(EventKind::Signal),
            "dark" => Some(EventKind::Dark),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub time_ps: i64,
    pub channel: u16,
    pub kind: EventKind,
    /// Herald port: set on herald clicks and on array events after matching.
    pub herald: Option<Port>,
}

pub fn herald_channel(n_pixels: usize, port: Port) -> u16 {
    (n_pixels + usize::from(port == Port::D2)) as u16
}

fn sort_key(e: &DetectionEvent) -> (i64, u16) {
    (e.time_ps, e.channel)
}

fn to_ps(t_s: f64) -> i64 {
    (t_s * PS_PER_S).round().max(0.0) as i64
}

/// `n` i.i.d. pixel draws from `dist`.
pub fn sample_events(dist: &ModelDistribution, n: usize, rng: &mut SimRng) -> Vec<usize> {
    let w = WeightedIndex::new(dist.probs()).expect("a validated distribution has positive mass");
    (0..n).map(|_| w.sample(rng)).collect()
}

/// i.i.d. sampling from a fixed distribution, as an [`EventSource`].
pub struct MultinomialSource {
    name: String,
    sampler: WeightedIndex<f64>,
    n_pixels: usize,
}

impl MultinomialSource {
    pub fn new(name: &str, dist: &ModelDistribution) -> Self {
        Self {
            name: name.to_string(),
            sampler: WeightedIndex::new(dist.probs()).expect("a validated distribution has positive mass"),
            n_pixels: dist.len(),
        }
    }
}

impl EventSource for MultinomialSource {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    fn draw(&self, rng: &mut SimRng, n: usize) -> Result<Vec<usize>, StatsError> {
        Ok((0..n).map(|_| self.sampler.sample(rng)).collect())
    }
}

/// Poisson process of rate `hz` on `[a, b)` seconds.
fn poisson_times(rng: &mut SimRng, hz: f64, a: f64, b: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if hz <= 0.0 || b <= a {
        return out;
    }
    let exp = Exp::new(hz).expect("positive rate");
    let mut t = a + exp.sample(rng);
    while t < b {
        out.push(t);
        t += exp.sample(rng);
    }
    out
}

fn array_darks(rng: &mut SimRng, rates: &RateConfig, n_pixels: usize, a: f64, b: f64, out: &mut Vec<DetectionEvent>) {
    for px in 0..n_pixels {
        for t in poisson_times(rng, rates.dark_rate_hz_per_pixel, a, b) {
            out.push(DetectionEvent {
                time_ps: to_ps(t),
                channel: px as u16,
                kind: EventKind::Dark,
                herald: None,
            });
        }
    }
}

fn jitter(rates: &RateConfig) -> Option<Normal<f64>> {
    let sigma = rates.jitter_sigma_ps();
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"))
}

fn jittered(t_s: f64, j: &Option<Normal<f64>>, rng: &mut SimRng) -> i64 {
    let ps = t_s * PS_PER_S + j.as_ref().map_or(0.0, |n| n.sample(rng));
    ps.round().max(0.0) as i64
}

/// Time-tags an ordered pixel sequence: exponential inter-arrival at the pair
/// rate, Gaussian jitter, and per-pixel Poisson dark counts over the span up
/// to the last emission. Sorted by (time, channel).
pub fn timeline(
    pixels: &[usize],
    rates: &RateConfig,
    n_pixels: usize,
    rng: &mut SimRng,
) -> Result<Vec<DetectionEvent>, MonteCarloError> {
    rates.validate()?;
    if let Some(&pixel) = pixels.iter().find(|&&p| p >= n_pixels) {
        return Err(MonteCarloError::Pixel { pixel, n_pixels });
    }
    if pixels.is_empty() {
        return Ok(Vec::new());
    }
    if !(rates.pair_rate_hz > 0.0) {
        return Err(MonteCarloError::Invalid {
            field: "pair_rate_hz",
            reason: "must be positive to time-tag events".into(),
        });
    }
    let exp = Exp::new(rates.pair_rate_hz).expect("positive rate");
    let j = jitter(rates);
    let mut t = 0.0;
    let mut events = Vec::with_capacity(pixels.len());
    for &px in pixels {
        t += exp.sample(rng);
        events.push(DetectionEvent {
            time_ps: jittered(t, &j, rng),
            channel: px as u16,
            kind: EventKind::Signal,
            herald: None,
        });
    }
    array_darks(rng, rates, n_pixels, 0.0, t, &mut events);
    events.sort_by_key(sort_key);
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Coincidences {
    /// Array events paired with a herald, tagged with its port.
    pub matched: Vec<DetectionEvent>,
    pub unmatched: Vec<DetectionEvent>,
}

fn check_sorted(events: &[DetectionEvent], stream: &'static str) -> Result<(), MonteCarloError> {
    match events.windows(2).position(|w| w[1].time_ps < w[0].time_ps) {
        Some(i) => Err(MonteCarloError::Unsorted { stream, index: i + 1 }),
        None => Ok(()),
    }
}

/// Pairs each array event, earliest first, with the nearest unused herald
/// within `+-window/2` (ties go to the earlier herald).
pub fn coincidence_filter(
    array: &[DetectionEvent],
    herald: &[DetectionEvent],
    window_ps: i64,
) -> Result<Coincidences, MonteCarloError> {
    check_sorted(array, "array")?;
    check_sorted(herald, "herald")?;
    let half = window_ps / 2;
    let mut used = vec![false; herald.len()];
    let mut lo = 0;
    let mut out = Coincidences::default();
    for a in array {
        while lo < herald.len() && herald[lo].time_ps < a.time_ps - half {
            lo += 1;
        }
        let mut best: Option<(i64, usize)> = None;
        let mut k = lo;
        while k < herald.len() && herald[k].time_ps <= a.time_ps + half {
            if !used[k] {
                let dt = (herald[k].time_ps - a.time_ps).abs();
                if best.is_none_or(|(b, _)| dt < b) {
                    best = Some((dt, k));
                }
            }
            k += 1;
        }
        match best {
            Some((_, k)) => {
                used[k] = true;
                out.matched.push(DetectionEvent {
                    herald: herald[k].herald,
                    ..*a
                });
            }
            None => out.unmatched.push(*a),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    /// Emit exactly this many pairs.
    Pairs(usize),
    /// Emit pairs for this many seconds.
    Duration(f64),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HeraldedRun {
    /// Coincidence-filtered array events, time-sorted, tagged by port.
    pub events: Vec<DetectionEvent>,
    pub pairs_emitted: u64,
    pub duration_s: f64,
    /// Matched array events that were dark counts.
    pub accidentals: u64,
    /// Array events without a herald partner.
    pub unmatched: u64,
}

impl HeraldedRun {
    pub fn coincidences(&self) -> u64 {
        self.events.len() as u64
    }
}

/// Full heralded acquisition. Pairs come from `pair` as (pixel, port); the
/// array side carries the combined timing jitter, the herald side is exact.
/// Array darks and unpaired herald clicks are added as Poisson processes.
/// Generated and filtered in [`SEGMENT_S`] pieces, each with its own
/// noise substream.
pub fn simulate_heralded<F>(
    mut pair: F,
    stop: Stop,
    rates: &RateConfig,
    n_pixels: usize,
    seed: u64,
) -> Result<HeraldedRun, MonteCarloError>
where
    F: FnMut(&mut SimRng) -> Result<(usize, Port), String>,
{
    rates.validate()?;
    let wants_pairs = match stop {
        Stop::Pairs(n) => n > 0,
        Stop::Duration(t) => t > 0.0,
    };
    if wants_pairs && !(rates.pair_rate_hz > 0.0) {
        return Err(MonteCarloError::Invalid {
            field: "pair_rate_hz",
            reason: "must be positive to emit pairs".into(),
        });
    }
    let mut pair_rng = substream(seed, "pairs", 0);
    let exp = (rates.pair_rate_hz > 0.0).then(|| Exp::new(rates.pair_rate_hz).expect("positive rate"));
    let j = jitter(rates);
    let mut next_t = exp.as_ref().map_or(f64::INFINITY, |e| e.sample(&mut pair_rng));
    let mut run = HeraldedRun::default();
    let mut seg = 0u64;
    loop {
        let a = seg as f64 * SEGMENT_S;
        let mut b = a + SEGMENT_S;
        let mut noise = substream(seed, "noise", seg);
        let mut array = Vec::new();
        let mut herald = Vec::new();
        let mut last_emission = a;
        let mut done = false;
        loop {
            let exhausted = match stop {
                Stop::Pairs(n) => run.pairs_emitted as usize >= n,
                Stop::Duration(t) => next_t >= t,
            };
            if exhausted {
                done = true;
                break;
            }
            if next_t >= b {
                break;
            }
            let (px, port) = pair(&mut pair_rng).map_err(MonteCarloError::Source)?;
            if px >= n_pixels {
                return Err(MonteCarloError::Pixel { pixel: px, n_pixels });
            }
            array.push(DetectionEvent {
                time_ps: jittered(next_t, &j, &mut noise),
                channel: px as u16,
                kind: EventKind::Signal,
                herald: None,
            });
            herald.push(DetectionEvent {
                time_ps: to_ps(next_t),
                channel: herald_channel(n_pixels, port),
                kind: EventKind::Signal,
                herald: Some(port),
            });
            run.pairs_emitted += 1;
            last_emission = next_t;
            next_t += exp.as_ref().expect("pairs need a rate").sample(&mut pair_rng);
        }
        if done {
            b = match stop {
                Stop::Pairs(_) => last_emission,
                Stop::Duration(t) => t.min(b),
            };
        }
        array_darks(&mut noise, rates, n_pixels, a, b, &mut array);
        for t in poisson_times(&mut noise, rates.herald_singles_hz, a, b) {
            let port = if noise.random::<bool>() { Port::D1 } else { Port::D2 };
            herald.push(DetectionEvent {
                time_ps: to_ps(t),
                channel: herald_channel(n_pixels, port),
                kind: EventKind::Dark,
                herald: Some(port),
            });
        }
        array.sort_by_key(sort_key);
        herald.sort_by_key(sort_key);
        let c = coincidence_filter(&array, &herald, rates.coincidence_window_ps)?;
        run.accidentals += c.matched.iter().filter(|e| e.kind == EventKind::Dark).count() as u64;
        run.unmatched += c.unmatched.len() as u64;
        run.events.extend(c.matched);
        run.duration_s = b.max(run.duration_s);
        if done {
            break;
        }
        seg += 1;
    }
    // jitter can reorder events across a segment boundary
    run.events.sort_by_key(sort_key);
    Ok(run)
}

//! End-to-end recipes shared by the command line and the acceptance suite:
//! reference distributions, simulated acquisitions, buildup frames, R^2 bands
//! and likelihood-ratio series.

use rand::distr::{weighted::WeightedIndex, Distribution};

use crate::corpuscular::{corpuscular_distribution, ClickStream, CorpuscularEnsemble, CorpuscularSource, MessengerSource};
use crate::io::{ReferenceKind, RunConfig};
use crate::montecarlo::{sample_events, simulate_heralded, DetectionEvent, HeraldedRun, MultinomialSource, Stop};
use crate::optics::{pixel_distribution, qubit_pixel_intensities, shape_distribution, ModelDistribution, OpticsConfig};
use crate::polarization::{entangled_state, herald, AnalyzerSetting, PathQubit, Port};
use crate::rng::substream;
use crate::stats::{fit_pattern, log_likelihood_ratio, r2_band, FitResult, Histogram, R2Band};
use crate::Error;

/// Which source generates the detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// Equal-amplitude path superposition heralded at D1.
    Qm,
    /// Deterministic-learning-machine detectors.
    Corpuscular,
    /// Werner pair state, analyser at the configured QWP angle, both ports.
    Entangled,
}

impl Model {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "qm" => Some(Model::Qm),
            "corpuscular" => Some(Model::Corpuscular),
            "entangled" => Some(Model::Entangled),
            _ => None,
        }
    }
}

/// The wave-mechanics pixel distribution of the ideal heralded qubit.
pub fn qm_distribution(optics: &OpticsConfig) -> Result<ModelDistribution, Error> {
    Ok(pixel_distribution(&PathQubit::diagonal(), optics)?)
}

/// Distribution that R^2 and likelihoods are measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub distribution: ModelDistribution,
    /// Present for [`ReferenceKind::Fitted`].
    pub fit: Option<FitResult>,
}

/// With [`ReferenceKind::Fitted`], fits `photons` QM-sampled detections and
/// uses the fitted model; otherwise the closed form.
pub fn reference(cfg: &RunConfig, kind: ReferenceKind, seed: u64) -> Result<Reference, Error> {
    let exact = qm_distribution(&cfg.optics)?;
    match kind {
        ReferenceKind::Exact => Ok(Reference {
            distribution: exact,
            fit: None,
        }),
        ReferenceKind::Fitted => {
            let mut rng = substream(seed, "reference", 0);
            let pixels = sample_events(&exact, cfg.stats.reference_photons, &mut rng);
            let hist = Histogram::from_pixels(&pixels, cfg.optics.n_pixels)?;
            let fit = fit_pattern(&hist, &cfg.optics)?;
            Ok(Reference {
                distribution: shape_distribution(&fit.shape(), &cfg.optics)?,
                fit: Some(fit),
            })
        }
    }
}

/// `step, 2 step, ...` up to and including `n_max` when it is a multiple.
pub fn n_grid(step: usize, n_max: usize) -> Vec<usize> {
    (step..=n_max).step_by(step.max(1)).collect()
}

/// Simulates a heralded acquisition of `photons` pairs with detector timing,
/// darks and coincidence filtering.
pub fn simulate(model: Model, photons: usize, cfg: &RunConfig, seed: u64) -> Result<HeraldedRun, Error> {
    let optics = &cfg.optics;
    // darks are generated explicitly in the time domain
    let signal = optics.without_dark();
    let n = optics.n_pixels;
    let stop = Stop::Pairs(photons);
    let run = match model {
        Model::Qm => {
            let dist = qm_distribution(&signal)?;
            let w = WeightedIndex::new(dist.probs()).expect("valid distribution");
            simulate_heralded(|rng| Ok((w.sample(rng), Port::D1)), stop, &cfg.rates, n, seed)?
        }
        Model::Corpuscular => {
            let params = cfg.corpuscular.params();
            params.validate()?;
            let source = MessengerSource::new(&signal)?;
            let mut stream = ClickStream::new(&source, params);
            simulate_heralded(
                |rng| stream.next_click(rng).map(|px| (px, Port::D1)).map_err(|e| e.to_string()),
                stop,
                &cfg.rates,
                n,
                seed,
            )?
        }
        Model::Entangled => {
            let state = entangled_state(cfg.polarization.fidelity)?;
            let mut weights = Vec::new();
            let mut samplers = Vec::new();
            for port in Port::BOTH {
                let o = herald(&state, &AnalyzerSetting::with_qwp(cfg.polarization.qwp_deg, port))?;
                let acceptance: f64 = qubit_pixel_intensities(&o.qubit, &o.optics(&signal)).iter().sum();
                weights.push(o.probability * acceptance);
                let dist = o.distribution(&signal)?;
                samplers.push(WeightedIndex::new(dist.probs()).expect("valid distribution"));
            }
            let ports = WeightedIndex::new(&weights).expect("some port has mass");
            simulate_heralded(
                |rng| {
                    let k = ports.sample(rng);
                    Ok((samplers[k].sample(rng), Port::BOTH[k]))
                },
                stop,
                &cfg.rates,
                n,
                seed,
            )?
        }
    };
    Ok(run)
}

/// Histograms of the first `frames[i]` array events (time order).
pub fn buildup_frames(events: &[DetectionEvent], frames: &[usize], n_pixels: usize) -> Result<Vec<Histogram>, Error> {
    let pixels: Vec<usize> = events
        .iter()
        .map(|e| e.channel as usize)
        .filter(|&c| c < n_pixels)
        .collect();
    frames
        .iter()
        .map(|&f| {
            let take = f.min(pixels.len());
            Ok(Histogram::from_pixels(&pixels[..take], n_pixels)?)
        })
        .collect()
}

/// R^2 band for `model` (QM or corpuscular) against `reference`.
pub fn band(model: Model, cfg: &RunConfig, reference: &ModelDistribution, runs: usize, seed: u64) -> Result<R2Band, Error> {
    let grid = n_grid(cfg.stats.grid_step, cfg.stats.n_max);
    let band = match model {
        Model::Qm | Model::Entangled => {
            let src = MultinomialSource::new("qm", &qm_distribution(&cfg.optics)?);
            r2_band(&src, reference, &grid, runs, seed)?
        }
        Model::Corpuscular => {
            let src = CorpuscularSource::new(cfg.corpuscular.params(), &cfg.optics.without_dark())?;
            r2_band(&src, reference, &grid, runs, seed)?
        }
    };
    Ok(band)
}

/// Per-N corpuscular ensemble on the configured grid.
pub fn ensemble(cfg: &RunConfig, runs: usize, grid: &[usize], seed: u64) -> Result<CorpuscularEnsemble, Error> {
    Ok(corpuscular_distribution(
        runs,
        grid,
        &cfg.corpuscular.params(),
        &cfg.optics.without_dark(),
        seed,
    )?)
}

/// `log Lambda(QM vs corpuscular)` on the first N detected pixels, at every N
/// of the ensemble grid that the data reach.
pub fn likelihood_series(
    pixels: &[usize],
    qm: &ModelDistribution,
    ens: &CorpuscularEnsemble,
) -> Result<Vec<(usize, f64)>, Error> {
    let mut out = Vec::new();
    for (n, corp) in ens.n_grid.iter().zip(&ens.distributions) {
        if *n > pixels.len() {
            break;
        }
        let hist = Histogram::from_pixels(&pixels[..*n], qm.len())?;
        out.push((*n, log_likelihood_ratio(&hist, qm, corp)?));
    }
    Ok(out)
}

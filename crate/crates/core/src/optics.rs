//! Birefringent double slit and multi-slit apertures.
//!
//! Two displaced Gaussian modes leave the beam displacer; an effective
//! Fourier lens maps them onto the detector plane, where they overlap under a
//! common Gaussian envelope with opposite linear phases. Everything below is a
//! pure function of its inputs.
//!
//! Lengths are stored in the units of the config keys (mm, m, nm, um) and
//! converted to metres at the boundary; all `x` arguments are metres.

use std::f64::consts::PI;

pub use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polarization::PathQubit;
use crate::quad::{self, QuadError};

/// Waist quoted in the main text; the supplement (and the default) uses 1.4 mm.
pub const MAIN_TEXT_WAIST_MM: f64 = 1.3;

/// Relative tolerance the quadrature oracle must reach.
pub const ORACLE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("invalid optics parameter `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("the detector array receives zero total intensity")]
    ZeroIntensity,
    #[error("model distribution invalid: {0}")]
    Distribution(String),
    #[error("fresnel oracle: {0}")]
    Oracle(#[from] QuadError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> OpticsError {
    OpticsError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// Which of the two displaced modes. `Plus` is centred at `x = -d/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsConfig {
    pub waist_w_mm: f64,
    pub displacement_d_mm: f64,
    pub focal_f_m: f64,
    pub wavelength_nm: f64,
    /// Attenuation of the interference cross term (imperfect path compensation).
    pub coherence_mu: f64,
    pub pixel_pitch_um: f64,
    pub active_width_um: f64,
    pub n_pixels: usize,
    /// Accidental weight added to every pixel, relative to a total signal of 1,
    /// before renormalizing.
    pub dark_prob: f64,
    /// Optional per-pixel relative efficiency; empty means all ones.
    pub efficiency_mask: Vec<f64>,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        Self {
            waist_w_mm: 1.4,
            displacement_d_mm: 3.68,
            focal_f_m: 4.0,
            wavelength_nm: 842.0,
            coherence_mu: 0.93,
            pixel_pitch_um: 100.0,
            active_width_um: 50.0,
            n_pixels: 28,
            // 5 accidental/s over 2000 coincidences/s, spread over 28 pixels
            dark_prob: 5.0 / 2000.0 / 28.0,
            efficiency_mask: Vec::new(),
        }
    }
}

impl OpticsConfig {
    pub fn validate(&self) -> Result<(), OpticsError> {
        let positive = [
            ("waist_w_mm", self.waist_w_mm),
            ("displacement_d_mm", self.displacement_d_mm),
            ("focal_f_m", self.focal_f_m),
            ("wavelength_nm", self.wavelength_nm),
            ("pixel_pitch_um", self.pixel_pitch_um),
            ("active_width_um", self.active_width_um),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(field, format!("must be finite and > 0, got {v}")));
            }
        }
        if self.active_width_um > self.pixel_pitch_um {
            return Err(invalid("active_width_um", "must not exceed the pixel pitch"));
        }
        if self.n_pixels < 2 {
            return Err(invalid("n_pixels", format!("need at least 2, got {}", self.n_pixels)));
        }
        if !(0.0..=1.0).contains(&self.coherence_mu) {
            return Err(invalid("coherence_mu", format!("must lie in [0,1], got {}", self.coherence_mu)));
        }
        if !(self.dark_prob >= 0.0 && self.dark_prob.is_finite()) {
            return Err(invalid("dark_prob", format!("must be finite and >= 0, got {}", self.dark_prob)));
        }
        if !self.efficiency_mask.is_empty() {
            if self.efficiency_mask.len() != self.n_pixels {
                return Err(invalid(
                    "efficiency_mask",
                    format!("expected {} entries, got {}", self.n_pixels, self.efficiency_mask.len()),
                ));
            }
            if self.efficiency_mask.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
                return Err(invalid("efficiency_mask", "entries must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn waist(&self) -> f64 {
        self.waist_w_mm * 1e-3
    }
    pub fn displacement(&self) -> f64 {
        self.displacement_d_mm * 1e-3
    }
    pub fn focal(&self) -> f64 {
        self.focal_f_m
    }
    pub fn wavelength(&self) -> f64 {
        self.wavelength_nm * 1e-9
    }
    pub fn pitch(&self) -> f64 {
        self.pixel_pitch_um * 1e-6
    }
    pub fn active_width(&self) -> f64 {
        self.active_width_um * 1e-6
    }

    /// Fringe period in the detector plane, `lambda f / d`.
    pub fn fringe_period(&self) -> f64 {
        self.wavelength() * self.focal() / self.displacement()
    }

    /// Centre of pixel `i`; the array is centred on the optical axis.
    pub fn pixel_center(&self, i: usize) -> f64 {
        (i as f64 - 0.5 * (self.n_pixels as f64 - 1.0)) * self.pitch()
    }

    pub fn pixel_window(&self, i: usize) -> (f64, f64) {
        let c = self.pixel_center(i);
        let h = 0.5 * self.active_width();
        (c - h, c + h)
    }

    /// Half of the full array span, from the axis to the outer pixel edge.
    pub fn half_span(&self) -> f64 {
        0.5 * self.n_pixels as f64 * self.pitch()
    }

    fn efficiency(&self, i: usize) -> f64 {
        self.efficiency_mask.get(i).copied().unwrap_or(1.0)
    }

    pub fn with_coherence(&self, coherence_mu: f64) -> Self {
        Self {
            coherence_mu,
            ..self.clone()
        }
    }

    pub fn without_dark(&self) -> Self {
        Self {
            dark_prob: 0.0,
            ..self.clone()
        }
    }
}

/// Geometry of the coherent-source slit masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlitArrayConfig {
    pub n_slits: usize,
    pub slit_width_um: f64,
    pub separation_um: f64,
    pub focal_f_m: f64,
    pub wavelength_nm: f64,
}

impl Default for SlitArrayConfig {
    fn default() -> Self {
        Self {
            n_slits: 2,
            slit_width_um: 30.0,
            separation_um: 100.0,
            focal_f_m: 0.10,
            wavelength_nm: 396.0,
        }
    }
}

impl SlitArrayConfig {
    pub fn validate(&self) -> Result<(), OpticsError> {
        if !(self.n_slits == 2 || self.n_slits == 3) {
            return Err(invalid("n_slits", format!("must be 2 or 3, got {}", self.n_slits)));
        }
        for (field, v) in [
            ("slit_width_um", self.slit_width_um),
            ("separation_um", self.separation_um),
            ("focal_f_m", self.focal_f_m),
            ("wavelength_nm", self.wavelength_nm),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(field, format!("must be finite and > 0, got {v}")));
            }
        }
        if self.slit_width_um >= self.separation_um {
            return Err(invalid("slit_width_um", "slit width must be smaller than the separation"));
        }
        Ok(())
    }
}

/// Per-pixel detection probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDistribution {
    probs: Vec<f64>,
}

impl ModelDistribution {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(probs: Vec<f64>) -> Result<Self, OpticsError> {
        if probs.is_empty() {
            return Err(OpticsError::Distribution("empty".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(OpticsError::Distribution("entries must be finite and >= 0".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(OpticsError::Distribution(format!("sums to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self, OpticsError> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(OpticsError::Distribution("weights must be finite and >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(OpticsError::ZeroIntensity);
        }
        Ok(Self {
            probs: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Weighted mixture; weights are normalized internally.
    pub fn mixture(parts: &[(f64, &ModelDistribution)]) -> Result<Self, OpticsError> {
        let n = parts
            .first()
            .map(|(_, d)| d.len())
            .ok_or_else(|| OpticsError::Distribution("empty mixture".into()))?;
        if parts.iter().any(|(_, d)| d.len() != n) {
            return Err(OpticsError::Distribution("mixture of different lengths".into()));
        }
        let total: f64 = parts.iter().map(|(w, _)| *w).sum();
        if !(total > 0.0) {
            return Err(OpticsError::Distribution("mixture weights sum to zero".into()));
        }
        let probs = (0..n)
            .map(|i| parts.iter().map(|(w, d)| w * d.probs[i]).sum::<f64>() / total)
            .collect();
        Ok(Self { probs })
    }

    pub fn total_variation(&self, other: &ModelDistribution) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Slit-plane Gaussian mode centred at `x = -sign * d/2` (unnormalized).
pub fn slit_plane_mode(x: f64, branch: Branch, cfg: &OpticsConfig) -> f64 {
    let w = cfg.waist();
    let u = x + branch.sign() * 0.5 * cfg.displacement();
    (-(u * u) / (w * w)).exp()
}

/// Real Gaussian amplitude envelope shared by both focal-plane modes.
pub fn focal_envelope(x: f64, cfg: &OpticsConfig) -> f64 {
    let s = PI * cfg.waist() * x / (cfg.focal() * cfg.wavelength());
    (-s * s).exp()
}

/// Focal-plane field of one mode: Gaussian envelope times `exp(-+ i pi d x/(lambda f))`.
pub fn focal_plane_mode(x: f64, branch: Branch, cfg: &OpticsConfig) -> Complex64 {
    let phase = -branch.sign() * PI * cfg.displacement() * x / (cfg.wavelength() * cfg.focal());
    Complex64::from_polar(focal_envelope(x, cfg), phase)
}

/// `|a+ u+ + a- u-|^2` with the cross term scaled by `coherence_mu`.
pub fn pattern_intensity(x: f64, qubit: &PathQubit, cfg: &OpticsConfig) -> f64 {
    let up = focal_plane_mode(x, Branch::Plus, cfg);
    let um = focal_plane_mode(x, Branch::Minus, cfg);
    let a = qubit.alpha_plus * up;
    let b = qubit.alpha_minus * um;
    let cross = 2.0 * (a * b.conj()).re;
    (a.norm_sqr() + b.norm_sqr() + cfg.coherence_mu * cross).max(0.0)
}

/// Overlap of the two unit-normalized slit-plane modes, `exp(-d^2 / (2 w^2))`.
pub fn mode_overlap(cfg: &OpticsConfig) -> f64 {
    let d = cfg.displacement();
    let w = cfg.waist();
    (-(d * d) / (2.0 * w * w)).exp()
}

/// Fringe pattern parameterized the way the fitter sees it: envelope centred
/// at `shift`, stretched by `magnification`, fringe contrast and phase free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeShape {
    pub shift: f64,
    pub magnification: f64,
    pub phase: f64,
    pub contrast: f64,
}

impl FringeShape {
    pub const CENTERED: FringeShape = FringeShape {
        shift: 0.0,
        magnification: 1.0,
        phase: 0.0,
        contrast: 0.0,
    };

    /// The shape a normalized qubit produces under `cfg` (no shift, unit scale).
    pub fn from_qubit(qubit: &PathQubit, cfg: &OpticsConfig) -> Self {
        let cross = qubit.alpha_plus * qubit.alpha_minus.conj();
        let norm = qubit.alpha_plus.norm_sqr() + qubit.alpha_minus.norm_sqr();
        Self {
            shift: 0.0,
            magnification: 1.0,
            phase: cross.arg(),
            contrast: 2.0 * cross.norm() * cfg.coherence_mu / norm,
        }
    }
}

/// `envelope^2(x') * (1 + contrast * cos(2 pi x'/period - phase))`, `x' = (x - shift)/mag`.
pub fn fringe_intensity(x: f64, shape: &FringeShape, cfg: &OpticsConfig) -> f64 {
    let xp = (x - shape.shift) / shape.magnification.abs();
    let env = focal_envelope(xp, cfg);
    let arg = 2.0 * PI * xp / cfg.fringe_period() - shape.phase;
    (env * env * (1.0 + shape.contrast * arg.cos())).max(0.0)
}

/// Integrated intensity over each pixel's active window, efficiency applied.
pub fn pixel_intensities<F: Fn(f64) -> f64>(cfg: &OpticsConfig, intensity: F) -> Vec<f64> {
    (0..cfg.n_pixels)
        .map(|i| {
            let (a, b) = cfg.pixel_window(i);
            cfg.efficiency(i) * quad::integrate_smooth(&intensity, a, b)
        })
        .collect()
}

fn distribute(cfg: &OpticsConfig, raw: &[f64]) -> Result<ModelDistribution, OpticsError> {
    let total: f64 = raw.iter().sum();
    if !(total.is_finite() && total > f64::MIN_POSITIVE) {
        return Err(OpticsError::ZeroIntensity);
    }
    let dark = cfg.dark_prob;
    let norm = 1.0 + cfg.n_pixels as f64 * dark;
    let probs: Vec<f64> = raw.iter().map(|r| (r / total + dark) / norm).collect();
    // re-normalize the last few ulps away
    let s: f64 = probs.iter().sum();
    ModelDistribution::new(probs.into_iter().map(|p| p / s).collect())
}

/// Raw (unnormalized) pixel intensities of a qubit pattern.
pub fn qubit_pixel_intensities(qubit: &PathQubit, cfg: &OpticsConfig) -> Vec<f64> {
    pixel_intensities(cfg, |x| pattern_intensity(x, qubit, cfg))
}

/// Detection probabilities over the array for a prepared path qubit.
pub fn pixel_distribution(qubit: &PathQubit, cfg: &OpticsConfig) -> Result<ModelDistribution, OpticsError> {
    cfg.validate()?;
    distribute(cfg, &qubit_pixel_intensities(qubit, cfg))
}

/// Fringe-free distribution: one path open, or an incoherent mixture.
pub fn envelope_distribution(cfg: &OpticsConfig) -> Result<ModelDistribution, OpticsError> {
    pixel_distribution(&PathQubit::up(), cfg)
}

/// Distribution of a parameterized fringe shape (the fitter's model).
pub fn shape_distribution(shape: &FringeShape, cfg: &OpticsConfig) -> Result<ModelDistribution, OpticsError> {
    distribute(cfg, &pixel_intensities(cfg, |x| fringe_intensity(x, shape, cfg)))
}

/// Fraunhofer N-slit intensity normalized to 1 at the centre.
pub fn nslit_intensity(x: f64, cfg: &SlitArrayConfig) -> f64 {
    let lf = cfg.wavelength_nm * 1e-9 * cfg.focal_f_m;
    let a = cfg.slit_width_um * 1e-6;
    let s = cfg.separation_um * 1e-6;
    let n = cfg.n_slits as f64;

    let beta = PI * a * x / lf;
    let envelope = if beta.abs() < 1e-8 {
        1.0 - beta * beta / 3.0
    } else {
        beta.sin() / beta
    };

    let gamma = PI * s * x / lf;
    let den = n * gamma.sin();
    let array = if den.abs() < 1e-12 {
        // |sin(N g)/(N sin g)| -> 1 at g = m pi
        1.0
    } else {
        (n * gamma).sin() / den
    };
    envelope * envelope * array * array
}

/// Focal-plane field by direct quadrature of the slit-plane mode,
/// `int u(xi) exp(+i 2 pi x xi / (lambda f)) d xi`.
///
/// Agrees with [`focal_plane_mode`] up to the constant `sqrt(pi) w`.
pub fn fresnel_oracle(x: f64, branch: Branch, cfg: &OpticsConfig) -> Result<Complex64, OpticsError> {
    let w = cfg.waist();
    let center = -branch.sign() * 0.5 * cfg.displacement();
    let k = 2.0 * PI * x / (cfg.wavelength() * cfg.focal());
    // The Gaussian is below e^-100 outside +-10 w.
    let (lo, hi) = (center - 10.0 * w, center + 10.0 * w);
    let scale = PI.sqrt() * w;
    let value = quad::integrate_adaptive(
        |xi| Complex64::from_polar(slit_plane_mode(xi, branch, cfg), k * xi),
        lo,
        hi,
        ORACLE_TOLERANCE * 1e-2 * scale,
        ORACLE_TOLERANCE,
        20_000,
    )?;
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg() -> OpticsConfig {
        OpticsConfig::default()
    }

    #[test]
    fn defaults_validate() {
        cfg().validate().unwrap();
        SlitArrayConfig::default().validate().unwrap();
        assert_eq!(cfg().n_pixels, 28);
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let mut c = cfg();
        c.waist_w_mm = -1.0;
        assert!(matches!(c.validate(), Err(OpticsError::Invalid { field: "waist_w_mm", .. })));
        let mut c = cfg();
        c.n_pixels = 1;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.coherence_mu = 1.2;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.dark_prob = -1e-6;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.efficiency_mask = vec![1.0; 3];
        assert!(c.validate().is_err());
        let s = SlitArrayConfig {
            n_slits: 4,
            ..Default::default()
        };
        assert!(s.validate().is_err());
        let s = SlitArrayConfig {
            slit_width_um: 100.0,
            ..Default::default()
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn slit_mode_examples() {
        let c = cfg();
        let d = c.displacement();
        assert_eq!(slit_plane_mode(-d / 2.0, Branch::Plus, &c), 1.0);
        // exp(-(1.84)^2 / 1.96)
        let v = slit_plane_mode(0.0, Branch::Plus, &c);
        assert_relative_eq!(v, (-1.727_346_938_775_510_2_f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(v, 0.177_755_4, max_relative = 1e-6);
    }

    proptest! {
        #[test]
        fn slit_mode_mirror(x in -10e-3f64..10e-3) {
            let c = cfg();
            prop_assert_eq!(slit_plane_mode(x, Branch::Plus, &c), slit_plane_mode(-x, Branch::Minus, &c));
        }

        #[test]
        fn focal_modes_share_envelope(x in -3e-3f64..3e-3) {
            let c = cfg();
            let a = focal_plane_mode(x, Branch::Plus, &c).norm();
            let b = focal_plane_mode(x, Branch::Minus, &c).norm();
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn focal_mode_examples() {
        let c = cfg();
        for b in [Branch::Plus, Branch::Minus] {
            assert_eq!(focal_plane_mode(0.0, b, &c), Complex64::new(1.0, 0.0));
        }
        let x = c.fringe_period() / 2.0;
        let dphi = focal_plane_mode(x, Branch::Plus, &c).arg() - focal_plane_mode(x, Branch::Minus, &c).arg();
        // -pi/2 - (+pi/2)
        assert_relative_eq!(dphi, -PI, max_relative = 1e-12);
    }

    #[test]
    fn pattern_examples() {
        let c = cfg();
        let one_slit = PathQubit::up();
        for x in [-1e-3, -2e-4, 0.0, 3e-4, 1.2e-3] {
            let env = focal_envelope(x, &c).powi(2);
            assert_relative_eq!(pattern_intensity(x, &one_slit, &c), env, max_relative = 1e-14);
        }
        let c1 = c.with_coherence(1.0);
        let plus = PathQubit::diagonal();
        assert_relative_eq!(pattern_intensity(0.0, &plus, &c1), 2.0, max_relative = 1e-14);
        assert!(pattern_intensity(c1.fringe_period() / 2.0, &plus, &c1) < 1e-28);
        let minus = PathQubit::anti_diagonal();
        assert!(pattern_intensity(0.0, &minus, &c1) < 1e-30);
    }

    #[test]
    fn overlap_examples() {
        let mut c = cfg();
        assert_relative_eq!(mode_overlap(&c), (-3.454_693_877_551_02_f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(mode_overlap(&c), 0.031_60, max_relative = 1e-3);
        c.displacement_d_mm = 10.0 * c.waist_w_mm;
        assert!(mode_overlap(&c) < 1e-21);
        c.displacement_d_mm = 1e-300;
        assert_eq!(mode_overlap(&c), 1.0);
    }

    #[test]
    fn overlap_matches_quadrature_of_normalized_modes() {
        let c = cfg();
        let w = c.waist();
        let norm = PI.sqrt() * w / 2f64.sqrt(); // int u^2
        let prod = quad::integrate_adaptive(
            |x| Complex64::new(slit_plane_mode(x, Branch::Plus, &c) * slit_plane_mode(x, Branch::Minus, &c), 0.0),
            -12.0 * w,
            12.0 * w,
            1e-18,
            1e-13,
            4000,
        )
        .unwrap()
        .re;
        assert!((prod / norm - mode_overlap(&c)).abs() < 1e-9);
    }

    #[test]
    fn distribution_single_slit_symmetric() {
        let c = cfg().without_dark();
        let d = pixel_distribution(&PathQubit::up(), &c).unwrap();
        let p = d.probs();
        for i in 0..c.n_pixels {
            assert_relative_eq!(p[i], p[c.n_pixels - 1 - i], max_relative = 1e-12);
        }
    }

    #[test]
    fn raw_intensities_complementary() {
        let c = cfg();
        let a = qubit_pixel_intensities(&PathQubit::diagonal(), &c);
        let b = qubit_pixel_intensities(&PathQubit::anti_diagonal(), &c);
        let env = qubit_pixel_intensities(&PathQubit::up(), &c);
        for i in 0..c.n_pixels {
            assert!((a[i] + b[i] - 2.0 * env[i]).abs() <= 1e-12 * env.iter().cloned().fold(0.0, f64::max));
        }
    }

    #[test]
    fn acceptance_weighted_mixture_is_envelope() {
        let c = cfg();
        let a = pixel_distribution(&PathQubit::diagonal(), &c).unwrap();
        let b = pixel_distribution(&PathQubit::anti_diagonal(), &c).unwrap();
        let wa: f64 = qubit_pixel_intensities(&PathQubit::diagonal(), &c).iter().sum();
        let wb: f64 = qubit_pixel_intensities(&PathQubit::anti_diagonal(), &c).iter().sum();
        let mix = ModelDistribution::mixture(&[(wa, &a), (wb, &b)]).unwrap();
        let env = envelope_distribution(&c).unwrap();
        for (m, e) in mix.probs().iter().zip(env.probs()) {
            assert!((m - e).abs() < 1e-12);
        }
    }

    #[test]
    fn dark_limit_uniform() {
        let mut c = cfg();
        let u = ModelDistribution::uniform(c.n_pixels);
        c.dark_prob = 0.0;
        let clean = pixel_distribution(&PathQubit::diagonal(), &c).unwrap().total_variation(&u);
        // per-pixel dark weight equal to the whole signal: 28:1 noise
        c.dark_prob = 1.0;
        let noisy = pixel_distribution(&PathQubit::diagonal(), &c).unwrap().total_variation(&u);
        assert!((noisy - clean / (1.0 + c.n_pixels as f64)).abs() < 1e-12);
        c.dark_prob = 1e9;
        let d = pixel_distribution(&PathQubit::diagonal(), &c).unwrap();
        assert!(d.total_variation(&u) < 1e-9);
    }

    #[test]
    fn zero_intensity_rejected() {
        let mut c = cfg().without_dark();
        c.efficiency_mask = vec![0.0; c.n_pixels];
        assert_eq!(pixel_distribution(&PathQubit::diagonal(), &c), Err(OpticsError::ZeroIntensity));
    }

    #[test]
    fn efficiency_mask_scales_signal() {
        let mut c = cfg().without_dark();
        let base = pixel_distribution(&PathQubit::up(), &c).unwrap();
        let mut mask = vec![1.0; c.n_pixels];
        mask[13] = 0.0;
        c.efficiency_mask = mask;
        let masked = pixel_distribution(&PathQubit::up(), &c).unwrap();
        assert_eq!(masked.probs()[13], 0.0);
        assert_relative_eq!(
            masked.probs()[14] / masked.probs()[15],
            base.probs()[14] / base.probs()[15],
            max_relative = 1e-12
        );
    }

    #[test]
    fn shape_model_matches_qubit_model() {
        let c = cfg();
        for q in [
            PathQubit::diagonal(),
            PathQubit::anti_diagonal(),
            PathQubit::new(Complex64::new(0.6, 0.0), Complex64::from_polar(0.8, 1.1)).unwrap(),
        ] {
            let shape = FringeShape::from_qubit(&q, &c);
            let a = pixel_distribution(&q, &c).unwrap();
            let b = shape_distribution(&shape, &c).unwrap();
            for (x, y) in a.probs().iter().zip(b.probs()) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    proptest! {
        #[test]
        fn distribution_normalized(
            theta in 0.0f64..PI, phi in -PI..PI,
            w in 0.5f64..3.0, d in 0.5f64..6.0, f in 0.5f64..8.0,
            mu in 0.0f64..=1.0, dark in 0.0f64..0.2,
        ) {
            let c = OpticsConfig {
                waist_w_mm: w, displacement_d_mm: d, focal_f_m: f,
                coherence_mu: mu, dark_prob: dark, ..OpticsConfig::default()
            };
            let q = PathQubit::from_angles(theta, phi);
            let dist = pixel_distribution(&q, &c).unwrap();
            let s: f64 = dist.probs().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(dist.probs().iter().all(|p| *p >= 0.0));
        }

        #[test]
        fn fringe_complementarity(theta in 0.0f64..PI, phi in -PI..PI, mu in 0.0f64..=1.0) {
            let c = OpticsConfig { coherence_mu: mu, ..OpticsConfig::default() };
            let q = PathQubit::from_angles(theta, phi);
            let flipped = PathQubit::new(q.alpha_plus, -q.alpha_minus).unwrap();
            let (ra, rb) = (qubit_pixel_intensities(&q, &c), qubit_pixel_intensities(&flipped, &c));
            let mix = ModelDistribution::mixture(&[
                (ra.iter().sum(), &pixel_distribution(&q, &c).unwrap()),
                (rb.iter().sum(), &pixel_distribution(&flipped, &c).unwrap()),
            ]).unwrap();
            let env = envelope_distribution(&c).unwrap();
            for (m, e) in mix.probs().iter().zip(env.probs()) {
                prop_assert!((m - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nslit_examples() {
        let two = SlitArrayConfig::default();
        assert_relative_eq!(nslit_intensity(0.0, &two), 1.0, max_relative = 1e-15);
        let lf = two.wavelength_nm * 1e-9 * two.focal_f_m;
        let s = two.separation_um * 1e-6;
        for m in 0..4 {
            let x = lf / (2.0 * s) * (2 * m + 1) as f64;
            assert!(nslit_intensity(x, &two) < 1e-25, "m={m}");
        }
        // principal maximum of the array factor at x = lf/s: envelope only
        let a = two.slit_width_um * 1e-6;
        let beta = PI * a / s;
        assert_relative_eq!(nslit_intensity(lf / s, &two), (beta.sin() / beta).powi(2), max_relative = 1e-9);

        let three = SlitArrayConfig {
            n_slits: 3,
            ..Default::default()
        };
        assert_relative_eq!(nslit_intensity(0.0, &three), 1.0, max_relative = 1e-15);
        // secondary maximum of the array factor, sin argument pi/2
        let x = lf / (2.0 * s);
        let beta = PI * a * x / lf;
        let env = (beta.sin() / beta).powi(2);
        assert_relative_eq!(nslit_intensity(x, &three) / env, 1.0 / 9.0, max_relative = 1e-12);
    }

    #[test]
    fn nslit_secondary_max_by_scan() {
        // brute-force scan of the 3-slit array factor between principal maxima
        let n = 3.0;
        let mut best = (0.0, 0.0);
        for k in 1..100_000 {
            let g = PI * k as f64 / 100_000.0;
            let v = ((n * g).sin() / (n * g.sin())).powi(2);
            if g > PI / 3.0 && g < 2.0 * PI / 3.0 && v > best.1 {
                best = (g, v);
            }
        }
        assert!((best.0 - PI / 2.0).abs() < 1e-4);
        assert!((best.1 - 1.0 / 9.0).abs() < 1e-9);
    }

    #[test]
    fn nslit_limits_continuous() {
        for n_slits in [2, 3] {
            let c = SlitArrayConfig {
                n_slits,
                ..Default::default()
            };
            let lf = c.wavelength_nm * 1e-9 * c.focal_f_m;
            let x0 = lf / (c.separation_um * 1e-6);
            let at = nslit_intensity(x0, &c);
            let near = nslit_intensity(x0 * (1.0 + 1e-7), &c);
            assert!((at - near).abs() < 1e-6, "N={n_slits}: {at} vs {near}");
        }
    }

    #[test]
    fn oracle_matches_closed_form_up_to_constant() {
        let c = cfg();
        let scale = PI.sqrt() * c.waist();
        for b in [Branch::Plus, Branch::Minus] {
            for x in [-1e-3, -3e-4, 0.0, 2e-4, 1e-3] {
                let o = fresnel_oracle(x, b, &c).unwrap();
                let m = focal_plane_mode(x, b, &c) * scale;
                assert!((o - m).norm() <= 1e-8 * scale, "x={x} {o} {m}");
            }
        }
    }

    #[test]
    fn oracle_ratio_constant_modulus() {
        let c = cfg();
        let ratios: Vec<f64> = [-1e-3, 0.0, 1e-3]
            .iter()
            .map(|&x| (focal_plane_mode(x, Branch::Plus, &c) / fresnel_oracle(x, Branch::Plus, &c).unwrap()).norm())
            .collect();
        for r in &ratios {
            assert!((r / ratios[1] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn oracle_symmetries() {
        let c = cfg();
        for x in [-7e-4, 1.3e-4, 9e-4] {
            let p = fresnel_oracle(x, Branch::Plus, &c).unwrap();
            let m_mirror = fresnel_oracle(-x, Branch::Minus, &c).unwrap();
            let m = fresnel_oracle(x, Branch::Minus, &c).unwrap();
            assert!((p - m_mirror).norm() < 1e-12 * p.norm().max(1e-3));
            assert!((p - m.conj()).norm() < 1e-12 * p.norm().max(1e-3));
        }
    }

    #[test]
    fn oracle_envelope_fwhm() {
        // FWHM of |u| is 2 f lambda sqrt(ln 2)/(pi w)
        let c = cfg();
        let peak = fresnel_oracle(0.0, Branch::Plus, &c).unwrap().norm();
        let expected = 2.0 * c.focal() * c.wavelength() * 2f64.ln().sqrt() / (PI * c.waist());
        let (mut lo, mut hi) = (0.0, expected);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let v = fresnel_oracle(mid, Branch::Plus, &c).unwrap().norm() / peak;
            if v > 0.5 { lo = mid } else { hi = mid }
        }
        let fwhm = 2.0 * 0.5 * (lo + hi);
        assert!((fwhm / expected - 1.0).abs() < 1e-6, "{fwhm} vs {expected}");
    }
}

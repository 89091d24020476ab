//! Polarization-path entanglement and remote preparation of path qubits.
//!
//! The signal photon's polarization is mapped onto the two beam-displacer
//! paths, so the pair state is `(|down,H> + |up,V>)/sqrt2` over
//! (signal path) x (idler polarization). Detecting the idler behind a
//! HWP/QWP/PBS analyser conditions the signal path state, which sets the phase
//! and contrast of the fringes on the array.
//!
//! Basis ordering for 4x4 matrices: index = 2 * path + polarization with
//! path 0 = up, 1 = down and polarization 0 = H, 1 = V.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optics::{self, FringeShape, ModelDistribution, OpticsConfig, OpticsError};
use crate::stats::{self, StatsError};

/// Tolerance on `|a+|^2 + |a-|^2 = 1`.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// HWP fast-axis angle at which, with the QWP at 0 deg, the PBS ports project
/// the idler onto (H+V)/sqrt2 (D1) and (H-V)/sqrt2 (D2).
/// [`solve_analyzer_hwp`] recovers it numerically.
pub const ANALYZER_HWP_DEG: f64 = 22.5;

/// Expected counts used when fitting noiseless predicted patterns.
const SCAN_FIT_COUNTS: f64 = 1.0e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolarizationError {
    #[error("path qubit not normalized: |a+|^2 + |a-|^2 = {0}")]
    NotNormalized(f64),
    #[error("fidelity {0} outside [1/4, 1]")]
    FidelityOutOfRange(f64),
    #[error("non-finite analyser angle")]
    NonFiniteAngle,
    #[error("herald outcome {port:?} has zero probability")]
    ImpossibleHerald { port: Port },
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Amplitudes of the two beam-displacer paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathQubit {
    pub alpha_plus: Complex64,
    pub alpha_minus: Complex64,
}

impl PathQubit {
    pub fn new(alpha_plus: Complex64, alpha_minus: Complex64) -> Result<Self, PolarizationError> {
        let n = alpha_plus.norm_sqr() + alpha_minus.norm_sqr();
        if !n.is_finite() || (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(PolarizationError::NotNormalized(n));
        }
        Ok(Self {
            alpha_plus,
            alpha_minus,
        })
    }

    /// Normalizes arbitrary (not both zero) amplitudes.
    pub fn normalized(alpha_plus: Complex64, alpha_minus: Complex64) -> Result<Self, PolarizationError> {
        let n = (alpha_plus.norm_sqr() + alpha_minus.norm_sqr()).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(PolarizationError::NotNormalized(n * n));
        }
        Ok(Self {
            alpha_plus: alpha_plus / n,
            alpha_minus: alpha_minus / n,
        })
    }

    /// `cos(theta/2)|up> + e^{i phi} sin(theta/2)|down>`.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        Self {
            alpha_plus: Complex64::new((theta / 2.0).cos(), 0.0),
            alpha_minus: Complex64::from_polar((theta / 2.0).sin(), phi),
        }
    }

    pub fn up() -> Self {
        Self {
            alpha_plus: Complex64::new(1.0, 0.0),
            alpha_minus: Complex64::new(0.0, 0.0),
        }
    }

    pub fn down() -> Self {
        Self {
            alpha_plus: Complex64::new(0.0, 0.0),
            alpha_minus: Complex64::new(1.0, 0.0),
        }
    }

    /// `(|up> + |down>)/sqrt2`
    pub fn diagonal() -> Self {
        Self {
            alpha_plus: Complex64::new(FRAC_1_SQRT_2, 0.0),
            alpha_minus: Complex64::new(FRAC_1_SQRT_2, 0.0),
        }
    }

    /// `(|up> - |down>)/sqrt2`
    pub fn anti_diagonal() -> Self {
        Self {
            alpha_plus: Complex64::new(FRAC_1_SQRT_2, 0.0),
            alpha_minus: Complex64::new(-FRAC_1_SQRT_2, 0.0),
        }
    }
}

/// Bloch coordinates with `|up>` at +z.
pub fn bloch_vector(qubit: &PathQubit) -> [f64; 3] {
    let c = qubit.alpha_plus.conj() * qubit.alpha_minus;
    [
        2.0 * c.re,
        2.0 * c.im,
        qubit.alpha_plus.norm_sqr() - qubit.alpha_minus.norm_sqr(),
    ]
}

/// Werner mixture `v |psi><psi| + (1-v) I/4` of the ideal pair state.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitState {
    werner_v: f64,
    rho: Matrix4<Complex64>,
}

impl TwoQubitState {
    /// `(|down,H> + |up,V>)/sqrt2`
    pub fn ideal_vector() -> Vector4<Complex64> {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let z = Complex64::new(0.0, 0.0);
        // (up,H), (up,V), (down,H), (down,V)
        Vector4::new(z, h, h, z)
    }

    pub fn werner(v: f64) -> Self {
        let psi = Self::ideal_vector();
        let pure = psi * psi.adjoint();
        let noise = Matrix4::<Complex64>::identity() * Complex64::new((1.0 - v) / 4.0, 0.0);
        Self {
            werner_v: v,
            rho: pure * Complex64::new(v, 0.0) + noise,
        }
    }

    pub fn werner_v(&self) -> f64 {
        self.werner_v
    }

    pub fn density_matrix(&self) -> &Matrix4<Complex64> {
        &self.rho
    }

    /// `<psi| rho |psi>`
    pub fn fidelity(&self) -> f64 {
        let psi = Self::ideal_vector();
        (psi.adjoint() * self.rho * psi)[(0, 0)].re
    }

    /// Reduced state of the signal path, tracing out the idler.
    pub fn signal_reduced(&self) -> Matrix2<Complex64> {
        partial_trace_idler(&self.rho, &Matrix2::identity())
    }
}

/// Werner state with the requested fidelity to the ideal pair state.
pub fn entangled_state(fidelity: f64) -> Result<TwoQubitState, PolarizationError> {
    if !(0.25..=1.0).contains(&fidelity) {
        return Err(PolarizationError::FidelityOutOfRange(fidelity));
    }
    Ok(TwoQubitState::werner((fidelity - 0.25) / 0.75))
}

/// PBS output port feeding D1 (transmitted, H) or D2 (reflected, V).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Port {
    D1,
    D2,
}

impl Port {
    pub const BOTH: [Port; 2] = [Port::D1, Port::D2];

    pub fn label(self) -> &'static str {
        match self {
            Port::D1 => "D1",
            Port::D2 => "D2",
        }
    }

    pub fn parse(s: &str) -> Option<Port> {
        match s {
            "D1" => Some(Port::D1),
            "D2" => Some(Port::D2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzerSetting {
    pub hwp_deg: f64,
    pub qwp_deg: f64,
    pub port: Port,
}

impl AnalyzerSetting {
    /// Analyser with the fixed HWP and the given QWP angle.
    pub fn with_qwp(qwp_deg: f64, port: Port) -> Self {
        Self {
            hwp_deg: ANALYZER_HWP_DEG,
            qwp_deg,
            port,
        }
    }

    pub fn other_port(self) -> Self {
        Self {
            port: match self.port {
                Port::D1 => Port::D2,
                Port::D2 => Port::D1,
            },
            ..self
        }
    }
}

/// Jones matrix of a retarder with fast axis at `theta` and retardance `delta`.
pub fn waveplate(theta: f64, delta: f64) -> Matrix2<Complex64> {
    let (s, c) = theta.sin_cos();
    let rot = |sign: f64| {
        Matrix2::new(
            Complex64::new(c, 0.0),
            Complex64::new(sign * s, 0.0),
            Complex64::new(-sign * s, 0.0),
            Complex64::new(c, 0.0),
        )
    };
    let retard = Matrix2::new(
        Complex64::from_polar(1.0, -delta / 2.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::from_polar(1.0, delta / 2.0),
    );
    rot(-1.0) * retard * rot(1.0)
}

pub fn half_wave_plate(theta_deg: f64) -> Matrix2<Complex64> {
    waveplate(theta_deg.to_radians(), PI)
}

pub fn quarter_wave_plate(theta_deg: f64) -> Matrix2<Complex64> {
    waveplate(theta_deg.to_radians(), PI / 2.0)
}

pub fn port_projector(port: Port) -> Matrix2<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    match port {
        Port::D1 => Matrix2::new(one, zero, zero, zero),
        Port::D2 => Matrix2::new(zero, zero, zero, one),
    }
}

/// Idler-side POVM element for a setting: the photon crosses the HWP, then
/// the QWP, then the PBS.
pub fn analyzer_element(setting: &AnalyzerSetting) -> Matrix2<Complex64> {
    let jones = quarter_wave_plate(setting.qwp_deg) * half_wave_plate(setting.hwp_deg);
    jones.adjoint() * port_projector(setting.port) * jones
}

/// `Tr_idler[(I (x) E) rho]`
fn partial_trace_idler(rho: &Matrix4<Complex64>, element: &Matrix2<Complex64>) -> Matrix2<Complex64> {
    let mut out = Matrix2::zeros();
    for a in 0..2 {
        for b in 0..2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..2 {
                for j in 0..2 {
                    acc += element[(i, j)] * rho[(2 * a + j, 2 * b + i)];
                }
            }
            out[(a, b)] = acc;
        }
    }
    out
}

/// Conditional path state after a herald, split into a pure qubit carrying
/// populations and relative phase, and the purity factor multiplying the
/// interference cross term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeraldOutcome {
    pub qubit: PathQubit,
    pub coherence: f64,
    pub probability: f64,
}

impl HeraldOutcome {
    /// Optics config whose cross-term attenuation includes this outcome's purity.
    pub fn optics(&self, cfg: &OpticsConfig) -> OpticsConfig {
        cfg.with_coherence(cfg.coherence_mu * self.coherence)
    }

    pub fn distribution(&self, cfg: &OpticsConfig) -> Result<ModelDistribution, OpticsError> {
        optics::pixel_distribution(&self.qubit, &self.optics(cfg))
    }

    /// Expected fringe shape (contrast includes mixedness and `coherence_mu`).
    pub fn shape(&self, cfg: &OpticsConfig) -> FringeShape {
        FringeShape::from_qubit(&self.qubit, &self.optics(cfg))
    }
}

fn path_state_from_density(rho: &Matrix2<Complex64>) -> Result<(PathQubit, f64), PolarizationError> {
    let d0 = rho[(0, 0)].re.max(0.0);
    let d1 = rho[(1, 1)].re.max(0.0);
    let c = rho[(0, 1)];
    let qubit = PathQubit::normalized(
        Complex64::new(d0.sqrt(), 0.0),
        Complex64::from_polar(d1.sqrt(), -c.arg()),
    )?;
    let denom = (d0 * d1).sqrt();
    let coherence = if denom > 1e-300 { (c.norm() / denom).min(1.0) } else { 1.0 };
    Ok((qubit, coherence))
}

pub fn herald(state: &TwoQubitState, setting: &AnalyzerSetting) -> Result<HeraldOutcome, PolarizationError> {
    if !(setting.hwp_deg.is_finite() && setting.qwp_deg.is_finite()) {
        return Err(PolarizationError::NonFiniteAngle);
    }
    let reduced = partial_trace_idler(&state.rho, &analyzer_element(setting));
    let probability = (reduced[(0, 0)] + reduced[(1, 1)]).re;
    if !(probability > 1e-15) {
        return Err(PolarizationError::ImpossibleHerald { port: setting.port });
    }
    let conditional = reduced / Complex64::new(probability, 0.0);
    let (qubit, coherence) = path_state_from_density(&conditional)?;
    Ok(HeraldOutcome {
        qubit,
        coherence,
        probability,
    })
}

/// Path state of the signal when the herald port is ignored.
pub fn unheralded(state: &TwoQubitState) -> Result<HeraldOutcome, PolarizationError> {
    let (qubit, coherence) = path_state_from_density(&state.signal_reduced())?;
    Ok(HeraldOutcome {
        qubit,
        coherence,
        probability: 1.0,
    })
}

/// Pixel distribution of D1-or-D2 heralded events: the outcome distributions
/// weighted by herald probability times array acceptance.
pub fn herald_mixture(outcomes: &[HeraldOutcome], cfg: &OpticsConfig) -> Result<ModelDistribution, PolarizationError> {
    let dists = outcomes
        .iter()
        .map(|o| o.distribution(cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let weights: Vec<f64> = outcomes
        .iter()
        .map(|o| {
            let c = o.optics(cfg);
            o.probability * optics::qubit_pixel_intensities(&o.qubit, &c).iter().sum::<f64>()
        })
        .collect();
    let parts: Vec<(f64, &ModelDistribution)> = weights.iter().copied().zip(dists.iter()).collect();
    Ok(ModelDistribution::mixture(&parts)?)
}

/// Finds the HWP angle in [0, 45] deg that maps the D1 port onto (H+V)/sqrt2
/// with the QWP at 0. The H-H element of the D1 POVM falls monotonically from
/// 1 to 0 over that range and equals 1/2 exactly there; bisect on it.
pub fn solve_analyzer_hwp() -> f64 {
    let excess = |h: f64| {
        let e = analyzer_element(&AnalyzerSetting {
            hwp_deg: h,
            qwp_deg: 0.0,
            port: Port::D1,
        });
        e[(0, 0)].re - 0.5
    };
    let (mut a, mut b) = (0.0, 45.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if excess(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-13 {
            break;
        }
    }
    0.5 * (a + b)
}

/// One row of a QWP rotation scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub qwp_deg: f64,
    pub port: Port,
    pub probability: f64,
    pub predicted_visibility: f64,
    pub fitted_visibility: f64,
    pub fringe_phase: f64,
    pub bloch: [f64; 3],
}

/// Heralds each (angle, port), renders the pixel distribution and fits its
/// fringes. Rows are ordered by angle, then D1 before D2.
pub fn qwp_scan(state: &TwoQubitState, cfg: &OpticsConfig, angles: &[f64]) -> Result<Vec<ScanRow>, PolarizationError> {
    let mut rows = Vec::with_capacity(2 * angles.len());
    for &qwp in angles {
        for port in Port::BOTH {
            let outcome = herald(state, &AnalyzerSetting::with_qwp(qwp, port))?;
            let dist = outcome.distribution(cfg)?;
            let counts: Vec<f64> = dist.probs().iter().map(|p| p * SCAN_FIT_COUNTS).collect();
            let guess = outcome.shape(cfg);
            let fit = stats::fit_counts(&counts, cfg, guess.contrast)?;
            rows.push(ScanRow {
                qwp_deg: qwp,
                port,
                probability: outcome.probability,
                predicted_visibility: guess.contrast,
                fitted_visibility: fit.fringe_visibility,
                fringe_phase: fit.fringe_phase,
                bloch: bloch_vector(&outcome.qubit),
            });
        }
    }
    Ok(rows)
}

//! Run configuration as a JSON key tree. Missing keys take their defaults;
//! unknown keys are rejected so typos never pass silently.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::IoError;
use crate::corpuscular::DlmParams;
use crate::montecarlo::RateConfig;
use crate::optics::OpticsConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolarizationConfig {
    /// Fidelity of the pair state with the ideal entangled state.
    pub fidelity: f64,
    /// Analyser quarter-wave plate angle in degrees.
    pub qwp_deg: f64,
}

impl Default for PolarizationConfig {
    fn default() -> Self {
        // Werner v = 0.92
        Self {
            fidelity: 0.94,
            qwp_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpuscularConfig {
    pub kappa: f64,
    pub gamma: f64,
    pub ensemble_runs: usize,
}

impl Default for CorpuscularConfig {
    fn default() -> Self {
        let p = DlmParams::default();
        Self {
            kappa: p.kappa,
            gamma: p.gamma,
            ensemble_runs: 10_000,
        }
    }
}

impl CorpuscularConfig {
    pub fn params(&self) -> DlmParams {
        DlmParams {
            kappa: self.kappa,
            gamma: self.gamma,
        }
    }
}

/// Which distribution R^2 is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    /// Fit to a long QM-sampled run (`reference_photons` detections).
    Fitted,
    /// The closed-form QM distribution.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub band_runs: usize,
    pub n_max: usize,
    pub grid_step: usize,
    pub reference: ReferenceKind,
    pub reference_photons: usize,
    /// Spacing of the likelihood-ratio N grid.
    pub lrt_step: usize,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            band_runs: 1000,
            n_max: 2000,
            grid_step: 1,
            reference: ReferenceKind::Fitted,
            reference_photons: 98_000,
            lrt_step: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub optics: OpticsConfig,
    pub rates: RateConfig,
    pub polarization: PolarizationConfig,
    pub corpuscular: CorpuscularConfig,
    pub stats: StatsConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), IoError> {
        let v = |e: &dyn std::fmt::Display| IoError::ConfigValidation(e.to_string());
        self.optics.validate().map_err(|e| v(&e))?;
        self.rates.validate().map_err(|e| v(&e))?;
        let f = self.polarization.fidelity;
        if !(0.25..=1.0).contains(&f) {
            return Err(IoError::ConfigValidation(format!("polarization.fidelity must lie in [1/4, 1], got {f}")));
        }
        if !self.polarization.qwp_deg.is_finite() {
            return Err(IoError::ConfigValidation("polarization.qwp_deg must be finite".into()));
        }
        self.corpuscular.params().validate().map_err(|e| v(&e))?;
        if self.corpuscular.ensemble_runs == 0 {
            return Err(IoError::ConfigValidation("corpuscular.ensemble_runs must be >= 1".into()));
        }
        let s = &self.stats;
        for (name, n) in [
            ("stats.band_runs", s.band_runs),
            ("stats.n_max", s.n_max),
            ("stats.grid_step", s.grid_step),
            ("stats.reference_photons", s.reference_photons),
            ("stats.lrt_step", s.lrt_step),
        ] {
            if n == 0 {
                return Err(IoError::ConfigValidation(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// First key present in `doc` but absent from `template`, as a dotted path.
fn unknown_key(doc: &Value, template: &Value, prefix: &str) -> Option<String> {
    let (Value::Object(d), Value::Object(t)) = (doc, template) else {
        return None;
    };
    for (k, v) in d {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match t.get(k) {
            None => return Some(path),
            Some(tv) => {
                if let Some(found) = unknown_key(v, tv, &path) {
                    return Some(found);
                }
            }
        }
    }
    None
}

/// Parses and validates a JSON config document.
pub fn parse_config(text: &str) -> Result<RunConfig, IoError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| IoError::ConfigParse(e.to_string()))?;
    if !doc.is_object() {
        return Err(IoError::ConfigParse("top level must be an object".into()));
    }
    let template = serde_json::to_value(RunConfig::default()).expect("default serializes");
    if let Some(key) = unknown_key(&doc, &template, "") {
        return Err(IoError::UnknownKey(key));
    }
    let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| IoError::ConfigParse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        let c = parse_config("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.optics.waist_w_mm, 1.4);
        assert_eq!(c.optics.displacement_d_mm, 3.68);
        assert_eq!(c.rates.pair_rate_hz, 2000.0);
    }

    #[test]
    fn negative_waist_is_validation_error() {
        assert!(matches!(
            parse_config(r#"{"optics":{"waist_w_mm":-1}}"#),
            Err(IoError::ConfigValidation(_))
        ));
    }

    #[test]
    fn error_categories_distinct() {
        assert!(matches!(parse_config("{"), Err(IoError::ConfigParse(_))));
        assert!(matches!(parse_config("[]"), Err(IoError::ConfigParse(_))));
        assert!(matches!(parse_config(r#"{"optics":{"waist":1}}"#), Err(IoError::UnknownKey(k)) if k == "optics.waist"));
        assert!(matches!(parse_config(r#"{"sead":1}"#), Err(IoError::UnknownKey(k)) if k == "sead"));
        assert!(matches!(parse_config(r#"{"optics":{"waist_w_mm":"wide"}}"#), Err(IoError::ConfigParse(_))));
        assert!(matches!(parse_config(r#"{"polarization":{"fidelity":0.1}}"#), Err(IoError::ConfigValidation(_))));
    }

    #[test]
    fn partial_override_keeps_other_defaults() {
        let c = parse_config(r#"{"seed": 18446744073709551615, "rates":{"jitter_fwhm_ps":300}}"#).unwrap();
        assert_eq!(c.seed, u64::MAX);
        assert_eq!(c.rates.jitter_fwhm_ps, 300.0);
        assert_eq!(c.rates.pair_rate_hz, 2000.0);
    }

    #[test]
    fn serialize_then_load_is_identity() {
        let mut c = RunConfig {
            seed: 99,
            ..RunConfig::default()
        };
        c.optics.coherence_mu = 0.5;
        c.optics.efficiency_mask = (0..28).map(|i| 0.5 + i as f64 / 56.0).collect();
        c.stats.reference = ReferenceKind::Exact;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, serde_json::to_string_pretty(&c).unwrap()).unwrap();
        assert_eq!(load_config(&p).unwrap(), c);
    }
}

use statrs::function::factorial::ln_factorial;

use super::{check_dims, Histogram, StatsError};
use crate::optics::ModelDistribution;

/// Natural log of the multinomial probability of `hist` under `model`.
///
/// Returns `f64::NEG_INFINITY` when a pixel with zero probability has counts.
pub fn multinomial_log_pmf(hist: &Histogram, model: &ModelDistribution) -> Result<f64, StatsError> {
    check_dims(hist.len(), model)?;
    let n = hist.total();
    let mut log_p = ln_factorial(n);
    for (&k, &p) in hist.counts().iter().zip(model.probs()) {
        if k == 0 {
            continue;
        }
        if p == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        log_p += k as f64 * p.ln() - ln_factorial(k);
    }
    Ok(log_p)
}

/// `log P(D|m1) - log P(D|m2)`; positive favours `m1`.
pub fn log_likelihood_ratio(
    hist: &Histogram,
    m1: &ModelDistribution,
    m2: &ModelDistribution,
) -> Result<f64, StatsError> {
    let l1 = multinomial_log_pmf(hist, m1)?;
    let l2 = multinomial_log_pmf(hist, m2)?;
    match (l1.is_finite(), l2.is_finite()) {
        (false, false) => Err(StatsError::Indeterminate),
        (true, false) => Ok(f64::INFINITY),
        (false, true) => Ok(f64::NEG_INFINITY),
        (true, true) => Ok(l1 - l2),
    }
}

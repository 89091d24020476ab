//! Interquartile bands of R^2 versus detection count over repeated runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{r_squared_counts, StatsError};
use crate::optics::ModelDistribution;
use crate::rng::{substream, SimRng};

/// R^2 level used for the "detections needed" statistics.
pub const R2_TARGET: f64 = 0.96;

const MIN_RUNS: usize = 100;

/// A generator of pixel-index sequences, one independent run per call.
pub trait EventSource: Sync {
    fn name(&self) -> &str;
    fn n_pixels(&self) -> usize;
    /// The first `n` detected pixels of one run.
    fn draw(&self, rng: &mut SimRng, n: usize) -> Result<Vec<usize>, StatsError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2Band {
    pub model: String,
    pub n: Vec<usize>,
    pub q25: Vec<f64>,
    pub q50: Vec<f64>,
    pub q75: Vec<f64>,
    /// Per run, the first grid N whose R^2 reaches [`R2_TARGET`].
    pub first_passage: Vec<Option<usize>>,
}

impl R2Band {
    /// Smallest grid N where the band median reaches `target`.
    pub fn median_crossing(&self, target: f64) -> Option<usize> {
        self.n.iter().zip(&self.q50).find(|(_, q)| **q >= target).map(|(n, _)| *n)
    }

    /// Median over runs of the first-passage N; runs that never pass count as
    /// larger than every grid point, so the result is `None` when at least
    /// half the runs are censored.
    pub fn median_first_passage(&self) -> Option<f64> {
        let mut v: Vec<f64> = self
            .first_passage
            .iter()
            .map(|f| f.map_or(f64::INFINITY, |n| n as f64))
            .collect();
        v.sort_by(f64::total_cmp);
        let m = quantile(&v, 0.5);
        m.is_finite().then_some(m)
    }
}

/// Linear-interpolation quantile (type 7) of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let (a, b) = (sorted[lo], sorted[hi]);
    if lo == hi || a == b {
        a
    } else {
        a + (h - lo as f64) * (b - a)
    }
}

/// Runs `runs` independent buildups from `source` and reports R^2 quartiles
/// against `reference` at each grid N. A flat histogram scores R^2 = 0.
///
/// Results depend only on `seed`, not on the worker count.
pub fn r2_band(
    source: &dyn EventSource,
    reference: &ModelDistribution,
    n_grid: &[usize],
    runs: usize,
    seed: u64,
) -> Result<R2Band, StatsError> {
    if runs < MIN_RUNS {
        return Err(StatsError::TooFewRuns { min: MIN_RUNS, got: runs });
    }
    if n_grid.is_empty() || n_grid[0] == 0 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(StatsError::BadGrid);
    }
    if source.n_pixels() != reference.len() {
        return Err(StatsError::DimensionMismatch {
            expected: reference.len(),
            got: source.n_pixels(),
        });
    }
    let n_max = *n_grid.last().expect("grid is nonempty");
    let label = format!("r2band-{}", source.name());
    let per_run: Vec<Vec<f64>> = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, &label, r);
            let pixels = source.draw(&mut rng, n_max)?;
            let mut counts = vec![0.0; reference.len()];
            let mut out = Vec::with_capacity(n_grid.len());
            let mut next = 0;
            for (k, &p) in pixels.iter().enumerate() {
                counts[p] += 1.0;
                if k + 1 == n_grid[next] {
                    let r2 = match r_squared_counts(&counts, reference.probs(), true) {
                        Err(StatsError::FlatHistogram) => 0.0,
                        other => other?,
                    };
                    out.push(r2);
                    next += 1;
                    if next == n_grid.len() {
                        break;
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_, StatsError>>()?;

    let mut band = R2Band {
        model: source.name().to_string(),
        n: n_grid.to_vec(),
        q25: Vec::with_capacity(n_grid.len()),
        q50: Vec::with_capacity(n_grid.len()),
        q75: Vec::with_capacity(n_grid.len()),
        first_passage: per_run
            .iter()
            .map(|row| row.iter().position(|r| *r >= R2_TARGET).map(|i| n_grid[i]))
            .collect(),
    };
    for g in 0..n_grid.len() {
        let mut col: Vec<f64> = per_run.iter().map(|row| row[g]).collect();
        col.sort_by(f64::total_cmp);
        band.q25.push(quantile(&col, 0.25));
        band.q50.push(quantile(&col, 0.5));
        band.q75.push(quantile(&col, 0.75));
    }
    Ok(band)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::distr::{weighted::WeightedIndex, Distribution};

    struct Multinomial(ModelDistribution);

    impl EventSource for Multinomial {
        fn name(&self) -> &str {
            "test"
        }
        fn n_pixels(&self) -> usize {
            self.0.len()
        }
        fn draw(&self, rng: &mut SimRng, n: usize) -> Result<Vec<usize>, StatsError> {
            let w = WeightedIndex::new(self.0.probs()).unwrap();
            Ok((0..n).map(|_| w.sample(rng)).collect())
        }
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile(&v, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn band_rises_and_is_deterministic() {
        let m = ModelDistribution::from_weights(&[1.0, 4.0, 9.0, 16.0, 9.0, 4.0, 1.0]).unwrap();
        let src = Multinomial(m.clone());
        let grid = [10, 50, 200, 1000, 5000];
        let a = r2_band(&src, &m, &grid, 200, 3).unwrap();
        for w in a.q50.windows(2) {
            assert!(w[1] >= w[0] - 1e-3);
        }
        assert!(a.q50[4] > 0.99);
        for g in 0..grid.len() {
            assert!(a.q25[g] <= a.q50[g] && a.q50[g] <= a.q75[g]);
        }
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| r2_band(&src, &m, &grid, 200, 3).unwrap());
        assert_eq!(a, b);
        assert!(a.median_crossing(R2_TARGET).is_some());
    }

    #[test]
    fn bad_inputs() {
        let m = ModelDistribution::uniform(3);
        let src = Multinomial(m.clone());
        assert!(matches!(r2_band(&src, &m, &[10], 5, 0), Err(StatsError::TooFewRuns { .. })));
        assert_eq!(r2_band(&src, &m, &[10, 10], 100, 0), Err(StatsError::BadGrid));
        assert_eq!(r2_band(&src, &m, &[], 100, 0), Err(StatsError::BadGrid));
    }

    #[test]
    fn censored_first_passage() {
        let band = R2Band {
            model: "x".into(),
            n: vec![1],
            q25: vec![0.0],
            q50: vec![0.0],
            q75: vec![0.0],
            first_passage: vec![Some(10), None, None],
        };
        assert_eq!(band.median_first_passage(), None);
        let ok = R2Band {
            first_passage: vec![Some(10), Some(30), None],
            ..band
        };
        assert_eq!(ok.median_first_passage(), Some(30.0));
    }
}

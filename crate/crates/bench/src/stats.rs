use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("no samples")]
    EmptySamples,
    #[error("resample count must be positive")]
    ZeroResamples,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub resamples: usize,
}

impl BootstrapCi {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Nearest-rank percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Percentile bootstrap of the mean: resample with replacement, take the
/// 2.5th and 97.5th percentiles of the resampled means.
pub fn bootstrap_ci(samples: &[f64], resamples: usize, seed: u64) -> Result<BootstrapCi, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySamples);
    }
    if resamples == 0 {
        return Err(StatsError::ZeroResamples);
    }
    let m = mean(samples);
    let n = samples.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| samples[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    // the percentile interval can exclude the point estimate for very skewed
    // data; widen to keep lo <= mean <= hi
    let lo = percentile(&means, 0.025).min(m);
    let hi = percentile(&means, 0.975).max(m);
    Ok(BootstrapCi { mean: m, lo, hi, n, resamples })
}

/// Ordinary least squares `y = a + b·x`; returns `(b, a, r²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let (mx, my) = (mean(xs), mean(ys));
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let b = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (b, my - b * mx, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples() {
        let ci = bootstrap_ci(&[5.0; 4], 1000, 1).unwrap();
        assert_eq!((ci.mean, ci.lo, ci.hi), (5.0, 5.0, 5.0));
        assert_eq!(bootstrap_ci(&[], 1000, 1), Err(StatsError::EmptySamples));
        assert_eq!(bootstrap_ci(&[1.0], 0, 1), Err(StatsError::ZeroResamples));
    }

    #[test]
    fn deterministic_under_seed() {
        let s = [1.0, 4.0, 2.0, 8.0, 5.0];
        assert_eq!(bootstrap_ci(&s, 500, 3), bootstrap_ci(&s, 500, 3));
        assert_ne!(bootstrap_ci(&s, 500, 3), bootstrap_ci(&s, 500, 4));
    }

    #[test]
    fn nearest_rank() {
        let d: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&d, 0.5), 50.0);
        assert_eq!(percentile(&d, 0.95), 95.0);
        assert_eq!(percentile(&d, 0.0), 1.0);
        assert_eq!(percentile(&d, 1.0), 100.0);
    }

    #[test]
    fn fit_exact_line() {
        let (b, a, r2) = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]);
        assert!((b - 2.0).abs() < 1e-12 && (a - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::StatsError;

pub const MIN_RESAMPLES: usize = 1000;

/// Percentile bootstrap interval for a mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub resamples: usize,
}

/// Mean computed as an offset from `origin`, exact for constant data.
fn shifted_mean(origin: f64, values: impl Iterator<Item = f64>, n: usize) -> f64 {
    origin + values.map(|v| v - origin).sum::<f64>() / n as f64
}

/// Linear interpolation between order statistics of sorted data.
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Each resample draws from its own stream of the seeded generator, so the
/// result does not depend on how resamples are spread over threads.
pub fn bootstrap_mean_diff_ci(d: &[f64], resamples: usize, level: f64, seed: u64) -> Result<BootstrapCi, StatsError> {
    if d.len() < 2 {
        return Err(StatsError::TooFewPairs(d.len()));
    }
    if resamples < MIN_RESAMPLES {
        return Err(StatsError::TooFewResamples(resamples));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::InvalidLevel(level));
    }
    let n = d.len();
    let origin = d[0];
    let mut means: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            shifted_mean(origin, (0..n).map(|_| d[rng.random_range(0..n)]), n)
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(BootstrapCi {
        mean: shifted_mean(origin, d.iter().copied(), n),
        lower: percentile(&means, tail),
        upper: percentile(&means, 1.0 - tail),
        level,
        resamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_sample(seed: u64, n: usize, mean: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| mean + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect()
    }

    #[test]
    fn constant_data_gives_a_degenerate_interval() {
        let ci = bootstrap_mean_diff_ci(&[0.1; 7], 1000, 0.95, 3).unwrap();
        assert_eq!((ci.lower, ci.mean, ci.upper), (0.1, 0.1, 0.1));
    }

    #[test]
    fn width_matches_normal_theory() {
        let d = normal_sample(200, 200, 0.0);
        let ci = bootstrap_mean_diff_ci(&d, 10_000, 0.95, 9).unwrap();
        let expected = 2.0 * 1.96 / 200f64.sqrt();
        let width = ci.upper - ci.lower;
        assert!((width - expected).abs() < 0.15 * expected, "width {width}");
        assert!(ci.lower <= ci.mean && ci.mean <= ci.upper);
    }

    #[test]
    fn deterministic_per_seed_and_thread_count() {
        let d = normal_sample(1, 30, 0.5);
        let a = bootstrap_mean_diff_ci(&d, 2000, 0.95, 42).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| bootstrap_mean_diff_ci(&d, 2000, 0.95, 42).unwrap());
        assert_eq!(a, b);
        let c = bootstrap_mean_diff_ci(&d, 2000, 0.95, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn narrower_level_nests_inside_wider() {
        let d = normal_sample(5, 40, 1.0);
        let wide = bootstrap_mean_diff_ci(&d, 4000, 0.95, 8).unwrap();
        let narrow = bootstrap_mean_diff_ci(&d, 4000, 0.90, 8).unwrap();
        assert!(wide.lower <= narrow.lower && narrow.upper <= wide.upper);
    }

    #[test]
    fn input_checks() {
        assert_eq!(bootstrap_mean_diff_ci(&[1.0], 1000, 0.95, 0), Err(StatsError::TooFewPairs(1)));
        assert_eq!(bootstrap_mean_diff_ci(&[1.0, 2.0], 999, 0.95, 0), Err(StatsError::TooFewResamples(999)));
        assert_eq!(bootstrap_mean_diff_ci(&[1.0, 2.0], 1000, 1.0, 0), Err(StatsError::InvalidLevel(1.0)));
    }

    #[test]
    fn percentile_interpolates_linearly() {
        let x = [1.0, 2.0, 4.0, 8.0, 16.0];
        assert_eq!(percentile(&x, 0.0), 1.0);
        assert_eq!(percentile(&x, 1.0), 16.0);
        assert_eq!(percentile(&x, 0.5), 4.0);
        assert_eq!(percentile(&x, 0.625), 6.0);
    }
}

use serde::{Deserialize, Serialize};

use super::StatsError;

/// Multiplier of the difference SD for 95% limits of agreement.
pub const LOA_Z: f64 = 1.96;

/// Bias and limits of agreement of `a − b`, with `a` the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub n: usize,
    pub bias: f64,
    /// Sample standard deviation of the differences.
    pub sd: f64,
    pub loa_lower: f64,
    pub loa_upper: f64,
    pub reference_mean: f64,
    /// The same quantities in percent of the reference mean.
    pub bias_pct: f64,
    pub loa_lower_pct: f64,
    pub loa_upper_pct: f64,
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub(crate) fn sample_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

pub fn differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(StatsError::TooFewPairs(a.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

pub fn bland_altman(a: &[f64], b: &[f64]) -> Result<BlandAltman, StatsError> {
    let d = differences(a, b)?;
    let bias = mean(&d);
    let sd = sample_sd(&d);
    let reference_mean = mean(a);
    let pct = |v: f64| 100.0 * v / reference_mean;
    let (loa_lower, loa_upper) = (bias - LOA_Z * sd, bias + LOA_Z * sd);
    Ok(BlandAltman {
        n: d.len(),
        bias,
        sd,
        loa_lower,
        loa_upper,
        reference_mean,
        bias_pct: pct(bias),
        loa_lower_pct: pct(loa_lower),
        loa_upper_pct: pct(loa_upper),
    })
}

/// Percentage error: `1.96 · SD(a − b)` in percent of the reference mean.
pub fn percentage_error(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    let ba = bland_altman(a, b)?;
    Ok(100.0 * LOA_Z * ba.sd / ba.reference_mean.abs())
}

//! Intraclass correlation from a two-way ANOVA decomposition.

use serde::{Deserialize, Serialize};

use super::{MeasurementTable, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IccForm {
    /// Two-way random effects, absolute agreement, single measurement.
    #[serde(rename = "ICC(2,1)")]
    Random1,
    /// Two-way random effects, absolute agreement, mean of k measurements.
    #[serde(rename = "ICC(2,k)")]
    RandomK,
    /// Two-way mixed effects, consistency, single measurement.
    #[serde(rename = "ICC(3,1)")]
    Mixed1,
}

/// Mean squares of the two-way layout without replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSquares {
    /// Between rows (targets).
    pub rows: f64,
    /// Between columns (raters or trials).
    pub columns: f64,
    pub residual: f64,
    pub n: usize,
    pub k: usize,
}

pub fn mean_squares(table: &MeasurementTable) -> MeanSquares {
    let n = table.rows();
    let k = table.cols();
    let values = table.values();
    let row_means: Vec<f64> = values.iter().map(|r| r.iter().sum::<f64>() / k as f64).collect();
    let col_means: Vec<f64> = (0..k)
        .map(|j| values.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let ss_rows = k as f64 * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_cols = n as f64 * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    // Residuals directly, which stays accurate when the effects dominate.
    let ss_res: f64 = values
        .iter()
        .zip(&row_means)
        .flat_map(|(r, rm)| r.iter().zip(&col_means).map(move |(x, cm)| (x - rm - cm + grand).powi(2)))
        .sum();
    MeanSquares {
        rows: ss_rows / (n - 1) as f64,
        columns: ss_cols / (k - 1) as f64,
        residual: ss_res / ((n - 1) * (k - 1)) as f64,
        n,
        k,
    }
}

pub fn icc(table: &MeasurementTable, form: IccForm) -> Result<f64, StatsError> {
    let ms = mean_squares(table);
    let scale = table
        .values()
        .iter()
        .flatten()
        .map(|v| v * v)
        .sum::<f64>()
        / (ms.n * ms.k) as f64;
    let negligible = 1e-24 * scale.max(f64::MIN_POSITIVE);
    if ms.rows <= negligible && ms.residual <= negligible {
        return Err(StatsError::DegenerateVariance);
    }
    let (b, j, e) = (ms.rows, ms.columns, ms.residual);
    let (n, k) = (ms.n as f64, ms.k as f64);
    let (num, den) = match form {
        IccForm::Random1 => (b - e, b + (k - 1.0) * e + k * (j - e) / n),
        IccForm::RandomK => (b - e, b + (j - e) / n),
        IccForm::Mixed1 => (b - e, b + (k - 1.0) * e),
    };
    if den.abs() <= negligible {
        return Err(StatsError::DegenerateVariance);
    }
    Ok(num / den)
}

/// Test-retest repeatability: rows are subjects, columns repeated trials.
pub fn repeatability(trials: &MeasurementTable) -> Result<f64, StatsError> {
    icc(trials, IccForm::Mixed1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IccClass {
    Poor,
    Moderate,
    Good,
    Excellent,
}

/// Conventional bands; a value on a boundary belongs to the upper band.
pub fn classify_icc(value: f64) -> IccClass {
    if value >= 0.9 {
        IccClass::Excellent
    } else if value >= 0.75 {
        IccClass::Good
    } else if value >= 0.5 {
        IccClass::Moderate
    } else {
        IccClass::Poor
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, StandardNormal};

    /// Mean squares by explicit double loops over the raw cells.
    fn brute_force(x: &[Vec<f64>]) -> (f64, f64, f64) {
        let n = x.len();
        let k = x[0].len();
        let mut grand = 0.0;
        for i in 0..n {
            for j in 0..k {
                grand += x[i][j];
            }
        }
        grand /= (n * k) as f64;
        let mut row_mean = vec![0.0; n];
        let mut col_mean = vec![0.0; k];
        for i in 0..n {
            for j in 0..k {
                row_mean[i] += x[i][j] / k as f64;
                col_mean[j] += x[i][j] / n as f64;
            }
        }
        let mut sst = 0.0;
        let mut ssr = 0.0;
        let mut ssc = 0.0;
        for i in 0..n {
            for j in 0..k {
                sst += (x[i][j] - grand) * (x[i][j] - grand);
                ssr += (row_mean[i] - grand) * (row_mean[i] - grand);
                ssc += (col_mean[j] - grand) * (col_mean[j] - grand);
            }
        }
        let sse = sst - ssr - ssc;
        (
            ssr / (n - 1) as f64,
            ssc / (k - 1) as f64,
            sse / ((n - 1) * (k - 1)) as f64,
        )
    }

    fn oracle(x: &[Vec<f64>], form: IccForm) -> f64 {
        let (b, j, e) = brute_force(x);
        let n = x.len() as f64;
        let k = x[0].len() as f64;
        match form {
            IccForm::Random1 => (b - e) / (b + (k - 1.0) * e + k * (j - e) / n),
            IccForm::RandomK => (b - e) / (b + (j - e) / n),
            IccForm::Mixed1 => (b - e) / (b + (k - 1.0) * e),
        }
    }

    const FORMS: [IccForm; 3] = [IccForm::Random1, IccForm::RandomK, IccForm::Mixed1];

    #[test]
    fn matches_brute_force_anova_on_random_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let noise = Normal::new(0.0, 0.3).unwrap();
        for _ in 0..20 {
            let x: Vec<Vec<f64>> = (0..6)
                .map(|_| {
                    let subject: f64 = StandardNormal.sample(&mut rng);
                    (0..3).map(|j| 10.0 + subject + 0.1 * j as f64 + noise.sample(&mut rng)).collect()
                })
                .collect();
            let table = MeasurementTable::from_values(x.clone()).unwrap();
            let (b, j, e) = brute_force(&x);
            let ms = mean_squares(&table);
            assert_abs_diff_eq!(ms.rows, b, epsilon = 1e-9);
            assert_abs_diff_eq!(ms.columns, j, epsilon = 1e-9);
            assert_abs_diff_eq!(ms.residual, e, epsilon = 1e-9);
            for form in FORMS {
                assert_abs_diff_eq!(icc(&table, form).unwrap(), oracle(&x, form), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn identical_columns_agree_perfectly() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![1.0 + 0.3 * i as f64; 2]).collect();
        let table = MeasurementTable::from_values(x).unwrap();
        for form in FORMS {
            assert_abs_diff_eq!(icc(&table, form).unwrap(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn independent_columns_are_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000);
        let x: Vec<Vec<f64>> = (0..1000)
            .map(|_| vec![StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)])
            .collect();
        let table = MeasurementTable::from_values(x).unwrap();
        for form in FORMS {
            assert!(icc(&table, form).unwrap().abs() < 0.1);
        }
    }

    #[test]
    fn constant_table_is_degenerate() {
        let table = MeasurementTable::from_values(vec![vec![2.0; 3]; 4]).unwrap();
        assert_eq!(icc(&table, IccForm::RandomK), Err(StatsError::DegenerateVariance));
    }

    #[test]
    fn repeatability_of_identical_trials_is_one() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![60.0 + i as f64; 3]).collect();
        assert_abs_diff_eq!(
            repeatability(&MeasurementTable::from_values(x).unwrap()).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn classification_bands() {
        assert_eq!(classify_icc(0.958), IccClass::Excellent);
        assert_eq!(classify_icc(0.90), IccClass::Excellent);
        assert_eq!(classify_icc(0.8999), IccClass::Good);
        assert_eq!(classify_icc(0.75), IccClass::Good);
        assert_eq!(classify_icc(0.5), IccClass::Moderate);
        assert_eq!(classify_icc(0.3), IccClass::Poor);
        assert_eq!(classify_icc(-0.2), IccClass::Poor);
    }

    fn table_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..8, 2usize..5).prop_flat_map(|(n, k)| {
            prop::collection::vec(prop::collection::vec(-10.0f64..10.0, k), n)
        })
    }

    proptest! {
        #[test]
        fn invariant_under_shift_and_scale(x in table_strategy(), shift in -50.0f64..50.0, scale in 0.1f64..20.0) {
            let table = MeasurementTable::from_values(x.clone()).unwrap();
            let moved = MeasurementTable::from_values(
                x.iter().map(|r| r.iter().map(|v| v * scale + shift).collect()).collect(),
            ).unwrap();
            for form in FORMS {
                if let (Ok(a), Ok(b)) = (icc(&table, form), icc(&moved, form)) {
                    // Conditioning of the ratio bounds the attainable accuracy.
                    let ms = mean_squares(&table);
                    if ms.rows + ms.residual > 1e-3 {
                        prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
                    }
                }
            }
        }

        #[test]
        fn invariant_under_row_permutation(x in table_strategy(), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let mut shuffled = x.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = MeasurementTable::from_values(x).unwrap();
            let b = MeasurementTable::from_values(shuffled).unwrap();
            for form in FORMS {
                if let (Ok(u), Ok(v)) = (icc(&a, form), icc(&b, form)) {
                    prop_assert!((u - v).abs() < 1e-9);
                }
            }
        }
    }
}

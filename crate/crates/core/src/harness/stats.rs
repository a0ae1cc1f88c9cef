//! Distributional checks on replicate statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::normal::normal_cdf;

/// Smallest sample accepted by [`ks_test`] and [`diagonal_check`].
pub const MIN_DISTRIBUTIONAL_SAMPLES: usize = 100;

const SERIES_TOLERANCE: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub distance: f64,
    pub p_value: f64,
    /// Set when the sample has zero spread; the distance is then at least 1/2.
    pub degenerate: bool,
}

/// `sup_t |F_R(t) - F(t)|` for the empirical CDF of `samples`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Kolmogorov survival function `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    if lambda < 1.18 {
        // 1 - (sqrt(2 pi)/lambda) sum_k exp(-(2k-1)^2 pi^2 / (8 lambda^2))
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1..=100u32 {
            let j = (2 * k - 1) as f64;
            let term = (-j * j * c).exp();
            sum += term;
            if term < SERIES_TOLERANCE * sum.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum).clamp(0.0, 1.0)
    } else {
        // 2 sum_k (-1)^(k-1) exp(-2 k^2 lambda^2)
        let mut sum = 0.0;
        for k in 1..=100u32 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < SERIES_TOLERANCE {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// One-sample KS test against the fully specified `N(0, variance)`.
pub fn ks_test(samples: &[f64], variance: f64) -> Result<KsResult> {
    if samples.len() < MIN_DISTRIBUTIONAL_SAMPLES {
        return Err(Error::domain(format!(
            "KS test needs at least {MIN_DISTRIBUTIONAL_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if !(variance.is_finite() && variance > 0.0) {
        return Err(Error::domain(format!("variance must be positive, got {variance}")));
    }
    let sd = variance.sqrt();
    let distance = ks_statistic(samples, |t| normal_cdf(t / sd));
    let degenerate = samples.iter().all(|&v| v == samples[0]);
    let p_value = kolmogorov_sf((samples.len() as f64).sqrt() * distance);
    Ok(KsResult {
        distance,
        p_value,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceCheck {
    pub estimate: f64,
    /// Jackknife standard error; needs at least 3 samples.
    pub standard_error: Option<f64>,
    pub target: f64,
    pub rel_tol: f64,
    pub passed: bool,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance against `target`: passes iff
/// `|s^2 - target| <= rel_tol * |target|`, so a zero target admits only zero.
pub fn variance_check(samples: &[f64], target: f64, rel_tol: f64) -> Result<VarianceCheck> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::domain(format!("variance check needs at least 2 samples, got {n}")));
    }
    let m = mean(samples);
    let ss: f64 = samples.iter().map(|x| (x - m).powi(2)).sum();
    let nf = n as f64;
    let estimate = ss / (nf - 1.0);
    let standard_error = (n >= 3).then(|| {
        // leave-one-out variances in closed form
        let loo: Vec<f64> = samples
            .iter()
            .map(|x| (ss - nf / (nf - 1.0) * (x - m).powi(2)) / (nf - 2.0))
            .collect();
        let lm = mean(&loo);
        ((nf - 1.0) / nf * loo.iter().map(|v| (v - lm).powi(2)).sum::<f64>()).sqrt()
    });
    Ok(VarianceCheck {
        estimate,
        standard_error,
        target,
        rel_tol,
        passed: (estimate - target).abs() <= rel_tol * target.abs(),
    })
}

/// Replicate statistics: `rows` replicates by `cols` points, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ReplicateMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::domain("replicate rows have unequal lengths"));
        }
        Ok(ReplicateMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.data[r * self.cols + j]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalCheck {
    pub covariance: Vec<Vec<f64>>,
    pub correlation: Vec<Vec<f64>>,
    pub max_abs_off_diagonal: f64,
    /// Columns with zero variance; their correlations are reported as 0.
    pub zero_variance_columns: Vec<usize>,
}

/// Empirical covariance and correlation of the columns.
pub fn diagonal_check(m: &ReplicateMatrix) -> Result<DiagonalCheck> {
    if m.cols < 2 {
        return Err(Error::domain(format!("diagonal check needs at least 2 points, got {}", m.cols)));
    }
    if m.rows < MIN_DISTRIBUTIONAL_SAMPLES {
        return Err(Error::domain(format!(
            "diagonal check needs at least {MIN_DISTRIBUTIONAL_SAMPLES} replicates, got {}",
            m.rows
        )));
    }
    let k = m.cols;
    let cols: Vec<Vec<f64>> = (0..k).map(|j| m.column(j)).collect();
    let means: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let denom = (m.rows - 1) as f64;
    let mut cov = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let s: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| (a - means[i]) * (b - means[j])).sum();
            cov[i][j] = s / denom;
            cov[j][i] = cov[i][j];
        }
    }
    let zero: Vec<usize> = (0..k).filter(|&i| cov[i][i] <= 0.0).collect();
    let mut corr = vec![vec![0.0; k]; k];
    let mut max_off = 0.0f64;
    for i in 0..k {
        corr[i][i] = 1.0;
        for j in 0..k {
            if i == j || zero.contains(&i) || zero.contains(&j) {
                continue;
            }
            corr[i][j] = (cov[i][j] / (cov[i][i] * cov[j][j]).sqrt()).clamp(-1.0, 1.0);
            max_off = max_off.max(corr[i][j].abs());
        }
    }
    Ok(DiagonalCheck {
        covariance: cov,
        correlation: corr,
        max_abs_off_diagonal: max_off,
        zero_variance_columns: zero,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal::normal_quantile;
    use crate::rng::CounterRng;

    #[test]
    fn normal_cdf_reference_points() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959964) - 0.975).abs() < 1e-6);
        assert!(normal_cdf(-40.0) < 1e-300);
    }

    #[test]
    fn quantile_grid_distance_is_half_step() {
        let r = 1000;
        let s: Vec<f64> = (1..=r).map(|i| normal_quantile((i as f64 - 0.5) / r as f64)).collect();
        let ks = ks_test(&s, 1.0).unwrap();
        assert!((ks.distance - 0.5 / r as f64).abs() < 1e-12, "{}", ks.distance);
        assert!(!ks.degenerate);
    }

    #[test]
    fn kolmogorov_reference_values() {
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        // scipy.special.kolmogorov
        assert!((kolmogorov_sf(1.0) - 0.26999967167735456).abs() < 1e-12);
        assert!((kolmogorov_sf(1.628) - 0.009975522431181053).abs() < 1e-10);
        assert!((kolmogorov_sf(0.5) - 0.9639452436648751).abs() < 1e-12);
        assert!((kolmogorov_sf(1.18) - kolmogorov_sf(1.18 - 1e-12)).abs() < 1e-10);
    }

    #[test]
    fn wrong_variance_has_power() {
        let rng = CounterRng::new(7);
        let s: Vec<f64> = (0..1000).map(|i| rng.normal_at(i)).collect();
        assert!(ks_test(&s, 1.0).unwrap().p_value > 0.01);
        assert!(ks_test(&s, 4.0).unwrap().p_value < 0.01);
    }

    #[test]
    fn small_or_flat_samples() {
        assert!(ks_test(&[0.0; 99], 1.0).is_err());
        let flat = ks_test(&[0.3; 200], 1.0).unwrap();
        assert!(flat.degenerate && flat.distance >= 0.5);
    }

    #[test]
    fn variance_check_examples() {
        let c = variance_check(&[2.0; 10], 0.0, 0.1).unwrap();
        assert!(c.passed && c.estimate == 0.0);
        let rng = CounterRng::new(11);
        let s: Vec<f64> = (0..10_000).map(|i| 0.24f64.sqrt() * rng.normal_at(i)).collect();
        assert!(variance_check(&s, 0.2394, 0.1).unwrap().passed);
        assert!(!variance_check(&s, 0.12, 0.1).unwrap().passed);
        let se = variance_check(&s, 0.24, 0.1).unwrap().standard_error.unwrap();
        // normal theory: sqrt(2/(n-1)) sigma^2
        assert!((se / (0.24 * (2.0f64 / 9999.0).sqrt()) - 1.0).abs() < 0.1);
        assert!(variance_check(&[1.0], 1.0, 0.1).is_err());
    }

    #[test]
    fn diagonal_check_examples() {
        let rng = CounterRng::new(3);
        let rows: Vec<Vec<f64>> = (0..10_000u64).map(|r| vec![rng.normal_at(2 * r), rng.normal_at(2 * r + 1)]).collect();
        let dc = diagonal_check(&ReplicateMatrix::from_rows(&rows).unwrap()).unwrap();
        assert!(dc.max_abs_off_diagonal < 0.05);
        let dup: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0], r[0]]).collect();
        let dc = diagonal_check(&ReplicateMatrix::from_rows(&dup).unwrap()).unwrap();
        assert!((dc.max_abs_off_diagonal - 1.0).abs() < 1e-12);
        let one: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0]]).collect();
        assert!(diagonal_check(&ReplicateMatrix::from_rows(&one).unwrap()).is_err());
    }
}

//! Monte Carlo table for the fluctuation terms: `E(Delta_0^2)` against
//! `eta`, and `E|Delta_0 Delta_i| / b` per lag.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::estimator::{eta, fluctuation_terms, FluctuationSpec};
use crate::lattice::{sample_with_budget, LatticeWindow};

/// `E|Delta_0 Delta_i| / b` must stay within this factor across the grid.
pub const RATIO_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagStat {
    pub lag: Vec<i64>,
    pub pairs: usize,
    pub mean_abs_product: f64,
    pub ratio_to_b: f64,
    /// `(E|Delta_0|)^2`, the value under independence.
    pub independent_product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Row {
    pub b: f64,
    pub draws: usize,
    pub mean_delta: f64,
    pub mean_delta_standard_error: f64,
    pub mean_delta_sq: f64,
    pub eta: f64,
    pub rel_error: f64,
    pub max_abs_delta: f64,
    /// `4 sup K / sqrt(b)`.
    pub delta_bound: f64,
    pub lags: Vec<LagStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Table {
    pub rows: Vec<Lemma1Row>,
    /// `max / min` of `E|Delta_0 Delta_i| / b` across the grid, per lag.
    pub ratio_spread: Vec<f64>,
    pub ratio_bounded: bool,
    pub delta_bound_holds: bool,
}

fn check_lag(window: &LatticeWindow, radius: u64, lag: &[i64]) -> Result<()> {
    if lag.len() != window.d {
        return Err(Error::Dimension {
            expected: window.d,
            got: lag.len(),
        });
    }
    let norm = lag.iter().map(|l| l.unsigned_abs()).max().unwrap_or(0);
    if norm == 0 || norm > radius + 1 {
        return Err(Error::domain(format!(
            "lag {lag:?} must be nonzero with sup-norm at most dependence radius + 1 = {}",
            radius + 1
        )));
    }
    Ok(())
}

/// `(sum |Delta_i Delta_{i+lag}|, pairs)` over sites with both ends in the window.
fn lag_products(window: &LatticeWindow, delta: &[f64], lag: &[i64]) -> (f64, usize) {
    let n = window.n as i64;
    let offset = window.linear_offset(lag);
    (0..delta.len())
        .into_par_iter()
        .with_min_len(4096)
        .map(|k| {
            let mut rest = k;
            for s in (0..window.d).rev() {
                let c = (rest % window.n) as i64 + lag[s];
                if c < 0 || c >= n {
                    return (0.0, 0);
                }
                rest /= window.n;
            }
            ((delta[k] * delta[(k as i64 + offset) as usize]).abs(), 1)
        })
        .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}

/// One field realization (seed from the config) reused across the grid.
pub fn lemma1_check(config: &ExperimentConfig, spec: &FluctuationSpec, b_grid: &[f64], lags: &[Vec<i64>]) -> Result<Lemma1Table> {
    let window = config.window();
    let model = config.model();
    let kernel = config.kernel();
    for lag in lags {
        check_lag(window, model.dependence_radius(), lag)?;
    }
    let s = sample_with_budget(model, window, config.seed(), config.memory_budget())?;
    let target = eta(model, kernel, spec)?;
    let mut rows = Vec::with_capacity(b_grid.len());
    for &b in b_grid {
        let delta = fluctuation_terms(&s, model, kernel, b, spec)?;
        let n = delta.len() as f64;
        let mean = delta.iter().sum::<f64>() / n;
        let mean_sq = delta.iter().map(|v| v * v).sum::<f64>() / n;
        let mean_abs = delta.iter().map(|v| v.abs()).sum::<f64>() / n;
        let var = (mean_sq - mean * mean) * n / (n - 1.0).max(1.0);
        let lag_stats = lags
            .iter()
            .map(|lag| {
                let (sum, pairs) = lag_products(window, &delta, lag);
                let m = if pairs > 0 { sum / pairs as f64 } else { f64::NAN };
                LagStat {
                    lag: lag.clone(),
                    pairs,
                    mean_abs_product: m,
                    ratio_to_b: m / b,
                    independent_product: mean_abs * mean_abs,
                }
            })
            .collect();
        rows.push(Lemma1Row {
            b,
            draws: delta.len(),
            mean_delta: mean,
            mean_delta_standard_error: (var / n).sqrt(),
            mean_delta_sq: mean_sq,
            eta: target,
            rel_error: (mean_sq - target).abs() / target,
            max_abs_delta: delta.iter().fold(0.0, |a: f64, v| a.max(v.abs())),
            delta_bound: 4.0 * kernel.sup_norm() / b.sqrt(),
            lags: lag_stats,
        });
    }
    let ratio_spread: Vec<f64> = (0..lags.len())
        .map(|j| {
            let (lo, hi) = rows
                .iter()
                .map(|r| r.lags[j].ratio_to_b)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            hi / lo
        })
        .collect();
    Ok(Lemma1Table {
        ratio_bounded: rows.len() > 1 && ratio_spread.iter().all(|&s| s.is_finite() && s <= RATIO_FACTOR),
        delta_bound_holds: rows.iter().all(|r| r.max_abs_delta <= r.delta_bound),
        rows,
        ratio_spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lag_pairs_counted_inside_window() {
        let w = LatticeWindow::new(2, 4).unwrap();
        let ones = vec![1.0; 16];
        assert_eq!(lag_products(&w, &ones, &[0, 1]), (12.0, 12));
        assert_eq!(lag_products(&w, &ones, &[-1, 1]), (9.0, 9));
        let idx: Vec<f64> = (0..16).map(|k| k as f64).collect();
        // pairs (k, k+4) for k < 12
        let expect: f64 = (0..12).map(|k| (k * (k + 4)) as f64).sum();
        assert_eq!(lag_products(&w, &idx, &[1, 0]).0, expect);
    }

    #[test]
    fn lag_bounds_enforced() {
        let w = LatticeWindow::new(1, 10).unwrap();
        assert!(check_lag(&w, 0, &[1]).is_ok());
        assert!(check_lag(&w, 0, &[2]).is_err());
        assert!(check_lag(&w, 0, &[0]).is_err());
        assert!(check_lag(&w, 2, &[3]).is_ok());
    }
}

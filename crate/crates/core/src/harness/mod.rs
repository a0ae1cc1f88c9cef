//! Seeded Monte Carlo replication and the checks run on its output.
//!
//! Replicate `r` (1-based) draws its field with `replicate_seed(base, r)`;
//! rows are computed independently and collected in index order, so the
//! matrix does not depend on scheduling or thread count.

mod lemma1;
mod stats;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use lemma1::{lemma1_check, LagStat, Lemma1Row, Lemma1Table, RATIO_FACTOR};
pub use stats::{
    diagonal_check, kolmogorov_sf, ks_statistic, ks_test, normal_cdf, variance_check, DiagonalCheck, KsResult,
    ReplicateMatrix, VarianceCheck, MIN_DISTRIBUTIONAL_SAMPLES,
};

use crate::config::{BandwidthSpec, ExperimentConfig};
use crate::error::{Error, Result};
use crate::estimator::{centers, limit_variance, SortedSample};
use crate::lattice::sample_with_budget;
use crate::mixing::BandwidthSchedule;
use crate::rng::replicate_seed;

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::config("threads", "thread count must be at least 1")),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::domain(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Replicate statistics with per-point counts of empty kernel windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicates {
    pub points: Vec<f64>,
    pub matrix: ReplicateMatrix,
    /// Replicates in which no site fell in the kernel window, per point.
    pub degenerate: Vec<usize>,
}

impl Replicates {
    /// Long format `r,x,t` with 1-based `r`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["r", "x", "t"])?;
        for r in 0..self.matrix.rows {
            for (j, x) in self.points.iter().enumerate() {
                w.write_record([(r + 1).to_string(), x.to_string(), self.matrix.row(r)[j].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// The `R x k` matrix of `T_r(x_j)`.
pub fn run_replicates(config: &ExperimentConfig) -> Result<Replicates> {
    let b = config.bandwidth();
    let points = config.points();
    let c = centers(config.model(), config.kernel(), b, points, config.centering())?;
    let rows: Vec<(Vec<f64>, Vec<bool>)> = (1..=config.replicates() as u64)
        .into_par_iter()
        .map(|r| {
            let s = sample_with_budget(config.model(), config.window(), replicate_seed(config.seed(), r), config.memory_budget())?;
            let sorted = SortedSample::new(s.values());
            let scale = (sorted.len() as f64 * b).sqrt();
            let norm = sorted.len() as f64 * b;
            let mut t = Vec::with_capacity(points.len());
            let mut empty = Vec::with_capacity(points.len());
            for (&x, &cx) in points.iter().zip(&c) {
                let (sum, hits) = sorted.kernel_sum(config.kernel(), b, x);
                t.push(scale * (sum / norm - cx));
                empty.push(hits == 0);
            }
            Ok((t, empty))
        })
        .collect::<Result<_>>()?;
    let mut degenerate = vec![0; points.len()];
    for (_, empty) in &rows {
        for (d, &e) in degenerate.iter_mut().zip(empty) {
            *d += e as usize;
        }
    }
    let t: Vec<Vec<f64>> = rows.into_iter().map(|(t, _)| t).collect();
    Ok(Replicates {
        points: points.to_vec(),
        matrix: ReplicateMatrix::from_rows(&t)?,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub x: f64,
    pub limit_variance: f64,
    pub mean: f64,
    pub mean_standard_error: f64,
    pub ks: KsResult,
    pub ks_threshold: f64,
    pub ks_passed: bool,
    pub variance: VarianceCheck,
    pub degenerate_replicates: usize,
    pub degenerate_passed: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub check: DiagonalCheck,
    /// Limit covariance `V`: diagonal `f(x_j) ∫K²`.
    pub limit: Vec<Vec<f64>>,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub seed: u64,
    pub replicates: usize,
    pub sites: usize,
    pub bandwidth: f64,
    pub effective_mass: f64,
    pub points: Vec<PointReport>,
    pub covariance: Option<CovarianceReport>,
    pub passed: bool,
}

impl CltReport {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Replicates plus every gate: KS distance, variance, degenerate fraction,
/// and the off-diagonal correlations when there are several points.
pub fn run_clt(config: &ExperimentConfig) -> Result<(CltReport, Replicates)> {
    config.check_for_clt()?;
    let reps = run_replicates(config)?;
    let report = assess(config, &reps)?;
    Ok((report, reps))
}

/// Gates applied to an existing replicate matrix.
pub fn assess(config: &ExperimentConfig, reps: &Replicates) -> Result<CltReport> {
    let gates = config.gates();
    let r = reps.matrix.rows;
    let ks_threshold = gates.ks_threshold(r);
    let mut points = Vec::with_capacity(reps.points.len());
    let mut targets = Vec::with_capacity(reps.points.len());
    for (j, &x) in reps.points.iter().enumerate() {
        let col = reps.matrix.column(j);
        let target = gates.variance_target_scale * limit_variance(config.model(), config.kernel(), x)?;
        targets.push(target);
        let ks = ks_test(&col, target)?;
        let variance = variance_check(&col, target, gates.variance_rel_tol)?;
        let mean = col.iter().sum::<f64>() / r as f64;
        let mean_standard_error = (variance.estimate / r as f64).sqrt();
        let ks_passed = ks.distance < ks_threshold && !ks.degenerate;
        let degenerate_passed = reps.degenerate[j] as f64 <= gates.max_degenerate_fraction * r as f64;
        points.push(PointReport {
            x,
            limit_variance: target,
            mean,
            mean_standard_error,
            ks,
            ks_threshold,
            ks_passed,
            variance,
            degenerate_replicates: reps.degenerate[j],
            degenerate_passed,
            passed: ks_passed && variance.passed && degenerate_passed,
        });
    }
    let covariance = if reps.points.len() >= 2 {
        let check = diagonal_check(&reps.matrix)?;
        let threshold = gates.corr_threshold(r);
        let k = targets.len();
        let limit = (0..k).map(|i| (0..k).map(|j| if i == j { targets[i] } else { 0.0 }).collect()).collect();
        let passed = check.max_abs_off_diagonal < threshold;
        Some(CovarianceReport {
            check,
            limit,
            threshold,
            passed,
        })
    } else {
        None
    };
    let passed = points.iter().all(|p| p.passed) && covariance.as_ref().is_none_or(|c| c.passed);
    Ok(CltReport {
        seed: config.seed(),
        replicates: r,
        sites: config.window().site_count(),
        bandwidth: config.bandwidth(),
        effective_mass: config.effective_mass(),
        points,
        covariance,
        passed,
    })
}

/// What a CLT run would do, without sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedWork {
    pub replicates: usize,
    pub sites_per_replicate: usize,
    pub total_site_draws: u128,
    pub bandwidth: f64,
    pub effective_mass: f64,
    pub points: Vec<f64>,
    pub limit_variances: Vec<f64>,
}

pub fn plan(config: &ExperimentConfig) -> Result<PlannedWork> {
    let limit_variances = config
        .points()
        .iter()
        .map(|&x| limit_variance(config.model(), config.kernel(), x))
        .collect::<Result<_>>()?;
    Ok(PlannedWork {
        replicates: config.replicates(),
        sites_per_replicate: config.window().site_count(),
        total_site_draws: config.replicates() as u128 * config.window().site_count() as u128,
        bandwidth: config.bandwidth(),
        effective_mass: config.effective_mass(),
        points: config.points().to_vec(),
        limit_variances,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub beta: f64,
    pub bandwidth: f64,
    pub effective_mass: f64,
    /// `N^(-1/3) ln N` with `N = n^d` sites.
    pub prior_floor: f64,
    pub below_prior_floor: bool,
    pub report: CltReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub rows: Vec<RegimeRow>,
    pub effective_mass_decreasing: bool,
}

/// Full CLT check for each schedule `b_n = (n^d)^(-beta)`.
pub fn bandwidth_regime_sweep(config: &ExperimentConfig, betas: &[f64]) -> Result<RegimeReport> {
    let d = config.window().d as u32;
    let sites = config.window().site_count() as f64;
    let prior_floor = sites.powf(-1.0 / 3.0) * sites.ln();
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let sched = BandwidthSchedule::new(1.0, beta, d)?;
        let cfg = config.with(|p| p.bandwidth = BandwidthSpec::Schedule(sched))?;
        let (report, _) = run_clt(&cfg)?;
        rows.push(RegimeRow {
            beta,
            bandwidth: cfg.bandwidth(),
            effective_mass: cfg.effective_mass(),
            prior_floor,
            below_prior_floor: cfg.bandwidth() < prior_floor,
            report,
        });
    }
    let mut order: Vec<&RegimeRow> = rows.iter().collect();
    order.sort_by(|a, b| a.beta.total_cmp(&b.beta));
    let effective_mass_decreasing = order.windows(2).all(|w| w[1].effective_mass < w[0].effective_mass || w[1].beta == w[0].beta);
    Ok(RegimeReport {
        rows,
        effective_mass_decreasing,
    })
}

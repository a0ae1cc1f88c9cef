//! Kernel density estimation on strongly mixing random fields indexed by
//! the lattice `Z^d`, with a Monte Carlo harness for the Gaussian limit of
//! the centered, scaled estimator.
//!
//! The estimator at `x` over the window `{1..n}^d` is
//! `f_n(x) = (1 / (n^d b)) sum_i K((x - X_i) / b)`; its scaled fluctuation
//! `sqrt(n^d b) (f_n(x) - E f_n(x))` is compared with `N(0, f(x) ∫K²)`.

pub mod config;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod kernels;
pub mod lattice;
pub mod mixing;
pub mod normal;
pub mod quadrature;
pub mod rng;

pub use config::{BandwidthSpec, ConfigFile, ExperimentConfig, ExperimentParts, Gates};
pub use error::{Error, Result};
pub use estimator::{
    bias, centered_scaled, density_estimate, eta, expected_estimate, fluctuation_terms, limit_variance,
    naive_density_estimate, Centering, DensityEstimate, FluctuationSpec, SortedSample,
};
pub use harness::{run_clt, run_replicates, CltReport, Replicates};
pub use kernels::{validate, Kernel, KernelFamily, KernelSpec, ValidationReport};
pub use lattice::{sample, FieldModel, FieldSample, LatticeWindow, MaWindow, MovingAverage};
pub use mixing::{
    block_scale, dedecker_condition, lemma2_limits, m_n, psi_tail, quantile_function, series_condition, shell_count,
    BandwidthSchedule, MixingSequence, TailDistribution, Verdict,
};

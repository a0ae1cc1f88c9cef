//! Experiment configuration: the JSON file format and its validated form.
//!
//! The file is strict: unknown keys anywhere are errors, and
//! `schema_version` must match [`SCHEMA_VERSION`]. Sections that only some
//! commands use are optional in the file and checked when a command asks
//! for them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{check_interior, Centering, FluctuationSpec};
use crate::kernels::{Kernel, KernelSpec};
use crate::lattice::{FieldModel, LatticeWindow, DEFAULT_MEMORY_BUDGET};
use crate::mixing::{BandwidthSchedule, MixingSequence, TailDistribution};

pub const SCHEMA_VERSION: u32 = 1;

/// Bandwidth as a fixed value or as a schedule in the window size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BandwidthSpec {
    Fixed(f64),
    Schedule(BandwidthSchedule),
}

/// Acceptance thresholds; defaults are the documented engineering choices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gates {
    /// KS distance must stay below `ks_coefficient / sqrt(R) + ks_cushion`.
    pub ks_coefficient: f64,
    pub ks_cushion: f64,
    /// Relative tolerance of the sample variance against `f(x) ∫K²`.
    pub variance_rel_tol: f64,
    /// Off-diagonal correlations must stay below `corr_envelope / sqrt(R) + corr_cushion`.
    pub corr_envelope: f64,
    pub corr_cushion: f64,
    /// Largest admissible fraction of replicates whose kernel window caught no site.
    pub max_degenerate_fraction: f64,
    /// Multiplies every limit-variance target; values other than 1 are for power checks.
    pub variance_target_scale: f64,
}

impl Default for Gates {
    fn default() -> Self {
        Gates {
            ks_coefficient: 1.628,
            ks_cushion: 0.02,
            variance_rel_tol: 0.15,
            corr_envelope: 3.0,
            corr_cushion: 0.02,
            max_degenerate_fraction: 0.01,
            variance_target_scale: 1.0,
        }
    }
}

impl Gates {
    pub fn ks_threshold(&self, replicates: usize) -> f64 {
        self.ks_coefficient / (replicates as f64).sqrt() + self.ks_cushion
    }

    pub fn corr_threshold(&self, replicates: usize) -> f64 {
        self.corr_envelope / (replicates as f64).sqrt() + self.corr_cushion
    }
}

/// Evaluation grid `start, start + step, ...` up to and including `stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.start.is_finite() && self.stop.is_finite() && self.stop >= self.start) {
            return Err(Error::config("estimate.grid", "need finite start <= stop and step > 0"));
        }
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        if count > 10_000_000 {
            return Err(Error::config("estimate.grid", format!("grid has {count} points")));
        }
        Ok((0..count).map(|i| self.start + i as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingSection {
    pub sequence: MixingSequence,
    pub d: u32,
    /// Bandwidths at which to report `m_n` directly.
    #[serde(default)]
    pub bandwidths: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<BandwidthSchedule>,
    #[serde(default)]
    pub n_grid: Vec<u64>,
    /// Marginal law for the quantile-weighted mixing sum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<TailDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lemma1Section {
    pub fluctuation: FluctuationSpec,
    pub bandwidths: Vec<f64>,
    #[serde(default)]
    pub lags: Vec<Vec<i64>>,
    /// Relative tolerance of `E(Delta_0^2)` against `eta` at the smallest bandwidth.
    #[serde(default = "default_eta_rel_tol")]
    pub eta_rel_tol: f64,
}

fn default_eta_rel_tol() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSection {
    pub betas: Vec<f64>,
}

/// The on-disk configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<FieldModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<LatticeWindow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<BandwidthSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub centering: Centering,
    #[serde(default)]
    pub gates: Gates,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_budget_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing: Option<MixingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma1: Option<Lemma1Section>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime_sweep: Option<RegimeSection>,
}

fn default_replicates() -> usize {
    1000
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ConfigFile = serde_json::from_str(text)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported schema version {}, expected {SCHEMA_VERSION}", cfg.schema_version),
            ));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn require<'a, T>(v: &'a Option<T>, path: &str) -> Result<&'a T> {
        v.as_ref().ok_or_else(|| Error::config(path, "section is required for this command"))
    }

    /// Validated experiment over the model/kernel/window/bandwidth sections.
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let model = Self::require(&self.model, "model")?.clone();
        let kernel_spec = Self::require(&self.kernel, "kernel")?.clone();
        let window = *Self::require(&self.window, "window")?;
        let bandwidth = *Self::require(&self.bandwidth, "bandwidth")?;
        ExperimentConfig::new(ExperimentParts {
            model,
            kernel: kernel_spec,
            window,
            bandwidth,
            points: self.points.clone(),
            replicates: self.replicates,
            seed: self.seed,
            centering: self.centering,
            gates: self.gates,
            memory_budget_bytes: self.memory_budget_bytes.map(u128::from).unwrap_or(DEFAULT_MEMORY_BUDGET),
        })
    }

    /// Model and window only, for commands that need no estimator.
    pub fn field(&self) -> Result<(FieldModel, LatticeWindow)> {
        let model = Self::require(&self.model, "model")?.clone();
        let window = *Self::require(&self.window, "window")?;
        check_field(&model, &window)?;
        Ok((model, window))
    }

    pub fn estimate_points(&self) -> Result<Vec<f64>> {
        let section = Self::require(&self.estimate, "estimate")?;
        match (&section.grid, &section.points) {
            (Some(g), None) => g.points(),
            (None, Some(p)) => Ok(p.clone()),
            _ => Err(Error::config("estimate", "give exactly one of `grid` or `points`")),
        }
    }

    pub fn mixing_section(&self) -> Result<&MixingSection> {
        Self::require(&self.mixing, "mixing")
    }

    pub fn lemma1_section(&self) -> Result<&Lemma1Section> {
        Self::require(&self.lemma1, "lemma1")
    }

    pub fn regime_section(&self) -> Result<&RegimeSection> {
        Self::require(&self.regime_sweep, "regime_sweep")
    }
}

fn check_field(model: &FieldModel, window: &LatticeWindow) -> Result<()> {
    window.check()?;
    if let FieldModel::MovingAverageGaussian(ma) = model {
        if ma.window().dim() != window.d {
            return Err(Error::config(
                "model.ma_window",
                format!("window has dimension {} but the field has d = {}", ma.window().dim(), window.d),
            ));
        }
    }
    Ok(())
}

/// Inputs of [`ExperimentConfig::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentParts {
    pub model: FieldModel,
    pub kernel: KernelSpec,
    pub window: LatticeWindow,
    pub bandwidth: BandwidthSpec,
    pub points: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub centering: Centering,
    pub gates: Gates,
    pub memory_budget_bytes: u128,
}

/// A validated experiment: model, kernel, window, bandwidth, distinct points.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    parts: ExperimentParts,
    kernel: Kernel,
    bandwidth: f64,
}

impl ExperimentConfig {
    pub fn new(mut parts: ExperimentParts) -> Result<Self> {
        check_field(&parts.model, &parts.window)?;
        let kernel = Kernel::new(parts.kernel.clone())?;
        if let BandwidthSpec::Schedule(s) = &mut parts.bandwidth {
            *s = s.with_dim(parts.window.d as u32);
        }
        let bandwidth = match parts.bandwidth {
            BandwidthSpec::Fixed(b) => {
                if !(b.is_finite() && b > 0.0) {
                    return Err(Error::config("bandwidth.fixed", format!("bandwidth must be positive, got {b}")));
                }
                b
            }
            BandwidthSpec::Schedule(s) => {
                s.check()?;
                s.bandwidth(parts.window.n as u64)
            }
        };
        if parts.replicates == 0 {
            return Err(Error::config("replicates", "need at least one replicate"));
        }
        for (i, &x) in parts.points.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::config(format!("points.{i}"), "points must be finite"));
            }
            if parts.points[..i].contains(&x) {
                return Err(Error::config(format!("points.{i}"), format!("point {x} repeated; points must be distinct")));
            }
            check_interior(&parts.model, &kernel, bandwidth, x).map_err(|e| Error::config(format!("points.{i}"), e.to_string()))?;
        }
        Ok(ExperimentConfig { parts, kernel, bandwidth })
    }

    pub fn model(&self) -> &FieldModel {
        &self.parts.model
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn window(&self) -> &LatticeWindow {
        &self.parts.window
    }

    pub fn bandwidth_spec(&self) -> BandwidthSpec {
        self.parts.bandwidth
    }

    /// Bandwidth at this window size.
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn points(&self) -> &[f64] {
        &self.parts.points
    }

    pub fn replicates(&self) -> usize {
        self.parts.replicates
    }

    pub fn seed(&self) -> u64 {
        self.parts.seed
    }

    pub fn centering(&self) -> Centering {
        self.parts.centering
    }

    pub fn gates(&self) -> &Gates {
        &self.parts.gates
    }

    pub fn memory_budget(&self) -> u128 {
        self.parts.memory_budget_bytes
    }

    pub fn parts(&self) -> &ExperimentParts {
        &self.parts
    }

    /// Same experiment with other parts.
    pub fn with(&self, edit: impl FnOnce(&mut ExperimentParts)) -> Result<Self> {
        let mut parts = self.parts.clone();
        edit(&mut parts);
        ExperimentConfig::new(parts)
    }

    /// Requirements for a distributional test.
    pub fn check_for_clt(&self) -> Result<()> {
        if self.parts.replicates < 100 {
            return Err(Error::config("replicates", format!("need at least 100 replicates, got {}", self.parts.replicates)));
        }
        if self.parts.points.is_empty() {
            return Err(Error::config("points", "need at least one evaluation point"));
        }
        Ok(())
    }

    /// `n^d b`.
    pub fn effective_mass(&self) -> f64 {
        self.parts.window.site_count() as f64 * self.bandwidth
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "schema_version": 1,
        "seed": 42,
        "model": {"variant": "iid_gaussian", "parameters": {"mean": 0.0, "sd": 1.0}},
        "kernel": {"family": "epanechnikov"},
        "window": {"d": 2, "n": 60},
        "bandwidth": {"fixed": 0.15},
        "points": [0.0],
        "replicates": 1000
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ConfigFile::from_json(BASE).unwrap();
        let exp = cfg.experiment().unwrap();
        assert_eq!(exp.bandwidth(), 0.15);
        assert!((exp.effective_mass() - 540.0).abs() < 1e-9);
        let again = ConfigFile::from_json(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = BASE.replace("\"replicates\": 1000", "\"replicates\": 1000, \"extra\": 1");
        assert!(ConfigFile::from_json(&text).is_err());
        let nested = BASE.replace("\"d\": 2,", "\"d\": 2, \"m\": 3,");
        assert!(ConfigFile::from_json(&nested).is_err());
    }

    #[test]
    fn schema_version_checked() {
        let text = BASE.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(ConfigFile::from_json(&text), Err(Error::Config { .. })));
    }

    #[test]
    fn bandwidth_condition_enforced() {
        let text = BASE.replace("{\"fixed\": 0.15}", "{\"schedule\": {\"c\": 1.0, \"beta\": 1.2}}");
        let err = ConfigFile::from_json(&text).unwrap().experiment().unwrap_err();
        match err {
            Error::Config { path, message } => {
                assert_eq!(path, "bandwidth.schedule.beta");
                assert!(message.contains("n^d b_n -> infinity"));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn schedule_uses_window_dimension() {
        let text = BASE.replace("{\"fixed\": 0.15}", "{\"schedule\": {\"c\": 1.0, \"beta\": 0.5}}");
        let exp = ConfigFile::from_json(&text).unwrap().experiment().unwrap();
        assert!((exp.bandwidth() - 1.0 / 60.0).abs() < 1e-15);
    }

    #[test]
    fn points_distinct_and_interior() {
        let dup = BASE.replace("\"points\": [0.0]", "\"points\": [0.0, 0.0]");
        assert!(ConfigFile::from_json(&dup).unwrap().experiment().is_err());
        let unif = BASE
            .replace(r#"{"variant": "iid_gaussian", "parameters": {"mean": 0.0, "sd": 1.0}}"#, r#"{"variant": "iid_uniform", "parameters": {"a": 0.0, "b": 1.0}}"#)
            .replace("\"points\": [0.0]", "\"points\": [0.05]");
        assert!(ConfigFile::from_json(&unif).unwrap().experiment().is_err());
    }

    #[test]
    fn grid_points_inclusive() {
        let g = GridSpec { start: -1.0, stop: 1.0, step: 0.5 };
        assert_eq!(g.points().unwrap(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }
}

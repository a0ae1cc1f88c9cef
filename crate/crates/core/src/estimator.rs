//! The kernel density estimator on lattice samples, its exact expectation
//! under a known model, and the fluctuation terms of the CLT argument.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::lattice::{FieldModel, FieldSample, LatticeWindow};
use crate::quadrature::Simpson;

/// `f_n` at a list of points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub points: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
    pub window: LatticeWindow,
}

impl DensityEstimate {
    /// CSV with columns `x,f_n`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["x", "f_n"])?;
        for (x, v) in self.points.iter().zip(&self.values) {
            w.write_record([format!("{x:?}"), format!("{v:?}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_bandwidth(b: f64) -> Result<()> {
    if b.is_finite() && b > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("bandwidth must be positive, got {b}")))
    }
}

/// Sample values sorted once so that each evaluation only visits the sites
/// inside the kernel window: `O(log N + #{i : |x - X_i| <= r b})` per point.
#[derive(Debug, Clone)]
pub struct SortedSample {
    sorted: Vec<f64>,
}

impl SortedSample {
    pub fn new(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        SortedSample { sorted }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Indices of sorted values within the reach of the kernel at `x`.
    fn reach(&self, kernel: &Kernel, b: f64, x: f64) -> (usize, usize) {
        let (lo, hi) = kernel.support();
        // values v with (x - v) / b in [lo, hi]; padded, evaluate() trims exactly
        let pad = 1e-12 * (1.0 + x.abs() + kernel.radius() * b);
        let lower = x - hi * b - pad;
        let upper = x - lo * b + pad;
        let start = self.sorted.partition_point(|&v| v < lower);
        let end = start + self.sorted[start..].partition_point(|&v| v <= upper);
        (start, end)
    }

    /// `sum_i K((x - X_i) / b)` and the number of sites in reach.
    pub fn kernel_sum(&self, kernel: &Kernel, b: f64, x: f64) -> (f64, usize) {
        let (start, end) = self.reach(kernel, b, x);
        let s = self.sorted[start..end].iter().map(|&v| kernel.evaluate((x - v) / b)).sum();
        (s, end - start)
    }

    pub fn density_at(&self, kernel: &Kernel, b: f64, x: f64) -> f64 {
        self.kernel_sum(kernel, b, x).0 / (self.sorted.len() as f64 * b)
    }
}

/// `f_n(x) = (1 / (n^d b)) sum_{i in window} K((x - X_i) / b)` at each point.
pub fn density_estimate(sample: &FieldSample, kernel: &Kernel, b: f64, points: &[f64]) -> Result<DensityEstimate> {
    check_bandwidth(b)?;
    if sample.values().is_empty() {
        return Err(Error::domain("sample is empty"));
    }
    let sorted = SortedSample::new(sample.values());
    Ok(DensityEstimate {
        points: points.to_vec(),
        values: points.iter().map(|&x| sorted.density_at(kernel, b, x)).collect(),
        bandwidth: b,
        window: *sample.window(),
    })
}

/// Direct double loop over all sites; the reference for the sorted sweep.
pub fn naive_density_estimate(values: &[f64], kernel: &Kernel, b: f64, points: &[f64]) -> Vec<f64> {
    let norm = values.len() as f64 * b;
    points
        .iter()
        .map(|&x| values.iter().map(|&v| kernel.evaluate((x - v) / b)).sum::<f64>() / norm)
        .collect()
}

/// `E f_n(x) = ∫ K(v) f(x - v b) dv`, identical for every `n` by stationarity.
pub fn expected_estimate(model: &FieldModel, kernel: &Kernel, b: f64, x: f64) -> Result<f64> {
    check_bandwidth(b)?;
    let cuts: Vec<f64> = model.breakpoints().iter().map(|p| (x - p) / b).collect();
    kernel.integrate_over_support(|v| kernel.evaluate(v) * model.marginal_density(x - v * b), &cuts, &Simpson::default())
}

/// `|E f_n(x) - f(x)|`.
pub fn bias(model: &FieldModel, kernel: &Kernel, b: f64, x: f64) -> Result<f64> {
    Ok((expected_estimate(model, kernel, b, x)? - model.marginal_density(x)).abs())
}

/// Checks that the kernel window at `x` lies strictly inside the support of
/// the marginal, so no boundary correction is needed.
pub fn check_interior(model: &FieldModel, kernel: &Kernel, b: f64, x: f64) -> Result<()> {
    let (a, c) = model.support();
    let (lo, hi) = kernel.support();
    let (left, right) = (x - hi * b, x - lo * b);
    if left > a && right < c {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "point {x} is not interior: kernel window [{left}, {right}] leaves the support [{a}, {c}]"
        )))
    }
}

/// What `f_n(x)` is centered at in the scaled statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// `E f_n(x)`, exact by quadrature.
    #[default]
    Expected,
    /// The true density `f(x)`; adds the bias term.
    TrueDensity,
}

/// Centering value for each point.
pub fn centers(model: &FieldModel, kernel: &Kernel, b: f64, points: &[f64], centering: Centering) -> Result<Vec<f64>> {
    points
        .iter()
        .map(|&x| match centering {
            Centering::Expected => expected_estimate(model, kernel, b, x),
            Centering::TrueDensity => Ok(model.marginal_density(x)),
        })
        .collect()
}

/// `T_j = (n^d b)^(1/2) (f_n(x_j) - E f_n(x_j))`.
pub fn centered_scaled(sample: &FieldSample, model: &FieldModel, kernel: &Kernel, b: f64, points: &[f64]) -> Result<Vec<f64>> {
    let c = centers(model, kernel, b, points, Centering::Expected)?;
    let est = density_estimate(sample, kernel, b, points)?;
    Ok(scale_statistic(&est.values, &c, sample.values().len(), b))
}

pub(crate) fn scale_statistic(values: &[f64], centers: &[f64], sites: usize, b: f64) -> Vec<f64> {
    let scale = (sites as f64 * b).sqrt();
    values.iter().zip(centers).map(|(f, c)| scale * (f - c)).collect()
}

/// Two distinct points with weights `lambda1^2 + lambda2^2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(try_from = "RawFluctuation")]
pub struct FluctuationSpec {
    x: f64,
    y: f64,
    lambda1: f64,
    lambda2: f64,
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFluctuation {
    x: f64,
    y: f64,
    lambda1: f64,
    lambda2: f64,
}

impl TryFrom<RawFluctuation> for FluctuationSpec {
    type Error = Error;

    fn try_from(r: RawFluctuation) -> Result<Self> {
        FluctuationSpec::new(r.x, r.y, r.lambda1, r.lambda2)
    }
}

impl FluctuationSpec {
    pub fn new(x: f64, y: f64, lambda1: f64, lambda2: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) || x == y {
            return Err(Error::domain(format!("fluctuation points must be distinct and finite, got {x} and {y}")));
        }
        let norm = lambda1 * lambda1 + lambda2 * lambda2;
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("lambda1^2 + lambda2^2 must be 1, got {norm}")));
        }
        Ok(FluctuationSpec { x, y, lambda1, lambda2 })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn lambdas(&self) -> (f64, f64) {
        (self.lambda1, self.lambda2)
    }
}

/// Per-site `Delta_i = lambda1 Z_i(x) + lambda2 Z_i(y)` with
/// `Z_i(z) = (K((z - X_i)/b) - E K((z - X_0)/b)) / sqrt(b)`.
pub fn fluctuation_terms(
    sample: &FieldSample,
    model: &FieldModel,
    kernel: &Kernel,
    b: f64,
    spec: &FluctuationSpec,
) -> Result<Vec<f64>> {
    check_bandwidth(b)?;
    let ekx = b * expected_estimate(model, kernel, b, spec.x)?;
    let eky = b * expected_estimate(model, kernel, b, spec.y)?;
    let root = b.sqrt();
    Ok(sample
        .values()
        .iter()
        .map(|&v| {
            let zx = (kernel.evaluate((spec.x - v) / b) - ekx) / root;
            let zy = (kernel.evaluate((spec.y - v) / b) - eky) / root;
            spec.lambda1 * zx + spec.lambda2 * zy
        })
        .collect())
}

/// `eta = (lambda1^2 f(x) + lambda2^2 f(y)) ∫K²`.
pub fn eta(model: &FieldModel, kernel: &Kernel, spec: &FluctuationSpec) -> Result<f64> {
    let s2 = kernel.squared_integral()?;
    Ok((spec.lambda1.powi(2) * model.marginal_density(spec.x) + spec.lambda2.powi(2) * model.marginal_density(spec.y)) * s2)
}

/// Limit variance `f(x) ∫K²` of the scaled statistic at `x`.
pub fn limit_variance(model: &FieldModel, kernel: &Kernel, x: f64) -> Result<f64> {
    Ok(model.marginal_density(x) * kernel.squared_integral()?)
}

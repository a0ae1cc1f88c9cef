//! Lattice windows, lexicographic enumeration, and stationary field models
//! with exactly known marginals and certified mixing sequences.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixing::MixingSequence;
use crate::normal::{normal_cdf, normal_pdf, normal_quantile};
use crate::rng::CounterRng;

/// Default cap on the memory a single sample may allocate.
pub const DEFAULT_MEMORY_BUDGET: u128 = 4 << 30;

/// The window `{1..n}^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeWindow {
    pub d: usize,
    pub n: usize,
}

impl LatticeWindow {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        let w = LatticeWindow { d, n };
        w.check()?;
        Ok(w)
    }

    pub fn check(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::config("window.d", "dimension must be at least 1"));
        }
        if self.n == 0 {
            return Err(Error::config("window.n", "side length must be at least 1"));
        }
        if self.checked_site_count().is_none() {
            return Err(Error::config("window", format!("n^d overflows for n={}, d={}", self.n, self.d)));
        }
        Ok(())
    }

    fn checked_site_count(&self) -> Option<usize> {
        u32::try_from(self.d).ok().and_then(|d| self.n.checked_pow(d))
    }

    /// `n^d`.
    pub fn site_count(&self) -> usize {
        self.checked_site_count().expect("window checked at construction")
    }

    /// Coordinates of the `k`-th site (0-based) in lexicographic order.
    pub fn site(&self, mut k: usize) -> Vec<i64> {
        let mut coords = vec![0i64; self.d];
        for c in coords.iter_mut().rev() {
            *c = (k % self.n) as i64 + 1;
            k /= self.n;
        }
        coords
    }

    /// Lexicographic rank (0-based) of a site, or `None` outside the window.
    pub fn index_of(&self, site: &[i64]) -> Option<usize> {
        if site.len() != self.d {
            return None;
        }
        let mut k = 0usize;
        for &c in site {
            if c < 1 || c as usize > self.n {
                return None;
            }
            k = k * self.n + (c as usize - 1);
        }
        Some(k)
    }

    /// Offset in the lexicographic value array corresponding to a lag vector.
    pub fn linear_offset(&self, lag: &[i64]) -> i64 {
        lag.iter().fold(0i64, |acc, &l| acc * self.n as i64 + l)
    }
}

/// Lexicographic comparison: the first differing coordinate decides.
pub fn lex_compare(i: &[i64], j: &[i64]) -> Result<Ordering> {
    if i.len() != j.len() {
        return Err(Error::Dimension {
            expected: i.len(),
            got: j.len(),
        });
    }
    Ok(i.iter()
        .zip(j)
        .map(|(a, b)| a.cmp(b))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal))
}

/// All sites of the window in strictly increasing lexicographic order.
pub fn enumerate_window(window: &LatticeWindow) -> Vec<Vec<i64>> {
    (0..window.site_count()).map(|k| window.site(k)).collect()
}

/// Box `{lower_s..upper_s}` in each coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaWindow {
    pub lower: Vec<i64>,
    pub upper: Vec<i64>,
}

impl MaWindow {
    pub fn cube(d: usize, radius: i64) -> Self {
        MaWindow {
            lower: vec![-radius; d],
            upper: vec![radius; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn extents(&self) -> Vec<usize> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l + 1) as usize)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.extents().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offsets of the box in lexicographic order.
    pub fn offsets(&self) -> Vec<Vec<i64>> {
        let ext = self.extents();
        let total: usize = ext.iter().product();
        (0..total)
            .map(|mut k| {
                let mut v = vec![0i64; ext.len()];
                for s in (0..ext.len()).rev() {
                    v[s] = self.lower[s] + (k % ext[s]) as i64;
                    k /= ext[s];
                }
                v
            })
            .collect()
    }

    /// Sup-norm diameter of the box.
    pub fn diameter(&self) -> u64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) as u64)
            .max()
            .unwrap_or(0)
    }
}

/// Moving average `X_i = sum_{j in J} a_j eps_{i+j}` with Gaussian innovations.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingAverage {
    window: MaWindow,
    coefficients: Vec<f64>,
    sd: f64,
    offsets: Vec<Vec<i64>>,
}

impl MovingAverage {
    pub fn new(window: MaWindow, coefficients: Vec<f64>, sd: f64) -> Result<Self> {
        if window.dim() == 0 || window.lower.len() != window.upper.len() {
            return Err(Error::config("model.ma_window", "lower and upper must have the same nonzero length"));
        }
        if window.lower.iter().zip(&window.upper).any(|(l, u)| l > u) {
            return Err(Error::config("model.ma_window", "lower must not exceed upper"));
        }
        if coefficients.len() != window.len() {
            return Err(Error::config(
                "model.coefficients",
                format!("expected {} coefficients for the window, got {}", window.len(), coefficients.len()),
            ));
        }
        if coefficients.iter().any(|c| !c.is_finite()) || coefficients.iter().all(|&c| c == 0.0) {
            return Err(Error::config("model.coefficients", "coefficients must be finite and not all zero"));
        }
        if !(sd.is_finite() && sd > 0.0) {
            return Err(Error::config("model.parameters.sd", "innovation sd must be positive"));
        }
        let offsets = window.offsets();
        Ok(MovingAverage {
            window,
            coefficients,
            sd,
            offsets,
        })
    }

    /// Constant coefficient `value` on the cube `{-radius..radius}^d`.
    pub fn constant(d: usize, radius: i64, value: f64, sd: f64) -> Result<Self> {
        let w = MaWindow::cube(d, radius);
        let len = w.len();
        MovingAverage::new(w, vec![value; len], sd)
    }

    pub fn window(&self) -> &MaWindow {
        &self.window
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }

    /// `sd^2 * sum_j a_j a_{j+lag}`.
    pub fn covariance(&self, lag: &[i64]) -> f64 {
        let mut acc = 0.0;
        for (j, a) in self.offsets.iter().zip(&self.coefficients) {
            let shifted: Vec<i64> = j.iter().zip(lag).map(|(x, l)| x + l).collect();
            if let Some(pos) = self.offsets.iter().position(|o| *o == shifted) {
                acc += a * self.coefficients[pos];
            }
        }
        self.sd * self.sd * acc
    }
}

/// Stationary field models admitted by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldModelSpec", into = "FieldModelSpec")]
pub enum FieldModel {
    IidGaussian { mean: f64, sd: f64 },
    IidUniform { a: f64, b: f64 },
    IidLaplace { scale: f64 },
    MovingAverageGaussian(MovingAverage),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    IidGaussian,
    IidUniform,
    IidLaplace,
    MovingAverageGaussian,
}

/// Config representation `{variant, parameters, ma_window?, coefficients?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldModelSpec {
    pub variant: Variant,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ma_window: Option<MaWindow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
}

impl TryFrom<FieldModelSpec> for FieldModel {
    type Error = Error;

    fn try_from(spec: FieldModelSpec) -> Result<Self> {
        let expected: &[&str] = match spec.variant {
            Variant::IidGaussian => &["mean", "sd"],
            Variant::IidUniform => &["a", "b"],
            Variant::IidLaplace => &["scale"],
            Variant::MovingAverageGaussian => &["sd"],
        };
        if let Some(k) = spec.parameters.keys().find(|k| !expected.contains(&k.as_str())) {
            return Err(Error::config(
                format!("model.parameters.{k}"),
                format!("unknown parameter for {:?}; expected {expected:?}", spec.variant),
            ));
        }
        let get = |k: &str| {
            spec.parameters
                .get(k)
                .copied()
                .ok_or_else(|| Error::config(format!("model.parameters.{k}"), "missing parameter"))
        };
        if spec.variant != Variant::MovingAverageGaussian && (spec.ma_window.is_some() || spec.coefficients.is_some()) {
            return Err(Error::config("model", "ma_window and coefficients apply only to moving_average_gaussian"));
        }
        let model = match spec.variant {
            Variant::IidGaussian => FieldModel::IidGaussian {
                mean: get("mean")?,
                sd: get("sd")?,
            },
            Variant::IidUniform => FieldModel::IidUniform { a: get("a")?, b: get("b")? },
            Variant::IidLaplace => FieldModel::IidLaplace { scale: get("scale")? },
            Variant::MovingAverageGaussian => {
                let window = spec
                    .ma_window
                    .ok_or_else(|| Error::config("model.ma_window", "missing moving-average window"))?;
                let coefficients = spec
                    .coefficients
                    .ok_or_else(|| Error::config("model.coefficients", "missing coefficients"))?;
                FieldModel::MovingAverageGaussian(MovingAverage::new(window, coefficients, get("sd")?)?)
            }
        };
        model.check()?;
        Ok(model)
    }
}

impl From<FieldModel> for FieldModelSpec {
    fn from(model: FieldModel) -> Self {
        let p = |pairs: &[(&str, f64)]| pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        match model {
            FieldModel::IidGaussian { mean, sd } => FieldModelSpec {
                variant: Variant::IidGaussian,
                parameters: p(&[("mean", mean), ("sd", sd)]),
                ma_window: None,
                coefficients: None,
            },
            FieldModel::IidUniform { a, b } => FieldModelSpec {
                variant: Variant::IidUniform,
                parameters: p(&[("a", a), ("b", b)]),
                ma_window: None,
                coefficients: None,
            },
            FieldModel::IidLaplace { scale } => FieldModelSpec {
                variant: Variant::IidLaplace,
                parameters: p(&[("scale", scale)]),
                ma_window: None,
                coefficients: None,
            },
            FieldModel::MovingAverageGaussian(ma) => FieldModelSpec {
                variant: Variant::MovingAverageGaussian,
                parameters: p(&[("sd", ma.sd)]),
                ma_window: Some(ma.window),
                coefficients: Some(ma.coefficients),
            },
        }
    }
}

impl FieldModel {
    fn check(&self) -> Result<()> {
        let positive = |v: f64, path: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(path, format!("must be positive and finite, got {v}")))
            }
        };
        match *self {
            FieldModel::IidGaussian { mean, sd } => {
                if !mean.is_finite() {
                    return Err(Error::config("model.parameters.mean", "must be finite"));
                }
                positive(sd, "model.parameters.sd")
            }
            FieldModel::IidUniform { a, b } => {
                if a.is_finite() && b.is_finite() && a < b {
                    Ok(())
                } else {
                    Err(Error::config("model.parameters", format!("uniform needs finite a < b, got a={a}, b={b}")))
                }
            }
            FieldModel::IidLaplace { scale } => positive(scale, "model.parameters.scale"),
            FieldModel::MovingAverageGaussian(_) => Ok(()),
        }
    }

    /// Marginal standard deviation of the Gaussian variants.
    fn gaussian_sd(&self) -> Option<f64> {
        match self {
            FieldModel::IidGaussian { sd, .. } => Some(*sd),
            FieldModel::MovingAverageGaussian(_) => Some(self.marginal_variance().sqrt()),
            _ => None,
        }
    }

    pub fn marginal_mean(&self) -> f64 {
        match *self {
            FieldModel::IidGaussian { mean, .. } => mean,
            FieldModel::IidUniform { a, b } => 0.5 * (a + b),
            FieldModel::IidLaplace { .. } | FieldModel::MovingAverageGaussian(_) => 0.0,
        }
    }

    pub fn marginal_variance(&self) -> f64 {
        match self {
            FieldModel::IidGaussian { sd, .. } => sd * sd,
            FieldModel::IidUniform { a, b } => (b - a).powi(2) / 12.0,
            FieldModel::IidLaplace { scale } => 2.0 * scale * scale,
            FieldModel::MovingAverageGaussian(ma) => ma.sd * ma.sd * ma.coefficients.iter().map(|a| a * a).sum::<f64>(),
        }
    }

    /// Exact marginal density `f(x)`.
    pub fn marginal_density(&self, x: f64) -> f64 {
        match *self {
            FieldModel::IidUniform { a, b } => {
                if (a..=b).contains(&x) {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            FieldModel::IidLaplace { scale } => 0.5 / scale * (-x.abs() / scale).exp(),
            _ => {
                let sd = self.gaussian_sd().expect("gaussian variant");
                normal_pdf((x - self.marginal_mean()) / sd) / sd
            }
        }
    }

    pub fn marginal_cdf(&self, x: f64) -> f64 {
        match *self {
            FieldModel::IidUniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            FieldModel::IidLaplace { scale } => {
                if x < 0.0 {
                    0.5 * (x / scale).exp()
                } else {
                    1.0 - 0.5 * (-x / scale).exp()
                }
            }
            _ => {
                let sd = self.gaussian_sd().expect("gaussian variant");
                normal_cdf((x - self.marginal_mean()) / sd)
            }
        }
    }

    /// Closed support of the marginal.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            FieldModel::IidUniform { a, b } => (a, b),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Points where `f` is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            FieldModel::IidUniform { a, b } => vec![a, b],
            FieldModel::IidLaplace { .. } => vec![0.0],
            _ => Vec::new(),
        }
    }

    /// Dependence radius `M`: sites farther apart than `M` are independent.
    pub fn dependence_radius(&self) -> u64 {
        match self {
            FieldModel::MovingAverageGaussian(ma) => ma.window.diameter(),
            _ => 0,
        }
    }

    /// `Cov(X_0, X_lag)`.
    pub fn covariance(&self, lag: &[i64]) -> f64 {
        match self {
            FieldModel::MovingAverageGaussian(ma) => ma.covariance(lag),
            _ => {
                if lag.iter().all(|&l| l == 0) {
                    self.marginal_variance()
                } else {
                    0.0
                }
            }
        }
    }

    /// Upper-bound mixing sequence: `1/4` up to the dependence radius, zero beyond.
    pub fn certified_mixing(&self) -> MixingSequence {
        MixingSequence::finite(vec![0.25; self.dependence_radius() as usize]).expect("valid certificate")
    }

    fn required_bytes(&self, window: &LatticeWindow) -> u128 {
        let n = window.n as u128;
        let sites = n.pow(window.d as u32);
        let innovations = match self {
            FieldModel::MovingAverageGaussian(ma) => ma
                .window
                .lower
                .iter()
                .zip(&ma.window.upper)
                .map(|(l, u)| n + (u - l) as u128)
                .product(),
            _ => 0,
        };
        8 * (sites + innovations)
    }

    #[inline]
    fn iid_value(&self, rng: &CounterRng, k: u64) -> f64 {
        let u = rng.uniform_at(k);
        match *self {
            FieldModel::IidGaussian { mean, sd } => mean + sd * normal_quantile(u),
            FieldModel::IidUniform { a, b } => a + (b - a) * u,
            FieldModel::IidLaplace { scale } => {
                if u < 0.5 {
                    scale * (2.0 * u).ln()
                } else {
                    -scale * (2.0 * (1.0 - u)).ln()
                }
            }
            FieldModel::MovingAverageGaussian(_) => unreachable!(),
        }
    }
}

/// A realization `(X_i)` on a window, stored in lexicographic site order.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    window: LatticeWindow,
    values: Vec<f64>,
    seed: u64,
    model: FieldModel,
}

impl FieldSample {
    /// Wraps externally produced values (lexicographic order).
    pub fn from_values(model: FieldModel, window: LatticeWindow, seed: u64, values: Vec<f64>) -> Result<Self> {
        window.check()?;
        if values.len() != window.site_count() {
            return Err(Error::Dimension {
                expected: window.site_count(),
                got: values.len(),
            });
        }
        Ok(FieldSample {
            window,
            values,
            seed,
            model,
        })
    }

    pub fn window(&self) -> &LatticeWindow {
        &self.window
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn model(&self) -> &FieldModel {
        &self.model
    }

    pub fn value_at(&self, site: &[i64]) -> Option<f64> {
        self.window.index_of(site).map(|k| self.values[k])
    }

    /// CSV with columns `i1..id,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let mut header: Vec<String> = (1..=self.window.d).map(|s| format!("i{s}")).collect();
        header.push("value".into());
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(self.window.d + 1);
        for (k, v) in self.values.iter().enumerate() {
            row.clear();
            row.extend(self.window.site(k).iter().map(|c| c.to_string()));
            row.push(format!("{v:?}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws a realization of `model` on `window`, deterministically from `seed`.
pub fn sample(model: &FieldModel, window: &LatticeWindow, seed: u64) -> Result<FieldSample> {
    sample_with_budget(model, window, seed, DEFAULT_MEMORY_BUDGET)
}

pub fn sample_with_budget(model: &FieldModel, window: &LatticeWindow, seed: u64, budget_bytes: u128) -> Result<FieldSample> {
    window.check()?;
    let required = model.required_bytes(window);
    if required > budget_bytes {
        return Err(Error::Capacity {
            required_bytes: required,
            budget_bytes,
        });
    }
    let rng = CounterRng::new(seed);
    let count = window.site_count();
    let mut values = vec![0.0; count];
    match model {
        FieldModel::MovingAverageGaussian(ma) => {
            if ma.window.dim() != window.d {
                return Err(Error::Dimension {
                    expected: window.d,
                    got: ma.window.dim(),
                });
            }
            moving_average_fill(ma, window, &rng, &mut values);
        }
        _ => {
            values
                .par_iter_mut()
                .enumerate()
                .with_min_len(4096)
                .for_each(|(k, v)| *v = model.iid_value(&rng, k as u64));
        }
    }
    Ok(FieldSample {
        window: *window,
        values,
        seed,
        model: model.clone(),
    })
}

/// Innovations live on the enlarged box `{1+lower_s .. n+upper_s}`, so every
/// site sees its full window and carries the exact stationary marginal.
fn moving_average_fill(ma: &MovingAverage, window: &LatticeWindow, rng: &CounterRng, values: &mut [f64]) {
    let d = window.d;
    let n = window.n;
    let ext: Vec<usize> = (0..d)
        .map(|s| n + (ma.window.upper[s] - ma.window.lower[s]) as usize)
        .collect();
    let mut strides = vec![1usize; d];
    for s in (0..d.saturating_sub(1)).rev() {
        strides[s] = strides[s + 1] * ext[s + 1];
    }
    let total: usize = ext.iter().product();
    let mut eps = vec![0.0; total];
    eps.par_iter_mut()
        .enumerate()
        .with_min_len(4096)
        .for_each(|(k, e)| *e = ma.sd * rng.normal_at(k as u64));

    let taps: Vec<(usize, f64)> = ma
        .offsets
        .iter()
        .zip(&ma.coefficients)
        .filter(|(_, &a)| a != 0.0)
        .map(|(j, &a)| {
            let off = (0..d).map(|s| (j[s] - ma.window.lower[s]) as usize * strides[s]).sum();
            (off, a)
        })
        .collect();

    values
        .par_iter_mut()
        .enumerate()
        .with_min_len(1024)
        .for_each(|(k, v)| {
            let mut rem = k;
            let mut base = 0usize;
            for s in (0..d).rev() {
                base += (rem % n) * strides[s];
                rem /= n;
            }
            *v = taps.iter().map(|&(off, a)| a * eps[base + off]).sum();
        });
}

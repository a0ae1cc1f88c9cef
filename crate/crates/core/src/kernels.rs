//! Compactly supported probability kernels and their integral functionals.
//!
//! Built-in families are stored in standard form on `[-1, 1]` and rescaled by
//! the support radius, `K_r(u) = K_1(u / r) / r`, so they integrate to one for
//! every radius. Custom kernels are polynomials on an explicit interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{normal_cdf, normal_pdf};
use crate::quadrature::{self, Simpson};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Uniform,
    Triangular,
    Epanechnikov,
    Quartic,
    /// Standard normal density truncated to `[-r, r]` and renormalized.
    TruncatedGaussian,
    /// Full normal density with scale `r`. Representable so that it can be
    /// reported as failing validation; never admitted as a `Kernel`.
    Gaussian,
    /// `sum_k c_k u^k` on `support` (defaults to `[-r, r]`).
    Polynomial,
}

/// Serializable kernel description, as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<[f64; 2]>,
}

impl KernelSpec {
    pub fn builtin(family: KernelFamily) -> Self {
        KernelSpec {
            family,
            radius: None,
            coefficients: None,
            support: None,
        }
    }

    pub fn with_radius(family: KernelFamily, radius: f64) -> Self {
        KernelSpec {
            radius: Some(radius),
            ..KernelSpec::builtin(family)
        }
    }

    /// Polynomial kernel on `[lower, upper]` with coefficients in increasing degree.
    pub fn polynomial(coefficients: Vec<f64>, lower: f64, upper: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Polynomial,
            radius: None,
            coefficients: Some(coefficients),
            support: Some([lower, upper]),
        }
    }
}

/// Pass/fail outcome of one admission criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Criterion {
    pub passed: bool,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// `value` is the total mass.
    pub normalized: Criterion,
    /// `value` is the minimum over the check grid.
    pub nonnegative: Criterion,
    /// `value` is the support radius (infinite when not compact).
    pub compact_support: Criterion,
    /// `value` is the integral of `K^2`.
    pub square_integrable: Criterion,
    pub messages: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.normalized.passed
            && self.nonnegative.passed
            && self.compact_support.passed
            && self.square_integrable.passed
    }
}

const MASS_TOLERANCE: f64 = 1e-8;
const GRID_POINTS: usize = 10_001;

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Uniform,
    Triangular,
    Epanechnikov,
    Quartic,
    TruncatedGaussian { normalizer: f64 },
    Gaussian,
    Polynomial { coefficients: Vec<f64> },
}

/// Unvalidated evaluator shared by `validate` and `Kernel`.
#[derive(Debug, Clone, PartialEq)]
struct Resolved {
    shape: Shape,
    radius: f64,
    lower: f64,
    upper: f64,
}

impl Resolved {
    fn from_spec(spec: &KernelSpec) -> Result<Self> {
        let radius_of = |default: f64| -> Result<f64> {
            let r = spec.radius.unwrap_or(default);
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::config("kernel.radius", format!("radius must be positive and finite, got {r}")));
            }
            Ok(r)
        };
        if spec.family != KernelFamily::Polynomial && (spec.coefficients.is_some() || spec.support.is_some()) {
            return Err(Error::config(
                "kernel",
                "coefficients and support apply only to the polynomial family",
            ));
        }
        let symmetric = |shape: Shape, r: f64| Resolved {
            shape,
            radius: r,
            lower: -r,
            upper: r,
        };
        Ok(match spec.family {
            KernelFamily::Uniform => symmetric(Shape::Uniform, radius_of(0.5)?),
            KernelFamily::Triangular => symmetric(Shape::Triangular, radius_of(1.0)?),
            KernelFamily::Epanechnikov => symmetric(Shape::Epanechnikov, radius_of(1.0)?),
            KernelFamily::Quartic => symmetric(Shape::Quartic, radius_of(1.0)?),
            KernelFamily::TruncatedGaussian => {
                let r = radius_of(3.0)?;
                symmetric(
                    Shape::TruncatedGaussian {
                        normalizer: 2.0 * normal_cdf(r) - 1.0,
                    },
                    r,
                )
            }
            KernelFamily::Gaussian => Resolved {
                shape: Shape::Gaussian,
                radius: radius_of(1.0)?,
                lower: f64::NEG_INFINITY,
                upper: f64::INFINITY,
            },
            KernelFamily::Polynomial => {
                let coefficients = spec
                    .coefficients
                    .clone()
                    .filter(|c| !c.is_empty())
                    .ok_or_else(|| Error::config("kernel.coefficients", "polynomial kernel needs at least one coefficient"))?;
                if coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::config("kernel.coefficients", "coefficients must be finite"));
                }
                let (lower, upper) = match (spec.support, spec.radius) {
                    (Some([lo, hi]), _) => (lo, hi),
                    (None, Some(r)) => (-r, r),
                    (None, None) => {
                        return Err(Error::config("kernel", "polynomial kernel needs a radius or a support interval"))
                    }
                };
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return Err(Error::config("kernel.support", format!("invalid support [{lower}, {upper}]")));
                }
                let hull = lower.abs().max(upper.abs());
                let radius = match spec.radius {
                    Some(r) if r < hull => {
                        return Err(Error::config(
                            "kernel.radius",
                            format!("support [{lower}, {upper}] exceeds radius {r}"),
                        ))
                    }
                    Some(r) => r,
                    None => hull,
                };
                Resolved {
                    shape: Shape::Polynomial { coefficients },
                    radius,
                    lower,
                    upper,
                }
            }
        })
    }

    #[inline]
    fn eval(&self, u: f64) -> f64 {
        if !(u >= self.lower && u <= self.upper) {
            return 0.0;
        }
        let r = self.radius;
        let t = u / r;
        match &self.shape {
            Shape::Uniform => 0.5 / r,
            Shape::Triangular => (1.0 - t.abs()) / r,
            Shape::Epanechnikov => 0.75 * (1.0 - t * t) / r,
            Shape::Quartic => {
                let s = 1.0 - t * t;
                0.9375 * s * s / r
            }
            Shape::TruncatedGaussian { normalizer } => normal_pdf(u) / normalizer,
            Shape::Gaussian => normal_pdf(t) / r,
            Shape::Polynomial { coefficients } => coefficients.iter().rev().fold(0.0, |acc, &c| acc * u + c),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self.shape {
            Shape::Triangular => vec![0.0],
            _ => Vec::new(),
        }
    }

    /// Integration range: the support, or a ±40 scale window for the full Gaussian.
    fn range(&self) -> (f64, f64) {
        match self.shape {
            Shape::Gaussian => (-40.0 * self.radius, 40.0 * self.radius),
            _ => (self.lower, self.upper),
        }
    }

    fn integrate<F: Fn(f64) -> f64>(&self, g: F, simpson: &Simpson) -> Result<f64> {
        let (a, b) = self.range();
        let mut cuts = self.breakpoints();
        if matches!(self.shape, Shape::Gaussian) {
            cuts.extend([-self.radius * 5.0, 0.0, self.radius * 5.0]);
        }
        simpson.integrate_pieces(|u| g(u), a, b, &cuts)
    }
}

/// Validates a kernel description against the admission criteria: unit mass,
/// nonnegativity on a dense grid, compact support, finite `∫K²`.
pub fn validate(spec: &KernelSpec) -> Result<ValidationReport> {
    let resolved = Resolved::from_spec(spec)?;
    let simpson = Simpson::default();
    let mut messages = Vec::new();

    let mass = resolved.integrate(|u| resolved.eval(u), &simpson)?;
    let normalized = Criterion {
        passed: (mass - 1.0).abs() <= MASS_TOLERANCE,
        value: mass,
    };
    if !normalized.passed {
        messages.push(format!("kernel mass is {mass}, expected 1"));
    }

    let (a, b) = resolved.range();
    let step = (b - a) / (GRID_POINTS - 1) as f64;
    let min = (0..GRID_POINTS)
        .map(|i| resolved.eval(if i + 1 == GRID_POINTS { b } else { a + i as f64 * step }))
        .fold(f64::INFINITY, f64::min);
    let nonnegative = Criterion {
        passed: min >= 0.0,
        value: min,
    };
    if !nonnegative.passed {
        messages.push(format!("kernel takes negative value {min}"));
    }

    let compact = resolved.lower.is_finite() && resolved.upper.is_finite();
    let compact_support = Criterion {
        passed: compact,
        value: if compact { resolved.radius } else { f64::INFINITY },
    };
    if !compact {
        messages.push("kernel support is not compact; use truncated_gaussian instead".to_string());
    }

    let sq = resolved.integrate(|u| resolved.eval(u).powi(2), &simpson)?;
    let square_integrable = Criterion {
        passed: sq.is_finite(),
        value: sq,
    };

    Ok(ValidationReport {
        normalized,
        nonnegative,
        compact_support,
        square_integrable,
        messages,
    })
}

/// A validated, compactly supported probability kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    spec: KernelSpec,
    resolved: Resolved,
    sup_norm: f64,
}

impl Kernel {
    /// Builds a kernel, rejecting any description that fails `validate`.
    pub fn new(spec: KernelSpec) -> Result<Self> {
        let report = validate(&spec)?;
        if !report.passed() {
            return Err(Error::config("kernel", report.messages.join("; ")));
        }
        let resolved = Resolved::from_spec(&spec)?;
        let r = resolved.radius;
        let sup_norm = match &resolved.shape {
            Shape::Uniform => 0.5 / r,
            Shape::Triangular => 1.0 / r,
            Shape::Epanechnikov => 0.75 / r,
            Shape::Quartic => 0.9375 / r,
            Shape::TruncatedGaussian { normalizer } => normal_pdf(0.0) / normalizer,
            Shape::Gaussian => unreachable!("rejected by validate"),
            // grid estimate; polynomials are smooth, refine near the grid maximum
            Shape::Polynomial { .. } => {
                let (a, b) = (resolved.lower, resolved.upper);
                let step = (b - a) / (GRID_POINTS - 1) as f64;
                let mut best = (resolved.eval(b), b);
                for i in 0..GRID_POINTS - 1 {
                    let u = a + i as f64 * step;
                    let v = resolved.eval(u);
                    if v > best.0 {
                        best = (v, u);
                    }
                }
                let (lo, hi) = ((best.1 - step).max(a), (best.1 + step).min(b));
                let fine = (hi - lo) / 1000.0;
                (0..=1000).map(|i| resolved.eval(lo + i as f64 * fine)).fold(best.0, f64::max)
            }
        };
        Ok(Kernel {
            spec,
            resolved,
            sup_norm,
        })
    }

    pub fn uniform() -> Self {
        Kernel::new(KernelSpec::builtin(KernelFamily::Uniform)).expect("builtin kernel")
    }

    pub fn triangular() -> Self {
        Kernel::new(KernelSpec::builtin(KernelFamily::Triangular)).expect("builtin kernel")
    }

    pub fn epanechnikov() -> Self {
        Kernel::new(KernelSpec::builtin(KernelFamily::Epanechnikov)).expect("builtin kernel")
    }

    pub fn quartic() -> Self {
        Kernel::new(KernelSpec::builtin(KernelFamily::Quartic)).expect("builtin kernel")
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn family(&self) -> KernelFamily {
        self.spec.family
    }

    /// Radius `r` with `K(u) = 0` for `|u| > r`.
    pub fn radius(&self) -> f64 {
        self.resolved.radius
    }

    /// Actual support interval (narrower than `[-r, r]` for one-sided polynomials).
    pub fn support(&self) -> (f64, f64) {
        (self.resolved.lower, self.resolved.upper)
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// Interior points where `K` is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.resolved.breakpoints()
    }

    #[inline]
    pub fn evaluate(&self, u: f64) -> f64 {
        self.resolved.eval(u)
    }

    /// `∫ g(u) du` over the kernel support, split at the kernel's breakpoints
    /// and at any extra points supplied.
    pub fn integrate_over_support<F: Fn(f64) -> f64>(&self, g: F, extra_breakpoints: &[f64], simpson: &Simpson) -> Result<f64> {
        let mut cuts = self.breakpoints();
        cuts.extend_from_slice(extra_breakpoints);
        simpson.integrate_pieces(g, self.resolved.lower, self.resolved.upper, &cuts)
    }

    /// `σ² = ∫ K²(u) du`.
    pub fn squared_integral(&self) -> Result<f64> {
        self.squared_integral_with(&Simpson::default())
    }

    pub fn squared_integral_with(&self, simpson: &Simpson) -> Result<f64> {
        self.integrate_over_support(|u| self.evaluate(u).powi(2), &[], simpson)
    }

    /// `∫ |u| K(u) du`.
    pub fn first_abs_moment(&self) -> Result<f64> {
        self.integrate_over_support(|u| u.abs() * self.evaluate(u), &[0.0], &Simpson::default())
    }

    pub fn mass(&self) -> Result<f64> {
        quadrature::integrate(|u| self.evaluate(u), self.resolved.lower, self.resolved.upper, &self.breakpoints())
    }

    pub fn validate(&self) -> ValidationReport {
        validate(&self.spec).expect("kernel was validated at construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(family: KernelFamily) -> KernelSpec {
        KernelSpec::builtin(family)
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(Kernel::uniform().evaluate(0.0), 1.0);
        assert_eq!(Kernel::epanechnikov().evaluate(2.0), 0.0);
        assert_eq!(Kernel::epanechnikov().evaluate(0.0), 0.75);
    }

    #[test]
    fn closed_form_functionals() {
        // (kernel, σ², ∫|u|K) from direct integration of the standard forms
        let cases = [
            (Kernel::uniform(), 1.0, 0.25),
            (Kernel::triangular(), 2.0 / 3.0, 1.0 / 3.0),
            (Kernel::epanechnikov(), 0.6, 0.375),
            (Kernel::quartic(), 5.0 / 7.0, 5.0 / 16.0),
        ];
        for (k, sq, abs) in cases {
            assert!((k.squared_integral().unwrap() - sq).abs() < 1e-9, "{:?}", k.family());
            assert!((k.first_abs_moment().unwrap() - abs).abs() < 1e-9, "{:?}", k.family());
            assert!((k.mass().unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn radius_rescaling() {
        let k = Kernel::new(KernelSpec::with_radius(KernelFamily::Epanechnikov, 2.0)).unwrap();
        assert!((k.squared_integral().unwrap() - 0.3).abs() < 1e-9);
        assert!((k.first_abs_moment().unwrap() - 0.75).abs() < 1e-9);
        assert_eq!(k.sup_norm(), 0.375);
    }

    #[test]
    fn truncated_gaussian_closed_form() {
        let r = 2.5_f64;
        let k = Kernel::new(KernelSpec::with_radius(KernelFamily::TruncatedGaussian, r)).unwrap();
        let z = 2.0 * normal_cdf(r) - 1.0;
        let sq = (2.0 * normal_cdf(r * 2f64.sqrt()) - 1.0) / (2.0 * std::f64::consts::PI.sqrt()) / (z * z);
        let abs = 2.0 * (normal_pdf(0.0) - normal_pdf(r)) / z;
        assert!((k.squared_integral().unwrap() - sq).abs() < 1e-9);
        assert!((k.first_abs_moment().unwrap() - abs).abs() < 1e-9);
    }

    #[test]
    fn zero_outside_support() {
        let kernels = [
            Kernel::uniform(),
            Kernel::triangular(),
            Kernel::epanechnikov(),
            Kernel::quartic(),
            Kernel::new(KernelSpec::with_radius(KernelFamily::TruncatedGaussian, 2.0)).unwrap(),
            Kernel::new(KernelSpec::polynomial(vec![0.75, 0.0, -0.75], -1.0, 1.0)).unwrap(),
        ];
        for k in &kernels {
            let r = k.radius();
            for eps in [1e-12, 1.0, 1e6] {
                assert_eq!(k.evaluate(r + eps), 0.0);
                assert_eq!(k.evaluate(-r - eps), 0.0);
            }
            assert_eq!(k.evaluate(f64::NAN), 0.0);
        }
    }

    #[test]
    fn builtins_validate() {
        for f in [
            KernelFamily::Uniform,
            KernelFamily::Triangular,
            KernelFamily::Epanechnikov,
            KernelFamily::Quartic,
            KernelFamily::TruncatedGaussian,
        ] {
            assert!(validate(&spec(f)).unwrap().passed(), "{f:?}");
        }
    }

    #[test]
    fn gaussian_rejected_for_support() {
        let report = validate(&spec(KernelFamily::Gaussian)).unwrap();
        assert!(report.normalized.passed);
        assert!(!report.compact_support.passed);
        assert!(Kernel::new(spec(KernelFamily::Gaussian)).is_err());
    }

    #[test]
    fn mass_two_fails_normalization() {
        let report = validate(&KernelSpec::polynomial(vec![1.0], -1.0, 1.0)).unwrap();
        assert!(!report.normalized.passed);
        assert!((report.normalized.value - 2.0).abs() < 1e-12);
        assert!(report.nonnegative.passed);
    }

    #[test]
    fn one_sided_linear_has_half_mass() {
        let report = validate(&KernelSpec::polynomial(vec![0.0, 1.0], 0.0, 1.0)).unwrap();
        assert!(!report.normalized.passed);
        assert!((report.normalized.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn negative_polynomial_flagged() {
        // 0.5 + u on [-1, 1] has mass 1 but dips to -0.5
        let report = validate(&KernelSpec::polynomial(vec![0.5, 1.0], -1.0, 1.0)).unwrap();
        assert!(report.normalized.passed);
        assert!(!report.nonnegative.passed);
    }

    #[test]
    fn symmetric_custom_kernel_has_zero_mean() {
        // (15/16)(1 - u^2)^2 expanded
        let k = Kernel::new(KernelSpec::polynomial(vec![0.9375, 0.0, -1.875, 0.0, 0.9375], -1.0, 1.0)).unwrap();
        let mean = k.integrate_over_support(|u| u * k.evaluate(u), &[], &Simpson::default()).unwrap();
        assert!(mean.abs() < 1e-12);
        assert!((k.squared_integral().unwrap() - 5.0 / 7.0).abs() < 1e-9);
        assert!((k.sup_norm() - 0.9375).abs() < 1e-12);
    }

    #[test]
    fn squared_integral_stable_under_refinement() {
        for k in [Kernel::triangular(), Kernel::epanechnikov(), Kernel::quartic()] {
            let coarse = k.squared_integral().unwrap();
            let fine = k.squared_integral_with(&Simpson::with_tolerance(1e-13)).unwrap();
            assert!((coarse - fine).abs() < 1e-10);
        }
    }

    #[test]
    fn spec_rejects_stray_fields() {
        let err = Resolved::from_spec(&KernelSpec {
            coefficients: Some(vec![1.0]),
            ..spec(KernelFamily::Uniform)
        });
        assert!(err.is_err());
        let json = r#"{"family":"epanechnikov","radius":1.0,"bogus":1}"#;
        assert!(serde_json::from_str::<KernelSpec>(json).is_err());
    }
}

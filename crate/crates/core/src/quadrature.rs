//! Adaptive Simpson quadrature.
//!
//! All integrands in this crate are smooth on the pieces between known
//! breakpoints (kernel kinks, support edges of the marginal density), so the
//! callers split the range at those points and integrate each piece here.

use crate::error::{Error, Result};

/// Default absolute tolerance for every integral in the crate.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
/// Relative inward offset for one-sided endpoint values.
const ONE_SIDED_OFFSET: f64 = 1e-13;
/// Default recursion depth budget.
pub const DEFAULT_MAX_DEPTH: u32 = 40;

#[derive(Debug, Clone, Copy)]
pub struct Simpson {
    pub tolerance: f64,
    pub max_depth: u32,
}

impl Default for Simpson {
    fn default() -> Self {
        Simpson {
            tolerance: DEFAULT_TOLERANCE,
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

impl Simpson {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Simpson {
            tolerance,
            ..Simpson::default()
        }
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        if a > b {
            return self.integrate(f, b, a).map(|v| -v);
        }
        let (fa, fb) = (f(a), f(b));
        self.integrate_from(&f, a, b, fa, fb)
    }

    fn integrate_from<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64, fa: f64, fb: f64) -> Result<f64> {
        let m = 0.5 * (a + b);
        let fm = f(m);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        let mut failed = 0usize;
        let value = self.recurse(f, a, b, fa, fm, fb, whole, self.tolerance, 0, &mut failed);
        if failed > 0 {
            return Err(Error::Quadrature {
                lower: a,
                upper: b,
                max_depth: self.max_depth,
                failed_segments: failed,
            });
        }
        Ok(value)
    }

    /// Integrates `f` over `[a, b]`, splitting at every breakpoint strictly inside.
    /// Piece endpoints are sampled just inside the piece, so a jump located
    /// exactly at a breakpoint does not stall the refinement.
    pub fn integrate_pieces<F: Fn(f64) -> f64>(
        &self,
        f: F,
        a: f64,
        b: f64,
        breakpoints: &[f64],
    ) -> Result<f64> {
        if a > b {
            return self.integrate_pieces(f, b, a, breakpoints).map(|v| -v);
        }
        let mut cuts: Vec<f64> = breakpoints
            .iter()
            .copied()
            .filter(|&p| p.is_finite() && p > a && p < b)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut edges = Vec::with_capacity(cuts.len() + 2);
        edges.push(a);
        edges.extend(cuts);
        edges.push(b);
        // Tolerance is shared across pieces so the total error stays within budget.
        let piece = Simpson {
            tolerance: self.tolerance / (edges.len() - 1) as f64,
            max_depth: self.max_depth,
        };
        let mut total = 0.0;
        for w in edges.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let h = ONE_SIDED_OFFSET * (hi - lo);
            total += piece.integrate_from(&f, lo, hi, f(lo + h), f(hi - h))?;
        }
        Ok(total)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        &self,
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
        failed: &mut usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        if depth >= self.max_depth {
            *failed += 1;
            return left + right + delta / 15.0;
        }
        self.recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, failed)
            + self.recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, failed)
    }
}

/// Integrates with the default tolerance and depth.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breakpoints: &[f64]) -> Result<f64> {
    Simpson::default().integrate_pieces(f, a, b, breakpoints)
}

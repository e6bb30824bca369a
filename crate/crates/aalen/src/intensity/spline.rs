//! Clamped B-spline bases on a bounded interval.
//!
//! A basis of order `q` (piecewise polynomials of degree `q - 1`) on `K`
//! equal subintervals has dimension `J = K + q - 1`.  The knot vector is
//! clamped (endpoint multiplicity `q`) so the basis sums to one everywhere
//! on the domain.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::Interval;
use crate::error::{AalenError, Result};
use crate::quad;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SplineBasisRepr", into = "SplineBasisRepr")]
pub struct SplineBasis {
    order: usize,
    knots: Vec<f64>,
    /// Stable identity shared by clones; lets evaluators memoize
    /// per-basis tables without hashing the knot vector.
    token: Arc<()>,
}

#[derive(Serialize, Deserialize)]
struct SplineBasisRepr {
    order: usize,
    knots: Vec<f64>,
}

impl PartialEq for SplineBasis {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order && self.knots == other.knots
    }
}

impl TryFrom<SplineBasisRepr> for SplineBasis {
    type Error = AalenError;
    fn try_from(r: SplineBasisRepr) -> Result<Self> {
        SplineBasis::from_knots(r.order, r.knots)
    }
}

impl From<SplineBasis> for SplineBasisRepr {
    fn from(b: SplineBasis) -> Self {
        SplineBasisRepr {
            order: b.order,
            knots: b.knots,
        }
    }
}

impl SplineBasis {
    /// Basis of order `q` on `[lo, hi]` split into `segments` equal pieces.
    pub fn uniform(order: usize, segments: usize, lo: f64, hi: f64) -> Result<Self> {
        if segments == 0 {
            return Err(AalenError::invalid("spline basis needs at least one segment"));
        }
        if !(lo < hi) {
            return Err(AalenError::invalid("spline domain must have positive length"));
        }
        let mut knots = Vec::with_capacity(segments - 1 + 2 * order);
        for _ in 0..order {
            knots.push(lo);
        }
        for i in 1..segments {
            knots.push(lo + (hi - lo) * i as f64 / segments as f64);
        }
        for _ in 0..order {
            knots.push(hi);
        }
        SplineBasis::from_knots(order, knots)
    }

    /// Basis from an explicit clamped knot vector (endpoint multiplicity
    /// exactly `order`, non-decreasing, no interior knot repeated `order`
    /// times).
    pub fn from_knots(order: usize, knots: Vec<f64>) -> Result<Self> {
        if order == 0 {
            return Err(AalenError::invalid("spline order must be at least 1"));
        }
        if knots.len() < 2 * order {
            return Err(AalenError::invalid(format!(
                "knot vector too short for order {order}: {} knots",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(AalenError::invalid("knots must be finite"));
        }
        if knots.windows(2).any(|w| w[0] > w[1]) {
            return Err(AalenError::invalid("knots must be non-decreasing"));
        }
        let l = knots.len();
        let (lo, hi) = (knots[0], knots[l - 1]);
        if !(lo < hi) {
            return Err(AalenError::invalid("spline domain must have positive length"));
        }
        if knots[order - 1] != lo || knots[l - order] != hi {
            return Err(AalenError::invalid(
                "knot vector must be clamped: endpoint multiplicity equal to the order",
            ));
        }
        if order < l && (knots[order] == lo || knots[l - order - 1] == hi) {
            return Err(AalenError::invalid(
                "endpoint knot multiplicity exceeds the order",
            ));
        }
        Ok(SplineBasis {
            order,
            knots,
            token: Arc::new(()),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of basis functions.
    pub fn dim(&self) -> usize {
        self.knots.len() - self.order
    }

    pub fn domain(&self) -> Interval {
        Interval {
            lo: self.knots[0],
            hi: *self.knots.last().unwrap(),
        }
    }

    /// Address usable as a memoization key; shared by clones of this basis,
    /// distinct across independently constructed bases.
    pub fn identity(&self) -> usize {
        Arc::as_ptr(&self.token) as usize
    }

    /// Distinct knots strictly inside the domain: the points where the
    /// spline is continuous but not smooth (order 1: jump points).
    pub fn interior_knots(&self) -> Vec<f64> {
        let d = self.domain();
        let mut out: Vec<f64> = self
            .knots
            .iter()
            .copied()
            .filter(|&k| k > d.lo && k < d.hi)
            .collect();
        out.dedup();
        out
    }

    /// All basis function values at `x` as a dense vector of length
    /// [`dim`](Self::dim).  Zero vector outside the domain.
    pub fn eval_all(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }

    /// As [`eval_all`](Self::eval_all), writing into a caller buffer of
    /// length `dim()`.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        out.fill(0.0);
        let d = self.domain();
        if x < d.lo || x > d.hi {
            return;
        }
        let span = self.find_span(x);
        let p = self.order - 1;
        // Cox-de Boor triangle for the q non-vanishing functions at x
        // (indices span-p ..= span).
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let den = right[r + 1] + left[j - r];
                let temp = if den == 0.0 { 0.0 } else { n[r] / den };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        for (r, &v) in n.iter().enumerate() {
            out[span - p + r] = v;
        }
    }

    /// Dot product `coeffs . B(x)` without allocating.
    pub fn eval_dot(&self, x: f64, coeffs: &[f64]) -> f64 {
        debug_assert_eq!(coeffs.len(), self.dim());
        let d = self.domain();
        if x < d.lo || x > d.hi {
            return 0.0;
        }
        let span = self.find_span(x);
        let p = self.order - 1;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let den = right[r + 1] + left[j - r];
                let temp = if den == 0.0 { 0.0 } else { n[r] / den };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        let mut acc = 0.0;
        for (r, &v) in n.iter().enumerate() {
            acc += coeffs[span - p + r] * v;
        }
        acc
    }

    /// Index of the knot span containing `x` (rightmost span at the upper
    /// endpoint).
    fn find_span(&self, x: f64) -> usize {
        let p = self.order - 1;
        let dim = self.dim();
        let i = self.knots.partition_point(|&k| k <= x);
        i.saturating_sub(1).clamp(p, dim - 1)
    }
}

/// Log of the normalizing constant `c(theta) = log \int exp(theta . B(t)) dt`
/// over the basis domain.
///
/// Samplers parametrized by an explicit scale never need this quantity; each
/// call is counted in [`super::normalizer_audit`] so tests can assert it
/// stays off sampler hot paths.
pub fn log_normalizer(basis: &SplineBasis, coeffs: &[f64]) -> f64 {
    super::normalizer_audit::bump();
    let d = basis.domain();
    let pts = quad::piece_points(d.lo, d.hi, basis.interior_knots());
    quad::integrate_pieces(|t| basis.eval_dot(t, coeffs).exp(), &pts).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dimension_rule() {
        for (q, k) in [(1usize, 2usize), (1, 8), (2, 3), (4, 8), (3, 1)] {
            let b = SplineBasis::uniform(q, k, 0.0, 1.0).unwrap();
            assert_eq!(b.dim(), k + q - 1, "q={q} k={k}");
        }
    }

    #[test]
    fn order_one_is_histogram_basis() {
        let b = SplineBasis::uniform(1, 2, 0.0, 1.0).unwrap();
        assert_eq!(b.dim(), 2);
        assert_eq!(b.eval_all(0.25), vec![1.0, 0.0]);
        assert_eq!(b.eval_all(0.75), vec![0.0, 1.0]);
        // Right-continuous at the interior knot, clamped at the end.
        assert_eq!(b.eval_all(0.5), vec![0.0, 1.0]);
        assert_eq!(b.eval_all(1.0), vec![0.0, 1.0]);
        assert_eq!(b.eval_all(1.5), vec![0.0, 0.0]);
    }

    #[test]
    fn partition_of_unity() {
        for (q, k) in [(1usize, 4usize), (2, 5), (3, 4), (4, 7)] {
            let b = SplineBasis::uniform(q, k, 0.0, 1.0).unwrap();
            for i in 0..=200 {
                let x = i as f64 / 200.0;
                let sum: f64 = b.eval_all(x).iter().sum();
                assert_relative_eq!(sum, 1.0, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn values_are_nonnegative_with_local_support() {
        let b = SplineBasis::uniform(3, 6, 0.0, 1.0).unwrap();
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            let vals = b.eval_all(x);
            assert!(vals.iter().all(|&v| v >= 0.0));
            // Order q: at most q non-zero values at any point.
            assert!(vals.iter().filter(|&&v| v > 0.0).count() <= 3);
        }
    }

    #[test]
    fn quadratic_on_one_segment_is_bernstein() {
        // Order 3, one segment: Bernstein polynomials of degree 2.
        let b = SplineBasis::uniform(3, 1, 0.0, 1.0).unwrap();
        assert_eq!(b.dim(), 3);
        let x = 0.3;
        let vals = b.eval_all(x);
        assert_relative_eq!(vals[0], (1.0 - x) * (1.0 - x), max_relative = 1e-14);
        assert_relative_eq!(vals[1], 2.0 * x * (1.0 - x), max_relative = 1e-14);
        assert_relative_eq!(vals[2], x * x, max_relative = 1e-14);
    }

    #[test]
    fn eval_dot_matches_dense_eval() {
        let b = SplineBasis::uniform(4, 8, 0.0, 1.0).unwrap();
        let coeffs: Vec<f64> = (0..b.dim()).map(|j| (j as f64 * 0.7).sin()).collect();
        for i in 0..=50 {
            let x = i as f64 / 50.0;
            let dense: f64 = b
                .eval_all(x)
                .iter()
                .zip(&coeffs)
                .map(|(v, c)| v * c)
                .sum();
            assert_relative_eq!(b.eval_dot(x, &coeffs), dense, epsilon = 1e-14);
        }
    }

    #[test]
    fn normalizer_closed_form_for_histogram_basis() {
        // Order 1 on {0, 1/2, 1}: c(theta) = log(e^{a}/2 + e^{b}/2).
        let b = SplineBasis::uniform(1, 2, 0.0, 1.0).unwrap();
        let (a, t2) = (0.4, -1.1);
        let c = log_normalizer(&b, &[a, t2]);
        let exact = (0.5 * f64::exp(a) + 0.5 * f64::exp(t2)).ln();
        assert_relative_eq!(c, exact, max_relative = 1e-13);
    }

    #[test]
    fn identity_is_shared_by_clones_only() {
        let b = SplineBasis::uniform(2, 4, 0.0, 1.0).unwrap();
        let c = b.clone();
        let d = SplineBasis::uniform(2, 4, 0.0, 1.0).unwrap();
        assert_eq!(b.identity(), c.identity());
        assert_ne!(b.identity(), d.identity());
        assert_eq!(b, d);
    }

    #[test]
    fn rejects_unclamped_knots() {
        assert!(SplineBasis::from_knots(2, vec![0.0, 0.5, 1.0]).is_err());
        assert!(SplineBasis::from_knots(1, vec![0.0, 0.0, 1.0]).is_err());
        assert!(SplineBasis::from_knots(2, vec![0.0, 0.0, 1.0, 0.9]).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let b = SplineBasis::uniform(3, 5, 0.0, 1.0).unwrap();
        let txt = serde_json::to_string(&b).unwrap();
        let back: SplineBasis = serde_json::from_str(&txt).unwrap();
        assert_eq!(b, back);
    }
}

//! Right-continuous step functions on a bounded interval.
//!
//! A [`StepFunction`] holds piece boundaries `b_0 < b_1 < ... < b_m` and
//! values `v_0, ..., v_{m-1}`, taking value `v_i` on `[b_i, b_{i+1})` and
//! `v_{m-1}` at the right endpoint.  Exposure processes are represented
//! exactly in this form, so integrals of `Y_t` against smooth factors reduce
//! to per-piece quadrature with no time-discretization error.

use serde::{Deserialize, Serialize};

use crate::error::{AalenError, Result};
use crate::quad;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    /// Build from boundaries (strictly increasing, length `m + 1`) and
    /// per-piece values (length `m`).
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.len() < 2 || values.len() + 1 != breaks.len() {
            return Err(AalenError::invalid(format!(
                "step function needs m+1 boundaries for m values, got {} and {}",
                breaks.len(),
                values.len()
            )));
        }
        for w in breaks.windows(2) {
            if !(w[0] < w[1]) {
                return Err(AalenError::invalid(format!(
                    "step boundaries must be strictly increasing, got {} >= {}",
                    w[0], w[1]
                )));
            }
        }
        if breaks.iter().chain(values.iter()).any(|x| !x.is_finite()) {
            return Err(AalenError::invalid("step function entries must be finite"));
        }
        Ok(StepFunction { breaks, values })
    }

    /// Constant value on `[lo, hi]`.
    pub fn constant(lo: f64, hi: f64, value: f64) -> Result<Self> {
        StepFunction::new(vec![lo, hi], vec![value])
    }

    pub fn start(&self) -> f64 {
        self.breaks[0]
    }

    pub fn end(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Interior breakpoints (excluding the two endpoints).
    pub fn interior_breaks(&self) -> &[f64] {
        &self.breaks[1..self.breaks.len() - 1]
    }

    /// Value at `t`; outside `[start, end]` the function is zero.
    pub fn value_at(&self, t: f64) -> f64 {
        if t < self.start() || t > self.end() {
            return 0.0;
        }
        if t >= self.end() {
            return *self.values.last().unwrap();
        }
        // Largest i with breaks[i] <= t.
        let i = self.breaks.partition_point(|&b| b <= t) - 1;
        self.values[i.min(self.values.len() - 1)]
    }

    /// Left limit at `t`: the value of the piece ending at `t`, which for
    /// an at-risk or occupancy process is the count *including* whatever
    /// exits exactly at `t` (the predictable version of the process).
    /// At or before the start this is the first piece's value; beyond the
    /// end it is zero.
    pub fn value_before(&self, t: f64) -> f64 {
        if t <= self.start() {
            return self.values[0];
        }
        if t > self.end() {
            return 0.0;
        }
        // Largest i with breaks[i] < t.
        let i = self.breaks.partition_point(|&b| b < t) - 1;
        self.values[i.min(self.values.len() - 1)]
    }

    /// Iterate pieces as `(lo, hi, value)`.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breaks
            .windows(2)
            .zip(self.values.iter())
            .map(|(w, &v)| (w[0], w[1], v))
    }

    /// `\int self(t) dt` over the whole support.
    pub fn integral(&self) -> f64 {
        self.pieces().map(|(a, b, v)| v * (b - a)).sum()
    }

    /// `\int_a^b self(t) f(t) dt`, splitting each overlapped piece further
    /// at `f_breaks` (the non-smooth points of `f`) before quadrature.
    pub fn integrate_against<F: Fn(f64) -> f64>(
        &self,
        f: F,
        a: f64,
        b: f64,
        f_breaks: &[f64],
    ) -> f64 {
        let mut acc = 0.0;
        for (lo, hi, v) in self.pieces() {
            let lo = lo.max(a);
            let hi = hi.min(b);
            if hi <= lo || v == 0.0 {
                continue;
            }
            let pts = quad::piece_points(lo, hi, f_breaks.iter().copied());
            acc += v * quad::integrate_pieces(&f, &pts);
        }
        acc
    }

    /// `\int self(t) other(t) dt` over the overlap of the two supports,
    /// exactly (piece merge, no quadrature).
    pub fn product_integral(&self, other: &StepFunction) -> f64 {
        let mut acc = 0.0;
        for (lo, hi, v) in self.pieces() {
            if v == 0.0 {
                continue;
            }
            for (lo2, hi2, v2) in other.pieces() {
                let l = lo.max(lo2);
                let h = hi.min(hi2);
                if h > l {
                    acc += v * v2 * (h - l);
                }
            }
        }
        acc
    }

    /// Maximum piece value over pieces intersecting `[a, b]` with positive
    /// length (zero if the ranges do not overlap).
    pub fn sup_over(&self, a: f64, b: f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for (lo, hi, v) in self.pieces() {
            if hi.min(b) > lo.max(a) {
                best = best.max(v);
            }
        }
        if best == f64::NEG_INFINITY {
            0.0
        } else {
            best
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_step() -> StepFunction {
        StepFunction::new(vec![0.0, 0.5, 1.0], vec![2.0, 1.0]).unwrap()
    }

    #[test]
    fn validation() {
        assert!(StepFunction::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(StepFunction::new(vec![0.0, 1.0], vec![]).is_err());
        assert!(StepFunction::new(vec![0.0, 1.0], vec![f64::NAN]).is_err());
    }

    #[test]
    fn right_continuous_lookup() {
        let s = two_step();
        assert_eq!(s.value_at(0.0), 2.0);
        assert_eq!(s.value_at(0.5 - 1e-12), 2.0);
        assert_eq!(s.value_at(0.5), 1.0);
        assert_eq!(s.value_at(1.0), 1.0);
        assert_eq!(s.value_at(1.5), 0.0);
        assert_eq!(s.value_at(-0.1), 0.0);
    }

    #[test]
    fn left_limits() {
        let s = two_step();
        assert_eq!(s.value_before(0.0), 2.0);
        assert_eq!(s.value_before(0.5), 2.0);
        assert_eq!(s.value_before(0.5 + 1e-12), 1.0);
        assert_eq!(s.value_before(1.0), 1.0);
        assert_eq!(s.value_before(1.5), 0.0);
    }

    #[test]
    fn exact_integrals() {
        let s = two_step();
        assert_relative_eq!(s.integral(), 1.5);
        // \int s(t) * t dt = 2 * (0.125) + 1 * (0.5 - 0.125) = 0.625
        let got = s.integrate_against(|t| t, 0.0, 1.0, &[]);
        assert_relative_eq!(got, 0.625, max_relative = 1e-14);
    }

    #[test]
    fn integrate_against_respects_integrand_kinks() {
        let s = StepFunction::constant(0.0, 1.0, 3.0).unwrap();
        let got = s.integrate_against(|t: f64| (t - 0.25).abs(), 0.0, 1.0, &[0.25]);
        let exact = 3.0 * (0.25 * 0.25 + 0.75 * 0.75) / 2.0;
        assert_relative_eq!(got, exact, max_relative = 1e-14);
    }

    #[test]
    fn product_of_steps() {
        let s = two_step();
        let y = StepFunction::new(vec![0.25, 0.75, 2.0], vec![4.0, 0.5]).unwrap();
        // overlap [0.25,0.5): 2*4*0.25 ; [0.5,0.75): 1*4*0.25 ; [0.75,1): 1*0.5*0.25
        let exact = 2.0 + 1.0 + 0.125;
        assert_relative_eq!(s.product_integral(&y), exact, max_relative = 1e-14);
    }

    #[test]
    fn sup_over_ranges() {
        let s = two_step();
        assert_eq!(s.sup_over(0.0, 1.0), 2.0);
        assert_eq!(s.sup_over(0.6, 0.9), 1.0);
        assert_eq!(s.sup_over(2.0, 3.0), 0.0);
    }
}

//! Cosine basis on `[0, 1]`: an orthonormal system in `L^2[0, 1]` whose
//! first element is the constant function.
//!
//! `phi_1(x) = 1`, and `phi_j(x) = sqrt(2) cos((j - 1) pi x)` for `j >= 2`.
//! The system is bounded (`|phi_j| <= sqrt(2)`), smooth, and closed under
//! the reflection `x -> 1 - x` up to sign, which makes sup-norm bookkeeping
//! straightforward for log-linear intensity models.

use std::f64::consts::PI;

/// Value of the `j`-th basis function (1-based) at `x`.
pub fn eval(j: usize, x: f64) -> f64 {
    debug_assert!(j >= 1);
    if j == 1 {
        1.0
    } else {
        std::f64::consts::SQRT_2 * ((j - 1) as f64 * PI * x).cos()
    }
}

/// `sum_j coeffs[j-1] * phi_j(x)`.
pub fn eval_sum(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(i, &c)| c * eval(i + 1, x))
        .sum()
}

/// Panel boundaries that keep composite Gauss-Legendre quadrature accurate
/// for integrands built from the first `dim` basis functions: a few panels
/// per oscillation of the highest frequency present.
pub fn quad_points(dim: usize) -> Vec<f64> {
    let panels = (dim / 4).max(1);
    (0..=panels).map(|i| i as f64 / panels as f64).collect()
}

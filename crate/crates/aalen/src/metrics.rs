//! Distances, divergences, and neighborhood functionals between intensity
//! models.
//!
//! For intensities `f, g` (zero outside their domains) on the hull of their
//! supports:
//!
//! * `l1_distance`: `\int |f - g| dt`, split at breakpoints and at sign
//!   changes of `f - g` so every panel sees a smooth integrand.
//! * `hellinger`: `h` with `h^2 = \int (sqrt(f) - sqrt(g))^2 dt` (no 1/2
//!   factor) between probability densities; `h^2` lies in `[0, 2]` and
//!   satisfies `h^2 <= \|f-g\|_1 <= 2h`.
//! * `ej_moment`: `E_j(f0; f) = \int f0 |log f0 - log f|^j dt`, the
//!   higher-order log-ratio moments.
//! * `bkn_membership`: the four-clause neighborhood of a reference density
//!   (Hellinger clause damped by the sup log-ratio, `E_j` moments up to the
//!   next power of two, a polynomially-capped sup-ratio, and a sup-norm
//!   cap) whose prior mass drives posterior contraction rates.
//! * `kl_aalen`: the Kullback-Leibler divergence of the event process,
//!   `E[l_n(lambda0) - l_n(lambda)]`, computed through the exact
//!   mass/shape decomposition and cross-checkable against direct
//!   quadrature via [`kl_aalen_direct`].
//! * `kappa0`: the explicit constant turning the neighborhood radius into a
//!   KL bound, `KL <= kappa0 n v^2`.
//!
//! Divergent divergences (a candidate vanishing where the reference has
//! mass) return `+inf` rather than an error so samplers can treat such
//! states as rejectable, and quadrature uses dyadic edge refinement near
//! model support edges so integrable log/power singularities are resolved
//! well below the tolerances pinned in the tests.  Sup-type quantities are
//! exact for step-shaped families and otherwise scanned on a 4096-point
//! grid plus all breakpoints; that grid resolution is the documented
//! accuracy caveat.

use serde::{Deserialize, Serialize};

use crate::error::{AalenError, Result};
use crate::intensity::IntensityModel;
use crate::likelihood::Evaluator;
use crate::processes::{ModelEnvironment, ModelSpec};
use crate::quad;

/// `phi(x) = x - 1 - log x`: the nonnegative convex gauge of a mass ratio,
/// zero exactly at `x = 1`.
pub fn phi(x: f64) -> f64 {
    x - 1.0 - x.ln()
}

/// Panel boundaries covering the hull of both domains, split at every
/// breakpoint and domain edge of either model plus any caller extras.
fn joint_points(f: &IntensityModel, g: &IntensityModel, extra: &[f64]) -> Vec<f64> {
    let hull = f.domain().hull(&g.domain());
    let mut breaks = f.breakpoints();
    breaks.extend(g.breakpoints());
    breaks.extend([f.domain().lo, f.domain().hi, g.domain().lo, g.domain().hi]);
    breaks.extend_from_slice(extra);
    quad::piece_points(hull.lo, hull.hi, breaks)
}

/// Candidate singular abscissae: the support edges, where a model may run
/// to zero with a log or fractional-power profile.
fn singular_points(f: &IntensityModel, g: &IntensityModel) -> Vec<f64> {
    vec![f.domain().lo, f.domain().hi, g.domain().lo, g.domain().hi]
}

/// `\int |f - g| dt` over the hull of the two supports.
pub fn l1_distance(f: &IntensityModel, g: &IntensityModel) -> f64 {
    let diff = |t: f64| f.eval(t) - g.eval(t);
    let hull = f.domain().hull(&g.domain());
    let crossings = quad::sign_change_points(diff, hull.lo, hull.hi, quad::SCAN_GRID);
    let points = joint_points(f, g, &crossings);
    quad::integrate_refined(|t| diff(t).abs(), &points, &singular_points(f, g))
}

fn check_normalized(name: &str, f: &IntensityModel) -> Result<()> {
    let mass = f.mass();
    if (mass - 1.0).abs() > 1e-6 {
        return Err(AalenError::invalid(format!(
            "{name} must be a probability density; total mass is {mass}"
        )));
    }
    Ok(())
}

fn hellinger_sq_raw(f: &IntensityModel, g: &IntensityModel) -> f64 {
    let points = joint_points(f, g, &[]);
    let h2 = quad::integrate_refined(
        |t| {
            let d = f.eval(t).max(0.0).sqrt() - g.eval(t).max(0.0).sqrt();
            d * d
        },
        &points,
        &singular_points(f, g),
    );
    h2.max(0.0)
}

/// Hellinger distance `h` between two probability densities, with
/// `h^2 = \int (sqrt(f) - sqrt(g))^2 dt` in `[0, 2]`.
///
/// Errors if either input's mass is farther than `1e-6` from one.
pub fn hellinger(f: &IntensityModel, g: &IntensityModel) -> Result<f64> {
    check_normalized("first density", f)?;
    check_normalized("second density", g)?;
    Ok(hellinger_sq_raw(f, g).sqrt())
}

fn ej_moment_raw(f0: &IntensityModel, f: &IntensityModel, j: u32) -> f64 {
    let points = joint_points(f0, f, &[]);
    quad::integrate_refined(
        |t| {
            let p0 = f0.eval(t);
            if p0 <= 0.0 {
                return 0.0;
            }
            let p = f.eval(t);
            if p <= 0.0 {
                return f64::INFINITY;
            }
            p0 * (p0.ln() - p.ln()).abs().powi(j as i32)
        },
        &points,
        &singular_points(f0, f),
    )
}

/// `E_j(f0; f) = \int f0 |log f0 - log f|^j dt` for `j >= 2`.
///
/// Returns `+inf` when `f` vanishes on a region where `f0` has mass (the
/// divergence flag); errors on `j < 2` or non-normalized inputs.
pub fn ej_moment(f0: &IntensityModel, f: &IntensityModel, j: u32) -> Result<f64> {
    if j < 2 {
        return Err(AalenError::pre("ej_moment needs j >= 2"));
    }
    check_normalized("reference density", f0)?;
    check_normalized("candidate density", f)?;
    Ok(ej_moment_raw(f0, f, j))
}

/// `sup_t f0(t)/f(t)` over the hull of both supports, on the scan grid plus
/// breakpoints; `+inf` when `f` vanishes where `f0 > 0`.
pub fn sup_ratio(f0: &IntensityModel, f: &IntensityModel) -> f64 {
    let hull = f0.domain().hull(&f.domain());
    let mut extra = f0.breakpoints();
    extra.extend(f.breakpoints());
    extra.extend([f0.domain().lo, f0.domain().hi, f.domain().lo, f.domain().hi]);
    quad::sup_on_grid(
        |t| {
            let p0 = f0.eval(t);
            if p0 <= 0.0 {
                return 0.0;
            }
            let p = f.eval(t);
            if p <= 0.0 {
                return f64::INFINITY;
            }
            p0 / p
        },
        hull.lo,
        hull.hi,
        quad::SCAN_GRID,
        extra,
    )
}

/// Parameters of the contraction neighborhood: radius `v_n`, cap `h_max`
/// (bounding both the candidate's sup-norm and, as `n^h_max`, the
/// sup-ratio), moment order `k`, and sample size `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BknParams {
    pub v_n: f64,
    pub h_max: f64,
    pub k: u32,
    pub n: u64,
}

impl BknParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_n > 0.0 && self.v_n.is_finite()) {
            return Err(AalenError::invalid("v_n must be positive and finite"));
        }
        if !(self.h_max > 0.0 && self.h_max.is_finite()) {
            return Err(AalenError::invalid("h_max must be positive and finite"));
        }
        if self.k < 2 {
            return Err(AalenError::invalid("k must be >= 2"));
        }
        Ok(())
    }

    /// Smallest power of two at or above `k`; the top moment order checked.
    pub fn k2(&self) -> u32 {
        let mut p = 2u32;
        while p < self.k {
            p *= 2;
        }
        p
    }
}

/// Per-clause report of a neighborhood membership check; `holds` is the
/// conjunction of the four clause verdicts.
#[derive(Debug, Clone, Serialize)]
pub struct BknReport {
    pub holds: bool,
    /// Squared Hellinger distance and its damped cap
    /// `v_n^2 / (1 + log sup_ratio)`.
    pub hellinger_sq: f64,
    pub hellinger_cap: f64,
    pub hellinger_ok: bool,
    /// `E_j` for `j = 2..=k2`, their max, and the cap `v_n^2`.
    pub ej_values: Vec<(u32, f64)>,
    pub ej_max: f64,
    pub ej_cap: f64,
    pub ej_ok: bool,
    /// `sup f0/f` and its cap `n^h_max`.
    pub sup_ratio: f64,
    pub ratio_cap: f64,
    pub ratio_ok: bool,
    /// `sup f` and its cap `h_max`.
    pub sup_candidate: f64,
    pub sup_cap: f64,
    pub sup_ok: bool,
}

/// Membership of `f` in the neighborhood of `f0`: all four clauses must
/// hold.  Infinite attained values (a vanishing candidate) simply fail
/// their clauses; nothing errors.
pub fn bkn_membership(f0: &IntensityModel, f: &IntensityModel, p: &BknParams) -> BknReport {
    let ratio = sup_ratio(f0, f);
    let hellinger_sq = hellinger_sq_raw(f0, f);
    let hellinger_cap = p.v_n * p.v_n / (1.0 + ratio.ln().max(0.0));
    let mut ej_values = Vec::new();
    let mut ej_max = 0.0f64;
    for j in 2..=p.k2() {
        let e = ej_moment_raw(f0, f, j);
        ej_max = ej_max.max(e);
        ej_values.push((j, e));
    }
    let ej_cap = p.v_n * p.v_n;
    let ratio_cap = (p.n as f64).powf(p.h_max);
    let sup_candidate = f.sup();
    let sup_cap = p.h_max;
    let hellinger_ok = hellinger_sq <= hellinger_cap;
    let ej_ok = ej_max <= ej_cap;
    let ratio_ok = ratio <= ratio_cap;
    let sup_ok = sup_candidate <= sup_cap;
    BknReport {
        holds: hellinger_ok && ej_ok && ratio_ok && sup_ok,
        hellinger_sq,
        hellinger_cap,
        hellinger_ok,
        ej_values,
        ej_max,
        ej_cap,
        ej_ok,
        sup_ratio: ratio,
        ratio_cap,
        ratio_ok,
        sup_candidate,
        sup_cap,
        sup_ok,
    }
}

/// Integrate `f` over the environment's window, splitting at the supplied
/// breakpoints and refining near the singular abscissae.
fn integrate_over_omega<F: Fn(f64) -> f64>(
    env: &ModelEnvironment,
    f: F,
    breaks: &[f64],
    singular: &[f64],
) -> f64 {
    let mut acc = 0.0;
    for iv in env.omega.intervals() {
        let points = quad::piece_points(iv.lo, iv.hi, breaks.iter().copied());
        acc += quad::integrate_refined(&f, &points, singular);
    }
    acc
}

fn kl_breaks(lambda0: &IntensityModel, lambda: &IntensityModel, env: &ModelEnvironment) -> Vec<f64> {
    let mut breaks = lambda0.breakpoints();
    breaks.extend(lambda.breakpoints());
    breaks.extend(env.mu.breakpoints());
    breaks.extend([
        lambda0.domain().lo,
        lambda0.domain().hi,
        lambda.domain().lo,
        lambda.domain().hi,
    ]);
    breaks
}

/// Kullback-Leibler divergence of the event process,
/// `KL(lambda0; lambda) = E[l_n(lambda0) - l_n(lambda)]`, through the
/// decomposition into shape and mass parts:
///
/// ```text
/// KL = M0 [ KL(shape0; shape) + phi(M / M0) ]
/// ```
///
/// where `M0, M` are the expected event counts `\int lambda mu_n dt` and
/// the shapes are the corresponding normalized densities.  Returns `+inf`
/// when `lambda` vanishes on a region where `lambda0 mu_n` has mass.
pub fn kl_aalen(
    lambda0: &IntensityModel,
    lambda: &IntensityModel,
    env: &ModelEnvironment,
) -> f64 {
    let breaks = kl_breaks(lambda0, lambda, env);
    let singular = singular_points(lambda0, lambda);
    let m0 = integrate_over_omega(env, |t| lambda0.eval(t) * env.mu_n(t), &breaks, &singular);
    let m = integrate_over_omega(env, |t| lambda.eval(t) * env.mu_n(t), &breaks, &singular);
    if m0 <= 0.0 {
        // Degenerate reference: the divergence reduces to the candidate's
        // expected count.
        return m;
    }
    let log_mass_ratio = (m / m0).ln();
    let kl_shape = integrate_over_omega(
        env,
        |t| {
            let p0 = lambda0.eval(t);
            if p0 <= 0.0 {
                return 0.0;
            }
            let p = lambda.eval(t);
            if p <= 0.0 {
                return f64::INFINITY;
            }
            p0 * env.mu_n(t) / m0 * (p0.ln() - p.ln() + log_mass_ratio)
        },
        &breaks,
        &singular,
    );
    m0 * (kl_shape + phi(m / m0))
}

/// The same divergence by direct quadrature of
/// `\int (lambda0 log(lambda0/lambda) - lambda0 + lambda) mu_n dt`;
/// the self-consistency partner of [`kl_aalen`].
pub fn kl_aalen_direct(
    lambda0: &IntensityModel,
    lambda: &IntensityModel,
    env: &ModelEnvironment,
) -> f64 {
    let breaks = kl_breaks(lambda0, lambda, env);
    let singular = singular_points(lambda0, lambda);
    integrate_over_omega(
        env,
        |t| {
            let p0 = lambda0.eval(t);
            let p = lambda.eval(t);
            let core = if p0 <= 0.0 {
                p
            } else if p <= 0.0 {
                return f64::INFINITY;
            } else {
                p0 * (p0.ln() - p.ln()) - p0 + p
            };
            core * env.mu_n(t)
        },
        &breaks,
        &singular,
    )
}

/// The explicit neighborhood-to-KL constant:
///
/// ```text
/// kappa0 = m2^2 M0 { (4/m1)[1 + log(m2/m1)](1 + m2^2/m1^2)
///                    + m2 (2 M0 + 1)^2 / (m1^2 M0^2) }
/// ```
pub fn kappa0(m1: f64, m2: f64, m0_mass: f64) -> Result<f64> {
    if !(m1 > 0.0 && m2 >= m1 && m0_mass > 0.0) {
        return Err(AalenError::pre(
            "kappa0 needs 0 < m1 <= m2 and a positive reference mass",
        ));
    }
    let ratio = m2 / m1;
    let first = (4.0 / m1) * (1.0 + ratio.ln()) * (1.0 + ratio * ratio);
    let second = m2 * (2.0 * m0_mass + 1.0).powi(2) / (m1 * m1 * m0_mass * m0_mass);
    Ok(m2 * m2 * m0_mass * (first + second))
}

/// Checks the lower bound tying the intensity distance to its mass/shape
/// split: `\|lambda - lambda0\|_1 >= max{ (M v M0) \|shape - shape0\|_1 / 2,
/// |M - M0| }`, within `1e-9` slack.
pub fn mass_norm_inequality_check(
    lambda: &IntensityModel,
    lambda0: &IntensityModel,
) -> Result<bool> {
    let (mass, shape) = lambda.decompose()?;
    let (mass0, shape0) = lambda0.decompose()?;
    let lhs = l1_distance(lambda, lambda0);
    let shape_l1 = l1_distance(&shape, &shape0);
    let rhs = (mass.max(mass0) * shape_l1 / 2.0).max((mass - mass0).abs());
    Ok(lhs >= rhs - 1e-9)
}

/// Monte-Carlo estimate of the log-likelihood-ratio variance
/// `V_2(lambda0; lambda) = Var[l_n(lambda0) - l_n(lambda)]`.
#[derive(Debug, Clone, Serialize)]
pub struct V2Estimate {
    pub replicates: usize,
    /// Mean of the log-likelihood-ratio (a Monte-Carlo view of the KL).
    pub mean: f64,
    /// Sample variance: the `V_2` estimate.
    pub variance: f64,
    /// Standard error of `variance`, from the fourth central moment.
    pub se: f64,
}

/// Simulate `replicates` records under `spec` (whose true intensity should
/// be `lambda0`) and return the empirical variance of
/// `l_n(lambda0) - l_n(lambda)`.
pub fn v2_monte_carlo(
    lambda0: &IntensityModel,
    lambda: &IntensityModel,
    spec: &ModelSpec,
    replicates: usize,
    seed: u64,
) -> Result<V2Estimate> {
    if replicates < 100 {
        return Err(AalenError::pre("v2_monte_carlo needs at least 100 replicates"));
    }
    let mut diffs = Vec::with_capacity(replicates);
    for rep in 0..replicates {
        let record = spec.simulate(seed.wrapping_add(rep as u64))?;
        let eval = Evaluator::new(&record)?;
        diffs.push(eval.loglik(lambda0).value - eval.loglik(lambda).value);
    }
    let nf = replicates as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let variance = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (nf - 1.0);
    let m4 = diffs
        .iter()
        .map(|d| (d - mean).powi(4))
        .sum::<f64>()
        / nf;
    // Var(s^2) ~ (m4 - s^4 (n-3)/(n-1)) / n.
    let var_s2 = ((m4 - variance * variance * (nf - 3.0) / (nf - 1.0)) / nf).max(0.0);
    Ok(V2Estimate {
        replicates,
        mean,
        variance,
        se: var_s2.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::{
        IntensityModel, LogLinearModel, LogSplineModel, MixtureAtom, PiecewiseConstant,
        SplineBasis, UniformMixture,
    };
    use crate::processes::{CensoringSpec, MuTilde};
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use rand::Rng as _;

    fn unit_density() -> IntensityModel {
        IntensityModel::uniform_density(1.0).unwrap()
    }

    fn wide_density() -> IntensityModel {
        IntensityModel::uniform_density(2.0).unwrap()
    }

    /// Random model spanning every family, on domains inside [0, 2].
    fn random_model(rng: &mut crate::rng::Rng) -> IntensityModel {
        match rng.random_range(0..6) {
            0 => {
                let level = rng.random_range(0.2..3.0);
                IntensityModel::constant(level, 0.0, rng.random_range(0.5..2.0)).unwrap()
            }
            1 => {
                let peak = rng.random_range(0.5..3.0);
                IntensityModel::linear_decreasing(peak, 0.0, rng.random_range(0.5..2.0)).unwrap()
            }
            2 => {
                let pieces = rng.random_range(2..6);
                let mut breaks: Vec<f64> = (0..=pieces)
                    .map(|_| rng.random_range(0.0..2.0))
                    .collect();
                breaks.sort_by(f64::total_cmp);
                breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
                while breaks.len() < 2 {
                    breaks.push(breaks[0] + 1.0);
                }
                let values = (0..breaks.len() - 1)
                    .map(|_| rng.random_range(0.05..3.0))
                    .collect();
                IntensityModel::PiecewiseConstant(
                    PiecewiseConstant::new(breaks, values).unwrap(),
                )
            }
            3 => {
                let k = rng.random_range(1..4);
                let mut atoms: Vec<MixtureAtom> = (0..k)
                    .map(|_| MixtureAtom {
                        location: rng.random_range(0.3..2.0),
                        weight: rng.random_range(0.1..1.0),
                    })
                    .collect();
                let total: f64 = atoms.iter().map(|a| a.weight).sum();
                for a in &mut atoms {
                    a.weight /= total;
                }
                IntensityModel::UniformMixture(UniformMixture {
                    mass: rng.random_range(0.5..2.0),
                    atoms,
                })
            }
            4 => {
                let order = rng.random_range(1..4);
                let segments = rng.random_range(2..5);
                let basis = SplineBasis::uniform(order, segments, 0.0, 1.0).unwrap();
                let coeffs = (0..basis.dim())
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect();
                IntensityModel::LogSpline(
                    LogSplineModel::scaled(basis, coeffs, rng.random_range(0.5..1.5)).unwrap(),
                )
            }
            _ => {
                let dim = rng.random_range(1..5);
                let coeffs = (0..dim).map(|_| rng.random_range(-0.6..0.6)).collect();
                IntensityModel::LogLinear(
                    LogLinearModel::scaled(coeffs, rng.random_range(0.5..1.5)).unwrap(),
                )
            }
        }
    }

    fn random_density(rng: &mut crate::rng::Rng) -> IntensityModel {
        random_model(rng).decompose().unwrap().1
    }

    fn poisson_env(n: u64) -> ModelEnvironment {
        ModelSpec::Poisson {
            lambda0: IntensityModel::constant(1.0, 0.0, 1.0).unwrap(),
            n,
            horizon: 1.0,
            lambda_max: None,
        }
        .environment(0.5)
        .unwrap()
    }

    #[test]
    fn l1_between_uniform_densities() {
        // \int_0^1 |1 - 1/2| + \int_1^2 1/2 = 1.
        let got = l1_distance(&unit_density(), &wide_density());
        assert_relative_eq!(got, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn l1_is_zero_symmetric_and_triangular() {
        let mut rng = stream(41, 0);
        for _ in 0..60 {
            let f = random_model(&mut rng);
            let g = random_model(&mut rng);
            let h = random_model(&mut rng);
            assert_relative_eq!(l1_distance(&f, &f), 0.0, epsilon = 1e-12);
            let fg = l1_distance(&f, &g);
            assert_relative_eq!(fg, l1_distance(&g, &f), max_relative = 1e-10);
            let fh = l1_distance(&f, &h);
            let gh = l1_distance(&g, &h);
            assert!(fg <= fh + gh + 1e-9, "triangle violated: {fg} > {fh} + {gh}");
        }
    }

    #[test]
    fn hellinger_between_uniform_densities() {
        // h^2 = \int_0^1 (1 - sqrt(1/2))^2 + \int_1^2 1/2 = 2 - sqrt 2.
        let h = hellinger(&unit_density(), &wide_density()).unwrap();
        assert_relative_eq!(h * h, 2.0 - 2.0f64.sqrt(), max_relative = 1e-10);
        let back = hellinger(&wide_density(), &unit_density()).unwrap();
        assert_relative_eq!(h, back, max_relative = 1e-12);
        assert_relative_eq!(
            hellinger(&unit_density(), &unit_density()).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn hellinger_rejects_unnormalized_input() {
        let not_density = IntensityModel::constant(2.0, 0.0, 1.0).unwrap();
        assert!(hellinger(&not_density, &unit_density()).is_err());
    }

    #[test]
    fn hellinger_l1_sandwich_on_random_densities() {
        // h^2 <= \|f-g\|_1 <= 2h for all density pairs.
        let mut rng = stream(42, 0);
        for _ in 0..200 {
            let f = random_density(&mut rng);
            let g = random_density(&mut rng);
            let h = hellinger(&f, &g).unwrap();
            let l1 = l1_distance(&f, &g);
            assert!(h * h <= l1 + 1e-9, "h^2 = {} > l1 = {}", h * h, l1);
            assert!(l1 <= 2.0 * h + 1e-9, "l1 = {} > 2h = {}", l1, 2.0 * h);
        }
    }

    #[test]
    fn ej_zero_for_identical_densities() {
        for j in [2, 3, 5] {
            let e = ej_moment(&unit_density(), &unit_density(), j).unwrap();
            assert_relative_eq!(e, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ej_linear_candidate_matches_analytic_and_riemann() {
        // f0 = 1 on [0,1], f = 2x: E_2 = \int_0^1 (log 2x)^2 dx
        //                             = (log 2)^2 - 2 log 2 + 2.
        let f0 = unit_density();
        let f = IntensityModel::ClosedForm(match IntensityModel::constant(1.0, 0.0, 1.0).unwrap() {
            IntensityModel::ClosedForm(mut c) => {
                c.id = "linear".into();
                c.params =
                    [("intercept".to_string(), 0.0), ("slope".to_string(), 2.0)].into();
                c
            }
            _ => unreachable!(),
        });
        assert_relative_eq!(f.mass(), 1.0, max_relative = 1e-12);
        let e2 = ej_moment(&f0, &f, 2).unwrap();
        let ln2 = 2.0f64.ln();
        let analytic = ln2 * ln2 - 2.0 * ln2 + 2.0;
        assert_relative_eq!(e2, analytic, max_relative = 1e-9);
        // Midpoint Riemann oracle with 1e6 cells.  Its own truncation error
        // from the log^2 edge singularity is about 1e-5, which bounds the
        // achievable agreement; the analytic comparison above is the tight
        // one.
        let cells = 1_000_000;
        let h = 1.0 / cells as f64;
        let riemann: f64 = (0..cells)
            .map(|i| {
                let x = (i as f64 + 0.5) * h;
                h * (2.0 * x).ln().powi(2)
            })
            .sum();
        assert!((e2 - riemann).abs() < 5e-5, "quad {e2} vs riemann {riemann}");
    }

    #[test]
    fn ej_uses_absolute_log_ratio() {
        // Piecewise candidate whose log-ratio flips sign: the moments match
        // a Riemann sum of |log ratio|^j for both even and odd j.
        let f0 = unit_density();
        let a = 1.4;
        let b = 0.6;
        let f = IntensityModel::PiecewiseConstant(
            PiecewiseConstant::new(vec![0.0, 0.5, 1.0], vec![a, b]).unwrap(),
        );
        assert_relative_eq!(f.mass(), 1.0, max_relative = 1e-12);
        for j in [2u32, 3] {
            let e = ej_moment(&f0, &f, j).unwrap();
            let exact = 0.5 * a.ln().abs().powi(j as i32) + 0.5 * b.ln().abs().powi(j as i32);
            assert_relative_eq!(e, exact, max_relative = 1e-10);
        }
    }

    #[test]
    fn ej_flags_divergence_when_candidate_vanishes() {
        // f = U(0, 1/2) density vanishes on [1/2, 1] where f0 = 1.
        let f = IntensityModel::uniform_density(0.5).unwrap();
        let e = ej_moment(&unit_density(), &f, 2).unwrap();
        assert!(e.is_infinite() && e > 0.0);
    }

    #[test]
    fn ej_is_asymmetric() {
        let f = IntensityModel::cosine_perturb(0.6, 1.0, 0.0, 1.0).unwrap();
        let forward = ej_moment(&unit_density(), &f, 3).unwrap();
        let backward = ej_moment(&f, &unit_density(), 3).unwrap();
        assert!((forward - backward).abs() > 1e-4, "{forward} vs {backward}");
    }

    #[test]
    fn k2_rounds_up_to_powers_of_two() {
        for (k, expect) in [(2u32, 2u32), (3, 4), (4, 4), (5, 8), (8, 8), (9, 16)] {
            let p = BknParams { v_n: 0.1, h_max: 5.0, k, n: 100 };
            assert_eq!(p.k2(), expect);
        }
    }

    #[test]
    fn bkn_accepts_the_reference_itself() {
        let f0 = unit_density();
        let p = BknParams { v_n: 0.05, h_max: 2.0, k: 3, n: 500 };
        let report = bkn_membership(&f0, &f0.clone(), &p);
        assert!(report.holds);
        assert!(report.hellinger_sq < 1e-12);
        assert!(report.ej_max < 1e-12);
        assert_relative_eq!(report.sup_ratio, 1.0, max_relative = 1e-9);
        assert_eq!(report.ej_values.len(), 3); // j = 2, 3, 4
    }

    #[test]
    fn bkn_flags_ratio_clause_for_vanishing_candidate() {
        let f0 = unit_density();
        let f = IntensityModel::uniform_density(0.5).unwrap();
        let p = BknParams { v_n: 0.5, h_max: 3.0, k: 2, n: 100 };
        let report = bkn_membership(&f0, &f, &p);
        assert!(!report.holds);
        assert!(!report.ratio_ok);
        assert!(report.sup_ratio.is_infinite());
    }

    #[test]
    fn bkn_boundary_by_bisection_with_riemann_cross_check() {
        // Candidate family f_eps = 1 + eps cos(2 pi x) on [0, 1]; membership
        // flips as eps grows.  Locate the boundary and confirm the clause
        // values against brute-force Riemann sums there.
        let f0 = unit_density();
        let p = BknParams { v_n: 0.12, h_max: 4.0, k: 2, n: 1000 };
        let member = |eps: f64| {
            let f = IntensityModel::cosine_perturb(eps, 1.0, 0.0, 1.0).unwrap();
            bkn_membership(&f0, &f, &p).holds
        };
        assert!(member(0.01));
        assert!(!member(0.9));
        let (mut lo, mut hi) = (0.01, 0.9);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if member(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let eps = 0.5 * (lo + hi);
        let f = IntensityModel::cosine_perturb(eps, 1.0, 0.0, 1.0).unwrap();
        let report = bkn_membership(&f0, &f, &p);

        // Riemann cross-checks of every clause value at the boundary.
        let cells = 1_000_000;
        let h = 1.0 / cells as f64;
        let mut h2 = 0.0;
        let mut e2 = 0.0;
        let mut ratio_max = 0.0f64;
        for i in 0..cells {
            let x = (i as f64 + 0.5) * h;
            let v = 1.0 + eps * (2.0 * std::f64::consts::PI * x).cos();
            let s = v.sqrt() - 1.0;
            h2 += h * s * s;
            e2 += h * v.ln().powi(2);
            ratio_max = ratio_max.max(1.0 / v);
        }
        assert_relative_eq!(report.hellinger_sq, h2, max_relative = 1e-6);
        assert_relative_eq!(report.ej_max, e2, max_relative = 1e-6);
        assert_relative_eq!(report.sup_ratio, ratio_max, max_relative = 1e-6);
        assert_relative_eq!(report.sup_candidate, 1.0 + eps, max_relative = 1e-9);

        // At the boundary some clause sits within a hair of its cap.
        let slacks = [
            (report.hellinger_cap - report.hellinger_sq).abs() / report.hellinger_cap,
            (report.ej_cap - report.ej_max).abs() / report.ej_cap,
            (report.ratio_cap - report.sup_ratio).abs() / report.ratio_cap,
            (report.sup_cap - report.sup_candidate).abs() / report.sup_cap,
        ];
        assert!(
            slacks.iter().any(|s| *s < 1e-6),
            "no clause is tight at the boundary: {slacks:?}"
        );
    }

    #[test]
    fn kl_zero_for_identical_intensities() {
        let env = poisson_env(5);
        let lam = IntensityModel::constant(1.3, 0.0, 1.0).unwrap();
        assert_relative_eq!(kl_aalen(&lam, &lam, &env), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn kl_poisson_constant_pair_closed_form() {
        // mu_n = n on [0,1]: KL(1, 2) = n (1 log(1/2) - 1 + 2) = n (1 - log 2).
        let env = poisson_env(7);
        let lam0 = IntensityModel::constant(1.0, 0.0, 1.0).unwrap();
        let lam = IntensityModel::constant(2.0, 0.0, 1.0).unwrap();
        let expect = 7.0 * (1.0 - 2.0f64.ln());
        assert_relative_eq!(kl_aalen(&lam0, &lam, &env), expect, max_relative = 1e-10);
        assert_relative_eq!(
            kl_aalen_direct(&lam0, &lam, &env),
            expect,
            max_relative = 1e-10
        );
    }

    #[test]
    fn kl_decomposition_matches_direct_quadrature() {
        let mut rng = stream(43, 0);
        let env = poisson_env(20);
        let mut checked = 0;
        while checked < 100 {
            let lam0 = random_model(&mut rng);
            let lam = random_model(&mut rng);
            let a = kl_aalen(&lam0, &lam, &env);
            let b = kl_aalen_direct(&lam0, &lam, &env);
            if a.is_infinite() {
                assert!(b.is_infinite());
                continue; // only finite pairs count toward the quota
            }
            assert!(
                (a - b).abs() <= 1e-8 * (1.0 + a.abs()),
                "decomposition {a} vs direct {b}"
            );
            // KL of distinct intensities is strictly nonnegative.
            assert!(a >= -1e-10);
            checked += 1;
        }
    }

    #[test]
    fn kl_survival_environment_self_consistency() {
        // A censoring environment exercises the non-constant mu_n path.
        let spec = ModelSpec::Censoring {
            hazard: IntensityModel::constant(0.8, 0.0, 1.0).unwrap(),
            censoring: CensoringSpec::Exponential { rate: 0.5 },
            n: 30,
            horizon: 1.0,
        };
        let env = spec.environment(0.5).unwrap();
        assert!(matches!(env.mu, MuTilde::Survival { .. }));
        let lam0 = IntensityModel::constant(0.8, 0.0, 1.0).unwrap();
        let lam = IntensityModel::linear_decreasing(2.0, 0.0, 1.0).unwrap();
        let a = kl_aalen(&lam0, &lam, &env);
        let b = kl_aalen_direct(&lam0, &lam, &env);
        assert_relative_eq!(a, b, max_relative = 1e-8);
        assert!(a > 0.0);
    }

    #[test]
    fn kl_is_asymmetric() {
        let env = poisson_env(5);
        let lam0 = IntensityModel::constant(1.0, 0.0, 1.0).unwrap();
        let lam = IntensityModel::constant(2.0, 0.0, 1.0).unwrap();
        let forward = kl_aalen(&lam0, &lam, &env);
        let backward = kl_aalen(&lam, &lam0, &env);
        assert!((forward - backward).abs() > 1e-3);
    }

    #[test]
    fn kl_divergence_is_infinite_when_candidate_vanishes() {
        let env = poisson_env(5);
        let lam0 = IntensityModel::constant(1.0, 0.0, 1.0).unwrap();
        let lam = IntensityModel::uniform_density(0.5).unwrap();
        assert!(kl_aalen(&lam0, &lam, &env).is_infinite());
        assert!(kl_aalen_direct(&lam0, &lam, &env).is_infinite());
    }

    #[test]
    fn kappa0_reference_values() {
        assert!((kappa0(1.0, 1.0, 1.0).unwrap() - 17.0).abs() < 1e-12);
        assert!((kappa0(1.0, 1.0, 2.0).unwrap() - 28.5).abs() < 1e-12);
        assert!(kappa0(-1.0, 1.0, 1.0).is_err());
        assert!(kappa0(1.0, 0.5, 1.0).is_err());
        assert!(kappa0(1.0, 1.0, 0.0).is_err());
        let mut rng = stream(44, 0);
        for _ in 0..100 {
            let m1 = rng.random_range(0.05..2.0);
            let m2 = m1 + rng.random_range(0.0..2.0);
            let m0 = rng.random_range(0.05..4.0);
            assert!(kappa0(m1, m2, m0).unwrap() > 0.0);
        }
    }

    #[test]
    fn phi_is_nonnegative_with_unique_zero() {
        for i in 0..1000 {
            let x = 0.01 + i as f64 * 0.01;
            let v = phi(x);
            if (x - 1.0).abs() < 1e-12 {
                assert!(v.abs() < 1e-12);
            } else {
                assert!(v > 0.0, "phi({x}) = {v}");
            }
        }
    }

    #[test]
    fn mass_norm_inequality_on_random_pairs() {
        let mut rng = stream(45, 0);
        // Pure mass change: equality within quadrature tolerance.
        let lam0 = IntensityModel::constant(1.0, 0.0, 1.0).unwrap();
        let lam = IntensityModel::constant(2.0, 0.0, 1.0).unwrap();
        assert!(mass_norm_inequality_check(&lam, &lam0).unwrap());
        assert!(mass_norm_inequality_check(&lam0, &lam0.clone()).unwrap());
        for _ in 0..500 {
            let f = random_model(&mut rng);
            let g = random_model(&mut rng);
            assert!(
                mass_norm_inequality_check(&f, &g).unwrap(),
                "inequality failed for {f:?} vs {g:?}"
            );
        }
    }

    #[test]
    fn v2_is_zero_for_identical_intensities() {
        let spec = ModelSpec::Poisson {
            lambda0: IntensityModel::constant(1.0, 0.0, 1.0).unwrap(),
            n: 20,
            horizon: 1.0,
            lambda_max: None,
        };
        let lam = IntensityModel::constant(1.0, 0.0, 1.0).unwrap();
        let est = v2_monte_carlo(&lam, &lam.clone(), &spec, 100, 7).unwrap();
        assert_eq!(est.variance, 0.0);
        assert_eq!(est.mean, 0.0);
    }

    #[test]
    fn v2_requires_enough_replicates() {
        let spec = ModelSpec::Poisson {
            lambda0: IntensityModel::constant(1.0, 0.0, 1.0).unwrap(),
            n: 5,
            horizon: 1.0,
            lambda_max: None,
        };
        let lam = IntensityModel::constant(1.0, 0.0, 1.0).unwrap();
        assert!(v2_monte_carlo(&lam, &lam.clone(), &spec, 50, 7).is_err());
    }

    #[test]
    fn v2_matches_poisson_analytic_variance() {
        // Under a Poisson record with lambda0 = 1, the log-likelihood-ratio
        // against lambda = c has variance n (log c)^2 (variance of the
        // event-count times the constant log-ratio).
        let n = 200u64;
        let spec = ModelSpec::Poisson {
            lambda0: IntensityModel::constant(1.0, 0.0, 1.0).unwrap(),
            n,
            horizon: 1.0,
            lambda_max: None,
        };
        let lam0 = IntensityModel::constant(1.0, 0.0, 1.0).unwrap();
        let lam = IntensityModel::constant(1.2, 0.0, 1.0).unwrap();
        let est = v2_monte_carlo(&lam0, &lam, &spec, 400, 4242).unwrap();
        let analytic = n as f64 * 1.2f64.ln().powi(2);
        assert!(
            (est.variance - analytic).abs() < 4.0 * est.se,
            "variance {} vs analytic {} (se {})",
            est.variance,
            analytic,
            est.se
        );
        // KL cross-check through the Monte-Carlo mean.
        let env = poisson_env(n);
        let kl = kl_aalen(&lam0, &lam, &env);
        let mean_se = (est.variance / est.replicates as f64).sqrt();
        assert!(
            (est.mean - kl).abs() < 4.0 * mean_se,
            "mean {} vs kl {} (se {})",
            est.mean,
            kl,
            mean_se
        );
    }

    #[test]
    fn v2_scales_linearly_in_n() {
        let lam0 = IntensityModel::constant(1.0, 0.0, 1.0).unwrap();
        let lam = IntensityModel::constant(1.2, 0.0, 1.0).unwrap();
        let mut estimates = Vec::new();
        for n in [100u64, 200, 400] {
            let spec = ModelSpec::Poisson {
                lambda0: lam0.clone(),
                n,
                horizon: 1.0,
                lambda_max: None,
            };
            estimates.push(v2_monte_carlo(&lam0, &lam, &spec, 300, 900 + n).unwrap());
        }
        for w in estimates.windows(2) {
            let ratio = w[1].variance / w[0].variance;
            let se = (w[1].se / w[0].variance).hypot(w[0].se * w[1].variance
                / (w[0].variance * w[0].variance));
            assert!(
                (ratio - 2.0).abs() < 4.0 * se + 0.3,
                "doubling n changed V2 by x{ratio}"
            );
        }
    }
}

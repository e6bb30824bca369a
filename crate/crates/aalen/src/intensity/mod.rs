//! Deterministic intensity functions `lambda(t) >= 0` on a bounded window.
//!
//! [`IntensityModel`] is the one currency shared by simulators, likelihood
//! evaluation, distance functionals, and posterior samplers.  Every variant
//! evaluates to zero outside its own domain, so distances between models
//! with different supports integrate over the hull of both and penalize
//! non-overlap correctly.
//!
//! Models serialize as JSON objects tagged by `variant`; see the crate
//! README for the schema of each variant.

pub mod fourier;
pub mod spline;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::Interval;
use crate::error::{AalenError, Result};
use crate::quad;
use crate::step::StepFunction;

pub use spline::SplineBasis;

/// Thread-local counter of normalizing-constant evaluations
/// (`c(theta)` for log-spline and log-linear models).
///
/// Posterior samplers are designed so that acceptance ratios never require
/// these constants; tests snapshot the counter around a sampler run to
/// enforce that.  Thread-local so concurrent tests cannot disturb each
/// other's readings.
pub mod normalizer_audit {
    use std::cell::Cell;

    thread_local! {
        static CALLS: Cell<u64> = const { Cell::new(0) };
    }

    pub fn bump() {
        CALLS.with(|c| c.set(c.get() + 1));
    }

    /// Number of normalizer evaluations on this thread so far.
    pub fn count() -> u64 {
        CALLS.with(|c| c.get())
    }
}

fn one() -> f64 {
    1.0
}

/// A named closed-form intensity shape with a scalar multiplier.
///
/// Known ids and their parameter keys:
///
/// * `"constant"`: `level`; `lambda(t) = level`.
/// * `"linear"`: `intercept`, `slope`; `lambda(t) = intercept + slope (t - lo)`.
/// * `"linear_decreasing"`: `peak`; `lambda(t) = peak (1 - (t - lo)/(hi - lo))`.
/// * `"exp_sin"`: `amplitude` (default 1), `cycles` (default 1);
///   `lambda(t) = exp(amplitude sin(2 pi cycles (t - lo)/(hi - lo)))`.
/// * `"weibull"`: `shape` (>= 1), `time_scale`;
///   `lambda(t) = (shape/time_scale) ((t - lo)/time_scale)^{shape - 1}`.
/// * `"cosine_perturb"`: `epsilon` (|epsilon| < 1), `cycles` (default 1);
///   `lambda(t) = 1 + epsilon cos(2 pi cycles (t - lo)/(hi - lo))`; for whole
///   `cycles` this integrates to the domain length exactly, so with
///   `scale = 1` on a unit domain it is a ready-made density perturbation.
///
/// All shapes are multiplied by `scale` (default 1), so the family is closed
/// under normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    pub id: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default = "one")]
    pub scale: f64,
    pub domain: Interval,
}

#[derive(Debug, Clone, Copy)]
enum Form {
    Constant { level: f64 },
    Linear { intercept: f64, slope: f64 },
    LinearDecreasing { peak: f64 },
    ExpSin { amplitude: f64, cycles: f64 },
    Weibull { shape: f64, time_scale: f64 },
    CosinePerturb { epsilon: f64, cycles: f64 },
}

impl ClosedForm {
    fn param(&self, key: &str) -> Result<f64> {
        self.params.get(key).copied().ok_or_else(|| {
            AalenError::invalid(format!("closed form \"{}\" needs parameter \"{key}\"", self.id))
        })
    }

    fn param_or(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    fn form(&self) -> Result<Form> {
        let form = match self.id.as_str() {
            "constant" => Form::Constant {
                level: self.param("level")?,
            },
            "linear" => Form::Linear {
                intercept: self.param("intercept")?,
                slope: self.param("slope")?,
            },
            "linear_decreasing" => Form::LinearDecreasing {
                peak: self.param("peak")?,
            },
            "exp_sin" => Form::ExpSin {
                amplitude: self.param_or("amplitude", 1.0),
                cycles: self.param_or("cycles", 1.0),
            },
            "weibull" => Form::Weibull {
                shape: self.param("shape")?,
                time_scale: self.param("time_scale")?,
            },
            "cosine_perturb" => Form::CosinePerturb {
                epsilon: self.param("epsilon")?,
                cycles: self.param_or("cycles", 1.0),
            },
            other => {
                return Err(AalenError::invalid(format!(
                    "unknown closed form id \"{other}\""
                )))
            }
        };
        Ok(form)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            return Err(AalenError::invalid("closed form scale must be finite and >= 0"));
        }
        if self.domain.length() <= 0.0 {
            return Err(AalenError::invalid("closed form domain must have positive length"));
        }
        for (k, v) in &self.params {
            if !v.is_finite() {
                return Err(AalenError::invalid(format!("parameter \"{k}\" must be finite")));
            }
        }
        match self.form()? {
            Form::Constant { level } => {
                if level < 0.0 {
                    return Err(AalenError::invalid("constant level must be >= 0"));
                }
            }
            Form::Linear { intercept, slope } => {
                let end = intercept + slope * self.domain.length();
                if intercept < 0.0 || end < 0.0 {
                    return Err(AalenError::invalid(
                        "linear intensity must be >= 0 across its domain",
                    ));
                }
            }
            Form::LinearDecreasing { peak } => {
                if peak < 0.0 {
                    return Err(AalenError::invalid("peak must be >= 0"));
                }
            }
            Form::ExpSin { amplitude, cycles } => {
                if cycles <= 0.0 || !amplitude.is_finite() {
                    return Err(AalenError::invalid("exp_sin needs cycles > 0 and finite amplitude"));
                }
            }
            Form::Weibull { shape, time_scale } => {
                if shape < 1.0 {
                    return Err(AalenError::invalid(
                        "weibull shape must be >= 1 so the intensity stays bounded",
                    ));
                }
                if time_scale <= 0.0 {
                    return Err(AalenError::invalid("weibull time_scale must be > 0"));
                }
            }
            Form::CosinePerturb { epsilon, cycles } => {
                if epsilon.abs() >= 1.0 {
                    return Err(AalenError::invalid(
                        "cosine_perturb needs |epsilon| < 1 to stay positive",
                    ));
                }
                if cycles <= 0.0 {
                    return Err(AalenError::invalid("cosine_perturb needs cycles > 0"));
                }
            }
        }
        Ok(())
    }

    fn eval(&self, t: f64) -> f64 {
        if !self.domain.contains(t) {
            return 0.0;
        }
        let u = t - self.domain.lo;
        let len = self.domain.length();
        let base = match self.form().expect("validated closed form") {
            Form::Constant { level } => level,
            Form::Linear { intercept, slope } => intercept + slope * u,
            Form::LinearDecreasing { peak } => peak * (1.0 - u / len),
            Form::ExpSin { amplitude, cycles } => {
                (amplitude * (2.0 * std::f64::consts::PI * cycles * u / len).sin()).exp()
            }
            Form::Weibull { shape, time_scale } => {
                (shape / time_scale) * (u / time_scale).powf(shape - 1.0)
            }
            Form::CosinePerturb { epsilon, cycles } => {
                1.0 + epsilon * (2.0 * std::f64::consts::PI * cycles * u / len).cos()
            }
        };
        self.scale * base
    }

    /// Exact antiderivative-based integral where available; quadrature for
    /// the transcendental shapes.
    fn integrate(&self, a: f64, b: f64) -> f64 {
        let a = a.max(self.domain.lo);
        let b = b.min(self.domain.hi);
        if b <= a {
            return 0.0;
        }
        let (ua, ub) = (a - self.domain.lo, b - self.domain.lo);
        let len = self.domain.length();
        let base = match self.form().expect("validated closed form") {
            Form::Constant { level } => level * (ub - ua),
            Form::Linear { intercept, slope } => {
                intercept * (ub - ua) + 0.5 * slope * (ub * ub - ua * ua)
            }
            Form::LinearDecreasing { peak } => {
                peak * ((ub - ua) - (ub * ub - ua * ua) / (2.0 * len))
            }
            Form::ExpSin { amplitude, cycles } => {
                let panels = (4.0 * cycles).ceil() as usize;
                let pts: Vec<f64> = (0..=panels)
                    .map(|i| a + (b - a) * i as f64 / panels as f64)
                    .collect();
                quad::integrate_pieces(
                    |t| {
                        (amplitude
                            * (2.0 * std::f64::consts::PI * cycles * (t - self.domain.lo) / len)
                                .sin())
                        .exp()
                    },
                    &pts,
                )
            }
            Form::Weibull { shape, time_scale } => {
                (ub / time_scale).powf(shape) - (ua / time_scale).powf(shape)
            }
            Form::CosinePerturb { epsilon, cycles } => {
                let w = 2.0 * std::f64::consts::PI * cycles / len;
                (ub - ua) + epsilon / w * ((w * ub).sin() - (w * ua).sin())
            }
        };
        self.scale * base
    }

    /// Exact supremum over the domain.
    fn sup(&self) -> f64 {
        let len = self.domain.length();
        let base = match self.form().expect("validated closed form") {
            Form::Constant { level } => level,
            Form::Linear { intercept, slope } => intercept.max(intercept + slope * len),
            Form::LinearDecreasing { peak } => peak,
            Form::ExpSin { amplitude, cycles } => {
                let phase = 2.0 * std::f64::consts::PI * cycles;
                // Range of sin over [0, phase].
                let max_sin = if phase >= 0.5 * std::f64::consts::PI {
                    1.0
                } else {
                    phase.sin()
                };
                let min_sin = if phase >= 1.5 * std::f64::consts::PI {
                    -1.0
                } else {
                    phase.sin().min(0.0)
                };
                if amplitude >= 0.0 {
                    (amplitude * max_sin).exp()
                } else {
                    (amplitude * min_sin).exp()
                }
            }
            Form::Weibull { shape, time_scale } => {
                (shape / time_scale) * (len / time_scale).powf(shape - 1.0)
            }
            Form::CosinePerturb { epsilon, cycles } => {
                let phase = 2.0 * std::f64::consts::PI * cycles;
                // cos starts at 1, so the max of cos over [0, phase] is 1;
                // the min is -1 once the phase passes pi.
                let min_cos = if phase >= std::f64::consts::PI {
                    -1.0
                } else {
                    phase.cos()
                };
                if epsilon >= 0.0 {
                    1.0 + epsilon
                } else {
                    1.0 + epsilon * min_cos
                }
            }
        };
        self.scale * base
    }

    /// Interior points where quadrature should split: quarter-cycle marks
    /// for the oscillatory forms, none for the monotone ones.
    fn quad_breaks(&self) -> Vec<f64> {
        let cycles = match self.form().expect("validated closed form") {
            Form::ExpSin { cycles, .. } | Form::CosinePerturb { cycles, .. } => cycles,
            _ => return Vec::new(),
        };
        let panels = (4.0 * cycles).ceil() as usize;
        let len = self.domain.length();
        (1..panels)
            .map(|i| self.domain.lo + len * i as f64 / panels as f64)
            .collect()
    }
}

/// Non-negative piecewise-constant intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepFunction", into = "StepFunction")]
pub struct PiecewiseConstant {
    step: StepFunction,
}

impl TryFrom<StepFunction> for PiecewiseConstant {
    type Error = AalenError;
    fn try_from(step: StepFunction) -> Result<Self> {
        if step.values().iter().any(|&v| v < 0.0) {
            return Err(AalenError::invalid("piecewise intensity values must be >= 0"));
        }
        Ok(PiecewiseConstant { step })
    }
}

impl From<PiecewiseConstant> for StepFunction {
    fn from(p: PiecewiseConstant) -> StepFunction {
        p.step
    }
}

impl PiecewiseConstant {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        PiecewiseConstant::try_from(StepFunction::new(breaks, values)?)
    }

    pub fn step(&self) -> &StepFunction {
        &self.step
    }

    fn integrate(&self, a: f64, b: f64) -> f64 {
        let mut acc = 0.0;
        for (lo, hi, v) in self.step.pieces() {
            let l = lo.max(a);
            let h = hi.min(b);
            if h > l {
                acc += v * (h - l);
            }
        }
        acc
    }
}

/// One component of a [`UniformMixture`]: the uniform density on
/// `[0, location)` carrying `weight` of the mixing mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureAtom {
    pub location: f64,
    pub weight: f64,
}

/// Finite mixture of uniform densities scaled by a total mass: the generic
/// form of a monotone non-increasing intensity on `[0, max location]`.
///
/// The normalized part `sum_l w_l Unif(0, theta_l)` integrates to one; the
/// model evaluates to `mass * sum_{theta_l > t} w_l / theta_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformMixture {
    pub mass: f64,
    pub atoms: Vec<MixtureAtom>,
}

impl UniformMixture {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(AalenError::invalid("mixture mass must be finite and > 0"));
        }
        if self.atoms.is_empty() {
            return Err(AalenError::invalid("mixture needs at least one atom"));
        }
        let mut total = 0.0;
        for a in &self.atoms {
            if !(a.location.is_finite() && a.location > 0.0) {
                return Err(AalenError::invalid("atom locations must be finite and > 0"));
            }
            if !(a.weight.is_finite() && a.weight >= 0.0) {
                return Err(AalenError::invalid("atom weights must be finite and >= 0"));
            }
            total += a.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(AalenError::invalid(format!(
                "atom weights must sum to 1, got {total}"
            )));
        }
        Ok(())
    }

    pub fn max_location(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.location)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        self.mass
            * self
                .atoms
                .iter()
                .filter(|a| a.location > t)
                .map(|a| a.weight / a.location)
                .sum::<f64>()
    }

    fn integrate(&self, a: f64, b: f64) -> f64 {
        let a = a.max(0.0);
        if b <= a {
            return 0.0;
        }
        self.mass
            * self
                .atoms
                .iter()
                .map(|at| at.weight * (b.min(at.location) - a.min(at.location)).max(0.0) / at.location)
                .sum::<f64>()
    }

    /// Exact step-function form on `[0, max location)`.  The step view
    /// takes the last piece's value *at* the right endpoint (step-function
    /// convention) while the mixture itself is zero there; consumers that
    /// care about single points (event terms) must keep the half-open
    /// convention.
    pub fn to_step(&self) -> StepFunction {
        let mut locs: Vec<f64> = self.atoms.iter().map(|a| a.location).collect();
        locs.sort_by(f64::total_cmp);
        locs.dedup();
        let mut breaks = Vec::with_capacity(locs.len() + 1);
        breaks.push(0.0);
        breaks.extend(locs.iter().copied());
        let values: Vec<f64> = breaks[..breaks.len() - 1]
            .iter()
            .map(|&b| self.eval(b))
            .collect();
        StepFunction::new(breaks, values).expect("sorted positive locations")
    }
}

/// Exponential of a spline expansion: `scale * exp(coeffs . B(t))` on the
/// basis domain, or its normalized version (a probability density).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LogSplineRepr", into = "LogSplineRepr")]
pub struct LogSplineModel {
    basis: SplineBasis,
    coeffs: Vec<f64>,
    scale: f64,
    normalized: bool,
}

#[derive(Serialize, Deserialize)]
struct LogSplineRepr {
    basis: SplineBasis,
    coeffs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<f64>,
    #[serde(default)]
    normalized: bool,
}

impl TryFrom<LogSplineRepr> for LogSplineModel {
    type Error = AalenError;
    fn try_from(r: LogSplineRepr) -> Result<Self> {
        match (r.scale, r.normalized) {
            (None, true) => LogSplineModel::normalized(r.basis, r.coeffs),
            (Some(a), false) => LogSplineModel::scaled(r.basis, r.coeffs, a),
            (Some(_), true) => Err(AalenError::invalid(
                "log_spline: give either a scale or normalized=true, not both",
            )),
            (None, false) => Err(AalenError::invalid(
                "log_spline: either a scale or normalized=true is required",
            )),
        }
    }
}

impl From<LogSplineModel> for LogSplineRepr {
    fn from(m: LogSplineModel) -> LogSplineRepr {
        LogSplineRepr {
            scale: (!m.normalized).then_some(m.scale),
            basis: m.basis,
            coeffs: m.coeffs,
            normalized: m.normalized,
        }
    }
}

impl LogSplineModel {
    /// `scale * exp(coeffs . B(t))`.
    pub fn scaled(basis: SplineBasis, coeffs: Vec<f64>, scale: f64) -> Result<Self> {
        if coeffs.len() != basis.dim() {
            return Err(AalenError::invalid(format!(
                "coefficient count {} does not match basis dimension {}",
                coeffs.len(),
                basis.dim()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(AalenError::invalid("spline coefficients must be finite"));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(AalenError::invalid("scale must be finite and > 0"));
        }
        Ok(LogSplineModel {
            basis,
            coeffs,
            scale,
            normalized: false,
        })
    }

    /// The probability density `exp(coeffs . B(t) - c(coeffs))`; evaluates
    /// the normalizing constant once, here.
    pub fn normalized(basis: SplineBasis, coeffs: Vec<f64>) -> Result<Self> {
        let c = spline::log_normalizer(&basis, &coeffs);
        let mut m = LogSplineModel::scaled(basis, coeffs, (-c).exp())?;
        m.normalized = true;
        Ok(m)
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    fn eval(&self, t: f64) -> f64 {
        let d = self.basis.domain();
        if t < d.lo || t > d.hi {
            return 0.0;
        }
        self.scale * self.basis.eval_dot(t, &self.coeffs).exp()
    }

    fn integrate(&self, a: f64, b: f64) -> f64 {
        let d = self.basis.domain();
        let a = a.max(d.lo);
        let b = b.min(d.hi);
        if b <= a {
            return 0.0;
        }
        let pts = quad::piece_points(a, b, self.basis.interior_knots());
        self.scale * quad::integrate_pieces(|t| self.basis.eval_dot(t, &self.coeffs).exp(), &pts)
    }
}

/// Exponential of a cosine expansion on `[0, 1]`:
/// `scale * exp(sum_j coeffs[j] phi_j(t))` or its normalized version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LogLinearRepr", into = "LogLinearRepr")]
pub struct LogLinearModel {
    coeffs: Vec<f64>,
    scale: f64,
    normalized: bool,
}

#[derive(Serialize, Deserialize)]
struct LogLinearRepr {
    coeffs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<f64>,
    #[serde(default)]
    normalized: bool,
}

impl TryFrom<LogLinearRepr> for LogLinearModel {
    type Error = AalenError;
    fn try_from(r: LogLinearRepr) -> Result<Self> {
        match (r.scale, r.normalized) {
            (None, true) => LogLinearModel::normalized(r.coeffs),
            (Some(a), false) => LogLinearModel::scaled(r.coeffs, a),
            (Some(_), true) => Err(AalenError::invalid(
                "log_linear: give either a scale or normalized=true, not both",
            )),
            (None, false) => Err(AalenError::invalid(
                "log_linear: either a scale or normalized=true is required",
            )),
        }
    }
}

impl From<LogLinearModel> for LogLinearRepr {
    fn from(m: LogLinearModel) -> LogLinearRepr {
        LogLinearRepr {
            scale: (!m.normalized).then_some(m.scale),
            coeffs: m.coeffs,
            normalized: m.normalized,
        }
    }
}

/// Log of `\int_0^1 exp(sum_j coeffs[j] phi_j(t)) dt`; counted by
/// [`normalizer_audit`] like the spline normalizer.
pub fn log_normalizer_loglinear(coeffs: &[f64]) -> f64 {
    normalizer_audit::bump();
    let pts = fourier::quad_points(coeffs.len());
    quad::integrate_pieces(|t| fourier::eval_sum(coeffs, t).exp(), &pts).ln()
}

impl LogLinearModel {
    pub fn scaled(coeffs: Vec<f64>, scale: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(AalenError::invalid("log_linear needs at least one coefficient"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(AalenError::invalid("log_linear coefficients must be finite"));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(AalenError::invalid("scale must be finite and > 0"));
        }
        Ok(LogLinearModel {
            coeffs,
            scale,
            normalized: false,
        })
    }

    pub fn normalized(coeffs: Vec<f64>) -> Result<Self> {
        let c = log_normalizer_loglinear(&coeffs);
        let mut m = LogLinearModel::scaled(coeffs, (-c).exp())?;
        m.normalized = true;
        Ok(m)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    fn eval(&self, t: f64) -> f64 {
        if !(0.0..=1.0).contains(&t) {
            return 0.0;
        }
        self.scale * fourier::eval_sum(&self.coeffs, t).exp()
    }

    fn integrate(&self, a: f64, b: f64) -> f64 {
        let a = a.max(0.0);
        let b = b.min(1.0);
        if b <= a {
            return 0.0;
        }
        let pts = quad::piece_points(a, b, fourier::quad_points(self.coeffs.len()));
        self.scale * quad::integrate_pieces(|t| fourier::eval_sum(&self.coeffs, t).exp(), &pts)
    }
}

/// A deterministic intensity function; see the module docs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum IntensityModel {
    ClosedForm(ClosedForm),
    PiecewiseConstant(PiecewiseConstant),
    UniformMixture(UniformMixture),
    LogSpline(LogSplineModel),
    LogLinear(LogLinearModel),
}

impl IntensityModel {
    /// Constant intensity `level` on `[lo, hi]`.
    pub fn constant(level: f64, lo: f64, hi: f64) -> Result<Self> {
        let m = IntensityModel::ClosedForm(ClosedForm {
            id: "constant".into(),
            params: BTreeMap::from([("level".into(), level)]),
            scale: 1.0,
            domain: Interval::new(lo, hi)?,
        });
        m.validate()?;
        Ok(m)
    }

    /// `peak * (1 - (t - lo)/(hi - lo))` on `[lo, hi]`.
    pub fn linear_decreasing(peak: f64, lo: f64, hi: f64) -> Result<Self> {
        let m = IntensityModel::ClosedForm(ClosedForm {
            id: "linear_decreasing".into(),
            params: BTreeMap::from([("peak".into(), peak)]),
            scale: 1.0,
            domain: Interval::new(lo, hi)?,
        });
        m.validate()?;
        Ok(m)
    }

    /// `1 + epsilon cos(2 pi cycles (t - lo)/(hi - lo))` on `[lo, hi]`; a
    /// density for whole `cycles` on a unit-length domain.
    pub fn cosine_perturb(epsilon: f64, cycles: f64, lo: f64, hi: f64) -> Result<Self> {
        let m = IntensityModel::ClosedForm(ClosedForm {
            id: "cosine_perturb".into(),
            params: BTreeMap::from([("epsilon".into(), epsilon), ("cycles".into(), cycles)]),
            scale: 1.0,
            domain: Interval::new(lo, hi)?,
        });
        m.validate()?;
        Ok(m)
    }

    /// The uniform density on `[0, width)` as a mixture with one atom.
    pub fn uniform_density(width: f64) -> Result<Self> {
        let m = IntensityModel::UniformMixture(UniformMixture {
            mass: 1.0,
            atoms: vec![MixtureAtom {
                location: width,
                weight: 1.0,
            }],
        });
        m.validate()?;
        Ok(m)
    }

    /// Structural validation; call after building or deserializing a model
    /// from untrusted input.
    pub fn validate(&self) -> Result<()> {
        match self {
            IntensityModel::ClosedForm(c) => c.validate(),
            IntensityModel::PiecewiseConstant(_) => Ok(()),
            IntensityModel::UniformMixture(m) => m.validate(),
            // Spline and log-linear models validate in their constructors
            // (serde goes through the same constructors).
            IntensityModel::LogSpline(_) | IntensityModel::LogLinear(_) => Ok(()),
        }
    }

    /// Support interval; the model is zero outside it.
    pub fn domain(&self) -> Interval {
        match self {
            IntensityModel::ClosedForm(c) => c.domain,
            IntensityModel::PiecewiseConstant(p) => Interval {
                lo: p.step.start(),
                hi: p.step.end(),
            },
            IntensityModel::UniformMixture(m) => Interval {
                lo: 0.0,
                hi: m.max_location(),
            },
            IntensityModel::LogSpline(s) => s.basis.domain(),
            IntensityModel::LogLinear(_) => Interval { lo: 0.0, hi: 1.0 },
        }
    }

    /// Pointwise value; zero outside the domain.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            IntensityModel::ClosedForm(c) => c.eval(t),
            IntensityModel::PiecewiseConstant(p) => p.step.value_at(t),
            IntensityModel::UniformMixture(m) => m.eval(t),
            IntensityModel::LogSpline(s) => s.eval(t),
            IntensityModel::LogLinear(l) => l.eval(t),
        }
    }

    /// Points inside the domain where the model jumps or loses smoothness;
    /// quadrature and crossing searches split here.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            IntensityModel::ClosedForm(c) => c.quad_breaks(),
            IntensityModel::PiecewiseConstant(p) => p.step.interior_breaks().to_vec(),
            IntensityModel::UniformMixture(m) => {
                let mut locs: Vec<f64> = m.atoms.iter().map(|a| a.location).collect();
                locs.sort_by(f64::total_cmp);
                locs.dedup();
                locs
            }
            IntensityModel::LogSpline(s) => s.basis.interior_knots(),
            IntensityModel::LogLinear(l) => fourier::quad_points(l.coeffs.len()),
        }
    }

    /// `\int_{[a,b] \cap domain} lambda(t) dt`, exact for the families with
    /// closed-form antiderivatives and composite Gauss-Legendre otherwise.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        match self {
            IntensityModel::ClosedForm(c) => c.integrate(a, b),
            IntensityModel::PiecewiseConstant(p) => p.integrate(a, b),
            IntensityModel::UniformMixture(m) => m.integrate(a, b),
            IntensityModel::LogSpline(s) => s.integrate(a, b),
            IntensityModel::LogLinear(l) => l.integrate(a, b),
        }
    }

    /// Total mass `\int lambda` over the domain.
    pub fn mass(&self) -> f64 {
        let d = self.domain();
        self.integrate(d.lo, d.hi)
    }

    /// Split into `(mass, normalized model)` with the normalized part
    /// integrating to one over its domain.  Errors if the mass is zero.
    pub fn decompose(&self) -> Result<(f64, IntensityModel)> {
        let mass = self.mass();
        if !(mass.is_finite() && mass > 0.0) {
            return Err(AalenError::invalid(format!(
                "cannot normalize a model with total mass {mass}"
            )));
        }
        let normalized = match self {
            IntensityModel::ClosedForm(c) => {
                let mut c = c.clone();
                c.scale /= mass;
                IntensityModel::ClosedForm(c)
            }
            IntensityModel::PiecewiseConstant(p) => {
                let values = p.step.values().iter().map(|v| v / mass).collect();
                IntensityModel::PiecewiseConstant(PiecewiseConstant::new(
                    p.step.breaks().to_vec(),
                    values,
                )?)
            }
            IntensityModel::UniformMixture(m) => IntensityModel::UniformMixture(UniformMixture {
                mass: 1.0,
                atoms: m.atoms.clone(),
            }),
            IntensityModel::LogSpline(s) => IntensityModel::LogSpline(LogSplineModel::normalized(
                s.basis.clone(),
                s.coeffs.clone(),
            )?),
            IntensityModel::LogLinear(l) => {
                IntensityModel::LogLinear(LogLinearModel::normalized(l.coeffs.clone())?)
            }
        };
        Ok((mass, normalized))
    }

    /// Supremum over the domain: exact for closed forms, piecewise-constant
    /// models, and mixtures; for the smooth exponential families it is a
    /// scan over [`quad::SCAN_GRID`] points plus breakpoints and carries
    /// that grid's resolution as its accuracy caveat.
    pub fn sup(&self) -> f64 {
        match self {
            IntensityModel::ClosedForm(c) => c.sup(),
            IntensityModel::PiecewiseConstant(p) => {
                p.step.values().iter().copied().fold(0.0, f64::max)
            }
            IntensityModel::UniformMixture(m) => m.eval(0.0),
            IntensityModel::LogSpline(_) | IntensityModel::LogLinear(_) => {
                let d = self.domain();
                quad::sup_on_grid(
                    |t| self.eval(t),
                    d.lo,
                    d.hi,
                    quad::SCAN_GRID,
                    self.breakpoints(),
                )
            }
        }
    }

    /// Exact step-function view for variants that are step functions
    /// (constant closed form, piecewise constant, uniform mixture).
    pub fn as_step_function(&self) -> Option<StepFunction> {
        match self {
            IntensityModel::ClosedForm(c) => match c.form().ok()? {
                Form::Constant { level } => {
                    StepFunction::constant(c.domain.lo, c.domain.hi, c.scale * level).ok()
                }
                _ => None,
            },
            IntensityModel::PiecewiseConstant(p) => Some(p.step.clone()),
            IntensityModel::UniformMixture(m) => Some(m.to_step()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_basics() {
        let m = IntensityModel::constant(2.0, 0.0, 1.0).unwrap();
        assert_eq!(m.eval(0.3), 2.0);
        assert_eq!(m.eval(1.2), 0.0);
        assert_eq!(m.eval(-0.1), 0.0);
        assert_relative_eq!(m.mass(), 2.0);
        assert_relative_eq!(m.integrate(0.25, 0.75), 1.0);
        assert_eq!(m.sup(), 2.0);
    }

    #[test]
    fn linear_decreasing_mass_and_shape() {
        // peak 2 on [0, 1]: lambda(t) = 2(1 - t), mass 1.
        let m = IntensityModel::linear_decreasing(2.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(m.eval(0.0), 2.0);
        assert_relative_eq!(m.eval(0.5), 1.0);
        assert_relative_eq!(m.eval(1.0), 0.0);
        assert_relative_eq!(m.mass(), 1.0, max_relative = 1e-14);
        assert_eq!(m.sup(), 2.0);
    }

    #[test]
    fn linear_validation_catches_negative_end() {
        let m = IntensityModel::ClosedForm(ClosedForm {
            id: "linear".into(),
            params: BTreeMap::from([("intercept".into(), 1.0), ("slope".into(), -2.0)]),
            scale: 1.0,
            domain: Interval::new(0.0, 1.0).unwrap(),
        });
        assert!(m.validate().is_err());
    }

    #[test]
    fn weibull_exact_cumulative() {
        let m = IntensityModel::ClosedForm(ClosedForm {
            id: "weibull".into(),
            params: BTreeMap::from([("shape".into(), 2.0), ("time_scale".into(), 0.8)]),
            scale: 1.5,
            domain: Interval::new(0.0, 1.0).unwrap(),
        });
        m.validate().unwrap();
        let got = m.integrate(0.0, 0.6);
        let exact = 1.5 * (0.6f64 / 0.8).powi(2);
        assert_relative_eq!(got, exact, max_relative = 1e-14);
        // And against brute quadrature of the pointwise values.
        let brute = quad::integrate(|t| m.eval(t), 0.0, 0.6);
        assert_relative_eq!(got, brute, max_relative = 1e-12);
    }

    #[test]
    fn exp_sin_quadrature_and_sup() {
        let m = IntensityModel::ClosedForm(ClosedForm {
            id: "exp_sin".into(),
            params: BTreeMap::from([("amplitude".into(), 0.7), ("cycles".into(), 2.0)]),
            scale: 1.0,
            domain: Interval::new(0.0, 1.0).unwrap(),
        });
        m.validate().unwrap();
        let brute = quad::integrate_pieces(
            |t| m.eval(t),
            &quad::piece_points(0.0, 1.0, (1..16).map(|i| i as f64 / 16.0)),
        );
        assert_relative_eq!(m.mass(), brute, max_relative = 1e-12);
        assert_relative_eq!(m.sup(), f64::exp(0.7), max_relative = 1e-14);
    }

    #[test]
    fn mixture_eval_and_mass() {
        // U(0,1): density 1 on [0,1).
        let u1 = IntensityModel::uniform_density(1.0).unwrap();
        assert_eq!(u1.eval(0.3), 1.0);
        assert_eq!(u1.eval(1.0), 0.0);
        assert_relative_eq!(u1.mass(), 1.0);

        // Mixture 0.5 U(0,1) + 0.5 U(0,2), mass 3.
        let m = IntensityModel::UniformMixture(UniformMixture {
            mass: 3.0,
            atoms: vec![
                MixtureAtom { location: 1.0, weight: 0.5 },
                MixtureAtom { location: 2.0, weight: 0.5 },
            ],
        });
        m.validate().unwrap();
        assert_relative_eq!(m.eval(0.5), 3.0 * (0.5 + 0.25));
        assert_relative_eq!(m.eval(1.5), 3.0 * 0.25);
        assert_relative_eq!(m.mass(), 3.0, max_relative = 1e-14);
        assert_eq!(m.sup(), m.eval(0.0));

        // Monotone non-increasing.
        let mut prev = f64::INFINITY;
        for i in 0..=100 {
            let v = m.eval(2.0 * i as f64 / 100.0);
            assert!(v <= prev + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn mixture_step_view_matches_eval() {
        let m = UniformMixture {
            mass: 2.0,
            atoms: vec![
                MixtureAtom { location: 0.4, weight: 0.25 },
                MixtureAtom { location: 1.3, weight: 0.5 },
                MixtureAtom { location: 0.4, weight: 0.25 },
            ],
        };
        m.validate().unwrap();
        let s = m.to_step();
        // Match everywhere except the right endpoint, where the step view
        // keeps the last level and the mixture is already zero.
        for i in 0..260 {
            let t = 1.3 * i as f64 / 260.0;
            assert_relative_eq!(s.value_at(t), m.eval(t), epsilon = 1e-12);
        }
        assert_eq!(m.eval(1.3), 0.0);
    }

    #[test]
    fn mixture_weight_sum_checked() {
        let m = UniformMixture {
            mass: 1.0,
            atoms: vec![MixtureAtom { location: 1.0, weight: 0.7 }],
        };
        assert!(m.validate().is_err());
    }

    #[test]
    fn spline_scaled_vs_normalized() {
        let basis = SplineBasis::uniform(2, 4, 0.0, 1.0).unwrap();
        let coeffs: Vec<f64> = (0..basis.dim()).map(|j| 0.3 * j as f64 - 0.5).collect();
        let scaled =
            IntensityModel::LogSpline(LogSplineModel::scaled(basis.clone(), coeffs.clone(), 2.0).unwrap());
        let (mass, normalized) = scaled.decompose().unwrap();
        assert_relative_eq!(mass, scaled.mass(), max_relative = 1e-13);
        assert_relative_eq!(normalized.mass(), 1.0, epsilon = 1e-9);
        // Same shape: ratio of evals equals ratio of masses everywhere.
        for i in 1..10 {
            let t = i as f64 / 10.0;
            assert_relative_eq!(scaled.eval(t) / normalized.eval(t), mass, max_relative = 1e-12);
        }
    }

    #[test]
    fn loglinear_normalized_mass_is_one() {
        let m = IntensityModel::LogLinear(LogLinearModel::normalized(vec![0.2, -0.4, 0.1]).unwrap());
        assert_relative_eq!(m.mass(), 1.0, epsilon = 1e-9);
        assert_eq!(m.eval(1.5), 0.0);
    }

    #[test]
    fn decompose_piecewise() {
        let p = IntensityModel::PiecewiseConstant(
            PiecewiseConstant::new(vec![0.0, 0.5, 1.0], vec![2.0, 6.0]).unwrap(),
        );
        let (mass, normalized) = p.decompose().unwrap();
        assert_relative_eq!(mass, 4.0);
        assert_relative_eq!(normalized.eval(0.25), 0.5);
        assert_relative_eq!(normalized.eval(0.75), 1.5);
        assert_relative_eq!(normalized.mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn decompose_zero_mass_errors() {
        let p = IntensityModel::PiecewiseConstant(
            PiecewiseConstant::new(vec![0.0, 1.0], vec![0.0]).unwrap(),
        );
        assert!(p.decompose().is_err());
    }

    #[test]
    fn closed_form_json_shape() {
        let m = IntensityModel::constant(2.0, 0.0, 1.0).unwrap();
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["variant"], "closed_form");
        assert_eq!(v["id"], "constant");
        assert_eq!(v["params"]["level"], 2.0);
        // Round trip, including default scale.
        let txt = r#"{"variant":"closed_form","id":"constant","params":{"level":2.0},
                      "domain":{"lo":0.0,"hi":1.0}}"#;
        let back: IntensityModel = serde_json::from_str(txt).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn serde_round_trips_all_variants() {
        let basis = SplineBasis::uniform(2, 3, 0.0, 1.0).unwrap();
        let models = vec![
            IntensityModel::constant(1.5, 0.0, 2.0).unwrap(),
            IntensityModel::PiecewiseConstant(
                PiecewiseConstant::new(vec![0.0, 0.3, 1.0], vec![1.0, 0.5]).unwrap(),
            ),
            IntensityModel::uniform_density(2.0).unwrap(),
            IntensityModel::LogSpline(
                LogSplineModel::scaled(basis.clone(), vec![0.1, -0.2, 0.3, 0.0], 1.2).unwrap(),
            ),
            IntensityModel::LogSpline(
                LogSplineModel::normalized(basis, vec![0.1, -0.2, 0.3, 0.0]).unwrap(),
            ),
            IntensityModel::LogLinear(LogLinearModel::scaled(vec![0.0, 0.3], 2.0).unwrap()),
            IntensityModel::LogLinear(LogLinearModel::normalized(vec![0.0, 0.3]).unwrap()),
        ];
        for m in models {
            let txt = serde_json::to_string(&m).unwrap();
            let back: IntensityModel = serde_json::from_str(&txt).unwrap();
            assert_eq!(back, m, "round trip failed for {txt}");
            back.validate().unwrap();
        }
    }

    #[test]
    fn step_views() {
        let c = IntensityModel::constant(2.0, 0.0, 1.0).unwrap();
        assert!(c.as_step_function().is_some());
        let mix = IntensityModel::uniform_density(1.0).unwrap();
        assert!(mix.as_step_function().is_some());
        let ll = IntensityModel::LogLinear(LogLinearModel::scaled(vec![0.1], 1.0).unwrap());
        assert!(ll.as_step_function().is_none());
    }

    #[test]
    fn normalizer_audit_counts_on_this_thread() {
        let before = normalizer_audit::count();
        let basis = SplineBasis::uniform(1, 2, 0.0, 1.0).unwrap();
        let _ = LogSplineModel::normalized(basis, vec![0.5, -0.5]).unwrap();
        let _ = LogLinearModel::normalized(vec![0.3]).unwrap();
        assert_eq!(normalizer_audit::count(), before + 2);
    }
}

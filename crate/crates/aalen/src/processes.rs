//! Counting-process models with multiplicative compensator
//! `dLambda_t = Y_t lambda(t) dt`, their simulators, and the event-level
//! diagnostics used by the concentration and testing machinery.
//!
//! Three model families are covered:
//!
//! * **Poisson**: `n` aggregated copies of an inhomogeneous Poisson process,
//!   `Y_t == n` on the whole window.
//! * **Censoring**: `n` subjects with hazard `lambda`, observed until the
//!   minimum of the event time, an independent censoring time, and the
//!   horizon; `Y_t` counts subjects still at risk.
//! * **Markov**: `n` copies of a finite-state jump process; the counted
//!   events are transitions in a pooled set of (from, to) pairs and `Y_t`
//!   sums occupancy of the source states (with multiplicity).
//!
//! Simulation is exact: event times come from dominated thinning and
//! survival inversion, and exposure is recorded as an exact step function,
//! so no time grid enters the generated data.  Step functions are stored
//! right-continuous; the at-risk count of survival data is classically
//! left-continuous, so the stored exposure differs from `#\{Z_i >= t\}` only
//! at the finitely many drop times, which no integral or likelihood term
//! sees.

use rand::Rng as _;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::Omega;
use crate::error::{AalenError, Result};
use crate::intensity::IntensityModel;
use crate::quad;
use crate::rng;
use crate::step::StepFunction;

/// One counted event; `mark` labels the transition for Markov models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mark: Option<String>,
}

/// Per-subject outcome retained by the censoring simulator: the risk-set
/// exit time `z = min(event, censor)` (possibly beyond the horizon) and
/// whether the exit was an observed event.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoringUnit {
    pub z: f64,
    pub event: bool,
}

/// Side data a simulator keeps about the individual copies, for exact
/// decomposition checks; never serialized.
#[derive(Debug, Clone, PartialEq)]
pub enum RecordAudit {
    Censoring { units: Vec<CensoringUnit> },
    Markov { target_counts_per_copy: Vec<u64> },
}

/// One simulated data set: event times, exact exposure step function, and
/// provenance (seed + digest of the generating specification).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingRecord {
    pub model: String,
    pub n: u64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub events: Vec<Event>,
    pub exposure_breakpoints: Vec<f64>,
    pub exposure_values: Vec<f64>,
    pub seed: u64,
    pub spec_digest: String,
    #[serde(skip)]
    pub audit: Option<RecordAudit>,
}

impl CountingRecord {
    /// Total number of counted events.
    pub fn count(&self) -> u64 {
        self.events.len() as u64
    }

    /// The exposure process as a step function on `[0, horizon]`.
    pub fn exposure(&self) -> Result<StepFunction> {
        StepFunction::new(
            self.exposure_breakpoints.clone(),
            self.exposure_values.clone(),
        )
    }

    /// Structural validation: sorted in-window events, integer-valued
    /// non-negative exposure on `[0, horizon]`.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(AalenError::invalid("record needs n >= 1"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(AalenError::invalid("record horizon must be finite and > 0"));
        }
        for w in self.events.windows(2) {
            if w[0].time > w[1].time {
                return Err(AalenError::invalid("event times must be sorted"));
            }
        }
        if let Some(e) = self
            .events
            .iter()
            .find(|e| !(0.0..=self.horizon).contains(&e.time))
        {
            return Err(AalenError::invalid(format!(
                "event at {} outside [0, {}]",
                e.time, self.horizon
            )));
        }
        let exposure = self.exposure()?;
        if (exposure.start() - 0.0).abs() > 1e-12 || (exposure.end() - self.horizon).abs() > 1e-12 {
            return Err(AalenError::invalid("exposure must span [0, horizon]"));
        }
        for &v in exposure.values() {
            if v < 0.0 || v.fract() != 0.0 {
                return Err(AalenError::invalid(format!(
                    "exposure values must be non-negative integers, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Hex SHA-256 of the canonical JSON form of a specification.
pub fn spec_digest<T: Serialize>(spec: &T) -> String {
    let json = serde_json::to_string(spec).expect("serializable spec");
    let hash = Sha256::digest(json.as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// Independent censoring mechanism for survival models.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CensoringSpec {
    /// No censoring besides the horizon.
    #[default]
    None,
    /// Deterministic censoring at `time` (administrative end of follow-up).
    Fixed { time: f64 },
    /// Exponential censoring with the given rate.
    Exponential { rate: f64 },
}

impl CensoringSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            CensoringSpec::None => Ok(()),
            CensoringSpec::Fixed { time } => {
                if !(time.is_finite() && *time >= 0.0) {
                    Err(AalenError::invalid("fixed censoring time must be >= 0"))
                } else {
                    Ok(())
                }
            }
            CensoringSpec::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    Err(AalenError::invalid("exponential censoring rate must be > 0"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// `P(C >= t)`.
    pub fn survival(&self, t: f64) -> f64 {
        match self {
            CensoringSpec::None => 1.0,
            CensoringSpec::Fixed { time } => {
                if t <= *time {
                    1.0
                } else {
                    0.0
                }
            }
            CensoringSpec::Exponential { rate } => (-rate * t.max(0.0)).exp(),
        }
    }

    fn sample(&self, rng: &mut rng::Rng) -> f64 {
        match self {
            CensoringSpec::None => f64::INFINITY,
            CensoringSpec::Fixed { time } => *time,
            CensoringSpec::Exponential { rate } => rng.sample::<f64, _>(Exp1) / rate,
        }
    }
}

/// A labeled transition of a finite-state Markov model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionLabel {
    pub from: String,
    pub to: String,
}

/// One transition channel with its time-varying rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovTransition {
    pub from: String,
    pub to: String,
    pub rate: IntensityModel,
}

/// A finite-state Markov jump process specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovSpec {
    pub states: Vec<String>,
    /// Initial distribution over `states`.
    pub initial: Vec<f64>,
    pub transitions: Vec<MarkovTransition>,
}

impl MarkovSpec {
    fn state_index(&self, name: &str) -> Result<usize> {
        self.states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| AalenError::invalid(format!("unknown state \"{name}\"")))
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        if self.states.len() < 2 {
            return Err(AalenError::invalid("markov model needs at least two states"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.states {
            if !seen.insert(s) {
                return Err(AalenError::invalid(format!("duplicate state \"{s}\"")));
            }
        }
        if self.initial.len() != self.states.len() {
            return Err(AalenError::invalid(
                "initial distribution length must match the state count",
            ));
        }
        if self.initial.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
            return Err(AalenError::invalid("initial probabilities must be >= 0"));
        }
        let total: f64 = self.initial.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(AalenError::invalid(format!(
                "initial probabilities must sum to 1, got {total}"
            )));
        }
        for tr in &self.transitions {
            self.state_index(&tr.from)?;
            self.state_index(&tr.to)?;
            if tr.from == tr.to {
                return Err(AalenError::invalid(format!(
                    "self-transition \"{}\" is not allowed",
                    tr.from
                )));
            }
            tr.rate.validate()?;
            let d = tr.rate.domain();
            if d.lo > 0.0 || d.hi < horizon {
                return Err(AalenError::invalid(format!(
                    "rate for {} -> {} must cover [0, {horizon}]",
                    tr.from, tr.to
                )));
            }
        }
        Ok(())
    }
}

/// A complete generative model: family, true intensity, size, and window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Poisson {
        lambda0: IntensityModel,
        n: u64,
        horizon: f64,
        /// Optional dominating bound for thinning; computed from the
        /// intensity's supremum when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda_max: Option<f64>,
    },
    Censoring {
        hazard: IntensityModel,
        #[serde(default)]
        censoring: CensoringSpec,
        n: u64,
        horizon: f64,
    },
    Markov {
        chain: MarkovSpec,
        /// Pooled transition channels whose counts form the observed
        /// process (with multiplicity on shared source states).
        target: Vec<TransitionLabel>,
        n: u64,
        horizon: f64,
    },
}

/// A model family with the size `n` left open, for studies that sweep `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelTemplate {
    Poisson {
        lambda0: IntensityModel,
        horizon: f64,
    },
    Censoring {
        hazard: IntensityModel,
        #[serde(default)]
        censoring: CensoringSpec,
        horizon: f64,
    },
    Markov {
        chain: MarkovSpec,
        target: Vec<TransitionLabel>,
        horizon: f64,
    },
}

impl ModelTemplate {
    pub fn instantiate(&self, n: u64) -> ModelSpec {
        match self.clone() {
            ModelTemplate::Poisson { lambda0, horizon } => ModelSpec::Poisson {
                lambda0,
                n,
                horizon,
                lambda_max: None,
            },
            ModelTemplate::Censoring {
                hazard,
                censoring,
                horizon,
            } => ModelSpec::Censoring {
                hazard,
                censoring,
                n,
                horizon,
            },
            ModelTemplate::Markov {
                chain,
                target,
                horizon,
            } => ModelSpec::Markov {
                chain,
                target,
                n,
                horizon,
            },
        }
    }

    pub fn horizon(&self) -> f64 {
        match self {
            ModelTemplate::Poisson { horizon, .. }
            | ModelTemplate::Censoring { horizon, .. }
            | ModelTemplate::Markov { horizon, .. } => *horizon,
        }
    }
}

impl ModelSpec {
    pub fn family(&self) -> &'static str {
        match self {
            ModelSpec::Poisson { .. } => "poisson",
            ModelSpec::Censoring { .. } => "censoring",
            ModelSpec::Markov { .. } => "markov",
        }
    }

    pub fn n(&self) -> u64 {
        match self {
            ModelSpec::Poisson { n, .. }
            | ModelSpec::Censoring { n, .. }
            | ModelSpec::Markov { n, .. } => *n,
        }
    }

    pub fn horizon(&self) -> f64 {
        match self {
            ModelSpec::Poisson { horizon, .. }
            | ModelSpec::Censoring { horizon, .. }
            | ModelSpec::Markov { horizon, .. } => *horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n() == 0 {
            return Err(AalenError::invalid("model needs n >= 1"));
        }
        let horizon = self.horizon();
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(AalenError::invalid("horizon must be finite and > 0"));
        }
        match self {
            ModelSpec::Poisson {
                lambda0,
                lambda_max,
                ..
            } => {
                lambda0.validate()?;
                let d = lambda0.domain();
                if d.lo > 0.0 || d.hi < horizon {
                    return Err(AalenError::invalid(format!(
                        "lambda0 domain [{}, {}] must cover [0, {horizon}]",
                        d.lo, d.hi
                    )));
                }
                if let Some(b) = lambda_max {
                    if !(b.is_finite() && *b > 0.0) {
                        return Err(AalenError::invalid("lambda_max must be finite and > 0"));
                    }
                }
            }
            ModelSpec::Censoring {
                hazard, censoring, ..
            } => {
                hazard.validate()?;
                censoring.validate()?;
                let d = hazard.domain();
                if d.lo > 0.0 || d.hi < horizon {
                    return Err(AalenError::invalid(format!(
                        "hazard domain [{}, {}] must cover [0, {horizon}]",
                        d.lo, d.hi
                    )));
                }
            }
            ModelSpec::Markov { chain, target, .. } => {
                chain.validate(horizon)?;
                if target.is_empty() {
                    return Err(AalenError::invalid("markov target set must be non-empty"));
                }
                let mut shared_rate: Option<&IntensityModel> = None;
                for lbl in target {
                    let Some(tr) = chain
                        .transitions
                        .iter()
                        .find(|tr| tr.from == lbl.from && tr.to == lbl.to)
                    else {
                        return Err(AalenError::invalid(format!(
                            "target {} -> {} is not a transition of the chain",
                            lbl.from, lbl.to
                        )));
                    };
                    // The pooled target process is multiplicative (one
                    // intensity times a summed occupancy) only when every
                    // target transition runs at the same rate.
                    match shared_rate {
                        None => shared_rate = Some(&tr.rate),
                        Some(rate) if *rate == tr.rate => {}
                        Some(_) => {
                            return Err(AalenError::invalid(
                                "target transitions must share one rate model",
                            ))
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// The intensity the counted process actually runs at: the event rate
    /// for the Poisson family, the hazard for the censoring family, and
    /// the shared target-transition rate for the Markov family.
    pub fn lambda_true(&self) -> Result<&IntensityModel> {
        match self {
            ModelSpec::Poisson { lambda0, .. } => Ok(lambda0),
            ModelSpec::Censoring { hazard, .. } => Ok(hazard),
            ModelSpec::Markov { chain, target, .. } => {
                let lbl = target.first().ok_or_else(|| {
                    AalenError::invalid("markov target set must be non-empty")
                })?;
                chain
                    .transitions
                    .iter()
                    .find(|tr| tr.from == lbl.from && tr.to == lbl.to)
                    .map(|tr| &tr.rate)
                    .ok_or_else(|| {
                        AalenError::invalid(format!(
                            "target {} -> {} is not a transition of the chain",
                            lbl.from, lbl.to
                        ))
                    })
            }
        }
    }

    /// The window over which the mean exposure is bounded away from zero:
    /// `[0, horizon]`, shortened to the fixed censoring time when one is
    /// inside the window.
    pub fn omega(&self) -> Result<Omega> {
        let horizon = self.horizon();
        match self {
            ModelSpec::Censoring {
                censoring: CensoringSpec::Fixed { time },
                ..
            } if *time < horizon => {
                if *time <= 0.0 {
                    return Err(AalenError::invalid(
                        "fixed censoring at 0 leaves an empty observation window",
                    ));
                }
                Omega::unit(0.0, *time)
            }
            _ => Omega::unit(0.0, horizon),
        }
    }

    /// The deterministic limit `E[Y_t] / n` of the normalized exposure.
    pub fn mu_tilde(&self) -> Result<MuTilde> {
        let omega = self.omega()?;
        Ok(match self {
            ModelSpec::Poisson { .. } => MuTilde::Constant { value: 1.0, omega },
            ModelSpec::Censoring {
                hazard, censoring, ..
            } => MuTilde::Survival {
                hazard: hazard.clone(),
                censoring: censoring.clone(),
                omega,
            },
            ModelSpec::Markov { chain, target, .. } => {
                occupancy_table(chain, target, self.horizon(), omega)?
            }
        })
    }

    /// Bundle the window, mean exposure, and its bounds for diagnostics.
    pub fn environment(&self, alpha: f64) -> Result<ModelEnvironment> {
        ModelEnvironment::new(self.mu_tilde()?, self.n(), alpha)
    }

    /// Draw one record.  Deterministic in `(self, seed)`.
    pub fn simulate(&self, seed: u64) -> Result<CountingRecord> {
        self.validate()?;
        match self {
            ModelSpec::Poisson {
                lambda0,
                n,
                horizon,
                lambda_max,
            } => simulate_poisson(self, lambda0, *n, *horizon, *lambda_max, seed),
            ModelSpec::Censoring {
                hazard,
                censoring,
                n,
                horizon,
            } => simulate_censoring(self, hazard, censoring, *n, *horizon, seed),
            ModelSpec::Markov {
                chain,
                target,
                n,
                horizon,
            } => simulate_markov(self, chain, target, *n, *horizon, seed),
        }
    }
}

// ---------------------------------------------------------------------------
// Mean exposure and environment
// ---------------------------------------------------------------------------

/// The deterministic function `mu_tilde(t) = E[Y_t] / n`, zero off its
/// window.
#[derive(Debug, Clone)]
pub enum MuTilde {
    Constant {
        value: f64,
        omega: Omega,
    },
    /// `P(X >= t) P(C >= t)` for the censoring model.
    Survival {
        hazard: IntensityModel,
        censoring: CensoringSpec,
        omega: Omega,
    },
    /// Tabulated values on an equally spaced grid with linear
    /// interpolation (Markov occupancy, integrated by Runge-Kutta).
    Table {
        times: Vec<f64>,
        values: Vec<f64>,
        omega: Omega,
    },
}

impl MuTilde {
    pub fn omega(&self) -> &Omega {
        match self {
            MuTilde::Constant { omega, .. }
            | MuTilde::Survival { omega, .. }
            | MuTilde::Table { omega, .. } => omega,
        }
    }

    /// Pointwise value; zero outside the window.
    pub fn value(&self, t: f64) -> f64 {
        if !self.omega().contains(t) {
            return 0.0;
        }
        match self {
            MuTilde::Constant { value, .. } => *value,
            MuTilde::Survival {
                hazard, censoring, ..
            } => (-hazard.integrate(0.0, t)).exp() * censoring.survival(t),
            MuTilde::Table { times, values, .. } => {
                let i = times.partition_point(|&x| x <= t);
                if i == 0 {
                    values[0]
                } else if i >= times.len() {
                    *values.last().unwrap()
                } else {
                    let (t0, t1) = (times[i - 1], times[i]);
                    let w = (t - t0) / (t1 - t0);
                    values[i - 1] * (1.0 - w) + values[i] * w
                }
            }
        }
    }

    /// Points where the value is non-smooth inside the window.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            MuTilde::Constant { .. } | MuTilde::Table { .. } => Vec::new(),
            MuTilde::Survival { hazard, .. } => hazard.breakpoints(),
        }
    }

    /// Infimum and supremum over the window.  Exact for the constant and
    /// survival forms (the latter is non-increasing), grid minima for
    /// tables.
    pub fn range(&self) -> (f64, f64) {
        match self {
            MuTilde::Constant { value, .. } => (*value, *value),
            MuTilde::Survival { omega, .. } => {
                let lo = self.value(omega.hull().lo);
                let hi_end = self.value(omega.hull().hi);
                (hi_end, lo)
            }
            MuTilde::Table { values, .. } => {
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        }
    }
}

/// Occupancy probabilities of the target source states, integrated by
/// classical fourth-order Runge-Kutta on a fixed grid.
fn occupancy_table(
    chain: &MarkovSpec,
    target: &[TransitionLabel],
    horizon: f64,
    omega: Omega,
) -> Result<MuTilde> {
    const GRID: usize = 2048;
    let k = chain.states.len();
    let mut rates: Vec<(usize, usize, &IntensityModel)> = Vec::new();
    for tr in &chain.transitions {
        rates.push((
            chain.state_index(&tr.from)?,
            chain.state_index(&tr.to)?,
            &tr.rate,
        ));
    }
    let mut weights = vec![0.0; k];
    for lbl in target {
        weights[chain.state_index(&lbl.from)?] += 1.0;
    }
    let deriv = |t: f64, p: &[f64]| -> Vec<f64> {
        let mut d = vec![0.0; k];
        for &(from, to, rate) in &rates {
            let flow = p[from] * rate.eval(t);
            d[from] -= flow;
            d[to] += flow;
        }
        d
    };
    let mut p = chain.initial.clone();
    let h = horizon / GRID as f64;
    let mut times = Vec::with_capacity(GRID + 1);
    let mut values = Vec::with_capacity(GRID + 1);
    let project = |p: &[f64]| -> f64 { p.iter().zip(&weights).map(|(a, w)| a * w).sum() };
    times.push(0.0);
    values.push(project(&p));
    for i in 0..GRID {
        let t = i as f64 * h;
        let k1 = deriv(t, &p);
        let p2: Vec<f64> = p.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
        let k2 = deriv(t + 0.5 * h, &p2);
        let p3: Vec<f64> = p.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
        let k3 = deriv(t + 0.5 * h, &p3);
        let p4: Vec<f64> = p.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
        let k4 = deriv(t + h, &p4);
        for j in 0..k {
            p[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        times.push((i + 1) as f64 * h);
        values.push(project(&p));
    }
    Ok(MuTilde::Table {
        times,
        values,
        omega,
    })
}

/// Observation window, mean exposure, and the constants bounding it.
#[derive(Debug, Clone)]
pub struct ModelEnvironment {
    pub omega: Omega,
    pub mu: MuTilde,
    pub n: u64,
    /// Relative half-width of the exposure concentration band.
    pub alpha: f64,
    /// `inf_Omega mu_tilde`.
    pub m1: f64,
    /// `sup_Omega mu_tilde`.
    pub m2: f64,
}

impl ModelEnvironment {
    pub fn new(mu: MuTilde, n: u64, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0 && alpha <= 1.0) {
            return Err(AalenError::pre(format!(
                "alpha must lie in (0, 1], got {alpha}"
            )));
        }
        if n == 0 {
            return Err(AalenError::pre("environment needs n >= 1"));
        }
        let (m1, m2) = mu.range();
        if !(m1.is_finite() && m1 > 0.0 && m2.is_finite() && m2 >= m1) {
            return Err(AalenError::invalid(format!(
                "mean exposure must be bounded away from 0 on its window, got [{m1}, {m2}]"
            )));
        }
        Ok(ModelEnvironment {
            omega: mu.omega().clone(),
            mu,
            n,
            alpha,
            m1,
            m2,
        })
    }

    /// `mu_n(t) = n mu_tilde(t)`.
    pub fn mu_n(&self, t: f64) -> f64 {
        self.n as f64 * self.mu.value(t)
    }
}

// ---------------------------------------------------------------------------
// Simulators
// ---------------------------------------------------------------------------

fn simulate_poisson(
    spec: &ModelSpec,
    lambda0: &IntensityModel,
    n: u64,
    horizon: f64,
    lambda_max: Option<f64>,
    seed: u64,
) -> Result<CountingRecord> {
    let bound = match lambda_max {
        Some(b) => b,
        None => dominating_bound(lambda0),
    };
    let mut rng = rng::stream(seed, 0);
    let total_rate = n as f64 * bound;
    let mut events = Vec::new();
    let mut t = 0.0_f64;
    loop {
        t += rng.sample::<f64, _>(Exp1) / total_rate;
        if t > horizon {
            break;
        }
        let v = lambda0.eval(t);
        if v > bound * (1.0 + 1e-9) {
            return Err(AalenError::BoundExceeded {
                bound,
                at: t,
                value: v,
            });
        }
        if rng.random::<f64>() * bound < v {
            events.push(Event {
                time: t,
                mark: None,
            });
        }
    }
    Ok(CountingRecord {
        model: "poisson".into(),
        n,
        horizon,
        events,
        exposure_breakpoints: vec![0.0, horizon],
        exposure_values: vec![n as f64],
        seed,
        spec_digest: spec_digest(spec),
        audit: None,
    })
}

/// A thinning bound for the intensity: its supremum, padded when the
/// supremum itself comes from a grid scan rather than a closed form.
fn dominating_bound(model: &IntensityModel) -> f64 {
    let sup = model.sup();
    match model {
        IntensityModel::LogSpline(_) | IntensityModel::LogLinear(_) => sup * 1.02 + 1e-12,
        _ => sup,
    }
}

/// Invert the cumulative hazard: smallest `x` with `Lambda(x) = target`,
/// assuming `Lambda(hi) >= target`.
fn invert_cumulative_hazard(hazard: &IntensityModel, target: f64, hi: f64) -> f64 {
    if let IntensityModel::ClosedForm(cf) = hazard {
        // Constant hazard: direct division.
        if cf.id == "constant" {
            if let Some(level) = cf.params.get("level") {
                let rate = cf.scale * level;
                if rate > 0.0 {
                    return (target / rate).min(hi);
                }
            }
        }
    }
    quad::bisect_root(
        |x| hazard.integrate(0.0, x) - target,
        0.0,
        hi,
        1e-13 * hi.max(1.0),
    )
}

fn simulate_censoring(
    spec: &ModelSpec,
    hazard: &IntensityModel,
    censoring: &CensoringSpec,
    n: u64,
    horizon: f64,
    seed: u64,
) -> Result<CountingRecord> {
    let mut rng = rng::stream(seed, 0);
    let total_hazard = hazard.integrate(0.0, horizon);
    let mut units = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let e = rng.sample::<f64, _>(Exp1);
        let x = if e >= total_hazard {
            f64::INFINITY
        } else {
            invert_cumulative_hazard(hazard, e, horizon)
        };
        let c = censoring.sample(&mut rng);
        let z = x.min(c);
        units.push(CensoringUnit {
            z,
            event: x <= c && x <= horizon,
        });
    }
    Ok(record_from_units(spec, n, horizon, seed, units))
}

/// Assemble a censoring record (events, exact exposure) from per-subject
/// outcomes.
pub(crate) fn record_from_units(
    spec: &ModelSpec,
    n: u64,
    horizon: f64,
    seed: u64,
    units: Vec<CensoringUnit>,
) -> CountingRecord {
    let mut events: Vec<Event> = units
        .iter()
        .filter(|u| u.event)
        .map(|u| Event {
            time: u.z,
            mark: None,
        })
        .collect();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));

    // Risk-set drops strictly inside the window; a subject with z >= horizon
    // stays at risk through the end.
    let mut drops: Vec<f64> = units
        .iter()
        .map(|u| u.z)
        .filter(|&z| z < horizon)
        .collect();
    drops.sort_by(f64::total_cmp);
    let mut breaks = vec![0.0];
    let mut values = Vec::new();
    let mut remaining = n as f64;
    let mut i = 0;
    while i < drops.len() {
        let t = drops[i];
        let mut mult = 0;
        while i < drops.len() && drops[i] == t {
            mult += 1;
            i += 1;
        }
        if t > 0.0 {
            values.push(remaining);
            breaks.push(t);
        }
        remaining -= mult as f64;
    }
    values.push(remaining);
    breaks.push(horizon);

    CountingRecord {
        model: "censoring".into(),
        n,
        horizon,
        events,
        exposure_breakpoints: breaks,
        exposure_values: values,
        seed,
        spec_digest: spec_digest(spec),
        audit: Some(RecordAudit::Censoring { units }),
    }
}

fn simulate_markov(
    spec: &ModelSpec,
    chain: &MarkovSpec,
    target: &[TransitionLabel],
    n: u64,
    horizon: f64,
    seed: u64,
) -> Result<CountingRecord> {
    let k = chain.states.len();
    let mut outgoing: Vec<Vec<(usize, &IntensityModel)>> = vec![Vec::new(); k];
    for tr in &chain.transitions {
        let from = chain.state_index(&tr.from)?;
        let to = chain.state_index(&tr.to)?;
        outgoing[from].push((to, &tr.rate));
    }
    let bounds: Vec<f64> = outgoing
        .iter()
        .map(|outs| outs.iter().map(|(_, r)| dominating_bound(r)).sum())
        .collect();
    let mut target_weight = vec![0u64; k];
    let mut is_target = vec![vec![false; k]; k];
    for lbl in target {
        let from = chain.state_index(&lbl.from)?;
        let to = chain.state_index(&lbl.to)?;
        target_weight[from] += 1;
        is_target[from][to] = true;
    }

    // (time, from, to) across all copies.
    let mut transitions: Vec<(f64, usize, usize)> = Vec::new();
    let mut initial_counts = vec![0u64; k];
    let mut target_counts_per_copy = vec![0u64; n as usize];
    for copy in 0..n {
        let mut rng = rng::stream(seed, 1 + copy);
        let mut s = sample_categorical(&mut rng, &chain.initial);
        initial_counts[s] += 1;
        let mut t = 0.0_f64;
        loop {
            let b = bounds[s];
            if b <= 0.0 {
                break;
            }
            t += rng.sample::<f64, _>(Exp1) / b;
            if t >= horizon {
                break;
            }
            let total: f64 = outgoing[s].iter().map(|(_, r)| r.eval(t)).sum();
            if total > b * (1.0 + 1e-9) {
                return Err(AalenError::BoundExceeded {
                    bound: b,
                    at: t,
                    value: total,
                });
            }
            if rng.random::<f64>() * b < total {
                // Jump: pick the channel proportionally to its rate.
                let mut u = rng.random::<f64>() * total;
                let mut next = outgoing[s].last().map(|(j, _)| *j).unwrap();
                for (j, r) in &outgoing[s] {
                    u -= r.eval(t);
                    if u <= 0.0 {
                        next = *j;
                        break;
                    }
                }
                if is_target[s][next] {
                    target_counts_per_copy[copy as usize] += 1;
                }
                transitions.push((t, s, next));
                s = next;
            }
        }
    }
    transitions.sort_by(|a, b| a.0.total_cmp(&b.0));

    let events: Vec<Event> = transitions
        .iter()
        .filter(|&&(_, from, to)| is_target[from][to])
        .map(|&(t, from, to)| Event {
            time: t,
            mark: Some(format!("{}->{}", chain.states[from], chain.states[to])),
        })
        .collect();

    // Exposure: occupancy of target source states, with multiplicity.
    let mut counts = initial_counts;
    let exposure_of = |counts: &[u64]| -> f64 {
        counts
            .iter()
            .zip(&target_weight)
            .map(|(&c, &w)| (c * w) as f64)
            .sum()
    };
    let mut breaks = vec![0.0];
    let mut values = vec![exposure_of(&counts)];
    for &(t, from, to) in &transitions {
        counts[from] -= 1;
        counts[to] += 1;
        let v = exposure_of(&counts);
        if v != *values.last().unwrap() && t > 0.0 && t < horizon {
            breaks.push(t);
            values.push(v);
        }
    }
    breaks.push(horizon);

    Ok(CountingRecord {
        model: "markov".into(),
        n,
        horizon,
        events,
        exposure_breakpoints: breaks,
        exposure_values: values,
        seed,
        spec_digest: spec_digest(spec),
        audit: Some(RecordAudit::Markov {
            target_counts_per_copy,
        }),
    })
}

fn sample_categorical(rng: &mut rng::Rng, probs: &[f64]) -> usize {
    let mut u = rng.random::<f64>();
    for (i, &p) in probs.iter().enumerate() {
        u -= p;
        if u <= 0.0 {
            return i;
        }
    }
    probs.len() - 1
}

// ---------------------------------------------------------------------------
// Exposure concentration event and moment diagnostics
// ---------------------------------------------------------------------------

/// Outcome of checking one record against the exposure concentration event:
/// on the window, `|Y/n - mu_tilde|` must stay within `alpha * m1`; off the
/// window (inside the horizon), the exposure must vanish.
#[derive(Debug, Clone, Serialize)]
pub struct GammaCheck {
    /// `sup_Omega |Y_t/n - mu_tilde(t)|`, scanned on a grid plus all
    /// breakpoints of both functions.
    pub sup_gap: f64,
    /// `alpha * m1`.
    pub budget: f64,
    /// Largest exposure value found off the window (0 when the window is
    /// the whole horizon).
    pub off_window_max: f64,
    pub within_band: bool,
    pub vanishes_off_window: bool,
    pub holds: bool,
}

/// Evaluate the concentration event for one record.
pub fn check_gamma_event(record: &CountingRecord, env: &ModelEnvironment) -> Result<GammaCheck> {
    record.validate()?;
    if record.n != env.n {
        return Err(AalenError::pre(format!(
            "record has n = {}, environment has n = {}",
            record.n, env.n
        )));
    }
    let exposure = record.exposure()?;
    let n = record.n as f64;
    let mut sup_gap = f64::NEG_INFINITY;
    for iv in env.omega.intervals() {
        let mut extra: Vec<f64> = exposure.breaks().to_vec();
        extra.extend(env.mu.breakpoints());
        // The at-risk / occupancy process is predictable (left-continuous):
        // compare its left limits against mu_tilde, not the stored
        // right-continuous step values, or a drop sitting exactly on the
        // window edge would be misread as an excursion.
        let gap = quad::sup_on_grid(
            |t| (exposure.value_before(t) / n - env.mu.value(t)).abs(),
            iv.lo,
            iv.hi,
            quad::SCAN_GRID,
            extra,
        );
        sup_gap = sup_gap.max(gap);
    }
    let mut off_window_max = 0.0_f64;
    for iv in env.omega.complement_within(0.0, record.horizon) {
        off_window_max = off_window_max.max(exposure.sup_over(iv.lo, iv.hi));
    }
    let budget = env.alpha * env.m1;
    let within_band = sup_gap <= budget;
    let vanishes_off_window = off_window_max == 0.0;
    Ok(GammaCheck {
        sup_gap,
        budget,
        off_window_max,
        within_band,
        vanishes_off_window,
        holds: within_band && vanishes_off_window,
    })
}

/// Monte Carlo estimate of the `k`-th moment condition ratio
/// `E[(\int_Omega (Y_t - n mu_tilde(t))^2 dt)^k] / n^k` for one model size.
#[derive(Debug, Clone, Serialize)]
pub struct MomentEstimate {
    pub n: u64,
    pub k: u32,
    pub replicates: usize,
    /// Mean of the normalized statistic across replicates.
    pub mean: f64,
    /// Monte Carlo standard error of the mean.
    pub se: f64,
}

/// Estimate the normalized moment statistic by simulation.
pub fn moment_condition_estimate(
    spec: &ModelSpec,
    k: u32,
    replicates: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    if k == 0 {
        return Err(AalenError::pre("moment order k must be >= 1"));
    }
    if replicates == 0 {
        return Err(AalenError::pre("need at least one replicate"));
    }
    spec.validate()?;
    let mu = spec.mu_tilde()?;
    let n = spec.n();
    let nf = n as f64;
    let mut samples = Vec::with_capacity(replicates);
    for rep in 0..replicates {
        let record = spec.simulate(seed.wrapping_add(rep as u64))?;
        let exposure = record.exposure()?;
        let mut integral = 0.0;
        for iv in mu.omega().intervals() {
            for (lo, hi, v) in exposure.pieces() {
                let a = lo.max(iv.lo);
                let b = hi.min(iv.hi);
                if b <= a {
                    continue;
                }
                let pts = quad::piece_points(a, b, mu.breakpoints());
                integral += quad::integrate_pieces(
                    |t| {
                        let d = v - nf * mu.value(t);
                        d * d
                    },
                    &pts,
                );
            }
        }
        samples.push(integral.powi(k as i32) / nf.powi(k as i32));
    }
    let mean = samples.iter().sum::<f64>() / replicates as f64;
    let var = samples
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .sum::<f64>()
        / (replicates.max(2) - 1) as f64;
    Ok(MomentEstimate {
        n,
        k,
        replicates,
        mean,
        se: (var / replicates as f64).sqrt(),
    })
}

/// The moment statistic across a grid of model sizes, with a bounded-ratio
/// verdict: the largest per-`n` mean must be within a factor 2 of the
/// smallest.
#[derive(Debug, Clone, Serialize)]
pub struct MomentSweep {
    pub rows: Vec<MomentEstimate>,
    pub max_over_min: f64,
    pub bounded: bool,
}

pub fn moment_condition_sweep(
    template: &ModelTemplate,
    k: u32,
    n_grid: &[u64],
    replicates: usize,
    seed: u64,
) -> Result<MomentSweep> {
    if n_grid.is_empty() {
        return Err(AalenError::pre("need a non-empty n grid"));
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for (i, &n) in n_grid.iter().enumerate() {
        let spec = template.instantiate(n);
        rows.push(moment_condition_estimate(
            &spec,
            k,
            replicates,
            seed.wrapping_add((i as u64) << 32),
        )?);
    }
    let max = rows.iter().map(|r| r.mean).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.mean).fold(f64::INFINITY, f64::min);
    let max_over_min = if min == 0.0 && max == 0.0 {
        1.0
    } else {
        max / min
    };
    Ok(MomentSweep {
        rows,
        max_over_min,
        bounded: max_over_min <= 2.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Interval;
    use crate::intensity::IntensityModel;
    use approx::assert_relative_eq;

    fn poisson_spec(level: f64, n: u64) -> ModelSpec {
        ModelSpec::Poisson {
            lambda0: IntensityModel::constant(level, 0.0, 1.0).unwrap(),
            n,
            horizon: 1.0,
            lambda_max: None,
        }
    }

    fn censoring_spec(n: u64) -> ModelSpec {
        ModelSpec::Censoring {
            hazard: IntensityModel::constant(1.0, 0.0, 1.0).unwrap(),
            censoring: CensoringSpec::None,
            n,
            horizon: 1.0,
        }
    }

    #[test]
    fn poisson_reproducible_and_seed_sensitive() {
        let spec = poisson_spec(2.0, 5);
        let a = spec.simulate(7).unwrap();
        let b = spec.simulate(7).unwrap();
        let c = spec.simulate(8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.events, c.events);
        assert_eq!(a.exposure_values, vec![5.0]);
        a.validate().unwrap();
    }

    #[test]
    fn poisson_mean_count_matches_rate_mass() {
        // E[N_T] = n * mass(lambda0) = 10 * 2 = 20.
        let spec = poisson_spec(2.0, 10);
        let reps = 400;
        let mut total = 0u64;
        for r in 0..reps {
            total += spec.simulate(1000 + r).unwrap().count();
        }
        let mean = total as f64 / reps as f64;
        let se = (20.0_f64 / reps as f64).sqrt();
        assert!(
            (mean - 20.0).abs() < 4.0 * se,
            "mean {mean} off by more than 4 SE ({se})"
        );
    }

    #[test]
    fn poisson_count_distribution_passes_chi_square() {
        // With a constant rate c the total count is Poisson(n c T); bin
        // the counts from 2000 replicates (upper tail pooled so every
        // expected count is >= 5) and test the fit at level 0.01.
        use statrs::distribution::{Discrete, Poisson};
        let spec = poisson_spec(0.8, 5); // mean 4
        let reps = 2000usize;
        let mean = 4.0;
        let cut = 10usize; // bins 0..=9 plus a pooled >= 10 tail
        let mut observed = vec![0u64; cut + 1];
        for r in 0..reps {
            let k = spec.simulate(40_000 + r as u64).unwrap().count() as usize;
            observed[k.min(cut)] += 1;
        }
        let pois = Poisson::new(mean).unwrap();
        let mut expected: Vec<f64> = (0..cut as u64)
            .map(|k| reps as f64 * pois.pmf(k))
            .collect();
        expected.push(reps as f64 - expected.iter().sum::<f64>());
        assert!(expected.iter().all(|&e| e >= 5.0));
        let test = crate::stats::chi_square_gof(&observed, &expected).unwrap();
        assert!(
            test.p_value > 0.01,
            "chi-square p = {} (stat {})",
            test.p_value,
            test.statistic
        );
    }

    #[test]
    fn poisson_event_times_have_the_right_first_moment() {
        // Decreasing triangular rate 2(1-t): event times have density
        // 2(1-t) on [0,1], mean 1/3.
        let spec = ModelSpec::Poisson {
            lambda0: IntensityModel::linear_decreasing(2.0, 0.0, 1.0).unwrap(),
            n: 50,
            horizon: 1.0,
            lambda_max: None,
        };
        let mut times = Vec::new();
        for r in 0..200 {
            times.extend(spec.simulate(77 + r).unwrap().events.iter().map(|e| e.time));
        }
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        // Var of the triangular density is 1/18.
        let se = (1.0 / 18.0 / times.len() as f64).sqrt();
        assert!(
            (mean - 1.0 / 3.0).abs() < 4.0 * se,
            "mean event time {mean}, want 1/3 within 4 x {se}"
        );
    }

    #[test]
    fn poisson_rejects_bad_dominating_bound() {
        let spec = ModelSpec::Poisson {
            lambda0: IntensityModel::constant(2.0, 0.0, 1.0).unwrap(),
            n: 20,
            horizon: 1.0,
            lambda_max: Some(1.0),
        };
        let err = spec.simulate(3).unwrap_err();
        assert!(matches!(err, AalenError::BoundExceeded { .. }));
    }

    #[test]
    fn censoring_exposure_counts_at_risk() {
        let spec = censoring_spec(300);
        let record = spec.simulate(11).unwrap();
        record.validate().unwrap();
        let exposure = record.exposure().unwrap();
        assert_eq!(exposure.value_at(0.0), 300.0);
        let Some(RecordAudit::Censoring { units }) = &record.audit else {
            panic!("censoring audit expected");
        };
        // The stored exposure is the right-continuous version of
        // #{z_i >= t}; away from drop times they agree exactly.
        for probe in [0.1, 0.3, 0.55, 0.79, 0.999] {
            let manual = units.iter().filter(|u| u.z >= probe).count() as f64;
            assert_eq!(exposure.value_at(probe), manual, "at t = {probe}");
        }
        // Events are a subset of the drops.
        assert_eq!(
            record.count() as usize,
            units.iter().filter(|u| u.event).count()
        );
    }

    #[test]
    fn censoring_survival_fraction_matches_exponential() {
        // Constant hazard 1 on [0,1], no censoring: P(still at risk at T)
        // = e^{-1}.
        let spec = censoring_spec(500);
        let reps = 60;
        let mut frac = 0.0;
        for r in 0..reps {
            let record = spec.simulate(400 + r).unwrap();
            let exposure = record.exposure().unwrap();
            frac += exposure.value_at(1.0) / 500.0;
        }
        frac /= reps as f64;
        let p = (-1.0_f64).exp();
        let se = (p * (1.0 - p) / (500.0 * reps as f64)).sqrt();
        assert!(
            (frac - p).abs() < 4.0 * se,
            "survivor fraction {frac}, want {p} within 4 x {se}"
        );
    }

    #[test]
    fn censoring_at_zero_empties_the_risk_set() {
        let spec = ModelSpec::Censoring {
            hazard: IntensityModel::constant(1.0, 0.0, 1.0).unwrap(),
            censoring: CensoringSpec::Fixed { time: 0.0 },
            n: 50,
            horizon: 1.0,
        };
        let record = spec.simulate(5).unwrap();
        assert_eq!(record.count(), 0);
        let exposure = record.exposure().unwrap();
        for probe in [0.0, 0.2, 0.5, 1.0] {
            assert_eq!(exposure.value_at(probe), 0.0);
        }
    }

    #[test]
    fn fixed_censoring_shrinks_the_window() {
        let spec = ModelSpec::Censoring {
            hazard: IntensityModel::constant(1.0, 0.0, 1.0).unwrap(),
            censoring: CensoringSpec::Fixed { time: 0.5 },
            n: 40,
            horizon: 1.0,
        };
        let omega = spec.omega().unwrap();
        assert_eq!(omega.hull(), Interval { lo: 0.0, hi: 0.5 });
        // Beyond the censoring time nobody is at risk.
        let record = spec.simulate(9).unwrap();
        let exposure = record.exposure().unwrap();
        assert_eq!(exposure.sup_over(0.5 + 1e-9, 1.0), 0.0);
    }

    fn flip_flop(n: u64) -> ModelSpec {
        ModelSpec::Markov {
            chain: MarkovSpec {
                states: vec!["a".into(), "b".into()],
                initial: vec![1.0, 0.0],
                transitions: vec![
                    MarkovTransition {
                        from: "a".into(),
                        to: "b".into(),
                        rate: IntensityModel::constant(1.0, 0.0, 1.0).unwrap(),
                    },
                    MarkovTransition {
                        from: "b".into(),
                        to: "a".into(),
                        rate: IntensityModel::constant(1.0, 0.0, 1.0).unwrap(),
                    },
                ],
            },
            target: vec![TransitionLabel {
                from: "a".into(),
                to: "b".into(),
            }],
            n,
            horizon: 1.0,
        }
    }

    #[test]
    fn markov_occupancy_matches_closed_form() {
        // Symmetric two-state chain started in "a":
        // p_a(t) = 1/2 + e^{-2t}/2.
        let spec = flip_flop(10);
        let mu = spec.mu_tilde().unwrap();
        // The table interpolates linearly between Runge-Kutta nodes, so the
        // resolution is set by the interpolation error, about 1e-7 here.
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            let exact = 0.5 + 0.5 * (-2.0 * t).exp();
            assert_relative_eq!(mu.value(t), exact, epsilon = 1e-6);
        }
    }

    #[test]
    fn markov_mean_exposure_and_counts() {
        let spec = flip_flop(200);
        let reps = 40;
        let mut occ = 0.0;
        let mut count = 0u64;
        for r in 0..reps {
            let record = spec.simulate(800 + r).unwrap();
            record.validate().unwrap();
            occ += record.exposure().unwrap().value_at(0.5) / 200.0;
            count += record.count();
        }
        occ /= reps as f64;
        let exact = 0.5 + 0.5 * (-1.0_f64).exp();
        let se = (exact * (1.0 - exact) / (200.0 * reps as f64)).sqrt();
        assert!(
            (occ - exact).abs() < 4.0 * se,
            "occupancy {occ}, want {exact} within 4 x {se}"
        );
        // E[N_T] = n \int_0^1 p_a dt = n (1/2 + (1 - e^{-2})/4).
        let expected = 200.0 * (0.5 + (1.0 - (-2.0_f64).exp()) / 4.0);
        let mean = count as f64 / reps as f64;
        let se_count = (expected / reps as f64).sqrt(); // Poisson-scale noise
        assert!(
            (mean - expected).abs() < 4.0 * se_count,
            "mean count {mean}, want {expected} within 4 x {se_count}"
        );
    }

    #[test]
    fn markov_aggregate_equals_per_copy_sum() {
        let record = flip_flop(25).simulate(4).unwrap();
        let Some(RecordAudit::Markov {
            target_counts_per_copy,
        }) = &record.audit
        else {
            panic!("markov audit expected");
        };
        assert_eq!(record.count(), target_counts_per_copy.iter().sum::<u64>());
        assert!(record.events.iter().all(|e| e.mark.as_deref() == Some("a->b")));
    }

    #[test]
    fn gamma_event_poisson_is_exact() {
        let spec = poisson_spec(1.0, 30);
        let record = spec.simulate(21).unwrap();
        let env = spec.environment(0.5).unwrap();
        assert_eq!((env.m1, env.m2), (1.0, 1.0));
        let check = check_gamma_event(&record, &env).unwrap();
        assert_eq!(check.sup_gap, 0.0);
        assert_eq!(check.off_window_max, 0.0);
        assert!(check.holds);
    }

    #[test]
    fn gamma_event_censoring_band_and_window() {
        let spec = ModelSpec::Censoring {
            hazard: IntensityModel::constant(1.0, 0.0, 1.0).unwrap(),
            censoring: CensoringSpec::Fixed { time: 0.5 },
            n: 400,
            horizon: 1.0,
        };
        let env = spec.environment(0.5).unwrap();
        assert_relative_eq!(env.m2, 1.0);
        assert_relative_eq!(env.m1, (-0.5_f64).exp(), max_relative = 1e-12);
        let record = spec.simulate(33).unwrap();
        let check = check_gamma_event(&record, &env).unwrap();
        // Everyone exits the risk set at 0.5, so off-window exposure is 0.
        assert!(check.vanishes_off_window);
        // With n = 400 the band sup should be comfortably within
        // alpha * m1 ~ 0.30 (the gap is O(n^{-1/2})).
        assert!(check.within_band, "gap {} > {}", check.sup_gap, check.budget);
    }

    #[test]
    fn moment_condition_poisson_is_exactly_zero() {
        for k in [1u32, 2] {
            let est = moment_condition_estimate(&poisson_spec(1.5, 40), k, 20, 5).unwrap();
            assert_eq!(est.mean, 0.0);
            assert_eq!(est.se, 0.0);
        }
    }

    #[test]
    fn moment_condition_censoring_first_moment_matches_variance_integral() {
        // E[\int (Y - n mu)^2] = n \int mu(1-mu): the normalized statistic
        // should match \int mu(1-mu) dt for any n.
        let spec = censoring_spec(200);
        let est = moment_condition_estimate(&spec, 1, 300, 99).unwrap();
        let exact = quad::integrate(
            |t| {
                let m = (-t_hazard(t)).exp();
                m * (1.0 - m)
            },
            0.0,
            1.0,
        );
        assert!(
            (est.mean - exact).abs() < 4.0 * est.se,
            "mean {} want {exact} within 4 x {}",
            est.mean,
            est.se
        );

        fn t_hazard(t: f64) -> f64 {
            t // cumulative hazard of the unit-rate model
        }
    }

    #[test]
    fn moment_sweep_flags_bounded_ratio() {
        let template = ModelTemplate::Censoring {
            hazard: IntensityModel::constant(1.0, 0.0, 1.0).unwrap(),
            censoring: CensoringSpec::None,
            horizon: 1.0,
        };
        let sweep = moment_condition_sweep(&template, 1, &[50, 100, 200], 150, 12).unwrap();
        assert!(sweep.bounded, "ratio {}", sweep.max_over_min);
    }

    #[test]
    fn record_serde_round_trip_and_digest() {
        let spec = poisson_spec(2.0, 5);
        let record = spec.simulate(1).unwrap();
        let txt = serde_json::to_string(&record).unwrap();
        assert!(txt.contains("\"T\":"));
        let mut back: CountingRecord = serde_json::from_str(&txt).unwrap();
        back.audit = record.audit.clone();
        assert_eq!(back, record);
        // Digest is canonical in the spec, not the draw.
        let again = spec.simulate(2).unwrap();
        assert_eq!(record.spec_digest, again.spec_digest);
        assert_eq!(record.spec_digest.len(), 64);
        let other = poisson_spec(2.0, 6);
        assert_ne!(other.simulate(1).unwrap().spec_digest, record.spec_digest);
    }

    #[test]
    fn model_spec_validation() {
        assert!(poisson_spec(1.0, 0).validate().is_err());
        let bad_domain = ModelSpec::Poisson {
            lambda0: IntensityModel::constant(1.0, 0.0, 0.5).unwrap(),
            n: 5,
            horizon: 1.0,
            lambda_max: None,
        };
        assert!(bad_domain.validate().is_err());
        let bad_target = ModelSpec::Markov {
            chain: match flip_flop(5) {
                ModelSpec::Markov { chain, .. } => chain,
                _ => unreachable!(),
            },
            target: vec![TransitionLabel {
                from: "b".into(),
                to: "c".into(),
            }],
            n: 5,
            horizon: 1.0,
        };
        assert!(bad_target.validate().is_err());
    }
}

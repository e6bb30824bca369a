//! Prior families over intensity models and the Markov chain Monte Carlo
//! samplers that target their posteriors under the exact log-likelihood.
//!
//! Three families are provided:
//!
//! * **Uniform-mixture process prior** ([`DpmPrior`]): a truncated
//!   stick-breaking mixture `lambda-bar = sum_l w_l Unif(0, theta_l)` of
//!   uniform densities (every realization is a monotone non-increasing
//!   density), scaled by an independent positive mass `M`.  Stick
//!   proportions are `Beta(1, A)`; atom locations follow a base density
//!   `g(theta) ∝ theta^a e^{-theta}` truncated to `(0, theta_max]`.
//! * **Exponential-spline prior** ([`SplinePrior`]): non-normalized
//!   intensities `A exp(theta . B(t))` on a clamped B-spline basis whose
//!   dimension follows `J_n = floor(n^{1/(2 alpha + 1)})`, with
//!   coefficients uniform on the box `[-M, M]^J`.  Working with the
//!   scaled (non-normalized) form keeps every acceptance ratio free of
//!   the normalizing constant.
//! * **Log-linear cosine prior** ([`LogLinearPrior`]): intensities
//!   `exp(sum_{j<=J} theta_j phi_j(t))` on the cosine basis, with a
//!   dimension prior `log pi_J(J) = -J (log J)^s` (s in {0, 1}) explored
//!   by reversible-jump birth/death moves, and Gaussian coefficients with
//!   scales `tau_j = tau_0 j^{-beta}`.
//!
//! All samplers are random-walk Metropolis within a fixed-order sweep,
//! with Robbins-Monro step-size adaptation during burn-in only (frozen
//! afterwards, so the post-burn-in chain has the correct stationary law).
//! [`geweke_cycle`] runs the successive-conditional check — alternate
//! prior-conditioned data simulation with single MCMC sweeps — whose
//! marginals must reproduce the prior if and only if the kernels target
//! the right posterior.

use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Gamma as GammaDist};

use crate::error::{AalenError, Result};
use crate::intensity::{
    IntensityModel, LogLinearModel, LogSplineModel, MixtureAtom, SplineBasis, UniformMixture,
};
use crate::likelihood::Evaluator;
use crate::metrics::l1_distance;
use crate::processes::{CountingRecord, Event};
use crate::rng::{stream, Rng};

// ---------------------------------------------------------------------------
// Priors
// ---------------------------------------------------------------------------

/// A positive continuous prior density on the half-line, used for mixture
/// masses and spline scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PositivePrior {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
}

impl PositivePrior {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            PositivePrior::Exponential { rate } => rate.is_finite() && *rate > 0.0,
            PositivePrior::Gamma { shape, rate } => {
                shape.is_finite() && *shape > 0.0 && rate.is_finite() && *rate > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(AalenError::invalid(
                "positive prior parameters must be finite and > 0",
            ))
        }
    }

    /// Log density at `x` (`-inf` off the support).
    pub fn log_density(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        match self {
            PositivePrior::Exponential { rate } => rate.ln() - rate * x,
            PositivePrior::Gamma { shape, rate } => {
                GammaDist::new(*shape, *rate).expect("validated").ln_pdf(x)
            }
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match self {
            PositivePrior::Exponential { rate } => rng.sample::<f64, _>(Exp1) / rate,
            PositivePrior::Gamma { shape, rate } => rand_distr::Gamma::new(*shape, 1.0 / rate)
                .expect("validated")
                .sample(rng),
        }
    }
}

/// Truncated stick-breaking prior over scaled monotone non-increasing
/// intensities `M * sum_l w_l Unif(0, theta_l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpmPrior {
    /// Stick-breaking concentration `A > 0`.
    pub concentration: f64,
    /// Exponent `a` of the atom-location base density
    /// `g(theta) ∝ theta^a e^{-theta}` on `(0, theta_max]`.
    pub base_exponent: f64,
    /// Right end of the atom-location support; must exceed every event
    /// time of a record being fitted.
    pub theta_max: f64,
    /// Number of mixture components kept (`>= 20`); the discarded stick
    /// mass has mean `(A/(A+1))^L`, measured by [`dpm_stick_residual`].
    pub truncation: usize,
    /// Prior on the total mass `M`.
    pub mass_prior: PositivePrior,
}

impl Default for DpmPrior {
    fn default() -> Self {
        DpmPrior {
            concentration: 1.0,
            base_exponent: 1.0,
            theta_max: 1.0,
            truncation: 25,
            mass_prior: PositivePrior::Exponential { rate: 1.0 },
        }
    }
}

impl DpmPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.concentration.is_finite() && self.concentration > 0.0) {
            return Err(AalenError::invalid("concentration must be finite and > 0"));
        }
        if !(self.base_exponent.is_finite() && self.base_exponent >= 0.0) {
            return Err(AalenError::invalid("base exponent must be finite and >= 0"));
        }
        if !(self.theta_max.is_finite() && self.theta_max > 0.0) {
            return Err(AalenError::invalid("theta_max must be finite and > 0"));
        }
        if self.truncation < 20 {
            return Err(AalenError::invalid(
                "stick-breaking truncation must keep at least 20 components",
            ));
        }
        self.mass_prior.validate()
    }

    /// Draw an atom location from the truncated base density by inverting
    /// the gamma CDF on `(0, theta_max]`.
    fn sample_location(&self, rng: &mut Rng) -> f64 {
        let gamma = GammaDist::new(self.base_exponent + 1.0, 1.0).expect("validated");
        let cap = gamma.cdf(self.theta_max);
        let u = (rng.random::<f64>() * cap).max(1e-300);
        gamma.inverse_cdf(u).clamp(f64::MIN_POSITIVE, self.theta_max)
    }
}

/// Mean discarded stick mass `E prod_{l<=L} (1 - v_l)` after `L`
/// components, averaged over `draws` independent stick sequences; the
/// exact value is `(A/(A+1))^L`.
pub fn dpm_stick_residual(spec: &DpmPrior, draws: usize, seed: u64) -> Result<f64> {
    spec.validate()?;
    if draws == 0 {
        return Err(AalenError::pre("need at least one draw"));
    }
    let mut rng = stream(seed, 0);
    let mut total = 0.0;
    for _ in 0..draws {
        let mut residual = 1.0;
        for _ in 0..spec.truncation {
            // 1 - v with v ~ Beta(1, A) is U^{1/A}.
            residual *= rng.random::<f64>().powf(1.0 / spec.concentration);
        }
        total += residual;
    }
    Ok(total / draws as f64)
}

/// Prior over non-normalized exponential-spline intensities
/// `A exp(theta . B(t))` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplinePrior {
    /// B-spline order `q` (degree + 1).
    pub order: usize,
    /// Target smoothness `alpha` in `[1/2, q]`, driving the dimension
    /// rule `J_n = floor(n^{1/(2 alpha + 1)})`.
    pub smoothness_alpha: f64,
    /// Half-width `M` of the coefficient box `[-M, M]^J`; `M = 0` pins
    /// every coefficient to zero (constant intensity `A`).
    pub box_bound: f64,
    /// Fixed dimension overriding the rule (must be `>= order`).
    pub dimension_override: Option<usize>,
    /// Prior on the scale `A`.
    pub scale_prior: PositivePrior,
}

impl Default for SplinePrior {
    fn default() -> Self {
        SplinePrior {
            order: 3,
            smoothness_alpha: 1.0,
            box_bound: 5.0,
            dimension_override: None,
            scale_prior: PositivePrior::Exponential { rate: 1.0 },
        }
    }
}

impl SplinePrior {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(AalenError::invalid("spline order must be at least 1"));
        }
        if !(self.smoothness_alpha.is_finite()
            && self.smoothness_alpha >= 0.5
            && self.smoothness_alpha <= self.order as f64)
        {
            return Err(AalenError::invalid(
                "smoothness_alpha must lie in [1/2, order]",
            ));
        }
        if !(self.box_bound.is_finite() && self.box_bound >= 0.0) {
            return Err(AalenError::invalid("box_bound must be finite and >= 0"));
        }
        if let Some(j) = self.dimension_override {
            if j < self.order {
                return Err(AalenError::invalid(
                    "dimension_override must be at least the order",
                ));
            }
        }
        self.scale_prior.validate()
    }

    /// Basis dimension at sample size `n`: the override if set, else
    /// `floor(n^{1/(2 alpha + 1)})` clamped up to the order.
    pub fn dimension(&self, n: u64) -> usize {
        if let Some(j) = self.dimension_override {
            return j;
        }
        let rule = (n as f64).powf(1.0 / (2.0 * self.smoothness_alpha + 1.0)).floor() as usize;
        rule.max(self.order)
    }

    /// Uniform clamped basis on `[0, 1]` with the dimension for `n`.
    pub fn basis(&self, n: u64) -> Result<SplineBasis> {
        let j = self.dimension(n);
        SplineBasis::uniform(self.order, j - self.order + 1, 0.0, 1.0)
    }
}

/// Prior over log-linear cosine intensities with a random dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogLinearPrior {
    /// Dimension-prior sharpness `s` in `{0, 1}`:
    /// `log pi_J(J) = -J (log J)^s` up to normalization.
    pub sparsity: u8,
    /// Base coefficient scale `tau_0 > 0`.
    pub tau0: f64,
    /// Coefficient-scale decay `beta < 1`: `tau_j = tau_0 j^{-beta}`.
    pub decay: f64,
    /// Largest dimension the chain may visit.
    pub max_dimension: usize,
}

impl Default for LogLinearPrior {
    fn default() -> Self {
        LogLinearPrior {
            sparsity: 0,
            tau0: 1.0,
            decay: 0.5,
            max_dimension: 12,
        }
    }
}

impl LogLinearPrior {
    pub fn validate(&self) -> Result<()> {
        if self.sparsity > 1 {
            return Err(AalenError::invalid("sparsity must be 0 or 1"));
        }
        if !(self.tau0.is_finite() && self.tau0 > 0.0) {
            return Err(AalenError::invalid("tau0 must be finite and > 0"));
        }
        if !(self.decay.is_finite() && self.decay < 1.0) {
            return Err(AalenError::invalid("decay must be finite and < 1"));
        }
        if self.max_dimension == 0 {
            return Err(AalenError::invalid("max_dimension must be at least 1"));
        }
        Ok(())
    }

    /// Gaussian scale of the `j`-th coefficient (1-based).
    pub fn tau(&self, j: usize) -> f64 {
        self.tau0 * (j as f64).powf(-self.decay)
    }

    /// Unnormalized log dimension prior.
    fn log_pi_dim(&self, j: usize) -> f64 {
        let jf = j as f64;
        let factor = if self.sparsity == 1 { jf.ln() } else { 1.0 };
        -jf * factor
    }

    fn sample_dimension(&self, rng: &mut Rng) -> usize {
        let weights: Vec<f64> = (1..=self.max_dimension)
            .map(|j| self.log_pi_dim(j).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            u -= w;
            if u <= 0.0 {
                return i + 1;
            }
        }
        self.max_dimension
    }
}

/// One of the three prior families, tagged for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PriorSpec {
    Dpm(DpmPrior),
    LogSpline(SplinePrior),
    LogLinear(LogLinearPrior),
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PriorSpec::Dpm(p) => p.validate(),
            PriorSpec::LogSpline(p) => p.validate(),
            PriorSpec::LogLinear(p) => p.validate(),
        }
    }
}

/// One draw from a prior family.  `n` enters only through the spline
/// dimension rule; the other families ignore it.
pub fn sample_prior(spec: &PriorSpec, n: u64, rng: &mut Rng) -> Result<IntensityModel> {
    spec.validate()?;
    match spec {
        PriorSpec::Dpm(p) => Ok(DpmState::prior(p, rng).model(p)),
        PriorSpec::LogSpline(p) => {
            let basis = p.basis(n)?;
            let scale = p.scale_prior.sample(rng);
            let coeffs: Vec<f64> = (0..basis.dim())
                .map(|_| {
                    if p.box_bound == 0.0 {
                        0.0
                    } else {
                        rng.random_range(-p.box_bound..=p.box_bound)
                    }
                })
                .collect();
            Ok(IntensityModel::LogSpline(LogSplineModel::scaled(
                basis, coeffs, scale,
            )?))
        }
        PriorSpec::LogLinear(p) => {
            let j = p.sample_dimension(rng);
            let coeffs: Vec<f64> = (1..=j)
                .map(|i| p.tau(i) * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Ok(IntensityModel::LogLinear(LogLinearModel::scaled(
                coeffs, 1.0,
            )?))
        }
    }
}

// ---------------------------------------------------------------------------
// Chain plumbing
// ---------------------------------------------------------------------------

/// Tuning for the Metropolis samplers.  Proposal scales adapt by
/// Robbins-Monro toward `target_accept` during burn-in and freeze after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcSettings {
    pub iterations: usize,
    pub burn_in: usize,
    /// Keep every `stride`-th post-burn-in sweep.
    pub stride: usize,
    /// Starting random-walk scale for every move type.
    pub initial_scale: f64,
    pub target_accept: f64,
    pub adapt: bool,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings {
            iterations: 3000,
            burn_in: 1000,
            stride: 5,
            initial_scale: 0.5,
            target_accept: 0.3,
            adapt: true,
        }
    }
}

impl McmcSettings {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(AalenError::invalid("iterations must exceed burn_in"));
        }
        if self.stride == 0 {
            return Err(AalenError::invalid("stride must be at least 1"));
        }
        if self.iterations - self.burn_in < self.stride {
            return Err(AalenError::invalid(
                "iterations - burn_in must cover at least one stride",
            ));
        }
        if !(self.initial_scale.is_finite() && self.initial_scale > 0.0) {
            return Err(AalenError::invalid("initial_scale must be finite and > 0"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(AalenError::invalid("target_accept must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Number of draws a run will keep.
    pub fn kept_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.stride
    }
}

/// Acceptance bookkeeping for one move type, split into the adaptation
/// window and the frozen post-burn-in phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoveStats {
    pub label: String,
    pub proposals: u64,
    pub accepts: u64,
    pub post_proposals: u64,
    pub post_accepts: u64,
    /// Final random-walk scale after adaptation.
    pub scale: f64,
    /// Whether the scale adapts (reversible-jump moves do not).
    pub adaptive: bool,
}

impl MoveStats {
    pub fn post_rate(&self) -> f64 {
        if self.post_proposals == 0 {
            f64::NAN
        } else {
            self.post_accepts as f64 / self.post_proposals as f64
        }
    }
}

#[derive(Debug, Clone)]
struct MoveTracker {
    label: &'static str,
    adaptive: bool,
    target: f64,
    log_scale: f64,
    adapt_count: u64,
    proposals: u64,
    accepts: u64,
    post_proposals: u64,
    post_accepts: u64,
}

impl MoveTracker {
    fn new(label: &'static str, scale: f64, target: f64, adaptive: bool) -> Self {
        MoveTracker {
            label,
            adaptive,
            target,
            log_scale: scale.ln(),
            adapt_count: 0,
            proposals: 0,
            accepts: 0,
            post_proposals: 0,
            post_accepts: 0,
        }
    }

    fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    fn record(&mut self, accepted: bool, adapting: bool, post: bool) {
        self.proposals += 1;
        if accepted {
            self.accepts += 1;
        }
        if post {
            self.post_proposals += 1;
            if accepted {
                self.post_accepts += 1;
            }
        }
        if adapting && self.adaptive {
            self.adapt_count += 1;
            let gamma = (self.adapt_count as f64).powf(-0.6);
            let step = gamma * (if accepted { 1.0 } else { 0.0 } - self.target);
            self.log_scale = (self.log_scale + step).clamp(-12.0, 4.0);
        }
    }

    fn stats(&self) -> MoveStats {
        MoveStats {
            label: self.label.to_string(),
            proposals: self.proposals,
            accepts: self.accepts,
            post_proposals: self.post_proposals,
            post_accepts: self.post_accepts,
            scale: self.scale(),
            adaptive: self.adaptive,
        }
    }
}

/// Metropolis acceptance on log scale.  A proposal with `-inf`
/// log-likelihood (intensity vanishing at an event) or zero prior density
/// is rejected outright; from a `-inf` current state any admissible
/// proposal is taken (such states carry no posterior mass, so this only
/// affects escape from a bad initialization).
fn mh_accept(rng: &mut Rng, cur: f64, prop: f64, log_prior_ratio: f64) -> bool {
    if prop == f64::NEG_INFINITY || log_prior_ratio == f64::NEG_INFINITY {
        return false;
    }
    if cur == f64::NEG_INFINITY {
        return true;
    }
    let la = prop - cur + log_prior_ratio;
    la >= 0.0 || rng.random::<f64>().ln() < la
}

/// Posterior sample: the kept draws plus per-move acceptance diagnostics.
#[derive(Debug, Clone)]
pub struct PosteriorChain {
    pub draws: Vec<IntensityModel>,
    pub acceptance: Vec<MoveStats>,
    pub iterations: usize,
    pub burn_in: usize,
    pub stride: usize,
    pub seed: u64,
}

trait Kernel {
    fn sweep(&mut self, ev: &Evaluator, rng: &mut Rng, adapting: bool, post: bool);
    fn current_model(&self) -> IntensityModel;
    fn stats(&self) -> Vec<MoveStats>;
}

fn run_chain<K: Kernel>(
    mut kernel: K,
    ev: &Evaluator,
    mcmc: &McmcSettings,
    seed: u64,
    rng: &mut Rng,
) -> Result<PosteriorChain> {
    let mut draws = Vec::with_capacity(mcmc.kept_draws());
    for i in 0..mcmc.iterations {
        let adapting = mcmc.adapt && i < mcmc.burn_in;
        let post = i >= mcmc.burn_in;
        kernel.sweep(ev, rng, adapting, post);
        if post && (i - mcmc.burn_in) % mcmc.stride == mcmc.stride - 1 {
            draws.push(kernel.current_model());
        }
    }
    let acceptance = kernel.stats();
    let (post_props, post_accs) = acceptance
        .iter()
        .fold((0u64, 0u64), |(p, a), s| {
            (p + s.post_proposals, a + s.post_accepts)
        });
    if post_props >= 100 && (post_accs as f64) < 0.01 * post_props as f64 {
        return Err(AalenError::ChainDiagnostic(format!(
            "post-adaptation acceptance collapsed: {post_accs} of {post_props} proposals"
        )));
    }
    Ok(PosteriorChain {
        draws,
        acceptance,
        iterations: mcmc.iterations,
        burn_in: mcmc.burn_in,
        stride: mcmc.stride,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Uniform-mixture sampler
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct DpmState {
    mass: f64,
    /// Stick proportions `v_1..v_{L-1}`; the last weight absorbs the
    /// remainder so the weights sum to one exactly.
    sticks: Vec<f64>,
    thetas: Vec<f64>,
}

impl DpmState {
    fn prior(spec: &DpmPrior, rng: &mut Rng) -> DpmState {
        let l = spec.truncation;
        DpmState {
            mass: spec.mass_prior.sample(rng),
            sticks: (0..l - 1)
                .map(|_| 1.0 - rng.random::<f64>().powf(1.0 / spec.concentration))
                .collect(),
            thetas: (0..l).map(|_| spec.sample_location(rng)).collect(),
        }
    }

    fn weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.sticks.len() + 1);
        let mut remaining = 1.0;
        for &v in &self.sticks {
            w.push(v * remaining);
            remaining *= 1.0 - v;
        }
        w.push(remaining);
        w
    }

    fn model(&self, _spec: &DpmPrior) -> IntensityModel {
        let atoms = self
            .weights()
            .into_iter()
            .zip(&self.thetas)
            .map(|(weight, &location)| MixtureAtom { location, weight })
            .collect();
        IntensityModel::UniformMixture(UniformMixture {
            mass: self.mass,
            atoms,
        })
    }
}

struct DpmSampler {
    spec: DpmPrior,
    state: DpmState,
    trackers: [MoveTracker; 3],
}

impl DpmSampler {
    fn init(spec: DpmPrior, scale: f64, target: f64, rng: &mut Rng) -> DpmSampler {
        let state = DpmState::prior(&spec, rng);
        DpmSampler {
            spec,
            state,
            trackers: [
                MoveTracker::new("atom_location", scale, target, true),
                MoveTracker::new("stick_weight", scale, target, true),
                MoveTracker::new("mass", scale, target, true),
            ],
        }
    }

    /// Deterministic initialization tweak for fitting: stretch one atom to
    /// the location cap so no event starts outside the support.
    fn cover_window(&mut self) {
        self.state.thetas[0] = self.spec.theta_max;
    }
}

impl Kernel for DpmSampler {
    fn sweep(&mut self, ev: &Evaluator, rng: &mut Rng, adapting: bool, post: bool) {
        let mut cur = ev.loglik(&self.state.model(&self.spec)).value;
        // Atom locations: random walk on log theta.
        for l in 0..self.state.thetas.len() {
            let sigma = self.trackers[0].scale();
            let old = self.state.thetas[l];
            let proposal = old * (sigma * rng.sample::<f64, _>(StandardNormal)).exp();
            let accepted = if proposal > self.spec.theta_max || proposal <= 0.0 {
                false
            } else {
                self.state.thetas[l] = proposal;
                let prop_ll = ev.loglik(&self.state.model(&self.spec)).value;
                // Base-density ratio plus the log-walk Jacobian.
                let lpr = (self.spec.base_exponent + 1.0) * (proposal.ln() - old.ln())
                    - (proposal - old);
                let acc = mh_accept(rng, cur, prop_ll, lpr);
                if acc {
                    cur = prop_ll;
                } else {
                    self.state.thetas[l] = old;
                }
                acc
            };
            self.trackers[0].record(accepted, adapting, post);
        }
        // Stick proportions: random walk on the logit scale.
        let a = self.spec.concentration;
        for l in 0..self.state.sticks.len() {
            let sigma = self.trackers[1].scale();
            let old = self.state.sticks[l];
            let x = (old / (1.0 - old)).ln();
            let xp = x + sigma * rng.sample::<f64, _>(StandardNormal);
            let proposal = 1.0 / (1.0 + (-xp).exp());
            let accepted = if !(proposal > 0.0 && proposal < 1.0) {
                false
            } else {
                self.state.sticks[l] = proposal;
                let prop_ll = ev.loglik(&self.state.model(&self.spec)).value;
                // Beta(1, A) ratio plus the logit Jacobian v(1-v).
                let lpr = (a - 1.0) * ((1.0 - proposal).ln() - (1.0 - old).ln())
                    + (proposal * (1.0 - proposal)).ln()
                    - (old * (1.0 - old)).ln();
                let acc = mh_accept(rng, cur, prop_ll, lpr);
                if acc {
                    cur = prop_ll;
                } else {
                    self.state.sticks[l] = old;
                }
                acc
            };
            self.trackers[1].record(accepted, adapting, post);
        }
        // Total mass: random walk on log M.
        {
            let sigma = self.trackers[2].scale();
            let old = self.state.mass;
            let proposal = old * (sigma * rng.sample::<f64, _>(StandardNormal)).exp();
            self.state.mass = proposal;
            let prop_ll = ev.loglik(&self.state.model(&self.spec)).value;
            let lpr = self.spec.mass_prior.log_density(proposal)
                - self.spec.mass_prior.log_density(old)
                + proposal.ln()
                - old.ln();
            let accepted = mh_accept(rng, cur, prop_ll, lpr);
            if !accepted {
                self.state.mass = old;
            }
            self.trackers[2].record(accepted, adapting, post);
        }
    }

    fn current_model(&self) -> IntensityModel {
        self.state.model(&self.spec)
    }

    fn stats(&self) -> Vec<MoveStats> {
        self.trackers.iter().map(MoveTracker::stats).collect()
    }
}

// ---------------------------------------------------------------------------
// Exponential-spline sampler
// ---------------------------------------------------------------------------

struct SplineSampler {
    spec: SplinePrior,
    basis: SplineBasis,
    scale: f64,
    coeffs: Vec<f64>,
    trackers: [MoveTracker; 2],
}

impl SplineSampler {
    fn init(
        spec: SplinePrior,
        basis: SplineBasis,
        scale_ini: f64,
        target: f64,
        rng: &mut Rng,
    ) -> SplineSampler {
        let scale = spec.scale_prior.sample(rng);
        let coeffs = (0..basis.dim())
            .map(|_| {
                if spec.box_bound == 0.0 {
                    0.0
                } else {
                    rng.random_range(-spec.box_bound..=spec.box_bound)
                }
            })
            .collect();
        SplineSampler {
            spec,
            basis,
            scale,
            coeffs,
            trackers: [
                MoveTracker::new("scale", scale_ini, target, true),
                MoveTracker::new("coefficient", scale_ini, target, true),
            ],
        }
    }

    fn model_with(&self, scale: f64, coeffs: &[f64]) -> IntensityModel {
        IntensityModel::LogSpline(
            LogSplineModel::scaled(self.basis.clone(), coeffs.to_vec(), scale)
                .expect("finite coefficients and positive scale"),
        )
    }
}

impl Kernel for SplineSampler {
    fn sweep(&mut self, ev: &Evaluator, rng: &mut Rng, adapting: bool, post: bool) {
        let mut cur = ev.loglik(&self.model_with(self.scale, &self.coeffs)).value;
        // Scale: random walk on log A.
        {
            let sigma = self.trackers[0].scale();
            let old = self.scale;
            let proposal = old * (sigma * rng.sample::<f64, _>(StandardNormal)).exp();
            let prop_ll = ev.loglik(&self.model_with(proposal, &self.coeffs)).value;
            let lpr = self.spec.scale_prior.log_density(proposal)
                - self.spec.scale_prior.log_density(old)
                + proposal.ln()
                - old.ln();
            let accepted = mh_accept(rng, cur, prop_ll, lpr);
            if accepted {
                self.scale = proposal;
                cur = prop_ll;
            }
            self.trackers[0].record(accepted, adapting, post);
        }
        // Coefficients: componentwise random walk, rejected outside the
        // box (the uniform prior is flat inside, so nothing else enters).
        if self.spec.box_bound > 0.0 {
            for j in 0..self.coeffs.len() {
                let sigma = self.trackers[1].scale();
                let old = self.coeffs[j];
                let proposal = old + sigma * rng.sample::<f64, _>(StandardNormal);
                let accepted = if proposal.abs() > self.spec.box_bound {
                    false
                } else {
                    self.coeffs[j] = proposal;
                    let prop_ll = ev.loglik(&self.model_with(self.scale, &self.coeffs)).value;
                    let acc = mh_accept(rng, cur, prop_ll, 0.0);
                    if acc {
                        cur = prop_ll;
                    } else {
                        self.coeffs[j] = old;
                    }
                    acc
                };
                self.trackers[1].record(accepted, adapting, post);
            }
        }
    }

    fn current_model(&self) -> IntensityModel {
        self.model_with(self.scale, &self.coeffs)
    }

    fn stats(&self) -> Vec<MoveStats> {
        self.trackers.iter().map(MoveTracker::stats).collect()
    }
}

// ---------------------------------------------------------------------------
// Log-linear reversible-jump sampler
// ---------------------------------------------------------------------------

struct LogLinearSampler {
    spec: LogLinearPrior,
    coeffs: Vec<f64>,
    trackers: [MoveTracker; 3],
}

impl LogLinearSampler {
    fn init(spec: LogLinearPrior, scale_ini: f64, target: f64, rng: &mut Rng) -> LogLinearSampler {
        let j = spec.sample_dimension(rng);
        let coeffs = (1..=j)
            .map(|i| spec.tau(i) * rng.sample::<f64, _>(StandardNormal))
            .collect();
        LogLinearSampler {
            spec,
            coeffs,
            trackers: [
                MoveTracker::new("coefficient", scale_ini, target, true),
                MoveTracker::new("birth", 1.0, target, false),
                MoveTracker::new("death", 1.0, target, false),
            ],
        }
    }

    fn model(&self) -> IntensityModel {
        IntensityModel::LogLinear(
            LogLinearModel::scaled(self.coeffs.clone(), 1.0).expect("finite coefficients"),
        )
    }

    /// Gaussian coefficient log density up to its (cancelling) constant.
    fn log_coeff(&self, j: usize, x: f64) -> f64 {
        let tau = self.spec.tau(j);
        -x * x / (2.0 * tau * tau)
    }
}

impl Kernel for LogLinearSampler {
    fn sweep(&mut self, ev: &Evaluator, rng: &mut Rng, adapting: bool, post: bool) {
        let mut cur = ev.loglik(&self.model()).value;
        // Componentwise random walk, proposal scaled by the prior scale.
        for j in 0..self.coeffs.len() {
            let sigma = self.trackers[0].scale() * self.spec.tau(j + 1);
            let old = self.coeffs[j];
            let proposal = old + sigma * rng.sample::<f64, _>(StandardNormal);
            self.coeffs[j] = proposal;
            let prop_ll = ev.loglik(&self.model()).value;
            let lpr = self.log_coeff(j + 1, proposal) - self.log_coeff(j + 1, old);
            let accepted = mh_accept(rng, cur, prop_ll, lpr);
            if accepted {
                cur = prop_ll;
            } else {
                self.coeffs[j] = old;
            }
            self.trackers[0].record(accepted, adapting, post);
        }
        // Dimension change: birth appends a coefficient drawn from its
        // prior slice, death drops the last one.  Proposal density and
        // coefficient prior cancel exactly, and the birth/death selection
        // probabilities are symmetric (1/2 whenever the move exists), so
        // only the likelihood and dimension-prior ratios remain.
        let j = self.coeffs.len();
        let go_birth = rng.random::<f64>() < 0.5;
        if go_birth && j < self.spec.max_dimension {
            let new = self.spec.tau(j + 1) * rng.sample::<f64, _>(StandardNormal);
            self.coeffs.push(new);
            let prop_ll = ev.loglik(&self.model()).value;
            let lpr = self.spec.log_pi_dim(j + 1) - self.spec.log_pi_dim(j);
            let accepted = mh_accept(rng, cur, prop_ll, lpr);
            if !accepted {
                self.coeffs.pop();
            }
            self.trackers[1].record(accepted, adapting, post);
        } else if !go_birth && j > 1 {
            let dropped = self.coeffs.pop().expect("j > 1");
            let prop_ll = ev.loglik(&self.model()).value;
            let lpr = self.spec.log_pi_dim(j - 1) - self.spec.log_pi_dim(j);
            let accepted = mh_accept(rng, cur, prop_ll, lpr);
            if !accepted {
                self.coeffs.push(dropped);
            }
            self.trackers[2].record(accepted, adapting, post);
        }
    }

    fn current_model(&self) -> IntensityModel {
        self.model()
    }

    fn stats(&self) -> Vec<MoveStats> {
        self.trackers.iter().map(MoveTracker::stats).collect()
    }
}

// ---------------------------------------------------------------------------
// Fitting entry points
// ---------------------------------------------------------------------------

/// Posterior sampling for the uniform-mixture prior on `record`.
pub fn fit_dpm(
    record: &CountingRecord,
    spec: &DpmPrior,
    mcmc: &McmcSettings,
    seed: u64,
) -> Result<PosteriorChain> {
    spec.validate()?;
    mcmc.validate()?;
    if let Some(e) = record.events.iter().find(|e| e.time >= spec.theta_max) {
        return Err(AalenError::invalid(format!(
            "event at t = {} sits at or beyond the atom-location cap {}; \
             every mixture intensity vanishes there",
            e.time, spec.theta_max
        )));
    }
    let ev = Evaluator::new(record)?;
    let mut rng = stream(seed, 0);
    let mut kernel = DpmSampler::init(spec.clone(), mcmc.initial_scale, mcmc.target_accept, &mut rng);
    kernel.cover_window();
    run_chain(kernel, &ev, mcmc, seed, &mut rng)
}

fn require_unit_window(record: &CountingRecord) -> Result<()> {
    if (record.horizon - 1.0).abs() > 1e-9 {
        return Err(AalenError::pre(format!(
            "record horizon {} is not the unit window; rescale time first",
            record.horizon
        )));
    }
    Ok(())
}

/// Posterior sampling for the exponential-spline prior; the record must
/// live on the unit window.
pub fn fit_logspline(
    record: &CountingRecord,
    spec: &SplinePrior,
    mcmc: &McmcSettings,
    seed: u64,
) -> Result<PosteriorChain> {
    spec.validate()?;
    mcmc.validate()?;
    require_unit_window(record)?;
    let ev = Evaluator::new(record)?;
    let basis = spec.basis(record.n)?;
    let mut rng = stream(seed, 0);
    let kernel = SplineSampler::init(
        spec.clone(),
        basis,
        mcmc.initial_scale,
        mcmc.target_accept,
        &mut rng,
    );
    run_chain(kernel, &ev, mcmc, seed, &mut rng)
}

/// Posterior sampling for the log-linear cosine prior with reversible-jump
/// dimension moves; the record must live on the unit window.
pub fn fit_loglinear(
    record: &CountingRecord,
    spec: &LogLinearPrior,
    mcmc: &McmcSettings,
    seed: u64,
) -> Result<PosteriorChain> {
    spec.validate()?;
    mcmc.validate()?;
    require_unit_window(record)?;
    let ev = Evaluator::new(record)?;
    let mut rng = stream(seed, 0);
    let kernel = LogLinearSampler::init(spec.clone(), mcmc.initial_scale, mcmc.target_accept, &mut rng);
    run_chain(kernel, &ev, mcmc, seed, &mut rng)
}

// ---------------------------------------------------------------------------
// Successive-conditional (prior-recovery) check
// ---------------------------------------------------------------------------

/// Draw one event record on the unit window by thinning against a padded
/// bound, with exposure `n` everywhere: the data model every sampler's
/// likelihood assumes.  Intensities supported on a sub-interval simply
/// produce no events outside it.
fn thinning_record(lambda: &IntensityModel, n: u64, rng: &mut Rng) -> CountingRecord {
    let bound = lambda.sup() * 1.05 + 1e-9;
    let total = n as f64 * bound;
    let mut events = Vec::new();
    let mut t = 0.0_f64;
    loop {
        t += rng.sample::<f64, _>(Exp1) / total;
        if t > 1.0 {
            break;
        }
        if rng.random::<f64>() * bound < lambda.eval(t) {
            events.push(Event {
                time: t,
                mark: None,
            });
        }
    }
    CountingRecord {
        model: "poisson".into(),
        n,
        horizon: 1.0,
        events,
        exposure_breakpoints: vec![0.0, 1.0],
        exposure_values: vec![n as f64],
        seed: 0,
        spec_digest: String::new(),
        audit: None,
    }
}

fn geweke_loop<K: Kernel>(
    mut kernel: K,
    n: u64,
    samples: usize,
    thin: usize,
    rng: &mut Rng,
) -> Result<Vec<IntensityModel>> {
    let mut out = Vec::with_capacity(samples);
    for i in 0..samples * thin {
        let record = thinning_record(&kernel.current_model(), n, rng);
        let ev = Evaluator::new(&record)?;
        kernel.sweep(&ev, rng, false, false);
        if i % thin == thin - 1 {
            out.push(kernel.current_model());
        }
    }
    Ok(out)
}

/// Successive-conditional sampler correctness check: starting from a prior
/// draw, alternate (simulate a unit-window record under the current
/// intensity) with (one fixed-scale MCMC sweep given that record), keeping
/// every `thin`-th state.  If and only if the sweep kernel targets the
/// posterior for every record, the collected marginals reproduce the
/// prior; compare functionals of the output against [`sample_prior`]
/// draws.
pub fn geweke_cycle(
    spec: &PriorSpec,
    n: u64,
    samples: usize,
    thin: usize,
    seed: u64,
) -> Result<Vec<IntensityModel>> {
    spec.validate()?;
    if samples == 0 || thin == 0 {
        return Err(AalenError::pre("samples and thin must be at least 1"));
    }
    if n == 0 {
        return Err(AalenError::pre("n must be at least 1"));
    }
    let mut rng = stream(seed, 0);
    let scale = 0.5;
    let target = 0.3;
    match spec {
        PriorSpec::Dpm(p) => geweke_loop(
            DpmSampler::init(p.clone(), scale, target, &mut rng),
            n,
            samples,
            thin,
            &mut rng,
        ),
        PriorSpec::LogSpline(p) => {
            let basis = p.basis(n)?;
            geweke_loop(
                SplineSampler::init(p.clone(), basis, scale, target, &mut rng),
                n,
                samples,
                thin,
                &mut rng,
            )
        }
        PriorSpec::LogLinear(p) => geweke_loop(
            LogLinearSampler::init(p.clone(), scale, target, &mut rng),
            n,
            samples,
            thin,
            &mut rng,
        ),
    }
}

// ---------------------------------------------------------------------------
// Chain summaries
// ---------------------------------------------------------------------------

/// Error and band summary of a posterior chain against a reference
/// intensity.
#[derive(Debug, Clone, Serialize)]
pub struct PosteriorSummary {
    pub mean_l1_error: f64,
    pub median_l1_error: f64,
    /// Fraction of draws with L1 error strictly beyond the radius.
    pub mass_outside_radius: f64,
    pub radius: f64,
    /// 256 evenly spaced points spanning the reference domain.
    pub band_grid: Vec<f64>,
    /// Pointwise 5% draw quantiles on the grid.
    pub band_lower: Vec<f64>,
    /// Pointwise 95% draw quantiles on the grid.
    pub band_upper: Vec<f64>,
    /// Pointwise draw means on the grid.
    pub band_mean: Vec<f64>,
}

fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let k = sorted.len();
    if k == 1 {
        return sorted[0];
    }
    let pos = level * (k - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Per-draw L1 errors against `lambda0`, their mean and median, the
/// posterior mass outside an L1 ball of the given radius, and pointwise
/// 5%/95% bands on a 256-point grid.
pub fn posterior_summary(
    chain: &PosteriorChain,
    lambda0: &IntensityModel,
    radius: f64,
) -> Result<PosteriorSummary> {
    if chain.draws.is_empty() {
        return Err(AalenError::pre("chain has no draws"));
    }
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(AalenError::pre("radius must be finite and >= 0"));
    }
    let mut errors: Vec<f64> = chain
        .draws
        .par_iter()
        .map(|draw| l1_distance(draw, lambda0))
        .collect();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let outside = errors.iter().filter(|&&e| e > radius).count() as f64 / errors.len() as f64;
    errors.sort_by(f64::total_cmp);
    let median = quantile_sorted(&errors, 0.5);

    let d = lambda0.domain();
    let grid: Vec<f64> = (0..256)
        .map(|i| d.lo + (d.hi - d.lo) * i as f64 / 255.0)
        .collect();
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    let mut mean_band = Vec::with_capacity(grid.len());
    let mut column = vec![0.0; chain.draws.len()];
    for &t in &grid {
        for (c, draw) in column.iter_mut().zip(&chain.draws) {
            *c = draw.eval(t);
        }
        mean_band.push(column.iter().sum::<f64>() / column.len() as f64);
        column.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&column, 0.05));
        upper.push(quantile_sorted(&column, 0.95));
    }
    Ok(PosteriorSummary {
        mean_l1_error: mean,
        median_l1_error: median,
        mass_outside_radius: outside,
        radius,
        band_grid: grid,
        band_lower: lower,
        band_upper: upper,
        band_mean: mean_band,
    })
}

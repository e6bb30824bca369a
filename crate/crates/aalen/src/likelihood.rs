//! Exact log-likelihood of an intensity model against a simulated record.
//!
//! For a record with events `t_1 < ... < t_m` and exposure `Y`, the
//! log-likelihood of an intensity `lambda` is
//!
//! ```text
//! l(lambda) = sum_i log lambda(t_i) - \int_0^T lambda(t) Y_t dt
//! ```
//!
//! The integral is computed exactly over the exposure's step pieces (closed
//! forms where the model has them, composite Gauss-Legendre on smooth
//! pieces).  An event where `lambda` vanishes sends the value to `-inf`: a
//! model whose support misses an observed event has likelihood zero, which
//! Metropolis-Hastings treats as an automatic rejection rather than an
//! error.
//!
//! [`Evaluator`] is the reusable form: it validates and presorts the record
//! once, then serves repeated evaluations with per-family fast paths (step
//! models: per-piece event counts; spline and cosine-expansion models:
//! cached per-basis event sums and quadrature tables).  All paths produce
//! the same numbers as the direct definition; tests pin that equivalence.

use std::cell::RefCell;

use crate::error::Result;
use crate::intensity::{fourier, IntensityModel};
use crate::processes::CountingRecord;
use crate::quad;
use crate::step::StepFunction;

/// Log-likelihood split into its two terms: `value = event_term -
/// integral_term`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikValue {
    pub value: f64,
    /// `sum_i log lambda(t_i)`; `-inf` when the model vanishes at an event.
    pub event_term: f64,
    /// `\int lambda Y dt`.
    pub integral_term: f64,
}

/// One-shot evaluation; builds an [`Evaluator`] internally.
pub fn log_likelihood(model: &IntensityModel, record: &CountingRecord) -> Result<LogLikValue> {
    Ok(Evaluator::new(record)?.loglik(model))
}

struct SplineCache {
    identity: usize,
    dim: usize,
    /// `sum_i B_j(t_i)` over events.
    event_sums: Vec<f64>,
    /// Some event lies outside the basis domain (likelihood is zero for
    /// every coefficient vector).
    event_outside: bool,
    /// Quadrature nodes over exposure pieces intersected with the domain,
    /// split at knots; weights carry the Gauss-Legendre weight times the
    /// exposure value.
    node_weights: Vec<f64>,
    /// Node-major basis values, `node_weights.len() x dim`.
    node_basis: Vec<f64>,
}

struct FourierCache {
    /// `sum_i phi_j(t_i)`, extended lazily as larger dimensions appear.
    event_sums: Vec<f64>,
    event_outside: bool,
    /// Quadrature panels currently planned for; grows with the dimension.
    panels: usize,
    nodes: Vec<f64>,
    node_weights: Vec<f64>,
    /// Per node, `phi_j(node)` for `j = 1..=jmax`.
    node_basis: Vec<Vec<f64>>,
    jmax: usize,
}

/// Reusable likelihood evaluator for one record.
///
/// Not `Sync`: each sampler chain owns its evaluator.
pub struct Evaluator {
    times: Vec<f64>,
    exposure: StepFunction,
    spline: RefCell<Option<SplineCache>>,
    cosine: RefCell<Option<FourierCache>>,
}

impl Evaluator {
    pub fn new(record: &CountingRecord) -> Result<Self> {
        record.validate()?;
        Ok(Evaluator {
            times: record.events.iter().map(|e| e.time).collect(),
            exposure: record.exposure()?,
            spline: RefCell::new(None),
            cosine: RefCell::new(None),
        })
    }

    pub fn event_count(&self) -> usize {
        self.times.len()
    }

    /// `\int Y dt` over the record window.
    pub fn exposure_mass(&self) -> f64 {
        self.exposure.integral()
    }

    /// Evaluate the exact log-likelihood of `model`.
    pub fn loglik(&self, model: &IntensityModel) -> LogLikValue {
        match model {
            IntensityModel::LogSpline(s) => {
                self.loglik_spline(s.basis(), s.coeffs(), s.scale())
            }
            IntensityModel::LogLinear(l) => self.loglik_cosine(l.coeffs(), l.scale()),
            _ => match model.as_step_function() {
                Some(step) => self.loglik_step(model, &step),
                None => self.loglik_general(model),
            },
        }
    }

    /// Generic path: per-event evaluation plus piecewise quadrature.
    fn loglik_general(&self, model: &IntensityModel) -> LogLikValue {
        let mut event_term = 0.0;
        for &t in &self.times {
            let v = model.eval(t);
            if v <= 0.0 {
                event_term = f64::NEG_INFINITY;
                break;
            }
            event_term += v.ln();
        }
        let d = model.domain();
        let integral_term = self.exposure.integrate_against(
            |t| model.eval(t),
            d.lo,
            d.hi,
            &model.breakpoints(),
        );
        finish(event_term, integral_term)
    }

    /// Step-shaped models: count events per piece (binary searches on the
    /// sorted times) and integrate by piece overlap.
    ///
    /// Mixtures of uniforms are half-open (zero at the support's right
    /// endpoint); the other step-shaped families take the last piece's value
    /// there, matching [`IntensityModel::eval`] pointwise.
    fn loglik_step(&self, model: &IntensityModel, step: &StepFunction) -> LogLikValue {
        let closed_end = !matches!(model, IntensityModel::UniformMixture(_));
        let inside = |t: f64| {
            t >= step.start() && if closed_end { t <= step.end() } else { t < step.end() }
        };
        if !self.times.iter().all(|&t| inside(t)) {
            return finish(f64::NEG_INFINITY, self.exposure.product_integral(step));
        }
        let mut event_term = 0.0;
        for (lo, hi, v) in step.pieces() {
            // Events in [lo, hi); an event exactly at the closed right
            // endpoint folds into the last piece.
            let hi_eff = if closed_end && hi == step.end() {
                f64::INFINITY
            } else {
                hi
            };
            let a = self.times.partition_point(|&t| t < lo);
            let b = self.times.partition_point(|&t| t < hi_eff);
            let count = b - a;
            if count > 0 {
                if v <= 0.0 {
                    event_term = f64::NEG_INFINITY;
                    break;
                }
                event_term += count as f64 * v.ln();
            }
        }
        finish(event_term, self.exposure.product_integral(step))
    }

    fn loglik_spline(
        &self,
        basis: &crate::intensity::SplineBasis,
        coeffs: &[f64],
        scale: f64,
    ) -> LogLikValue {
        let mut slot = self.spline.borrow_mut();
        let rebuild = match slot.as_ref() {
            Some(c) => c.identity != basis.identity(),
            None => true,
        };
        if rebuild {
            *slot = Some(self.build_spline_cache(basis));
        }
        let cache = slot.as_ref().unwrap();
        debug_assert_eq!(cache.dim, coeffs.len());

        let event_term = if cache.event_outside {
            f64::NEG_INFINITY
        } else {
            self.times.len() as f64 * scale.ln()
                + cache
                    .event_sums
                    .iter()
                    .zip(coeffs)
                    .map(|(s, c)| s * c)
                    .sum::<f64>()
        };
        let mut integral_term = 0.0;
        for (i, w) in cache.node_weights.iter().enumerate() {
            let row = &cache.node_basis[i * cache.dim..(i + 1) * cache.dim];
            let dot: f64 = row.iter().zip(coeffs).map(|(b, c)| b * c).sum();
            integral_term += w * dot.exp();
        }
        finish(event_term, scale * integral_term)
    }

    fn build_spline_cache(&self, basis: &crate::intensity::SplineBasis) -> SplineCache {
        let d = basis.domain();
        let dim = basis.dim();
        let mut event_sums = vec![0.0; dim];
        let mut event_outside = false;
        let mut buf = vec![0.0; dim];
        for &t in &self.times {
            if t < d.lo || t > d.hi {
                event_outside = true;
                break;
            }
            basis.eval_into(t, &mut buf);
            for (s, b) in event_sums.iter_mut().zip(&buf) {
                *s += b;
            }
        }
        let mut node_weights = Vec::new();
        let mut node_basis = Vec::new();
        let knots = basis.interior_knots();
        for (lo, hi, y) in self.exposure.pieces() {
            let a = lo.max(d.lo);
            let b = hi.min(d.hi);
            if b <= a || y == 0.0 {
                continue;
            }
            let pts = quad::piece_points(a, b, knots.iter().copied());
            for w in pts.windows(2) {
                let (nodes, weights) = quad::panel(w[0], w[1]);
                for (t, wq) in nodes.into_iter().zip(weights) {
                    basis.eval_into(t, &mut buf);
                    node_weights.push(wq * y);
                    node_basis.extend_from_slice(&buf);
                }
            }
        }
        SplineCache {
            identity: basis.identity(),
            dim,
            event_sums,
            event_outside,
            node_weights,
            node_basis,
        }
    }

    fn loglik_cosine(&self, coeffs: &[f64], scale: f64) -> LogLikValue {
        let dim = coeffs.len();
        let mut slot = self.cosine.borrow_mut();
        let needed_panels = (dim / 4).max(1);
        let rebuild = match slot.as_ref() {
            Some(c) => c.panels < needed_panels,
            None => true,
        };
        if rebuild {
            *slot = Some(self.build_cosine_cache(needed_panels));
        }
        let cache = slot.as_mut().unwrap();
        if cache.jmax < dim {
            cache.grow(dim, &self.times);
        }

        let event_term = if cache.event_outside {
            f64::NEG_INFINITY
        } else {
            self.times.len() as f64 * scale.ln()
                + cache
                    .event_sums
                    .iter()
                    .zip(coeffs)
                    .map(|(s, c)| s * c)
                    .sum::<f64>()
        };
        let mut integral_term = 0.0;
        for (i, w) in cache.node_weights.iter().enumerate() {
            let dot: f64 = cache.node_basis[i]
                .iter()
                .zip(coeffs)
                .map(|(b, c)| b * c)
                .sum();
            integral_term += w * dot.exp();
        }
        finish(event_term, scale * integral_term)
    }

    fn build_cosine_cache(&self, panels: usize) -> FourierCache {
        let event_outside = self.times.iter().any(|&t| !(0.0..=1.0).contains(&t));
        let mut nodes = Vec::new();
        let mut node_weights = Vec::new();
        for (lo, hi, y) in self.exposure.pieces() {
            let a = lo.max(0.0);
            let b = hi.min(1.0);
            if b <= a || y == 0.0 {
                continue;
            }
            let splits: Vec<f64> = (0..=panels).map(|i| i as f64 / panels as f64).collect();
            let pts = quad::piece_points(a, b, splits);
            for w in pts.windows(2) {
                let (ns, ws) = quad::panel(w[0], w[1]);
                for (t, wq) in ns.into_iter().zip(ws) {
                    nodes.push(t);
                    node_weights.push(wq * y);
                }
            }
        }
        let node_basis = vec![Vec::new(); nodes.len()];
        let mut cache = FourierCache {
            event_sums: Vec::new(),
            event_outside,
            panels,
            nodes,
            node_weights,
            node_basis,
            jmax: 0,
        };
        cache.grow(1, &self.times);
        cache
    }
}

impl FourierCache {
    fn grow(&mut self, dim: usize, times: &[f64]) {
        for j in self.jmax + 1..=dim {
            self.event_sums
                .push(times.iter().map(|&t| fourier::eval(j, t)).sum());
            for (row, &t) in self.node_basis.iter_mut().zip(&self.nodes) {
                row.push(fourier::eval(j, t));
            }
        }
        self.jmax = self.jmax.max(dim);
    }
}

fn finish(event_term: f64, integral_term: f64) -> LogLikValue {
    LogLikValue {
        value: event_term - integral_term,
        event_term,
        integral_term,
    }
}

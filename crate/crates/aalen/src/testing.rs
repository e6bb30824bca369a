//! One-sided tests of an alternative intensity against a reference, built
//! from event counts minus their reference compensator, and the
//! exponential tail inequality that controls their error rates.
//!
//! For intensities `lambda1 != lambda0` on the window, the line splits at
//! `A = {t : lambda1(t) >= lambda0(t)}`.  The test statistic on a region
//! `R` is
//!
//! ```text
//! S(R) = N(R) - \int_R lambda0(t) Y_t dt
//! ```
//!
//! (events counted exactly, compensator integrated exactly over exposure
//! steps), rejected against the threshold
//!
//! ```text
//! rho_n(u) = sqrt(2 n v(lambda0) u) + u/3,
//! v(lambda) = (1 + alpha) \int_Omega lambda mu_tilde dt,
//! ```
//!
//! on the side (A or its complement) carrying the larger exposure-weighted
//! discrepancy.  On the exposure-concentration event the false-rejection
//! probability is at most `2 e^{-u}`; [`bernstein_tail_check`] verifies
//! the underlying martingale inequality
//! `P(|\int H (dN - lambda Y dt)| > sqrt(2 v u) + b u / 3) <= 2 e^{-u}`
//! empirically on simulated paths.

use serde::Serialize;

use crate::domain::Interval;
use crate::error::{AalenError, Result};
use crate::intensity::IntensityModel;
use crate::processes::{check_gamma_event, CountingRecord, ModelEnvironment, ModelSpec};
use crate::quad;

/// `\int_Omega |f - g| mu_tilde dt`: the exposure-weighted L1 distance.
/// Sandwiched between `m1` and `m2` times the plain L1 distance for
/// intensities supported inside the window.
pub fn weighted_l1(f: &IntensityModel, g: &IntensityModel, env: &ModelEnvironment) -> f64 {
    let mut breaks = f.breakpoints();
    breaks.extend(g.breakpoints());
    breaks.extend(env.mu.breakpoints());
    breaks.extend([f.domain().lo, f.domain().hi, g.domain().lo, g.domain().hi]);
    let singular = [f.domain().lo, f.domain().hi, g.domain().lo, g.domain().hi];
    let mut acc = 0.0;
    for iv in env.omega.intervals() {
        let crossings = quad::sign_change_points(
            |t| f.eval(t) - g.eval(t),
            iv.lo,
            iv.hi,
            quad::SCAN_GRID,
        );
        let mut pts = breaks.clone();
        pts.extend(crossings);
        let points = quad::piece_points(iv.lo, iv.hi, pts);
        acc += quad::integrate_refined(
            |t| (f.eval(t) - g.eval(t)).abs() * env.mu.value(t),
            &points,
            &singular,
        );
    }
    acc
}

/// Which side of the split the test monitors: the region where the
/// alternative sits at or above the reference, or its complement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSide {
    Above,
    Below,
}

/// A built one-sided test: the region split, its two discrepancy masses,
/// the chosen side, and the rejection threshold at level parameter `u`.
#[derive(Debug, Clone)]
pub struct TestSpec {
    pub lambda1: IntensityModel,
    pub lambda0: IntensityModel,
    pub env: ModelEnvironment,
    /// `{t in Omega : lambda1(t) >= lambda0(t)}` as disjoint intervals.
    pub region_above: Vec<Interval>,
    pub region_below: Vec<Interval>,
    /// `\int_above (lambda1 - lambda0) mu_tilde dt`.
    pub d_above: f64,
    /// `\int_below (lambda0 - lambda1) mu_tilde dt`.
    pub d_below: f64,
    pub side: TestSide,
    pub u: f64,
    /// `(1 + alpha) \int_Omega lambda0 mu_tilde dt`.
    pub v0: f64,
    /// `sqrt(2 n v0 u) + u/3`.
    pub threshold: f64,
}

/// `rho_n(u) = sqrt(2 n v0 u) + u/3`: strictly increasing in `u`, zero at
/// `u = 0`.
pub fn rejection_threshold(n: u64, v0: f64, u: f64) -> f64 {
    (2.0 * n as f64 * v0 * u).sqrt() + u / 3.0
}

/// Split the window into the regions where `lambda1 - lambda0` is
/// nonnegative / negative, splitting at breakpoints and bisected sign
/// changes and classifying each elementary window by its midpoint.
fn sign_regions(
    lambda1: &IntensityModel,
    lambda0: &IntensityModel,
    env: &ModelEnvironment,
) -> (Vec<Interval>, Vec<Interval>) {
    let diff = |t: f64| lambda1.eval(t) - lambda0.eval(t);
    let mut above: Vec<Interval> = Vec::new();
    let mut below: Vec<Interval> = Vec::new();
    for iv in env.omega.intervals() {
        let mut pts = lambda1.breakpoints();
        pts.extend(lambda0.breakpoints());
        pts.extend([
            lambda1.domain().lo,
            lambda1.domain().hi,
            lambda0.domain().lo,
            lambda0.domain().hi,
        ]);
        pts.extend(quad::sign_change_points(diff, iv.lo, iv.hi, quad::SCAN_GRID));
        let points = quad::piece_points(iv.lo, iv.hi, pts);
        for w in points.windows(2) {
            let piece = Interval { lo: w[0], hi: w[1] };
            let target = if diff(0.5 * (w[0] + w[1])) >= 0.0 {
                &mut above
            } else {
                &mut below
            };
            match target.last_mut() {
                Some(last) if (last.hi - piece.lo).abs() < 1e-12 => last.hi = piece.hi,
                _ => target.push(piece),
            }
        }
    }
    (above, below)
}

fn weighted_integral(
    regions: &[Interval],
    f: impl Fn(f64) -> f64,
    breaks: &[f64],
    singular: &[f64],
) -> f64 {
    regions
        .iter()
        .map(|iv| {
            let points = quad::piece_points(iv.lo, iv.hi, breaks.iter().copied());
            quad::integrate_refined(&f, &points, singular)
        })
        .sum()
}

/// Build the one-sided test of `lambda1` against `lambda0` at level
/// parameter `u >= 0`.  Errors if the two intensities coincide on the
/// window (no region to test).
pub fn build_test(
    lambda1: &IntensityModel,
    lambda0: &IntensityModel,
    env: &ModelEnvironment,
    u: f64,
) -> Result<TestSpec> {
    if !(u >= 0.0 && u.is_finite()) {
        return Err(AalenError::pre("u must be finite and >= 0"));
    }
    let (region_above, region_below) = sign_regions(lambda1, lambda0, env);
    let mut breaks = lambda1.breakpoints();
    breaks.extend(lambda0.breakpoints());
    breaks.extend(env.mu.breakpoints());
    let singular = [
        lambda1.domain().lo,
        lambda1.domain().hi,
        lambda0.domain().lo,
        lambda0.domain().hi,
    ];
    let d_above = weighted_integral(
        &region_above,
        |t| (lambda1.eval(t) - lambda0.eval(t)) * env.mu.value(t),
        &breaks,
        &singular,
    );
    let d_below = weighted_integral(
        &region_below,
        |t| (lambda0.eval(t) - lambda1.eval(t)) * env.mu.value(t),
        &breaks,
        &singular,
    );
    if d_above + d_below <= 1e-12 {
        return Err(AalenError::invalid(
            "alternative coincides with the reference on the window; nothing to test",
        ));
    }
    let side = if d_above >= d_below {
        TestSide::Above
    } else {
        TestSide::Below
    };
    let mu_breaks: Vec<f64> = env.mu.breakpoints();
    let mut v0 = 0.0;
    for iv in env.omega.intervals() {
        let mut pts = lambda0.breakpoints();
        pts.extend(mu_breaks.iter().copied());
        let points = quad::piece_points(iv.lo, iv.hi, pts);
        v0 += quad::integrate_refined(
            |t| lambda0.eval(t) * env.mu.value(t),
            &points,
            &[lambda0.domain().lo, lambda0.domain().hi],
        );
    }
    v0 *= 1.0 + env.alpha;
    let threshold = rejection_threshold(env.n, v0, u);
    Ok(TestSpec {
        lambda1: lambda1.clone(),
        lambda0: lambda0.clone(),
        env: env.clone(),
        region_above,
        region_below,
        d_above,
        d_below,
        side,
        u,
        v0,
        threshold,
    })
}

impl TestSpec {
    /// Count of events falling in `regions` (binary search per interval on
    /// the sorted event list).
    fn count_events(record: &CountingRecord, regions: &[Interval]) -> u64 {
        regions
            .iter()
            .map(|iv| {
                let a = record.events.partition_point(|e| e.time < iv.lo);
                let b = record.events.partition_point(|e| e.time < iv.hi);
                (b - a) as u64
            })
            .sum()
    }

    /// `\int_regions lambda0 Y dt`, exact over exposure steps.
    fn compensator(&self, record: &CountingRecord, regions: &[Interval]) -> Result<f64> {
        let exposure = record.exposure()?;
        let breaks = self.lambda0.breakpoints();
        Ok(regions
            .iter()
            .map(|iv| {
                exposure.integrate_against(|t| self.lambda0.eval(t), iv.lo, iv.hi, &breaks)
            })
            .sum())
    }

    /// The monitored statistic `N(R) - \int_R lambda0 Y dt` on the chosen
    /// side's region.
    pub fn statistic(&self, record: &CountingRecord) -> Result<f64> {
        let regions = match self.side {
            TestSide::Above => &self.region_above,
            TestSide::Below => &self.region_below,
        };
        let count = Self::count_events(record, regions) as f64;
        Ok(count - self.compensator(record, regions)?)
    }
}

/// Evaluate the test on a record: `true` = reject the reference.  The
/// above-side test rejects when its statistic reaches `+threshold`; the
/// below side when it falls to `-threshold`.
pub fn apply_test(spec: &TestSpec, record: &CountingRecord) -> Result<bool> {
    let stat = spec.statistic(record)?;
    Ok(match spec.side {
        TestSide::Above => stat >= spec.threshold,
        TestSide::Below => stat <= -spec.threshold,
    })
}

/// One row of an empirical tail check: the fraction of concentration-event
/// paths whose centered integral exceeded its threshold, against the
/// `2 e^{-u}` bound.
#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub u: f64,
    /// Replicates that satisfied the concentration event and were kept.
    pub kept: usize,
    pub tail: f64,
    pub bound: f64,
    pub se: f64,
    pub pass: bool,
}

/// Empirically verify the martingale tail inequality for the integrand
/// `H`: simulate `replicates` paths under `spec`, keep those on the
/// exposure-concentration event (tolerance `alpha`), and for each `u`
/// report the fraction with
/// `|sum_i H(t_i) - \int H lambda Y dt| > sqrt(2 v u) + b u / 3`
/// (`b = sup H`), which must stay within three binomial standard errors of
/// `2 e^{-u}`.
///
/// `v` must bound `\int H^2 lambda Y dt` on every kept path; the first
/// violating path aborts with its replicate id.
pub fn bernstein_tail_check(
    h: &IntensityModel,
    spec: &ModelSpec,
    alpha: f64,
    v: f64,
    u_grid: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<Vec<TailRow>> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(AalenError::pre("v must be finite and >= 0"));
    }
    let env = spec.environment(alpha)?;
    let lambda = spec.lambda_true()?.clone();
    let b = h.sup();
    let mut breaks = h.breakpoints();
    breaks.extend(lambda.breakpoints());
    let mut exceed = vec![0usize; u_grid.len()];
    let mut kept = 0usize;
    for rep in 0..replicates {
        let record = spec.simulate(seed.wrapping_add(rep as u64))?;
        if !check_gamma_event(&record, &env)?.holds {
            continue;
        }
        let exposure = record.exposure()?;
        let quad_var = exposure.integrate_against(
            |t| h.eval(t) * h.eval(t) * lambda.eval(t),
            0.0,
            record.horizon,
            &breaks,
        );
        if quad_var > v * (1.0 + 1e-9) + 1e-12 {
            return Err(AalenError::pre(format!(
                "v = {v} is not a valid variance bound: path {rep} has \
                 \\int H^2 lambda Y dt = {quad_var}"
            )));
        }
        let event_sum: f64 = record.events.iter().map(|e| h.eval(e.time)).sum();
        let compensator = exposure.integrate_against(
            |t| h.eval(t) * lambda.eval(t),
            0.0,
            record.horizon,
            &breaks,
        );
        let stat = (event_sum - compensator).abs();
        kept += 1;
        for (i, &u) in u_grid.iter().enumerate() {
            if stat > (2.0 * v * u).sqrt() + b * u / 3.0 {
                exceed[i] += 1;
            }
        }
    }
    if kept == 0 {
        return Err(AalenError::pre(
            "no replicate satisfied the concentration event",
        ));
    }
    Ok(u_grid
        .iter()
        .zip(exceed)
        .map(|(&u, count)| {
            let tail = count as f64 / kept as f64;
            let bound = 2.0 * (-u).exp();
            let se = (tail * (1.0 - tail) / kept as f64).sqrt();
            TailRow {
                u,
                kept,
                tail,
                bound,
                se,
                pass: tail <= bound + 3.0 * se,
            }
        })
        .collect())
}

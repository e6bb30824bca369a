//! Distribution-comparison statistics used by the sampler and simulator
//! validation suites: Kolmogorov–Smirnov tests (one- and two-sample, with
//! the asymptotic Kolmogorov p-value), chi-square goodness of fit, and a
//! Geweke-style mean-stationarity z-score for MCMC chains.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{AalenError, Result};

/// Survival function of the Kolmogorov distribution,
/// `Q(x) = 2 \sum_{k>=1} (-1)^{k-1} e^{-2 k^2 x^2}`.
///
/// For small `x` the alternating series converges slowly, so the
/// Jacobi-theta transform `1 - (sqrt(2 pi)/x) \sum_{k>=1}
/// e^{-(2k-1)^2 pi^2 / (8 x^2)}` is used instead; the two expansions agree
/// to rounding on the crossover region (see tests).
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        let mut sum = 0.0;
        for k in 1..100u32 {
            let odd = (2 * k - 1) as f64;
            let term = (-odd * odd * std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp();
            sum += term;
            if term < 1e-18 * sum.max(1e-300) {
                break;
            }
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * sum).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for k in 1..100u32 {
            let kk = k as f64;
            let term = (-2.0 * kk * kk * x * x).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// A Kolmogorov–Smirnov test result: the sup-distance between the two
/// empirical (or empirical-vs-reference) distribution functions, and its
/// asymptotic p-value.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(AalenError::pre("sample must be non-empty"));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(AalenError::pre("sample contains a non-finite value"));
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(v)
}

/// The asymptotic p-value with the standard small-sample refinement
/// `Q((sqrt(ne) + 0.12 + 0.11/sqrt(ne)) D)`.
fn ks_p_value(d: f64, effective_n: f64) -> f64 {
    let root = effective_n.sqrt();
    kolmogorov_sf((root + 0.12 + 0.11 / root) * d)
}

/// Two-sample Kolmogorov–Smirnov test: `D = sup_x |F_a(x) - F_b(x)|` over
/// the pooled sample, p-value from the Kolmogorov asymptotic with
/// effective size `ab/(a+b)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsTest> {
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let effective = na * nb / (na + nb);
    Ok(KsTest {
        statistic: d,
        p_value: ks_p_value(d, effective),
    })
}

/// One-sample Kolmogorov–Smirnov test of the sample against a reference
/// CDF (supplied as a function; it need not be closed-form, only
/// monotone with values in `[0, 1]`).
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsTest> {
    let xs = sorted(xs)?;
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        if !(0.0..=1.0).contains(&f) {
            return Err(AalenError::pre(format!(
                "reference CDF returned {f} outside [0, 1] at {x}"
            )));
        }
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(KsTest {
        statistic: d,
        p_value: ks_p_value(d, n),
    })
}

/// A chi-square goodness-of-fit result with `bins - 1` degrees of
/// freedom.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: u32,
    pub p_value: f64,
}

/// Pearson chi-square statistic `\sum (O_i - E_i)^2 / E_i` against
/// expected counts, with the survival-function p-value on `bins - 1`
/// degrees of freedom.  Expected counts must be strictly positive; the
/// caller is responsible for pooling sparse bins.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<ChiSquareTest> {
    if observed.len() != expected.len() {
        return Err(AalenError::pre(format!(
            "bin count mismatch: {} observed vs {} expected",
            observed.len(),
            expected.len()
        )));
    }
    if observed.len() < 2 {
        return Err(AalenError::pre("need at least two bins"));
    }
    if expected.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(AalenError::pre(
            "expected counts must be finite and strictly positive",
        ));
    }
    let statistic: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            let diff = o as f64 - e;
            diff * diff / e
        })
        .sum();
    let dof = (observed.len() - 1) as u32;
    let dist = ChiSquared::new(dof as f64).expect("dof >= 1");
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: 1.0 - dist.cdf(statistic),
    })
}

/// Spectral variance of a segment's mean via batch means: split into
/// `~sqrt(len)` batches and scale the variance of the batch means.
fn batch_means_se2(xs: &[f64]) -> f64 {
    let n = xs.len();
    let batches = (n as f64).sqrt().floor() as usize;
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    // var(batch mean) ~ s^2 / size, so s^2 ~ size * var and the segment
    // mean has variance s^2 / n.
    size as f64 * var / n as f64
}

/// Geweke mean-stationarity z-score: compare the mean of the first
/// `frac_a` of the chain against the last `frac_b`, with batch-means
/// standard errors that absorb autocorrelation.  `|z| <~ 3` is consistent
/// with a stationary chain.
pub fn geweke_z(chain: &[f64], frac_a: f64, frac_b: f64) -> Result<f64> {
    if !(frac_a > 0.0 && frac_b > 0.0 && frac_a + frac_b <= 1.0) {
        return Err(AalenError::pre(
            "segment fractions must be positive and sum to at most 1",
        ));
    }
    let n = chain.len();
    let na = (n as f64 * frac_a).floor() as usize;
    let nb = (n as f64 * frac_b).floor() as usize;
    if na < 16 || nb < 16 {
        return Err(AalenError::pre(
            "chain too short for the requested segment fractions",
        ));
    }
    if chain.iter().any(|v| !v.is_finite()) {
        return Err(AalenError::pre("chain contains a non-finite value"));
    }
    let seg_a = &chain[..na];
    let seg_b = &chain[n - nb..];
    let mean_a = seg_a.iter().sum::<f64>() / na as f64;
    let mean_b = seg_b.iter().sum::<f64>() / nb as f64;
    let se2 = batch_means_se2(seg_a) + batch_means_se2(seg_b);
    if se2 <= 0.0 {
        // A constant chain is trivially stationary.
        return Ok(if mean_a == mean_b { 0.0 } else { f64::INFINITY });
    }
    Ok((mean_a - mean_b) / se2.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use rand::Rng as _;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn kolmogorov_sf_matches_direct_alternating_series() {
        // Oracle: the raw alternating series summed to machine precision,
        // valid for moderate-to-large x.
        let direct = |x: f64| {
            let mut s = 0.0;
            for k in 1..200u32 {
                let kk = k as f64;
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                s += sign * (-2.0 * kk * kk * x * x).exp();
            }
            2.0 * s
        };
        assert_relative_eq!(kolmogorov_sf(1.0), direct(1.0), epsilon = 1e-14);
        assert_relative_eq!(kolmogorov_sf(1.0), 0.2699996716773546, epsilon = 1e-12);
    }

    #[test]
    fn kolmogorov_branches_agree_through_the_crossover() {
        // The theta-transformed series (x < 1.18 branch) and the
        // alternating series are different expansions of the same
        // function; they must coincide where both converge well.
        for i in 0..=60 {
            let x = 0.6 + 0.02 * i as f64; // 0.6 .. 1.8
            let theta = {
                let mut sum = 0.0;
                for k in 1..60u32 {
                    let odd = (2 * k - 1) as f64;
                    sum += (-odd * odd * std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp();
                }
                1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * sum
            };
            let alternating = {
                let mut s = 0.0;
                for k in 1..200u32 {
                    let kk = k as f64;
                    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                    s += sign * (-2.0 * kk * kk * x * x).exp();
                }
                2.0 * s
            };
            assert_relative_eq!(theta, alternating, epsilon = 1e-12);
            assert_relative_eq!(kolmogorov_sf(x), alternating, epsilon = 1e-12);
        }
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        assert!(kolmogorov_sf(0.2) > 1.0 - 1e-9);
        assert!(kolmogorov_sf(4.0) < 1e-12);
    }

    #[test]
    fn two_sample_statistic_on_a_hand_case() {
        // F_a steps by 1/3 at {1,2,3}; F_b by 1/2 at {1.5,2.5}; the sup
        // gap is 1/3 (just after 1, and again just after 2.5).
        let t = ks_two_sample(&[1.0, 2.0, 3.0], &[1.5, 2.5]).unwrap();
        assert_relative_eq!(t.statistic, 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn two_sample_accepts_same_law_and_rejects_shifted() {
        let mut rng = stream(71, 0);
        let a: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let same = ks_two_sample(&a, &b).unwrap();
        assert!(same.p_value > 0.01, "p = {}", same.p_value);

        let shifted: Vec<f64> = a.iter().map(|x| x + 0.2).collect();
        let diff = ks_two_sample(&a, &shifted).unwrap();
        assert!(diff.p_value < 1e-8, "p = {}", diff.p_value);
        assert!(diff.statistic > 0.15);
    }

    #[test]
    fn one_sample_against_the_uniform_cdf() {
        let mut rng = stream(72, 0);
        let xs: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let unif = |x: f64| x.clamp(0.0, 1.0);
        let good = ks_one_sample(&xs, unif).unwrap();
        assert!(good.p_value > 0.01, "p = {}", good.p_value);

        let squared: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let bad = ks_one_sample(&squared, unif).unwrap();
        assert!(bad.p_value < 1e-10, "p = {}", bad.p_value);
    }

    #[test]
    fn one_sample_statistic_exact_small_case() {
        // Single point 0.4 against U(0,1): D = max(0.4 - 0, 1 - 0.4) = 0.6.
        let t = ks_one_sample(&[0.4], |x| x.clamp(0.0, 1.0)).unwrap();
        assert_relative_eq!(t.statistic, 0.6, epsilon = 1e-15);
    }

    #[test]
    fn ks_input_validation() {
        assert!(ks_two_sample(&[], &[1.0]).is_err());
        assert!(ks_one_sample(&[f64::NAN], |_| 0.5).is_err());
        assert!(ks_one_sample(&[0.5], |_| 1.5).is_err());
    }

    #[test]
    fn chi_square_closed_form_on_two_dof() {
        // With dof = 2 the survival function is e^{-x/2}: an oracle
        // independent of the library's chi-square implementation.
        let t = chi_square_gof(&[30, 10, 10], &[25.0, 15.0, 10.0]).unwrap();
        assert_relative_eq!(t.statistic, 8.0 / 3.0, epsilon = 1e-12);
        assert_eq!(t.dof, 2);
        assert_relative_eq!(t.p_value, (-4.0_f64 / 3.0).exp(), epsilon = 1e-10);
    }

    #[test]
    fn chi_square_detects_gross_misfit_and_accepts_exact_fit() {
        let exact = chi_square_gof(&[50, 50], &[50.0, 50.0]).unwrap();
        assert_eq!(exact.statistic, 0.0);
        assert_relative_eq!(exact.p_value, 1.0, epsilon = 1e-12);

        let off = chi_square_gof(&[100, 0], &[50.0, 50.0]).unwrap();
        assert!(off.p_value < 1e-12);
    }

    #[test]
    fn chi_square_input_validation() {
        assert!(chi_square_gof(&[1, 2], &[1.0]).is_err());
        assert!(chi_square_gof(&[1], &[1.0]).is_err());
        assert!(chi_square_gof(&[1, 2], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn geweke_accepts_stationary_and_flags_drift() {
        let mut rng = stream(73, 0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let stationary: Vec<f64> = (0..4000).map(|_| normal.sample(&mut rng)).collect();
        let z = geweke_z(&stationary, 0.1, 0.5).unwrap();
        assert!(z.abs() < 3.0, "z = {z}");

        let drifting: Vec<f64> = (0..4000)
            .map(|i| normal.sample(&mut rng) + if i < 2000 { 0.0 } else { 1.0 })
            .collect();
        let zd = geweke_z(&drifting, 0.1, 0.5).unwrap();
        assert!(zd.abs() > 5.0, "z = {zd}");
    }

    #[test]
    fn geweke_validation_and_constant_chain() {
        assert!(geweke_z(&[1.0; 1000], 0.0, 0.5).is_err());
        assert!(geweke_z(&[1.0; 1000], 0.6, 0.6).is_err());
        assert!(geweke_z(&[1.0; 20], 0.1, 0.5).is_err());
        assert_eq!(geweke_z(&[2.5; 1000], 0.1, 0.5).unwrap(), 0.0);
    }
}

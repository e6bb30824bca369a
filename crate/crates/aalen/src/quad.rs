//! Deterministic 1-D quadrature: composite Gauss-Legendre panels split at
//! caller-supplied non-smooth points, plus bisection utilities for locating
//! crossings of continuous functions.
//!
//! A single 32-node panel integrates polynomials up to degree 63 exactly and
//! drives the error for analytic integrands far below the tolerances used in
//! this crate; integrands with kinks or jumps must be split at those points
//! via [`piece_points`] / [`integrate_pieces`].

use std::f64::consts::PI;

/// Nodes per Gauss-Legendre panel.
pub const PANEL_NODES: usize = 32;

/// Grid resolution used by scan-based suprema and crossing searches.
pub const SCAN_GRID: usize = 4096;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, computed once by Newton
/// iteration on the Legendre polynomial.
fn gauss_legendre() -> &'static ([f64; PANEL_NODES], [f64; PANEL_NODES]) {
    use std::sync::OnceLock;
    static TABLE: OnceLock<([f64; PANEL_NODES], [f64; PANEL_NODES])> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = PANEL_NODES;
        let mut nodes = [0.0; PANEL_NODES];
        let mut weights = [0.0; PANEL_NODES];
        for i in 0..n {
            // Tricomi initial guess for the i-th root (descending order).
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_pair(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_pair(n, x);
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Integrate `f` over `[a, b]` with a single Gauss-Legendre panel.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (nodes, weights) = gauss_legendre();
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(weights.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Nodes and weights of a single Gauss-Legendre panel mapped to `[a, b]`,
/// for callers that tabulate integrands instead of integrating a closure.
pub fn panel(a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (nodes, weights) = gauss_legendre();
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let ts = nodes.iter().map(|x| mid + half * x).collect();
    let ws = weights.iter().map(|w| w * half).collect();
    (ts, ws)
}

/// Integrate `f` over consecutive panels `[points[0], points[1]], ...`.
/// `points` must be sorted; a sequence with fewer than two entries
/// integrates to zero.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, points: &[f64]) -> f64 {
    points
        .windows(2)
        .map(|w| integrate(&f, w[0], w[1]))
        .sum()
}

/// Panel boundaries for `[a, b]` split at every interior point of `breaks`.
/// Input breaks need not be sorted or in range; duplicates (within `1e-12`
/// absolute) are dropped.
pub fn piece_points(a: f64, b: f64, breaks: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut pts: Vec<f64> = breaks
        .into_iter()
        .filter(|&t| t > a && t < b)
        .collect();
    pts.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(pts.len() + 2);
    out.push(a);
    for t in pts {
        if t - out.last().unwrap() > 1e-12 {
            out.push(t);
        }
    }
    if b - out.last().unwrap() > 1e-12 {
        out.push(b);
    } else {
        *out.last_mut().unwrap() = b;
    }
    out
}

/// Panel boundaries for `[a, b]` refined dyadically toward both endpoints,
/// halving down to about `1e-13` of the width.  Gauss-Legendre panels on
/// this grid resolve integrable endpoint singularities (logarithmic or
/// fractional-power) to near machine accuracy, because each panel sees a
/// bounded range of `log` of its argument.
pub fn edge_refined_points(a: f64, b: f64) -> Vec<f64> {
    const DEPTH: i32 = 44;
    let len = b - a;
    let mut pts = Vec::with_capacity(2 * DEPTH as usize + 1);
    pts.push(a);
    for i in (1..=DEPTH).rev() {
        pts.push(a + len * 0.5f64.powi(i));
    }
    for i in 2..=DEPTH {
        pts.push(b - len * 0.5f64.powi(i));
    }
    pts.push(b);
    pts
}

/// Integrate `f` over consecutive windows of `points`, dyadically refining
/// any window that touches one of the `singular` abscissae (within `1e-12`)
/// and using a single panel elsewhere.
pub fn integrate_refined<F: Fn(f64) -> f64>(f: F, points: &[f64], singular: &[f64]) -> f64 {
    let near = |x: f64| singular.iter().any(|&s| (s - x).abs() <= 1e-12);
    points
        .windows(2)
        .map(|w| {
            if near(w[0]) || near(w[1]) {
                integrate_pieces(&f, &edge_refined_points(w[0], w[1]))
            } else {
                integrate(&f, w[0], w[1])
            }
        })
        .sum()
}

/// Locate a root of `f` in `[lo, hi]` by bisection, assuming
/// `f(lo)` and `f(hi)` have opposite signs.  Runs to absolute width `tol`.
pub fn bisect_root<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        if fmid == 0.0 {
            return mid;
        }
        if (flo > 0.0) == (fmid > 0.0) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Find sign-change locations of `f` over `[a, b]` by scanning `grid`
/// equally spaced cells and bisecting each bracketed change.  Returns
/// crossing points in increasing order.  Crossings closer together than a
/// grid cell may be missed; callers choose `grid` accordingly.
pub fn sign_change_points<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, grid: usize) -> Vec<f64> {
    let mut out = Vec::new();
    if b <= a {
        return out;
    }
    let h = (b - a) / grid as f64;
    let mut prev_t = a;
    let mut prev_v = f(a);
    for i in 1..=grid {
        let t = if i == grid { b } else { a + h * i as f64 };
        let v = f(t);
        if prev_v == 0.0 {
            out.push(prev_t);
        } else if v != 0.0 && (prev_v > 0.0) != (v > 0.0) {
            out.push(bisect_root(&f, prev_t, t, 1e-13));
        }
        prev_t = t;
        prev_v = v;
    }
    if prev_v == 0.0 {
        out.push(prev_t);
    }
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    out
}

/// Supremum of `f` over `[a, b]` scanned on `grid` equally spaced points
/// plus the caller's extra points (each probed with a small two-sided
/// offset so one-sided limits at jump points are seen).
pub fn sup_on_grid<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    grid: usize,
    extra: impl IntoIterator<Item = f64>,
) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let h = (b - a) / grid as f64;
    for i in 0..=grid {
        let t = if i == grid { b } else { a + h * i as f64 };
        best = best.max(f(t));
    }
    let eps = 1e-9 * (b - a).max(1.0);
    for t in extra {
        for cand in [t - eps, t, t + eps] {
            if cand >= a && cand <= b {
                best = best.max(f(cand));
            }
        }
    }
    best
}

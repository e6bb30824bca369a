//! Empirical contraction-rate studies: simulate records over a grid of
//! sample sizes, run the posterior sampler on each, and compare how the
//! posterior L1 error shrinks against the theoretical rate `v_n` for the
//! prior family in use.
//!
//! For each `(n, replicate)` cell the driver simulates one record, fits
//! the configured prior, and records the posterior mean/median L1 error
//! plus the posterior mass outside L1 balls of radius `J1 * v_n` for
//! `J1 in {1, 2, 4, 8}` (the theory fixes the rate only up to such a
//! constant, so the whole curve is reported rather than one point).  The
//! headline statistic is the least-squares slope of `log(median error)`
//! against `log(n / log n)` or `log n` — whichever abscissa the rate
//! formula uses; mixing them would bias the slope — with a bootstrap
//! confidence interval over replicates.
//!
//! A histogram baseline ([`baseline_estimator`]) of the form
//! `increment of N / integral of Y` per bin gives a frequentist reference
//! point for the same records.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AalenError, Result};
use crate::intensity::{IntensityModel, PiecewiseConstant};
use crate::posterior::{
    fit_dpm, fit_loglinear, fit_logspline, posterior_summary, McmcSettings, PosteriorChain,
    PriorSpec,
};
use crate::processes::{CountingRecord, ModelTemplate};
use crate::rng::stream;
use crate::step::StepFunction;

/// The constants `J1` for which the outside-ball posterior mass is
/// tracked.
pub const J1_GRID: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

/// Theoretical contraction-rate formula `v_n`, selecting both the rate
/// and the regression abscissa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum RateFormula {
    /// Monotone-density rate `(n / log n)^{-1/3}`.
    Monotone,
    /// Smooth-spline rate `n^{-alpha/(2 alpha + 1)}`.
    Spline { alpha: f64 },
    /// Log-linear sieve rate
    /// `(n / log n)^{-alpha/(2 alpha + 1)} (log n)^{(1 - s)/2}`.
    LogLinear { alpha: f64, sparsity: u8 },
}

impl RateFormula {
    pub fn validate(&self) -> Result<()> {
        match self {
            RateFormula::Monotone => Ok(()),
            RateFormula::Spline { alpha } | RateFormula::LogLinear { alpha, .. } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return Err(AalenError::invalid("rate alpha must be finite and > 0"));
                }
                if let RateFormula::LogLinear { sparsity, .. } = self {
                    if *sparsity > 1 {
                        return Err(AalenError::invalid("sparsity must be 0 or 1"));
                    }
                }
                Ok(())
            }
        }
    }

    /// The rate `v_n` (requires `n >= 2` so the logarithms are positive).
    pub fn v_n(&self, n: u64) -> f64 {
        let nf = n as f64;
        let ln = nf.ln();
        match self {
            RateFormula::Monotone => (nf / ln).powf(-1.0 / 3.0),
            RateFormula::Spline { alpha } => nf.powf(-alpha / (2.0 * alpha + 1.0)),
            RateFormula::LogLinear { alpha, sparsity } => {
                (nf / ln).powf(-alpha / (2.0 * alpha + 1.0))
                    * ln.powf((1.0 - *sparsity as f64) / 2.0)
            }
        }
    }

    /// Regression abscissa: `log(n / log n)` when the formula carries the
    /// log factor, plain `log n` otherwise.
    pub fn abscissa(&self, n: u64) -> f64 {
        let nf = n as f64;
        match self {
            RateFormula::Monotone | RateFormula::LogLinear { .. } => (nf / nf.ln()).ln(),
            RateFormula::Spline { .. } => nf.ln(),
        }
    }

    /// The exponent the slope estimate is compared against.
    pub fn exponent(&self) -> f64 {
        match self {
            RateFormula::Monotone => -1.0 / 3.0,
            RateFormula::Spline { alpha } | RateFormula::LogLinear { alpha, .. } => {
                -alpha / (2.0 * alpha + 1.0)
            }
        }
    }
}

/// Full description of one contraction-rate study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Generative family with `n` left open.
    pub template: ModelTemplate,
    /// True intensity the errors are measured against; defaults to the
    /// template's own intensity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<IntensityModel>,
    pub prior: PriorSpec,
    pub n_grid: Vec<u64>,
    pub replicates: usize,
    #[serde(default)]
    pub mcmc: McmcSettings,
    pub formula: RateFormula,
    pub seed: u64,
    /// Bootstrap resamples for the slope confidence interval.
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
}

fn default_bootstrap() -> usize {
    200
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.mcmc.validate()?;
        self.formula.validate()?;
        if self.n_grid.is_empty() {
            return Err(AalenError::invalid("n grid must be non-empty"));
        }
        if !self.n_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(AalenError::invalid("n grid must be strictly increasing"));
        }
        if self.n_grid[0] < 2 {
            return Err(AalenError::invalid("n grid entries must be at least 2"));
        }
        if self.replicates < 5 {
            return Err(AalenError::invalid("need at least 5 replicates per n"));
        }
        if self.bootstrap < 200 {
            return Err(AalenError::invalid("need at least 200 bootstrap resamples"));
        }
        if let Some(l) = &self.lambda0 {
            l.validate()?;
        }
        Ok(())
    }

    fn truth(&self, n: u64) -> Result<IntensityModel> {
        if let Some(l) = &self.lambda0 {
            return Ok(l.clone());
        }
        Ok(self.template.instantiate(n).lambda_true()?.clone())
    }

    /// Rough per-study cost figure printed before execution: total MCMC
    /// sweeps times sample size, summed over the grid.
    pub fn budget_estimate(&self) -> f64 {
        self.n_grid
            .iter()
            .map(|&n| (self.replicates * self.mcmc.iterations) as f64 * n as f64)
            .sum()
    }
}

/// Outcome of one `(n, replicate)` cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRow {
    pub n: u64,
    pub replicate: usize,
    /// Seed of the simulated record (the fit seed is derived from it).
    pub seed: u64,
    pub events: usize,
    pub mean_l1: f64,
    pub median_l1: f64,
    /// Posterior mass outside `J1 * v_n` balls, for `J1` in [`J1_GRID`].
    pub mass_outside: [f64; 4],
    pub wall_s: f64,
    /// `None` when the replicate completed; the diagnostic message when
    /// the chain aborted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

/// Equality ignores `wall_s`: the statistical content of a study is a
/// pure function of config and seeds, the clock is not.
impl PartialEq for RunRow {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.replicate == other.replicate
            && self.seed == other.seed
            && self.events == other.events
            && self.mean_l1 == other.mean_l1
            && self.median_l1 == other.median_l1
            && self.mass_outside == other.mass_outside
            && self.aborted == other.aborted
    }
}

/// Per-`n` aggregate over completed replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerN {
    pub n: u64,
    pub v_n: f64,
    pub completed: usize,
    pub aborted: usize,
    /// Median over replicates of the posterior mean L1 error.
    pub median_mean_l1: f64,
    /// Interquartile range of the posterior mean L1 error.
    pub iqr_mean_l1: f64,
    /// Mean over replicates of the outside-ball mass, per `J1`.
    pub mean_mass_outside: [f64; 4],
}

/// Study result: per-replicate rows, per-`n` summaries, and the fitted
/// log-log slope with its bootstrap interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub formula: RateFormula,
    pub theoretical_exponent: f64,
    pub rows: Vec<RunRow>,
    pub per_n: Vec<PerN>,
    /// Least-squares slope of log median error against the formula's
    /// abscissa; `None` (serialized as "n/a" in `slope_label`) when the
    /// grid has fewer than two points.
    pub slope: Option<f64>,
    pub slope_label: String,
    /// Equal-tailed 95% bootstrap interval for the slope.
    pub slope_ci: Option<(f64, f64)>,
    /// Whether the outside-ball mass at `J1 = 4` is non-increasing in `n`.
    pub mass_outside_non_increasing: bool,
    pub seed: u64,
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

/// Ordinary least-squares slope of `ys` on `xs`.
fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn fit_one(
    config: &StudyConfig,
    record: &CountingRecord,
    seed: u64,
) -> Result<PosteriorChain> {
    match &config.prior {
        PriorSpec::Dpm(p) => fit_dpm(record, p, &config.mcmc, seed),
        PriorSpec::LogSpline(p) => fit_logspline(record, p, &config.mcmc, seed),
        PriorSpec::LogLinear(p) => fit_loglinear(record, p, &config.mcmc, seed),
    }
}

fn run_cell(config: &StudyConfig, n: u64, replicate: usize, index: usize) -> RunRow {
    let start = Instant::now();
    let sim_seed = config.seed.wrapping_add(1_000_003 * index as u64 + 1);
    let fit_seed = config.seed.wrapping_add(1_000_003 * index as u64 + 2);
    let v = config.formula.v_n(n);
    let fail = |msg: String, events: usize, start: Instant| RunRow {
        n,
        replicate,
        seed: sim_seed,
        events,
        mean_l1: f64::NAN,
        median_l1: f64::NAN,
        mass_outside: [f64::NAN; 4],
        wall_s: start.elapsed().as_secs_f64(),
        aborted: Some(msg),
    };
    let record = match config.template.instantiate(n).simulate(sim_seed) {
        Ok(r) => r,
        Err(e) => return fail(format!("simulation failed: {e}"), 0, start),
    };
    let events = record.events.len();
    let chain = match fit_one(config, &record, fit_seed) {
        Ok(c) => c,
        Err(e) => return fail(format!("chain aborted: {e}"), events, start),
    };
    let lambda0 = match config.truth(n) {
        Ok(l) => l,
        Err(e) => return fail(format!("missing truth: {e}"), events, start),
    };
    let mut mass_outside = [0.0; 4];
    let mut mean_l1 = 0.0;
    let mut median_l1 = 0.0;
    for (slot, j1) in J1_GRID.iter().enumerate() {
        match posterior_summary(&chain, &lambda0, j1 * v) {
            Ok(s) => {
                mass_outside[slot] = s.mass_outside_radius;
                mean_l1 = s.mean_l1_error;
                median_l1 = s.median_l1_error;
            }
            Err(e) => return fail(format!("summary failed: {e}"), events, start),
        }
    }
    RunRow {
        n,
        replicate,
        seed: sim_seed,
        events,
        mean_l1,
        median_l1,
        mass_outside,
        wall_s: start.elapsed().as_secs_f64(),
        aborted: None,
    }
}

fn write_artifacts(out_dir: &Path, config: &StudyConfig, report: &RateReport) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut csv = String::from(
        "n,replicate,seed,events,mean_l1,median_l1,\
         mass_outside_J1_1,mass_outside_J1_2,mass_outside_J1_4,mass_outside_J1_8,\
         wall_s,status\n",
    );
    for r in &report.rows {
        let status = r.aborted.as_deref().unwrap_or("ok").replace(',', ";");
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{:.3},{}\n",
            r.n,
            r.replicate,
            r.seed,
            r.events,
            r.mean_l1,
            r.median_l1,
            r.mass_outside[0],
            r.mass_outside[1],
            r.mass_outside[2],
            r.mass_outside[3],
            r.wall_s,
            status
        ));
    }
    std::fs::write(out_dir.join("summary.csv"), csv)?;
    let mut f = std::fs::File::create(out_dir.join("report.json"))?;
    serde_json::to_writer_pretty(&mut f, report)?;
    f.write_all(b"\n")?;
    std::fs::write(
        out_dir.join("config.json"),
        serde_json::to_string_pretty(config)?,
    )?;
    Ok(())
}

fn write_chain(out_dir: &Path, n: u64, replicate: usize, chain: &PosteriorChain) -> Result<()> {
    let dir = out_dir.join("chains");
    std::fs::create_dir_all(&dir)?;
    let mut buf = String::new();
    for draw in &chain.draws {
        buf.push_str(&serde_json::to_string(draw)?);
        buf.push('\n');
    }
    std::fs::write(dir.join(format!("chain_n{n}_rep{replicate}.jsonl")), buf)?;
    Ok(())
}

/// Run the full study.  Cells are executed as a parallel map over
/// `(n, replicate)` with seeds derived from the cell index, and the
/// aggregation touches cells in a fixed order, so the report is
/// byte-identical across thread counts.  When `out_dir` is given,
/// `summary.csv`, `report.json`, `config.json`, and per-replicate chain
/// files are written there.  The study fails outright when more than 20%
/// of replicates abort.
pub fn run_rate_study(config: &StudyConfig, out_dir: Option<&Path>) -> Result<RateReport> {
    config.validate()?;
    eprintln!(
        "rate study: {} cells over n = {:?}, ~{:.2e} sweep-units",
        config.n_grid.len() * config.replicates,
        config.n_grid,
        config.budget_estimate()
    );

    let cells: Vec<(u64, usize, usize)> = config
        .n_grid
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| {
            (0..config.replicates).map(move |rep| (n, rep, i * config.replicates + rep))
        })
        .collect();
    let rows: Vec<RunRow> = cells
        .par_iter()
        .map(|&(n, rep, index)| {
            let row = run_cell(config, n, rep, index);
            if row.aborted.is_none() {
                if let Some(dir) = out_dir {
                    // Refit determinism: the chain is a pure function of
                    // (record, fit seed), so regenerate it for writing
                    // rather than holding every chain in memory.
                    let record = config.template.instantiate(n).simulate(row.seed).unwrap();
                    let fit_seed = config.seed.wrapping_add(1_000_003 * index as u64 + 2);
                    if let Ok(chain) = fit_one(config, &record, fit_seed) {
                        let _ = write_chain(dir, n, rep, &chain);
                    }
                }
            }
            row
        })
        .collect();

    let aborted = rows.iter().filter(|r| r.aborted.is_some()).count();
    if aborted * 5 > rows.len() {
        return Err(AalenError::ChainDiagnostic(format!(
            "{aborted} of {} replicates aborted (over 20%)",
            rows.len()
        )));
    }

    let mut per_n = Vec::with_capacity(config.n_grid.len());
    for &n in &config.n_grid {
        let ok: Vec<&RunRow> = rows
            .iter()
            .filter(|r| r.n == n && r.aborted.is_none())
            .collect();
        let aborted_n = rows
            .iter()
            .filter(|r| r.n == n && r.aborted.is_some())
            .count();
        if ok.is_empty() {
            return Err(AalenError::ChainDiagnostic(format!(
                "every replicate at n = {n} aborted"
            )));
        }
        let mut means: Vec<f64> = ok.iter().map(|r| r.mean_l1).collect();
        means.sort_by(f64::total_cmp);
        let mut mean_mass = [0.0; 4];
        for r in &ok {
            for (slot, m) in mean_mass.iter_mut().enumerate() {
                *m += r.mass_outside[slot];
            }
        }
        for m in &mut mean_mass {
            *m /= ok.len() as f64;
        }
        per_n.push(PerN {
            n,
            v_n: config.formula.v_n(n),
            completed: ok.len(),
            aborted: aborted_n,
            median_mean_l1: quantile_sorted(&means, 0.5),
            iqr_mean_l1: quantile_sorted(&means, 0.75) - quantile_sorted(&means, 0.25),
            mean_mass_outside: mean_mass,
        });
    }

    let (slope, slope_label, slope_ci) = if per_n.len() < 2 {
        (None, "n/a".to_string(), None)
    } else {
        let xs: Vec<f64> = per_n.iter().map(|p| config.formula.abscissa(p.n)).collect();
        let ys: Vec<f64> = per_n.iter().map(|p| p.median_mean_l1.ln()).collect();
        let slope = fit_slope(&xs, &ys);
        // Bootstrap over replicates within each n, refitting the slope on
        // the resampled medians.
        let mut rng = stream(config.seed, u64::MAX);
        let mut slopes = Vec::with_capacity(config.bootstrap);
        let grouped: Vec<Vec<f64>> = config
            .n_grid
            .iter()
            .map(|&n| {
                rows.iter()
                    .filter(|r| r.n == n && r.aborted.is_none())
                    .map(|r| r.mean_l1)
                    .collect()
            })
            .collect();
        use rand::Rng as _;
        for _ in 0..config.bootstrap {
            let ys_b: Vec<f64> = grouped
                .iter()
                .map(|g| {
                    let mut sample: Vec<f64> = (0..g.len())
                        .map(|_| g[rng.random_range(0..g.len())])
                        .collect();
                    sample.sort_by(f64::total_cmp);
                    quantile_sorted(&sample, 0.5).ln()
                })
                .collect();
            slopes.push(fit_slope(&xs, &ys_b));
        }
        slopes.sort_by(f64::total_cmp);
        let ci = (
            quantile_sorted(&slopes, 0.025),
            quantile_sorted(&slopes, 0.975),
        );
        (Some(slope), format!("{slope:.4}"), Some(ci))
    };

    let mass_outside_non_increasing = per_n
        .windows(2)
        .all(|w| w[1].mean_mass_outside[2] <= w[0].mean_mass_outside[2] + 1e-12);

    let report = RateReport {
        formula: config.formula.clone(),
        theoretical_exponent: config.formula.exponent(),
        rows,
        per_n,
        slope,
        slope_label,
        slope_ci,
        mass_outside_non_increasing,
        seed: config.seed,
    };
    if let Some(dir) = out_dir {
        write_artifacts(dir, config, &report)?;
    }
    Ok(report)
}

/// Histogram intensity estimate on equal-width bins.
#[derive(Debug, Clone, Serialize)]
pub struct BaselineFit {
    /// Piecewise-constant estimate `increment of N / integral of Y` per
    /// bin.
    pub model: IntensityModel,
    /// Indices of bins with no exposure, whose value is pinned to zero.
    pub empty_bins: Vec<usize>,
}

/// Nelson-Aalen-increment histogram estimator: on each of `bins`
/// equal-width cells of `[0, horizon]` the intensity estimate is the
/// event count divided by the integrated exposure.  Cells without
/// exposure get value zero and are reported in `empty_bins`.
pub fn baseline_estimator(record: &CountingRecord, bins: usize) -> Result<BaselineFit> {
    record.validate()?;
    if bins == 0 {
        return Err(AalenError::pre("need at least one bin"));
    }
    let exposure: StepFunction = record.exposure()?;
    let mut breaks = Vec::with_capacity(bins + 1);
    for i in 0..=bins {
        breaks.push(record.horizon * i as f64 / bins as f64);
    }
    let mut values = Vec::with_capacity(bins);
    let mut empty = Vec::new();
    for i in 0..bins {
        let (lo, hi) = (breaks[i], breaks[i + 1]);
        let lo_idx = record.events.partition_point(|e| e.time < lo);
        let hi_idx = if i + 1 == bins {
            // The final bin is closed on the right so the event at the
            // horizon (if any) is counted once.
            record.events.len()
        } else {
            record.events.partition_point(|e| e.time < hi)
        };
        let count = (hi_idx - lo_idx) as f64;
        let mass = exposure.integrate_against(|_| 1.0, lo, hi, &[]);
        if mass <= 0.0 {
            empty.push(i);
            values.push(0.0);
        } else {
            values.push(count / mass);
        }
    }
    Ok(BaselineFit {
        model: IntensityModel::PiecewiseConstant(PiecewiseConstant::new(breaks, values)?),
        empty_bins: empty,
    })
}

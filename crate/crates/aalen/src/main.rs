//! Command-line front end: simulation, intensity diagnostics, likelihood
//! evaluation, posterior fitting, contraction-rate studies, and
//! test-bound verification, all reading and writing JSON/CSV artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use aalen::intensity::IntensityModel;
use aalen::likelihood::log_likelihood;
use aalen::metrics::{ej_moment, hellinger, kl_aalen, l1_distance, sup_ratio};
use aalen::posterior::{
    fit_dpm, fit_loglinear, fit_logspline, DpmPrior, LogLinearPrior, McmcSettings,
    PosteriorChain, SplinePrior,
};
use aalen::processes::{CountingRecord, ModelSpec};
use aalen::study::{run_rate_study, StudyConfig};
use aalen::testing::{apply_test, build_test};

#[derive(Parser)]
#[command(
    name = "aalen",
    about = "Counting-process simulation and Bayesian intensity inference",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Family {
    Poisson,
    Censoring,
    Markov,
}

impl Family {
    fn name(self) -> &'static str {
        match self {
            Family::Poisson => "poisson",
            Family::Censoring => "censoring",
            Family::Markov => "markov",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Metric {
    L1,
    Hellinger,
    E1,
    E2,
    SupRatio,
    Kl,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one record from a generative model spec (JSON) and write it
    /// as JSON.
    Simulate {
        /// Model family; must match the spec file's own tag.
        #[arg(long)]
        model: Family,
        /// Model spec file (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Output record file (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Distance/divergence between two intensity spec files, as CSV
    /// `metric,value,grid_size,tolerance`.
    Diagnostics {
        #[arg(long)]
        metric: Metric,
        /// First intensity spec (the reference for asymmetric metrics).
        #[arg(long)]
        a: PathBuf,
        /// Second intensity spec.
        #[arg(long)]
        b: PathBuf,
        /// Exposure size for the KL divergence environment.
        #[arg(long, default_value_t = 1)]
        n: u64,
        /// Exposure-floor parameter of the environment, in (0, 1).
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Output CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact log-likelihood of an intensity spec on a record.
    Loglik {
        /// Intensity spec file (JSON).
        #[arg(long)]
        intensity: PathBuf,
        /// Record file (JSON).
        #[arg(long)]
        record: PathBuf,
    },
    /// Posterior sampling under the uniform-mixture prior.
    FitDpm {
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Posterior sampling under the exponential-spline prior.
    FitLogspline {
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Posterior sampling under the log-linear cosine prior.
    FitLoglinear {
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Full contraction-rate study from a TOML config.
    RateStudy {
        /// Study config file (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for summary.csv, report.json, and chains.
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo check of the one-sided test's type-I bound
    /// `2 exp(-u)`, as CSV `u,n,empirical_type1,bound,se,pass`.
    TestBounds {
        /// Null intensity spec (JSON).
        #[arg(long)]
        lambda0: PathBuf,
        /// Alternative intensity spec (JSON).
        #[arg(long)]
        lambda1: PathBuf,
        #[arg(long)]
        n: u64,
        /// Deviation parameters u, comma separated.
        #[arg(long, value_delimiter = ',')]
        u: Vec<f64>,
        #[arg(long, default_value_t = 2000)]
        replicates: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Output CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct FitArgs {
    /// Record file (JSON).
    #[arg(long)]
    record: PathBuf,
    /// Prior spec file (JSON) for this family.
    #[arg(long)]
    prior: PathBuf,
    /// Output directory: chain.jsonl, summary.csv, acceptance.csv,
    /// manifest.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3000)]
    iterations: usize,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    #[arg(long, default_value_t = 5)]
    stride: usize,
}

impl FitArgs {
    fn mcmc(&self) -> McmcSettings {
        McmcSettings {
            iterations: self.iterations,
            burn_in: self.burn_in,
            stride: self.stride,
            ..McmcSettings::default()
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {what} from {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {what} in {}", path.display()))
}

fn read_intensity(path: &Path) -> Result<IntensityModel> {
    let m: IntensityModel = read_json(path, "intensity spec")?;
    m.validate()
        .with_context(|| format!("invalid intensity spec in {}", path.display()))?;
    Ok(m)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_or_print(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(p) => {
            std::fs::write(p, content).with_context(|| format!("writing {}", p.display()))?
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn sha_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Serialize)]
struct AcceptanceSummary {
    label: String,
    post_rate: f64,
    scale: f64,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    seed: u64,
    record_digest: String,
    prior_digest: String,
    iterations: usize,
    burn_in: usize,
    stride: usize,
    draws: usize,
    acceptance: Vec<AcceptanceSummary>,
    wall_s: f64,
}

fn write_fit_outputs(
    dir: &Path,
    command: &str,
    chain: &PosteriorChain,
    record: &CountingRecord,
    prior_json: &str,
    wall_s: f64,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut jsonl = String::new();
    for draw in &chain.draws {
        jsonl.push_str(&serde_json::to_string(draw)?);
        jsonl.push('\n');
    }
    std::fs::write(dir.join("chain.jsonl"), jsonl)?;

    let mut summary = String::from("draw,mass,sup\n");
    for (i, draw) in chain.draws.iter().enumerate() {
        summary.push_str(&format!("{i},{},{}\n", draw.mass(), draw.sup()));
    }
    std::fs::write(dir.join("summary.csv"), summary)?;

    let mut acc = String::from("label,proposals,accepts,post_proposals,post_accepts,post_rate,scale\n");
    for s in &chain.acceptance {
        acc.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.label, s.proposals, s.accepts, s.post_proposals, s.post_accepts,
            s.post_rate(),
            s.scale
        ));
    }
    std::fs::write(dir.join("acceptance.csv"), acc)?;

    let manifest = RunManifest {
        command: command.to_string(),
        seed: chain.seed,
        record_digest: if record.spec_digest.is_empty() {
            sha_hex(serde_json::to_string(record)?.as_bytes())
        } else {
            record.spec_digest.clone()
        },
        prior_digest: sha_hex(prior_json.as_bytes()),
        iterations: chain.iterations,
        burn_in: chain.burn_in,
        stride: chain.stride,
        draws: chain.draws.len(),
        acceptance: chain
            .acceptance
            .iter()
            .map(|s| AcceptanceSummary {
                label: s.label.clone(),
                post_rate: s.post_rate(),
                scale: s.scale,
            })
            .collect(),
        wall_s,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(())
}

fn run_fit(args: &FitArgs, command: &str) -> Result<()> {
    let record: CountingRecord = read_json(&args.record, "record")?;
    record.validate().context("invalid record")?;
    let prior_json = std::fs::read_to_string(&args.prior)
        .with_context(|| format!("reading prior from {}", args.prior.display()))?;
    let mcmc = args.mcmc();
    let start = Instant::now();
    let chain = match command {
        "fit-dpm" => {
            let prior: DpmPrior = serde_json::from_str(&prior_json).context("parsing prior")?;
            fit_dpm(&record, &prior, &mcmc, args.seed)?
        }
        "fit-logspline" => {
            let prior: SplinePrior = serde_json::from_str(&prior_json).context("parsing prior")?;
            fit_logspline(&record, &prior, &mcmc, args.seed)?
        }
        "fit-loglinear" => {
            let prior: LogLinearPrior =
                serde_json::from_str(&prior_json).context("parsing prior")?;
            fit_loglinear(&record, &prior, &mcmc, args.seed)?
        }
        _ => unreachable!(),
    };
    let wall = start.elapsed().as_secs_f64();
    write_fit_outputs(&args.out, command, &chain, &record, &prior_json, wall)?;
    println!(
        "{} draws in {:.2}s -> {}",
        chain.draws.len(),
        wall,
        args.out.display()
    );
    Ok(())
}

fn run_simulate(model: Family, config: &Path, seed: u64, out: &Path) -> Result<()> {
    let spec: ModelSpec = read_json(config, "model spec")?;
    if spec.family() != model.name() {
        bail!(
            "--model {} does not match the spec file's family {}",
            model.name(),
            spec.family()
        );
    }
    let record = spec.simulate(seed)?;
    write_json(out, &record)?;
    println!(
        "{} events on [0, {}] -> {}",
        record.events.len(),
        record.horizon,
        out.display()
    );
    Ok(())
}

fn run_diagnostics(
    metric: Metric,
    a: &Path,
    b: &Path,
    n: u64,
    alpha: f64,
    out: Option<&Path>,
) -> Result<()> {
    let fa = read_intensity(a)?;
    let fb = read_intensity(b)?;
    // Scan-grid resolution used by the quadrature refinement, and the
    // documented numerical tolerance of each metric.
    let grid = 4096usize;
    let (name, value, tolerance) = match metric {
        Metric::L1 => ("l1", l1_distance(&fa, &fb), 1e-9),
        Metric::Hellinger => ("hellinger", hellinger(&fa, &fb)?, 1e-9),
        Metric::E1 => ("e1", ej_moment(&fa, &fb, 1)?, 5e-5),
        Metric::E2 => ("e2", ej_moment(&fa, &fb, 2)?, 5e-5),
        Metric::SupRatio => ("sup_ratio", sup_ratio(&fa, &fb), 1.0 / grid as f64),
        Metric::Kl => {
            let spec = ModelSpec::Poisson {
                lambda0: fa.clone(),
                n,
                horizon: fa.domain().hi,
                lambda_max: None,
            };
            let env = spec.environment(alpha)?;
            ("kl", kl_aalen(&fa, &fb, &env), 1e-8)
        }
    };
    let csv = format!("metric,value,grid_size,tolerance\n{name},{value},{grid},{tolerance}\n");
    write_or_print(out, &csv)
}

fn run_loglik(intensity: &Path, record: &Path) -> Result<()> {
    let model = read_intensity(intensity)?;
    let rec: CountingRecord = read_json(record, "record")?;
    rec.validate().context("invalid record")?;
    let ll = log_likelihood(&model, &rec)?;
    println!("value {}", ll.value);
    println!("event_term {}", ll.event_term);
    println!("integral_term {}", ll.integral_term);
    Ok(())
}

fn run_rate_study_cmd(config: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(config)
        .with_context(|| format!("reading study config from {}", config.display()))?;
    let cfg: StudyConfig = toml::from_str(&text).context("parsing study config")?;
    let report = run_rate_study(&cfg, Some(out))?;
    match report.slope {
        Some(s) => {
            let (lo, hi) = report.slope_ci.unwrap_or((f64::NAN, f64::NAN));
            println!(
                "slope {s:.4} (95% CI [{lo:.4}, {hi:.4}], theory {:.4})",
                report.theoretical_exponent
            );
        }
        None => println!("slope: n/a (single-n grid)"),
    }
    println!(
        "mass_outside(J1=4) non-increasing: {}",
        report.mass_outside_non_increasing
    );
    println!("artifacts -> {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_test_bounds(
    lambda0: &Path,
    lambda1: &Path,
    n: u64,
    us: &[f64],
    replicates: u64,
    seed: u64,
    alpha: f64,
    out: Option<&Path>,
) -> Result<()> {
    if us.is_empty() {
        bail!("need at least one u value");
    }
    let null = read_intensity(lambda0)?;
    let alt = read_intensity(lambda1)?;
    let spec = ModelSpec::Poisson {
        lambda0: null.clone(),
        n,
        horizon: null.domain().hi,
        lambda_max: None,
    };
    let env = spec.environment(alpha)?;
    let mut csv = String::from("u,n,empirical_type1,bound,se,pass\n");
    for &u in us {
        let test = build_test(&alt, &null, &env, u)?;
        let mut rejections = 0u64;
        for rep in 0..replicates {
            let record = spec.simulate(seed.wrapping_add(rep))?;
            if apply_test(&test, &record)? {
                rejections += 1;
            }
        }
        let emp = rejections as f64 / replicates as f64;
        let bound = 2.0 * (-u).exp();
        let se = (emp * (1.0 - emp) / replicates as f64).sqrt();
        let pass = emp <= bound + 3.0 * se;
        csv.push_str(&format!("{u},{n},{emp},{bound},{se},{pass}\n"));
    }
    write_or_print(out, &csv)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate {
            model,
            config,
            seed,
            out,
        } => run_simulate(*model, config, *seed, out),
        Command::Diagnostics {
            metric,
            a,
            b,
            n,
            alpha,
            out,
        } => run_diagnostics(*metric, a, b, *n, *alpha, out.as_deref()),
        Command::Loglik { intensity, record } => run_loglik(intensity, record),
        Command::FitDpm { fit } => run_fit(fit, "fit-dpm"),
        Command::FitLogspline { fit } => run_fit(fit, "fit-logspline"),
        Command::FitLoglinear { fit } => run_fit(fit, "fit-loglinear"),
        Command::RateStudy { config, out } => run_rate_study_cmd(config, out),
        Command::TestBounds {
            lambda0,
            lambda1,
            n,
            u,
            replicates,
            seed,
            alpha,
            out,
        } => run_test_bounds(
            lambda0,
            lambda1,
            *n,
            u,
            *replicates,
            *seed,
            *alpha,
            out.as_deref(),
        ),
    }
}

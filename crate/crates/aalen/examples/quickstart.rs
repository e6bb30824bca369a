//! Simulate a record, evaluate its likelihood, and fit one posterior.
//! This is the README's library example, kept compiling.

use aalen::intensity::IntensityModel;
use aalen::likelihood::log_likelihood;
use aalen::metrics::l1_distance;
use aalen::posterior::{fit_dpm, posterior_summary, DpmPrior, McmcSettings};
use aalen::processes::ModelSpec;

fn main() -> aalen::Result<()> {
    // n = 200 aggregated Poisson copies of a decreasing intensity on [0, 1].
    let lambda0 = IntensityModel::linear_decreasing(2.0, 0.0, 1.0)?;
    let spec = ModelSpec::Poisson {
        lambda0: lambda0.clone(),
        n: 200,
        horizon: 1.0,
        lambda_max: None,
    };
    let record = spec.simulate(7)?;

    let ll = log_likelihood(&lambda0, &record)?;
    println!("log-likelihood {}", ll.value);

    // Posterior over intensities under a mixture-of-uniforms prior.
    let chain = fit_dpm(
        &record,
        &DpmPrior::default(),
        &McmcSettings { iterations: 2000, burn_in: 500, stride: 5, ..Default::default() },
        11,
    )?;
    let summary = posterior_summary(&chain, &lambda0, 0.5)?;
    println!("mean posterior L1 error {}", summary.mean_l1_error);

    let first = &chain.draws[0];
    println!("draw 0: mass {}, L1 to truth {}", first.mass(), l1_distance(first, &lambda0));
    Ok(())
}

//! Full-batch HMC over all weights of the 2-10-10-1 network, scored against the known truth.
//!
//! ```bash
//! cargo run --release -p uqbench --example bnn_mcmc
//! ```

use uqbench::hmc::HmcConfig;
use uqbench::methods::fit_bnn_mcmc;
use uqbench::metrics::{evaluate, MetricSettings};
use uqbench::network::{Architecture, PriorSpec};
use uqbench::rng::rng_from_seed;
use uqbench::simulator::{simulate, TccConfig};

fn main() -> uqbench::Result<()> {
    let train = simulate(&TccConfig { seed: 1, ..TccConfig::default() }, 500)?;
    let test = simulate(&TccConfig { seed: 2, ..TccConfig::default() }, 2000)?;
    let set = fit_bnn_mcmc(
        &Architecture::default(),
        &train,
        &PriorSpec::default(),
        &HmcConfig::default(),
        &test.features,
        &mut rng_from_seed(3),
    )?;
    println!("draws {} x points {}; diagnostics {:?}", set.num_draws(), set.num_points(), set.meta);
    let r = evaluate(&set, &test.labels, test.true_probs.as_deref(), &MetricSettings::default(), 0)?;
    println!("coverage {:.3}, width {:.3}, ECE {:.3}, accuracy {:.3}", r.coverage, r.mean_width, r.ece, r.accuracy);
    Ok(())
}

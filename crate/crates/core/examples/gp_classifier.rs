//! Gaussian-process classifier: HMC over whitened latent values, then predictive draws.
//!
//! ```bash
//! cargo run --release -p uqbench --example gp_classifier
//! ```

use uqbench::gp::{fit_gp_mcmc, GpConfig};
use uqbench::metrics::{evaluate, MetricSettings};
use uqbench::rng::rng_from_seed;
use uqbench::simulator::{simulate, TccConfig};

fn main() -> uqbench::Result<()> {
    let train = simulate(&TccConfig { seed: 1, ..TccConfig::default() }, 500)?;
    let test = simulate(&TccConfig { seed: 2, ..TccConfig::default() }, 2000)?;
    let cfg = GpConfig::default();
    let set = fit_gp_mcmc(&train, &cfg, &test.features, &mut rng_from_seed(7))?;
    println!("lengthscale {}, variance {}; diagnostics {:?}", cfg.lengthscale, cfg.variance, set.meta);
    let r = evaluate(&set, &test.labels, test.true_probs.as_deref(), &MetricSettings::default(), 0)?;
    println!("coverage {:.3}, width {:.3}, ECE {:.3}, accuracy {:.3}", r.coverage, r.mean_width, r.ece, r.accuracy);
    Ok(())
}

//! One network trained with dropout, then stochastic forward passes at test time.
//!
//! ```bash
//! cargo run --release -p uqbench --example mc_dropout -- [rate]
//! ```

use uqbench::methods::{fit_mc_dropout, EnsembleConfig};
use uqbench::metrics::{evaluate, MetricSettings};
use uqbench::network::{Architecture, OptimizerConfig, PriorSpec};
use uqbench::rng::rng_from_seed;
use uqbench::simulator::{simulate, TccConfig};

fn main() -> uqbench::Result<()> {
    let rate = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.2);
    let train = simulate(&TccConfig { seed: 1, ..TccConfig::default() }, 500)?;
    let test = simulate(&TccConfig { seed: 2, ..TccConfig::default() }, 2000)?;
    let cfg = EnsembleConfig { members: 100, resample: false, dropout_rate: rate };
    let set = fit_mc_dropout(
        &Architecture::default(),
        &train,
        &PriorSpec::default(),
        &cfg,
        &OptimizerConfig::default(),
        &test.features,
        &mut rng_from_seed(6),
    )?;
    let r = evaluate(&set, &test.labels, test.true_probs.as_deref(), &MetricSettings::default(), 0)?;
    println!("rate {rate}: coverage {:.3}, width {:.3}, ECE {:.3}", r.coverage, r.mean_width, r.ece);
    Ok(())
}

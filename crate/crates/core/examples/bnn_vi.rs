//! Mean-field variational inference for the network weights.
//!
//! ```bash
//! cargo run --release -p uqbench --example bnn_vi
//! ```

use uqbench::methods::{fit_bnn_vi, ViConfig};
use uqbench::metrics::{evaluate, MetricSettings};
use uqbench::network::{Architecture, PriorSpec};
use uqbench::rng::rng_from_seed;
use uqbench::simulator::{simulate, TccConfig};

fn main() -> uqbench::Result<()> {
    let train = simulate(&TccConfig { seed: 1, ..TccConfig::default() }, 500)?;
    let test = simulate(&TccConfig { seed: 2, ..TccConfig::default() }, 2000)?;
    let set = fit_bnn_vi(
        &Architecture::default(),
        &train,
        &PriorSpec::default(),
        &ViConfig::default(),
        &test.features,
        &mut rng_from_seed(4),
    )?;
    if let Some(trace) = set.meta.get("elbo_trace").and_then(|t| t.as_array()) {
        let first = trace.first().and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
        let last = trace.last().and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
        println!("ELBO {first:.1} -> {last:.1} over {} recorded points", trace.len());
    }
    let r = evaluate(&set, &test.labels, test.true_probs.as_deref(), &MetricSettings::default(), 0)?;
    println!("coverage {:.3}, width {:.3}, ECE {:.3}, accuracy {:.3}", r.coverage, r.mean_width, r.ece, r.accuracy);
    Ok(())
}

//! Deep ensemble versus bootstrap ensemble: both calibrated, very different interval widths.
//!
//! ```bash
//! cargo run --release -p uqbench --example ensembles -- [members]
//! ```

use uqbench::methods::{fit_ensemble, EnsembleConfig};
use uqbench::metrics::{evaluate, MetricSettings};
use uqbench::network::{Architecture, OptimizerConfig, PriorSpec};
use uqbench::rng::rng_from_seed;
use uqbench::simulator::{simulate, TccConfig};

fn main() -> uqbench::Result<()> {
    let members = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let train = simulate(&TccConfig { seed: 1, ..TccConfig::default() }, 500)?;
    let test = simulate(&TccConfig { seed: 2, ..TccConfig::default() }, 2000)?;
    for resample in [false, true] {
        let cfg = EnsembleConfig { members, resample, dropout_rate: 0.0 };
        let set = fit_ensemble(
            &Architecture::default(),
            &train,
            &PriorSpec::default(),
            &cfg,
            &OptimizerConfig::default(),
            &test.features,
            &mut rng_from_seed(5),
        )?;
        let r = evaluate(&set, &test.labels, test.true_probs.as_deref(), &MetricSettings::default(), 0)?;
        println!(
            "{:<14} coverage {:.3}, width {:.3}, ECE {:.3}",
            set.method.display_name(),
            r.coverage,
            r.mean_width,
            r.ece
        );
    }
    Ok(())
}

//! Fits every method to one simulated replicate and prints its scores.
//!
//! ```bash
//! cargo run --release -p uqbench --example single_replicate -- [seed] [method]
//! ```

use std::time::Instant;

use uqbench::harness::{fit_method, replicate_data, StudyConfig};
use uqbench::metrics::evaluate;
use uqbench::MethodTag;

fn main() -> uqbench::Result<()> {
    let mut cfg = StudyConfig::default();
    cfg.study.seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let only = std::env::args().nth(2).map(|m| m.parse::<MethodTag>()).transpose()?;
    let (train, test) = replicate_data(&cfg, 0)?;

    println!("{:<14} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}", "method", "cover", "width", "ece", "acc", "hcs", "secs");
    for method in MethodTag::ALL {
        if only.is_some_and(|o| o != method) {
            continue;
        }
        let t = Instant::now();
        let samples = fit_method(&cfg, method, 0, &train, &test.features)?;
        let r = evaluate(&samples, &test.labels, test.true_probs.as_deref(), &cfg.metric_settings(), 0)?;
        println!(
            "{:<14} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.1}",
            method.as_str(),
            r.coverage,
            r.mean_width,
            r.ece,
            r.accuracy,
            r.hcs_proportion,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

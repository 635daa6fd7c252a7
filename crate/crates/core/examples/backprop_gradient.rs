//! Compares the hand-written reverse-mode gradient of the log posterior with central differences.
//!
//! ```bash
//! cargo run --release -p uqbench --example backprop_gradient
//! ```

use uqbench::network::{init_params, log_posterior_and_grad, Architecture, InitScheme, NetworkParams, PriorSpec};
use uqbench::rng::rng_from_seed;
use uqbench::simulator::{simulate, TccConfig};

fn main() -> uqbench::Result<()> {
    let arch = Architecture::default();
    let prior = PriorSpec::default();
    let data = simulate(&TccConfig { seed: 3, ..TccConfig::default() }, 200)?;
    let params = init_params(&arch, InitScheme::PriorDraw { std: 1.0 }, &mut rng_from_seed(11));
    let (lp, grad) = log_posterior_and_grad(&arch, &params, &prior, &data)?;
    println!("{} parameters, log posterior {lp:.6}", arch.num_params());

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for j in 0..params.theta.len() {
        let mut up = params.theta.clone();
        let mut dn = params.theta.clone();
        up[j] += h;
        dn[j] -= h;
        let f = |theta: Vec<f64>| log_posterior_and_grad(&arch, &NetworkParams { theta }, &prior, &data).map(|r| r.0);
        let fd = (f(up)? - f(dn)?) / (2.0 * h);
        let rel = (fd - grad[j]).abs() / fd.abs().max(grad[j].abs()).max(1e-8);
        worst = worst.max(rel);
    }
    println!("largest relative difference vs central differences: {worst:.2e}");
    Ok(())
}

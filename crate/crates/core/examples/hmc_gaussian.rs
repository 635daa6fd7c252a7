//! Samples a correlated 2-D Gaussian with HMC through the `LogDensity` seam.
//!
//! ```bash
//! cargo run --release -p uqbench --example hmc_gaussian
//! ```

use uqbench::hmc::{sample, HmcConfig, LogDensity};
use uqbench::numeric::mean;
use uqbench::rng::rng_from_seed;

/// N(mu, Sigma) with Sigma = [[1, rho], [rho, 1]].
struct Correlated {
    mu: [f64; 2],
    rho: f64,
}

impl LogDensity for Correlated {
    fn dim(&self) -> usize {
        2
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let (a, b) = (x[0] - self.mu[0], x[1] - self.mu[1]);
        let k = 1.0 / (1.0 - self.rho * self.rho);
        grad[0] = -k * (a - self.rho * b);
        grad[1] = -k * (b - self.rho * a);
        -0.5 * k * (a * a - 2.0 * self.rho * a * b + b * b)
    }
}

fn main() -> uqbench::Result<()> {
    let target = Correlated { mu: [1.0, -2.0], rho: 0.6 };
    let cfg = HmcConfig { leapfrog_steps: 10, warmup: 500, draws: 4000, ..HmcConfig::default() };
    let run = sample(&target, &[0.0, 0.0], &cfg, &mut rng_from_seed(5))?;
    let xs: Vec<f64> = run.draws.iter().map(|d| d[0]).collect();
    let ys: Vec<f64> = run.draws.iter().map(|d| d[1]).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let cov = run.draws.iter().map(|d| (d[0] - mx) * (d[1] - my)).sum::<f64>() / (xs.len() - 1) as f64;
    println!("acceptance {:.3}, tuned step size {:.3}", run.acceptance_rate, run.step_size);
    println!("mean ({mx:.3}, {my:.3}) vs (1, -2); covariance {cov:.3} vs 0.6");
    Ok(())
}

use uqbench::hmc::{sample, HmcConfig, LogDensity};
use uqbench::numeric::{mean, sample_std};
use uqbench::rng::rng_from_seed;

struct StdNormal(usize);

impl LogDensity for StdNormal {
    fn dim(&self) -> usize {
        self.0
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        for (g, v) in grad.iter_mut().zip(x) {
            *g = -v;
        }
        -0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }
}

/// `y_i ~ N(theta, sigma^2)` with prior `theta ~ N(m0, s0^2)`.
struct NormalMean {
    y: Vec<f64>,
    sigma: f64,
    m0: f64,
    s0: f64,
}

impl NormalMean {
    fn posterior(&self) -> (f64, f64) {
        let prec = 1.0 / (self.s0 * self.s0) + self.y.len() as f64 / (self.sigma * self.sigma);
        let m = (self.m0 / (self.s0 * self.s0) + self.y.iter().sum::<f64>() / (self.sigma * self.sigma)) / prec;
        (m, 1.0 / prec)
    }
}

impl LogDensity for NormalMean {
    fn dim(&self) -> usize {
        1
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let t = x[0];
        let s2 = self.sigma * self.sigma;
        let lik: f64 = self.y.iter().map(|y| -0.5 * (y - t) * (y - t) / s2).sum();
        let pri = -0.5 * (t - self.m0) * (t - self.m0) / (self.s0 * self.s0);
        grad[0] = self.y.iter().map(|y| (y - t) / s2).sum::<f64>() - (t - self.m0) / (self.s0 * self.s0);
        lik + pri
    }
}

fn default_run(target: &dyn LogDensity, init: &[f64], draws: usize, seed: u64) -> Vec<Vec<f64>> {
    let cfg = HmcConfig { draws, ..HmcConfig::default() };
    let run = sample(target, init, &cfg, &mut rng_from_seed(seed)).unwrap();
    assert!(run.acceptance_rate > 0.5, "acceptance {}", run.acceptance_rate);
    run.draws
}

/// Fixed step and a trajectory near two thirds of the N(0, 1) orbit period:
/// successive draws are anti-correlated in x and nearly independent in x^2.
fn gaussian_cfg() -> HmcConfig {
    HmcConfig { step_size: 0.25, leapfrog_steps: 8, warmup: 0, draws: 1000, ..HmcConfig::default() }
}

fn moments(draws: &[Vec<f64>], j: usize) -> (f64, f64) {
    let xs: Vec<f64> = draws.iter().map(|d| d[j]).collect();
    (mean(&xs), sample_std(&xs).powi(2))
}

#[test]
fn standard_normal_moments_from_1000_draws() {
    let run = sample(&StdNormal(2), &[0.5, -0.5], &gaussian_cfg(), &mut rng_from_seed(42)).unwrap();
    for j in 0..2 {
        let (m, v) = moments(&run.draws, j);
        assert!(m.abs() < 0.05, "mean[{j}] = {m}");
        assert!((v - 1.0).abs() < 0.1, "var[{j}] = {v}");
    }
}

#[test]
fn standard_normal_moments_hold_across_independent_chains() {
    let chains = 50;
    let mut means = Vec::new();
    let mut within = 0;
    for seed in 0..chains {
        let run = sample(&StdNormal(2), &[0.5, -0.5], &gaussian_cfg(), &mut rng_from_seed(1000 + seed)).unwrap();
        let (m0, v0) = moments(&run.draws, 0);
        let (m1, v1) = moments(&run.draws, 1);
        means.push(m0);
        means.push(m1);
        within += usize::from(m0.abs() < 0.05 && m1.abs() < 0.05 && (v0 - 1.0).abs() < 0.1 && (v1 - 1.0).abs() < 0.1);
    }
    let pooled = mean(&means);
    let se = sample_std(&means) / (means.len() as f64).sqrt();
    assert!(pooled.abs() < 3.0 * se, "pooled mean {pooled} (se {se})");
    assert!(within >= 40, "{within}/{chains} chains within tolerance");
}

#[test]
fn standard_normal_radius_passes_chi_squared_at_p_0_001() {
    let draws = default_run(&StdNormal(2), &[0.0, 0.0], 1000, 7);
    // |x|^2 ~ Exp(1/2): ten equiprobable bins with edges -2 ln(1 - k/10).
    let bins = 10;
    let mut counts = vec![0usize; bins];
    for d in &draws {
        let r2 = d[0] * d[0] + d[1] * d[1];
        let u = 1.0 - (-r2 / 2.0).exp();
        counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = draws.len() as f64 / bins as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 0.999 quantile of chi-squared with 9 degrees of freedom.
    assert!(stat < 27.877, "chi-squared {stat:.2}, counts {counts:?}");
}

#[test]
fn conjugate_normal_mean_within_three_mc_standard_errors() {
    let y: Vec<f64> = (0..30).map(|i| 1.3 + ((i * 37 % 11) as f64 - 5.0) * 0.2).collect();
    let target = NormalMean { y, sigma: 1.0, m0: 0.0, s0: 2.0 };
    let (pm, pv) = target.posterior();
    let draws: Vec<f64> = default_run(&target, &[0.0], 2000, 3).iter().map(|d| d[0]).collect();

    // Batch means give a standard error that accounts for autocorrelation.
    let batches = 20;
    let size = draws.len() / batches;
    let batch_means: Vec<f64> = draws.chunks(size).map(mean).collect();
    let se_mean = sample_std(&batch_means) / (batches as f64).sqrt();
    let m = mean(&draws);
    assert!((m - pm).abs() < 3.0 * se_mean, "mean {m} vs {pm} (se {se_mean})");

    let sq: Vec<f64> = draws.iter().map(|t| (t - pm) * (t - pm)).collect();
    let batch_vars: Vec<f64> = sq.chunks(size).map(mean).collect();
    let se_var = sample_std(&batch_vars) / (batches as f64).sqrt();
    let v = mean(&sq);
    assert!((v - pv).abs() < 3.0 * se_var, "variance {v} vs {pv} (se {se_var})");
}

#[test]
fn total_rejection_keeps_the_initial_point() {
    let cfg = HmcConfig { step_size: 1e6, warmup: 0, draws: 20, leapfrog_steps: 3, ..HmcConfig::default() };
    let run = sample(&StdNormal(2), &[0.3, -0.2], &cfg, &mut rng_from_seed(1)).unwrap();
    assert_eq!(run.acceptance_rate, 0.0);
    assert!(run.draws.iter().all(|d| d == &vec![0.3, -0.2]));
}

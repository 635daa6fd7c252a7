use nalgebra::DMatrix;
use uqbench::gp::{jittered_cholesky, kernel_matrix, GpConfig};
use uqbench::hmc::{sample, HmcConfig, LogDensity};
use uqbench::rng::rng_from_seed;

/// Whitened coordinates under a flat likelihood: the posterior is the N(0, I) prior.
struct FlatWhitened(usize);

impl LogDensity for FlatWhitened {
    fn dim(&self) -> usize {
        self.0
    }

    fn log_density_and_grad(&self, nu: &[f64], grad: &mut [f64]) -> f64 {
        for (g, v) in grad.iter_mut().zip(nu) {
            *g = -v;
        }
        -0.5 * nu.iter().map(|v| v * v).sum::<f64>()
    }
}

#[test]
fn whitened_prior_reproduces_kernel_covariance() {
    let cfg = GpConfig::default();
    let x = [[0.0, 0.0], [0.4, 0.1], [1.0, -0.5], [-0.7, 0.8], [0.2, 0.9]];
    let k = kernel_matrix(&cfg, &x, &x);
    let (chol, _) = jittered_cholesky(&k, cfg.jitter).unwrap();
    let l = chol.l();
    let hmc = HmcConfig { draws: 2000, warmup: 500, leapfrog_steps: 16, ..HmcConfig::default() };
    let run = sample(&FlatWhitened(5), &[0.0; 5], &hmc, &mut rng_from_seed(8)).unwrap();

    let mut cov = DMatrix::<f64>::zeros(5, 5);
    for nu in &run.draws {
        let f = &l * nalgebra::DVector::from_column_slice(nu);
        cov += &f * f.transpose();
    }
    cov /= run.draws.len() as f64;
    let rel = (&cov - &k).norm() / k.norm();
    assert!(rel < 0.15, "relative Frobenius error {rel}");
}

#[test]
fn predictive_variance_is_non_negative_everywhere() {
    let cfg = GpConfig::default();
    let train: Vec<[f64; 2]> = (0..30).map(|i| [(i % 6) as f64 * 0.3, (i / 6) as f64 * 0.3]).collect();
    let f: Vec<f64> = train.iter().map(|p| p[0] - p[1]).collect();
    let eval: Vec<[f64; 2]> = (0..200).map(|i| [(i % 20) as f64 * 0.15 - 1.0, (i / 20) as f64 * 0.3 - 1.0]).collect();
    let (_, var) = uqbench::gp::predictive_latent(&cfg, &train, &f, &eval).unwrap();
    assert!(var.iter().all(|&v| v >= 0.0));
}

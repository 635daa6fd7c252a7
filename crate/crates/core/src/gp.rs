//! Gaussian-process classifier: RBF prior on latent values, Bernoulli-logistic
//! likelihood, HMC over whitened latents `f = L ν`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmc::{self, HmcConfig, LogDensity};
use crate::methods::MIN_ACCEPTANCE;
use crate::numeric::{bernoulli_logit_logpmf, clamp_prob, logistic, pairwise_sum};
use crate::rng::Rng;
use crate::samples::{MethodTag, ProbabilitySampleSet};
use crate::simulator::{Dataset, Point};

const MAX_JITTER: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    #[default]
    Rbf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub kernel: Kernel,
    pub lengthscale: f64,
    pub variance: f64,
    pub jitter: f64,
    pub draws: usize,
    pub warmup: usize,
    pub leapfrog_steps: usize,
    pub step_size: f64,
    pub target_accept: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            kernel: Kernel::Rbf,
            lengthscale: 0.7,
            variance: 9.0,
            jitter: 1e-6,
            draws: 1000,
            warmup: 1000,
            leapfrog_steps: 32,
            step_size: 0.05,
            target_accept: 0.8,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.variance > 0.0 && self.jitter > 0.0) {
            return Err(Error::Config("gp lengthscale, variance and jitter must be positive".into()));
        }
        self.hmc().validate()
    }

    fn hmc(&self) -> HmcConfig {
        HmcConfig {
            step_size: self.step_size,
            leapfrog_steps: self.leapfrog_steps,
            warmup: self.warmup,
            draws: self.draws,
            target_accept: self.target_accept,
            ..HmcConfig::default()
        }
    }

    pub fn kernel(&self, a: Point, b: Point) -> f64 {
        match self.kernel {
            Kernel::Rbf => {
                let d0 = a[0] - b[0];
                let d1 = a[1] - b[1];
                self.variance * (-(d0 * d0 + d1 * d1) / (2.0 * self.lengthscale * self.lengthscale)).exp()
            }
        }
    }
}

pub fn kernel_matrix(cfg: &GpConfig, a: &[Point], b: &[Point]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| cfg.kernel(a[i], b[j]))
}

/// Cholesky of `K + jitter·I`, escalating jitter ×10 up to 1e-2.
pub fn jittered_cholesky(k: &DMatrix<f64>, jitter: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut j = jitter;
    loop {
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += j;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok((c, j));
        }
        if j >= MAX_JITTER {
            return Err(Error::Cholesky { max_jitter: MAX_JITTER });
        }
        j = (j * 10.0).min(MAX_JITTER);
    }
}

/// Whitened posterior `ν ~ N(0, I)` with labels observed through `f = L ν`.
pub struct WhitenedPosterior {
    l: DMatrix<f64>,
    ys: DVector<f64>,
}

impl WhitenedPosterior {
    pub fn new(l: DMatrix<f64>, labels: &[u8]) -> Self {
        WhitenedPosterior { ys: DVector::from_iterator(labels.len(), labels.iter().map(|&y| f64::from(y))), l }
    }

    pub fn latent(&self, nu: &[f64]) -> DVector<f64> {
        &self.l * DVector::from_column_slice(nu)
    }
}

impl LogDensity for WhitenedPosterior {
    fn dim(&self) -> usize {
        self.l.nrows()
    }

    fn log_density_and_grad(&self, nu: &[f64], grad: &mut [f64]) -> f64 {
        let f = self.latent(nu);
        let mut terms = Vec::with_capacity(nu.len() * 2);
        let resid = DVector::from_fn(f.len(), |i, _| {
            terms.push(bernoulli_logit_logpmf(self.ys[i], f[i]));
            self.ys[i] - logistic(f[i])
        });
        let back = self.l.tr_mul(&resid);
        for (i, g) in grad.iter_mut().enumerate() {
            *g = back[i] - nu[i];
            terms.push(-0.5 * nu[i] * nu[i]);
        }
        pairwise_sum(&terms)
    }
}

/// Conditional mean and variance of latent values at `eval` given latent
/// values `f` at `train` under the GP prior.
pub fn predictive_latent(cfg: &GpConfig, train: &[Point], f: &[f64], eval: &[Point]) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = kernel_matrix(cfg, train, train);
    let (chol, _) = jittered_cholesky(&k, cfg.jitter)?;
    let v = chol.l().solve_lower_triangular(&kernel_matrix(cfg, train, eval)).expect("nonsingular factor");
    let alpha = chol.l().solve_lower_triangular(&DVector::from_column_slice(f)).expect("nonsingular factor");
    let mean = v.tr_mul(&alpha);
    let var = (0..eval.len())
        .map(|j| (cfg.kernel(eval[j], eval[j]) - v.column(j).norm_squared()).max(0.0))
        .collect();
    Ok((mean.iter().copied().collect(), var))
}

pub fn fit_gp_mcmc(data: &Dataset, cfg: &GpConfig, eval_points: &[Point], rng: &mut Rng) -> Result<ProbabilitySampleSet> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::Precondition("gp needs at least 2 training points".into()));
    }
    if eval_points.is_empty() {
        return Err(Error::Precondition("gp needs at least one evaluation point".into()));
    }
    data.validate()?;
    let k = kernel_matrix(cfg, &data.features, &data.features);
    let (chol, jitter) = jittered_cholesky(&k, cfg.jitter)?;
    let l = chol.l();
    let target = WhitenedPosterior::new(l.clone(), &data.labels);
    let run = hmc::sample(&target, &vec![0.0; data.len()], &cfg.hmc(), rng)?;
    if run.acceptance_rate < MIN_ACCEPTANCE {
        return Err(Error::SamplerFailure { acceptance_rate: run.acceptance_rate, step_size: run.step_size });
    }

    // With K = L Lᵀ: E[f* | f] = K*ᵀ K⁻¹ f = (L⁻¹K*)ᵀ ν, Var = k** - ‖L⁻¹k*‖².
    let v = l.solve_lower_triangular(&kernel_matrix(cfg, &data.features, eval_points)).expect("nonsingular factor");
    let sd: Vec<f64> = (0..eval_points.len())
        .map(|j| (cfg.kernel(eval_points[j], eval_points[j]) - v.column(j).norm_squared()).max(0.0).sqrt())
        .collect();
    let s = run.draws.len();
    let nu = DMatrix::from_fn(data.len(), s, |i, d| run.draws[d][i]);
    let means = v.tr_mul(&nu);
    let m = eval_points.len();
    let mut values = Vec::with_capacity(s * m);
    for d in 0..s {
        for j in 0..m {
            let z: f64 = rng.sample(StandardNormal);
            values.push(clamp_prob(logistic(means[(j, d)] + sd[j] * z)));
        }
    }
    Ok(ProbabilitySampleSet::from_flat(values, s, m, MethodTag::GpMcmc)?
        .with_meta("acceptance_rate", run.acceptance_rate)
        .with_meta("step_size", run.step_size)
        .with_meta("divergences", run.divergences as u64)
        .with_meta("lengthscale", cfg.lengthscale)
        .with_meta("variance", cfg.variance)
        .with_meta("jitter", jitter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn kernel_basics() {
        let cfg = GpConfig { variance: 2.5, ..GpConfig::default() };
        let k = kernel_matrix(&cfg, &[[0.3, 0.4]], &[[0.3, 0.4]]);
        assert_eq!(k[(0, 0)], 2.5);
        let mut last = f64::INFINITY;
        for d in [0.0, 0.5, 1.0, 2.0, 5.0, 50.0] {
            let v = cfg.kernel([0.0, 0.0], [d, 0.0]);
            assert!(v <= last);
            last = v;
        }
        assert!(last < 1e-300);
    }

    #[test]
    fn kernel_matrix_is_positive_definite() {
        let mut rng = rng_from_seed(2);
        let pts: Vec<Point> = (0..5).map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).collect();
        let cfg = GpConfig::default();
        let mut k = kernel_matrix(&cfg, &pts, &pts);
        assert_eq!(k, k.transpose());
        for i in 0..5 {
            k[(i, i)] += cfg.jitter;
        }
        let eig = k.symmetric_eigenvalues();
        assert!(eig.min() > 0.0);
    }

    #[test]
    fn duplicate_points_need_jitter_but_factor() {
        let cfg = GpConfig::default();
        let pts = vec![[0.0, 0.0]; 4];
        let (_, j) = jittered_cholesky(&kernel_matrix(&cfg, &pts, &pts), cfg.jitter).unwrap();
        assert!(j >= cfg.jitter);
    }

    #[test]
    fn two_point_conditional_matches_closed_form() {
        let cfg = GpConfig { lengthscale: 0.8, variance: 1.7, ..GpConfig::default() };
        let a = [0.2, -0.1];
        let b = [0.9, 0.4];
        let f = 0.63;
        let (m, v) = predictive_latent(&cfg, &[a], &[f], &[b]).unwrap();
        // Bivariate normal: mean k_ab/(k_aa+jitter)·f, var k_bb - k_ab²/(k_aa+jitter).
        let kaa = cfg.variance + cfg.jitter;
        let kab = cfg.kernel(a, b);
        assert!((m[0] - kab / kaa * f).abs() < 1e-10);
        assert!((v[0] - (cfg.variance - kab * kab / kaa)).abs() < 1e-10);
    }

    #[test]
    fn interpolates_at_training_inputs() {
        let cfg = GpConfig { lengthscale: 50.0, ..GpConfig::default() };
        let train = [[0.0, 0.0], [1.0, 1.0]];
        let (m, v) = predictive_latent(&cfg, &train, &[0.4, 0.4], &[[0.0, 0.0]]).unwrap();
        assert!((m[0] - 0.4).abs() < 1e-3);
        assert!(v[0] < 1e-4);
    }

    #[test]
    fn whitened_gradient_matches_finite_differences() {
        let cfg = GpConfig::default();
        let pts = [[0.0, 0.0], [0.5, 1.0], [-1.0, 0.3], [2.0, -1.0]];
        let (chol, _) = jittered_cholesky(&kernel_matrix(&cfg, &pts, &pts), cfg.jitter).unwrap();
        let t = WhitenedPosterior::new(chol.l(), &[0, 1, 1, 0]);
        let nu = [0.3, -0.7, 1.1, 0.2];
        let mut g = [0.0; 4];
        t.log_density_and_grad(&nu, &mut g);
        let mut scratch = [0.0; 4];
        for i in 0..4 {
            let mut x = nu;
            x[i] += 1e-6;
            let up = t.log_density_and_grad(&x, &mut scratch);
            x[i] -= 2e-6;
            let dn = t.log_density_and_grad(&x, &mut scratch);
            assert!((g[i] - (up - dn) / 2e-6).abs() < 1e-6);
        }
    }

    #[test]
    fn too_few_points_rejected() {
        let ds = Dataset { features: vec![[0.0, 0.0]], labels: vec![1], true_probs: None };
        assert!(fit_gp_mcmc(&ds, &GpConfig::default(), &[[0.0, 0.0]], &mut rng_from_seed(0)).is_err());
    }
}

//! Neural-network uncertainty methods. Each fits on a training set and
//! returns sampled class-1 probabilities at the evaluation points.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmc::{self, HmcConfig, LogDensity};
use crate::network::{
    self, forward, forward_dropout, init_params, Adam, Architecture, BnnPosterior, InitScheme,
    NetworkParams, OptimizerConfig, PriorSpec,
};
use crate::numeric::{logistic, pairwise_sum, softplus, softplus_inv};
use crate::rng::{split, Rng};
use crate::samples::{MethodTag, ProbabilitySampleSet};
use crate::simulator::{Dataset, Point};

/// Acceptance rate below which a chain is treated as stuck.
pub const MIN_ACCEPTANCE: f64 = 0.1;

/// BNN posterior sampling with HMC; one network per post-warmup draw.
pub fn fit_bnn_mcmc(
    arch: &Architecture,
    data: &Dataset,
    prior: &PriorSpec,
    cfg: &HmcConfig,
    eval_points: &[Point],
    rng: &mut Rng,
) -> Result<ProbabilitySampleSet> {
    let target = BnnPosterior::new(arch, *prior, data)?;
    let init = init_params(arch, InitScheme::GlorotUniform, rng);
    let run = hmc::sample(&target, &init.theta, cfg, rng)?;
    if run.acceptance_rate < MIN_ACCEPTANCE {
        return Err(Error::SamplerFailure {
            acceptance_rate: run.acceptance_rate,
            step_size: run.step_size,
        });
    }
    let rows = run
        .draws
        .into_iter()
        .map(|theta| forward(arch, &NetworkParams { theta }, eval_points))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbabilitySampleSet::from_rows(rows, MethodTag::BnnMcmc)?
        .with_meta("acceptance_rate", run.acceptance_rate)
        .with_meta("step_size", run.step_size)
        .with_meta("divergences", run.divergences as u64)
        .with_meta("leapfrog_steps", cfg.leapfrog_steps as u64)
        .with_meta("warmup", cfg.warmup as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViConfig {
    pub mc_samples_per_step: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub predictive_draws: usize,
    /// Initial standard deviation of every factor.
    pub init_std: f64,
    /// Fraction of final steps whose iterates are averaged into the result.
    pub average_tail: f64,
}

impl Default for ViConfig {
    fn default() -> Self {
        ViConfig {
            mc_samples_per_step: 8,
            steps: 10_000,
            learning_rate: 1e-2,
            predictive_draws: 1000,
            init_std: 0.01,
            average_tail: 0.2,
        }
    }
}

impl ViConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc_samples_per_step == 0 || self.steps == 0 || self.predictive_draws == 0 {
            return Err(Error::Config("vi counts must all be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.average_tail) {
            return Err(Error::Config("vi average_tail must lie in [0, 1)".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.init_std > 0.0) {
            return Err(Error::Config("vi learning_rate and init_std must be positive".into()));
        }
        Ok(())
    }
}

/// Fully factorized Gaussian `q(θ) = Π N(mean_j, std_j²)`.
#[derive(Debug, Clone)]
pub struct MeanFieldFit {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Monte Carlo ELBO estimate per optimization step.
    pub elbo_trace: Vec<f64>,
    pub retries: usize,
}

impl MeanFieldFit {
    pub fn draw(&self, rng: &mut Rng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.std)
            .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

pub const MAX_VI_RETRIES: usize = 2;

/// Mean-field VI against a log-likelihood seam with an isotropic Gaussian
/// prior of scale `prior_std`. Maximizes the ELBO with reparameterized
/// gradients; the KL term is exact. The returned factors are the average of
/// the iterates over the last `average_tail` fraction of steps.
pub fn fit_mean_field<L: LogDensity + ?Sized>(
    log_likelihood: &L,
    prior_std: f64,
    init_mean: &[f64],
    cfg: &ViConfig,
    rng: &mut Rng,
) -> Result<MeanFieldFit> {
    cfg.validate()?;
    if init_mean.len() != log_likelihood.dim() {
        return Err(Error::Precondition("initial mean has the wrong dimension".into()));
    }
    let mut lr = cfg.learning_rate;
    let mut reason = String::new();
    for retry in 0..=MAX_VI_RETRIES {
        match mean_field_once(log_likelihood, prior_std, init_mean, cfg, lr, rng) {
            Ok(mut fit) => {
                fit.retries = retry;
                return Ok(fit);
            }
            Err(r) => reason = r,
        }
        lr /= 10.0;
    }
    Err(Error::Diverged { retries: MAX_VI_RETRIES, reason })
}

/// `KL(N(m, s²) ‖ N(0, s0²))` summed over factors.
pub fn gaussian_kl(mean: &[f64], std: &[f64], prior_std: f64) -> f64 {
    let terms: Vec<f64> = mean
        .iter()
        .zip(std)
        .map(|(m, s)| {
            (prior_std / s).ln() + (s * s + m * m) / (2.0 * prior_std * prior_std) - 0.5
        })
        .collect();
    pairwise_sum(&terms)
}

fn mean_field_once<L: LogDensity + ?Sized>(
    target: &L,
    prior_std: f64,
    init_mean: &[f64],
    cfg: &ViConfig,
    lr: f64,
    rng: &mut Rng,
) -> std::result::Result<MeanFieldFit, String> {
    let d = init_mean.len();
    let prior_var = prior_std * prior_std;
    // Parameters laid out as [mean; rho] with std = softplus(rho).
    let mut params: Vec<f64> = init_mean.to_vec();
    params.extend(std::iter::repeat(softplus_inv(cfg.init_std)).take(d));
    let mut adam = Adam::new(2 * d, lr, 0.9, 0.999, 1e-8);
    let mut grad = vec![0.0; 2 * d];
    let mut g_theta = vec![0.0; d];
    let mut theta = vec![0.0; d];
    let mut eps = vec![0.0; d];
    let mut trace = Vec::with_capacity(cfg.steps);
    let k = cfg.mc_samples_per_step as f64;
    let tail_start = cfg.steps - ((cfg.steps as f64 * cfg.average_tail) as usize);
    let mut avg = vec![0.0; 2 * d];
    let mut avg_n = 0.0;
    for step in 0..cfg.steps {
        let (mean, rho) = params.split_at(d);
        let std: Vec<f64> = rho.iter().map(|&r| softplus(r)).collect();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut ll_sum = 0.0;
        for _ in 0..cfg.mc_samples_per_step {
            for j in 0..d {
                eps[j] = rng.sample(StandardNormal);
                theta[j] = mean[j] + std[j] * eps[j];
            }
            ll_sum += target.log_density_and_grad(&theta, &mut g_theta);
            for j in 0..d {
                grad[j] += g_theta[j] / k;
                grad[d + j] += g_theta[j] * eps[j] * logistic(rho[j]) / k;
            }
        }
        let kl = gaussian_kl(mean, &std, prior_std);
        let elbo = ll_sum / k - kl;
        if !elbo.is_finite() {
            return Err(format!("non-finite ELBO at step {step}"));
        }
        trace.push(elbo);
        for j in 0..d {
            grad[j] -= mean[j] / prior_var;
            grad[d + j] -= (std[j] / prior_var - 1.0 / std[j]) * logistic(rho[j]);
        }
        grad.iter_mut().for_each(|g| *g = -*g);
        adam.step(&mut params, &grad);
        if step >= tail_start {
            avg_n += 1.0;
            for (a, p) in avg.iter_mut().zip(&params) {
                *a += (p - *a) / avg_n;
            }
        }
    }
    if avg_n > 0.0 {
        params = avg;
    }
    let (mean, rho) = params.split_at(d);
    Ok(MeanFieldFit {
        mean: mean.to_vec(),
        std: rho.iter().map(|&r| softplus(r)).collect(),
        elbo_trace: trace,
        retries: 0,
    })
}

/// Likelihood-only view of a BNN posterior, for the VI seam.
struct BnnLikelihood<'a>(BnnPosterior<'a>);

impl LogDensity for BnnLikelihood<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        self.0.log_likelihood_and_grad(x, grad)
    }
}

pub fn fit_bnn_vi(
    arch: &Architecture,
    data: &Dataset,
    prior: &PriorSpec,
    cfg: &ViConfig,
    eval_points: &[Point],
    rng: &mut Rng,
) -> Result<ProbabilitySampleSet> {
    let target = BnnLikelihood(BnnPosterior::new(arch, *prior, data)?);
    let init = init_params(arch, InitScheme::GlorotUniform, rng);
    let fit = fit_mean_field(&target, prior.std, &init.theta, cfg, rng)?;
    let rows = (0..cfg.predictive_draws)
        .map(|_| forward(arch, &NetworkParams { theta: fit.draw(rng) }, eval_points))
        .collect::<Result<Vec<_>>>()?;
    let tail = fit.elbo_trace.len().min(100);
    let final_elbo = pairwise_sum(&fit.elbo_trace[fit.elbo_trace.len() - tail..]) / tail as f64;
    // Thin the trace to keep summaries small.
    let stride = (fit.elbo_trace.len() / 200).max(1);
    let trace: Vec<f64> = fit.elbo_trace.iter().step_by(stride).copied().collect();
    Ok(ProbabilitySampleSet::from_rows(rows, MethodTag::BnnVi)?
        .with_meta("final_elbo", final_elbo)
        .with_meta("elbo_trace", trace)
        .with_meta("elbo_trace_stride", stride as u64)
        .with_meta("retries", fit.retries as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub members: usize,
    /// `true` for bootstrap resampling, `false` for deep ensembles.
    pub resample: bool,
    pub dropout_rate: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig { members: 100, resample: false, dropout_rate: 0.0 }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.members < 2 {
            return Err(Error::Config("ensembles need at least 2 members".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout_rate must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// `n` indices drawn uniformly with replacement from `0..n`.
pub fn bootstrap_indices(n: usize, rng: &mut Rng) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// Bootstrap or deep ensemble. Member `k` draws from its own stream split
/// off `rng`, so members are independent of each other's outcomes.
pub fn fit_ensemble(
    arch: &Architecture,
    data: &Dataset,
    prior: &PriorSpec,
    cfg: &EnsembleConfig,
    opt: &OptimizerConfig,
    eval_points: &[Point],
    rng: &mut Rng,
) -> Result<ProbabilitySampleSet> {
    cfg.validate()?;
    let tag = if cfg.resample { MethodTag::Bootstrap } else { MethodTag::DeepEnsemble };
    let base = rng.gen::<u64>();
    let mut rows = Vec::with_capacity(cfg.members);
    let mut retries = 0usize;
    let mut dropped = 0usize;
    for k in 0..cfg.members {
        let mut member_rng = crate::rng::stream(base, &[k as u64]);
        let member_data;
        let train = if cfg.resample {
            member_data = data.select(&bootstrap_indices(data.len(), &mut member_rng));
            &member_data
        } else {
            data
        };
        match network::train_map(arch, train, prior, opt, &mut member_rng, 0.0) {
            Ok(fit) => {
                retries += fit.retries;
                rows.push(forward(arch, &fit.params, eval_points)?);
            }
            Err(Error::Diverged { .. }) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    if rows.len() * 2 < cfg.members || rows.len() < 2 {
        return Err(Error::EnsembleCollapsed { survived: rows.len(), requested: cfg.members });
    }
    Ok(ProbabilitySampleSet::from_rows(rows, tag)?
        .with_meta("members", cfg.members as u64)
        .with_meta("dropped_members", dropped as u64)
        .with_meta("retries", retries as u64))
}

/// One network trained with dropout, then `cfg.members` stochastic passes.
pub fn fit_mc_dropout(
    arch: &Architecture,
    data: &Dataset,
    prior: &PriorSpec,
    cfg: &EnsembleConfig,
    opt: &OptimizerConfig,
    eval_points: &[Point],
    rng: &mut Rng,
) -> Result<ProbabilitySampleSet> {
    cfg.validate()?;
    if !(cfg.dropout_rate > 0.0) {
        return Err(Error::Precondition("mc dropout needs dropout_rate in (0, 1)".into()));
    }
    let mut train_rng = split(rng, 0);
    let fit = network::train_map(arch, data, prior, opt, &mut train_rng, cfg.dropout_rate)?;
    let mut pass_rng = split(rng, 1);
    let rows = (0..cfg.members)
        .map(|_| forward_dropout(arch, &fit.params, eval_points, cfg.dropout_rate, &mut pass_rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbabilitySampleSet::from_rows(rows, MethodTag::McDropout)?
        .with_meta("dropout_rate", cfg.dropout_rate)
        .with_meta("passes", cfg.members as u64)
        .with_meta("retries", fit.retries as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    /// `y_i ~ N(θ, σ²)` with known σ, as a log-likelihood in θ.
    pub(crate) struct NormalMean {
        pub ys: Vec<f64>,
        pub noise_var: f64,
    }

    impl LogDensity for NormalMean {
        fn dim(&self) -> usize {
            1
        }
        fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            let r: f64 = self.ys.iter().map(|y| y - x[0]).sum();
            grad[0] = r / self.noise_var;
            -0.5 * self.ys.iter().map(|y| (y - x[0]).powi(2)).sum::<f64>() / self.noise_var
        }
    }

    fn conjugate(ys: &[f64], noise_var: f64, prior_var: f64) -> (f64, f64) {
        let prec = 1.0 / prior_var + ys.len() as f64 / noise_var;
        let mean = ys.iter().sum::<f64>() / noise_var / prec;
        (mean, (1.0 / prec).sqrt())
    }

    #[test]
    fn vi_recovers_conjugate_posterior() {
        let ys = vec![0.8, 1.4, 0.3, 1.1, 0.9, 1.6, 0.7, 1.2];
        let target = NormalMean { ys: ys.clone(), noise_var: 1.0 };
        let (m, s) = conjugate(&ys, 1.0, 4.0);
        let fit = fit_mean_field(&target, 2.0, &[0.0], &ViConfig::default(), &mut rng_from_seed(3)).unwrap();
        assert!((fit.mean[0] - m).abs() < 0.02, "mean {} vs {m}", fit.mean[0]);
        assert!((fit.std[0] / s - 1.0).abs() < 0.10, "std {} vs {s}", fit.std[0]);
    }

    #[test]
    fn elbo_improves() {
        let ys = vec![2.0, 2.5, 1.5];
        let target = NormalMean { ys, noise_var: 0.5 };
        let fit = fit_mean_field(&target, 1.0, &[-3.0], &ViConfig { steps: 2000, ..ViConfig::default() }, &mut rng_from_seed(1)).unwrap();
        let head = fit.elbo_trace[..100].iter().sum::<f64>();
        let tail = fit.elbo_trace[fit.elbo_trace.len() - 100..].iter().sum::<f64>();
        assert!(tail >= head);
    }

    #[test]
    fn kl_is_zero_at_the_prior() {
        assert!(gaussian_kl(&[0.0, 0.0], &[1.5, 1.5], 1.5).abs() < 1e-15);
        assert!(gaussian_kl(&[0.1], &[1.0], 1.0) > 0.0);
    }

    #[test]
    fn bootstrap_index_frequencies_are_binomial() {
        // Each index appears Binomial(n, 1/n) times per resample: mean 1, var (1 - 1/n).
        let n = 500;
        let reps = 10_000;
        let mut rng = rng_from_seed(17);
        let mut counts = vec![0u64; n];
        for _ in 0..reps {
            for i in bootstrap_indices(n, &mut rng) {
                counts[i] += 1;
            }
        }
        let se = ((1.0 - 1.0 / n as f64) / reps as f64).sqrt();
        let mut worst = 0.0f64;
        for c in counts {
            let mean = c as f64 / reps as f64;
            worst = worst.max(((mean - 1.0) / se).abs());
        }
        // 500 indices: allow the max |z| a Bonferroni-sized margin above 3.
        assert!(worst < 4.5, "max z {worst}");
        let overall = bootstrap_indices(n, &mut rng).len();
        assert_eq!(overall, n);
    }
}

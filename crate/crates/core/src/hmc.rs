//! Hamiltonian Monte Carlo with leapfrog integration and dual-averaged step size.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Unnormalized log density with gradient; the sampler's target seam.
pub trait LogDensity {
    fn dim(&self) -> usize;

    /// Returns `log p(x)` and overwrites `grad` with `∇ log p(x)`.
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcConfig {
    /// Initial step size; adapted during warmup.
    pub step_size: f64,
    pub leapfrog_steps: usize,
    pub warmup: usize,
    pub draws: usize,
    pub target_accept: f64,
    /// Estimate a diagonal mass matrix from the middle of warmup.
    pub adapt_mass: bool,
    /// Post-warmup step sizes are drawn from `eps * U(1 - j, 1 + j)`.
    pub step_jitter: f64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            step_size: 0.01,
            leapfrog_steps: 32,
            warmup: 1000,
            draws: 1000,
            target_accept: 0.8,
            adapt_mass: false,
            step_jitter: 0.2,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws < 2 {
            return Err(Error::Config("hmc draws must be >= 2".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("target_accept must lie in (0, 1)".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config("step_size must be positive".into()));
        }
        if self.leapfrog_steps == 0 {
            return Err(Error::Config("leapfrog_steps must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.step_jitter) {
            return Err(Error::Config("step_jitter must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Output of one chain.
#[derive(Debug, Clone)]
pub struct HmcRun {
    /// Post-warmup positions, one row per draw.
    pub draws: Vec<Vec<f64>>,
    /// Fraction of accepted proposals after warmup.
    pub acceptance_rate: f64,
    /// Step size used after warmup.
    pub step_size: f64,
    /// Post-warmup trajectories whose energy became non-finite.
    pub divergences: usize,
    /// Inverse diagonal mass matrix used after warmup.
    pub inv_metric: Vec<f64>,
}

/// Nesterov dual averaging of the log step size.
#[derive(Debug, Clone)]
struct DualAveraging {
    mu: f64,
    target: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
    m: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(step: f64, target: f64) -> Self {
        DualAveraging {
            mu: (10.0 * step).ln(),
            target,
            h_bar: 0.0,
            log_eps: step.ln(),
            log_eps_bar: 0.0,
            m: 0.0,
        }
    }

    fn update(&mut self, accept_prob: f64) -> f64 {
        self.m += 1.0;
        let w = 1.0 / (self.m + Self::T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob);
        self.log_eps = self.mu - self.m.sqrt() / Self::GAMMA * self.h_bar;
        let eta = self.m.powf(-Self::KAPPA);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
        self.log_eps.exp()
    }

    fn final_step(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

struct State {
    x: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

/// Runs one HMC transition; returns (accepted, acceptance probability, diverged).
#[allow(clippy::too_many_arguments)]
fn transition<T: LogDensity + ?Sized>(
    target: &T,
    state: &mut State,
    eps: f64,
    steps: usize,
    inv_metric: &[f64],
    rng: &mut Rng,
    prop: &mut State,
    p: &mut Vec<f64>,
) -> (bool, f64, bool) {
    let d = state.x.len();
    p.clear();
    p.extend(inv_metric.iter().map(|&im| rng.sample::<f64, _>(StandardNormal) / im.sqrt()));
    let kinetic = |p: &[f64]| 0.5 * p.iter().zip(inv_metric).map(|(pi, im)| pi * pi * im).sum::<f64>();
    let h0 = -state.logp + kinetic(p);

    prop.x.copy_from_slice(&state.x);
    prop.grad.copy_from_slice(&state.grad);
    let mut logp = state.logp;
    for i in 0..d {
        p[i] += 0.5 * eps * prop.grad[i];
    }
    for step in 0..steps {
        for i in 0..d {
            prop.x[i] += eps * inv_metric[i] * p[i];
        }
        logp = target.log_density_and_grad(&prop.x, &mut prop.grad);
        if !logp.is_finite() {
            return (false, 0.0, true);
        }
        let scale = if step + 1 == steps { 0.5 } else { 1.0 };
        for i in 0..d {
            p[i] += scale * eps * prop.grad[i];
        }
    }
    prop.logp = logp;
    let h1 = -logp + kinetic(p);
    let log_ratio = h0 - h1;
    if !log_ratio.is_finite() {
        return (false, 0.0, true);
    }
    let accept_prob = log_ratio.exp().min(1.0);
    let accepted = rng.gen::<f64>() < accept_prob;
    if accepted {
        std::mem::swap(state, prop);
    }
    (accepted, accept_prob, false)
}

/// Samples `cfg.draws` positions after `cfg.warmup` adaptation iterations.
pub fn sample<T: LogDensity + ?Sized>(
    target: &T,
    init: &[f64],
    cfg: &HmcConfig,
    rng: &mut Rng,
) -> Result<HmcRun> {
    cfg.validate()?;
    let d = target.dim();
    if init.len() != d {
        return Err(Error::Precondition(format!(
            "initial point has dimension {} but target has {d}",
            init.len()
        )));
    }
    let mut grad = vec![0.0; d];
    let logp = target.log_density_and_grad(init, &mut grad);
    if !logp.is_finite() {
        return Err(Error::Precondition("log density is not finite at the initial point".into()));
    }
    let mut state = State { x: init.to_vec(), grad, logp };
    let mut prop = State { x: vec![0.0; d], grad: vec![0.0; d], logp: 0.0 };
    let mut p = Vec::with_capacity(d);
    let mut inv_metric = vec![1.0; d];

    // Warmup windows: step size only, then metric estimation, then step size only.
    let (w_start, w_end) = if cfg.adapt_mass && cfg.warmup >= 100 {
        ((cfg.warmup * 15) / 100, (cfg.warmup * 90) / 100)
    } else {
        (cfg.warmup, cfg.warmup)
    };
    let mut da = DualAveraging::new(cfg.step_size, cfg.target_accept);
    let mut eps = cfg.step_size;
    let mut welford = Welford::new(d);
    for it in 0..cfg.warmup {
        let (_, a, _) =
            transition(target, &mut state, eps, cfg.leapfrog_steps, &inv_metric, rng, &mut prop, &mut p);
        eps = da.update(a);
        if it >= w_start && it < w_end {
            welford.push(&state.x);
            if it + 1 == w_end {
                inv_metric = welford.regularized_variance();
                da = DualAveraging::new(eps, cfg.target_accept);
            }
        }
    }
    if cfg.warmup > 0 {
        eps = da.final_step();
    }

    let mut draws = Vec::with_capacity(cfg.draws);
    let mut accepted = 0usize;
    let mut divergences = 0usize;
    for _ in 0..cfg.draws {
        // Jitter breaks up trajectories that return near their start.
        let step = if cfg.step_jitter > 0.0 {
            eps * (1.0 + cfg.step_jitter * (2.0 * rng.gen::<f64>() - 1.0))
        } else {
            eps
        };
        let (acc, _, div) =
            transition(target, &mut state, step, cfg.leapfrog_steps, &inv_metric, rng, &mut prop, &mut p);
        accepted += usize::from(acc);
        divergences += usize::from(div);
        draws.push(state.x.clone());
    }
    Ok(HmcRun {
        draws,
        acceptance_rate: accepted as f64 / cfg.draws as f64,
        step_size: eps,
        divergences,
        inv_metric,
    })
}

struct Welford {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(d: usize) -> Self {
        Welford { n: 0.0, mean: vec![0.0; d], m2: vec![0.0; d] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for i in 0..x.len() {
            let delta = x[i] - self.mean[i];
            self.mean[i] += delta / self.n;
            self.m2[i] += delta * (x[i] - self.mean[i]);
        }
    }

    /// Sample variance shrunk toward 1e-3, as in Stan's windowed adaptation.
    fn regularized_variance(&self) -> Vec<f64> {
        let n = self.n;
        if n < 3.0 {
            return vec![1.0; self.mean.len()];
        }
        self.m2
            .iter()
            .map(|m2| (n / (n + 5.0)) * (m2 / (n - 1.0)) + 1e-3 * (5.0 / (n + 5.0)))
            .collect()
    }
}

//! Fixed-family MLP classifier with hand-derived reverse-mode gradients.
//!
//! Parameters are stored flat, layer by layer: the weight matrix of each
//! layer (shape `fan_out × fan_in`, row-major) followed by its bias vector.
//! The output layer has a single logit with a logistic link.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{bernoulli_logit_logpmf, clamp_prob, logistic, pairwise_sum};
use crate::rng::Rng;
use crate::simulator::{Dataset, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            input_dim: 2,
            hidden_layers: vec![10, 10],
            activation: Activation::Tanh,
        }
    }
}

impl Architecture {
    /// Layer widths from input to the single output logit.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_layers.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden_layers);
        w.push(1);
        w
    }

    pub fn num_params(&self) -> usize {
        self.widths().windows(2).map(|p| (p[0] + 1) * p[1]).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim != 2 {
            return Err(Error::Config(format!(
                "input_dim must be 2, got {}",
                self.input_dim
            )));
        }
        if self.hidden_layers.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out, weight_offset, bias_offset)` per layer.
    fn layers(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut off = 0;
        self.widths()
            .windows(2)
            .map(|p| {
                let (fi, fo) = (p[0], p[1]);
                let layer = (fi, fo, off, off + fi * fo);
                off += (fi + 1) * fo;
                layer
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub theta: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(arch: &Architecture) -> Self {
        NetworkParams { theta: vec![0.0; arch.num_params()] }
    }

    fn check(&self, arch: &Architecture) -> Result<()> {
        let p = arch.num_params();
        if self.theta.len() != p {
            return Err(Error::Precondition(format!(
                "parameter vector has length {} but architecture needs {p}",
                self.theta.len()
            )));
        }
        if !self.theta.iter().all(|v| v.is_finite()) {
            return Err(Error::Precondition("parameters must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PriorFamily {
    #[default]
    Gaussian,
}

/// Isotropic prior over all weights and biases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub family: PriorFamily,
    pub std: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec { family: PriorFamily::Gaussian, std: 1.0 }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.std > 0.0 && self.std.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("prior std must be positive, got {}", self.std)))
        }
    }

    /// Log density up to an additive constant; adds the score into `grad`.
    pub fn log_density_accumulate(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let prec = 1.0 / (self.std * self.std);
        let mut sq = Vec::with_capacity(theta.len());
        for (g, &t) in grad.iter_mut().zip(theta) {
            *g -= t * prec;
            sq.push(t * t);
        }
        -0.5 * prec * pairwise_sum(&sq)
    }
}

/// Dropout applied to hidden activations with inverted scaling.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut Rng,
}

/// Activations for a whole batch, stored unit-major so each unit's values
/// over the batch are contiguous.
struct Batch {
    n: usize,
    /// Post-mask values per layer; layer 0 is the input.
    acts: Vec<Vec<f64>>,
    /// Pre-mask activations per hidden layer (empty when no dropout is used).
    raw: Vec<Vec<f64>>,
    /// Mask multipliers per hidden layer: 0 or `1/(1-rate)`.
    scale: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

/// `e^x` for `x` in `[0, 40]` by Cody-Waite reduction and a degree-12
/// Taylor polynomial; branch-free so batch loops vectorize. Error < 2 ulp.
#[inline(always)]
fn exp_small(x: f64) -> f64 {
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_803_691_238_164_9e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    // Round-to-nearest via the 1.5·2^52 trick; the integer sits in the low mantissa bits.
    const SHIFTER: f64 = 6_755_399_441_055_744.0;
    let t = x * LOG2E + SHIFTER;
    let k = t - SHIFTER;
    let ki = (t.to_bits() as i64).wrapping_sub(SHIFTER.to_bits() as i64);
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 479_001_600.0;
    p = p * r + 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    p * f64::from_bits(((ki + 1023) as u64) << 52)
}

/// `tanh` with absolute error below 1e-15.
#[inline(always)]
fn tanh_fast(z: f64) -> f64 {
    let a = z.abs().min(20.0);
    let t = 1.0 - 2.0 / (exp_small(2.0 * a) + 1.0);
    t.copysign(z)
}

#[inline(always)]
fn activate(act: Activation, z: f64) -> f64 {
    match act {
        Activation::Tanh => tanh_fast(z),
        Activation::Relu => z.max(0.0),
    }
}

/// Derivative of the activation expressed through its output.
#[inline(always)]
fn activation_slope(act: Activation, a: f64) -> f64 {
    match act {
        Activation::Tanh => 1.0 - a * a,
        Activation::Relu => {
            if a > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Dot product with eight independent accumulators (fixed order, vectorizable).
#[inline(always)]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline(always)]
fn sum8(a: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let rest = ca.remainder();
    for x in ca {
        for l in 0..8 {
            acc[l] += x[l];
        }
    }
    let mut tail = 0.0;
    for x in rest {
        tail += x;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

fn forward_batch(
    arch: &Architecture,
    layers: &[(usize, usize, usize, usize)],
    theta: &[f64],
    xs: &[Point],
    dropout: &mut Option<Dropout<'_>>,
) -> Batch {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2, checked above.
        return unsafe { forward_batch_avx2(arch, layers, theta, xs, dropout) };
    }
    forward_batch_impl(arch, layers, theta, xs, dropout)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn forward_batch_avx2(
    arch: &Architecture,
    layers: &[(usize, usize, usize, usize)],
    theta: &[f64],
    xs: &[Point],
    dropout: &mut Option<Dropout<'_>>,
) -> Batch {
    forward_batch_impl(arch, layers, theta, xs, dropout)
}

// Kernels are plain IEEE arithmetic without fused multiply-add, so the AVX2
// and baseline builds of them produce identical bits.
#[inline(always)]
fn forward_batch_impl(
    arch: &Architecture,
    layers: &[(usize, usize, usize, usize)],
    theta: &[f64],
    xs: &[Point],
    dropout: &mut Option<Dropout<'_>>,
) -> Batch {
    let n = xs.len();
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers.len() + 1);
    acts.push(xs.iter().map(|p| p[0]).chain(xs.iter().map(|p| p[1])).collect());
    let mut raw = Vec::new();
    let mut scale = Vec::new();
    let last = layers.len() - 1;
    for (l, &(fi, fo, wo, bo)) in layers.iter().enumerate() {
        let input = &acts[l];
        let mut out = vec![0.0; fo * n];
        for j in 0..fo {
            let o = &mut out[j * n..(j + 1) * n];
            o.iter_mut().for_each(|v| *v = theta[bo + j]);
            for k in 0..fi {
                let w = theta[wo + j * fi + k];
                let inp = &input[k * n..(k + 1) * n];
                for (v, &a) in o.iter_mut().zip(inp) {
                    *v += w * a;
                }
            }
        }
        if l == last {
            return Batch { n, acts, raw, scale, logits: out };
        }
        for v in out.iter_mut() {
            *v = activate(arch.activation, *v);
        }
        if let Some(d) = dropout {
            let keep = 1.0 / (1.0 - d.rate);
            let mask: Vec<f64> = (0..out.len())
                .map(|_| if d.rng.gen::<f64>() < d.rate { 0.0 } else { keep })
                .collect();
            let masked = out.iter().zip(&mask).map(|(a, m)| a * m).collect();
            raw.push(out);
            scale.push(mask);
            acts.push(masked);
        } else {
            acts.push(out);
        }
    }
    unreachable!("architecture always has an output layer")
}

/// Backpropagates per-point output sensitivities `dlogit` and adds
/// `Σ_i dlogit_i · ∂logit_i/∂θ` into `grad`.
fn backward_batch(
    arch: &Architecture,
    layers: &[(usize, usize, usize, usize)],
    theta: &[f64],
    batch: &Batch,
    dlogit: Vec<f64>,
    grad: &mut [f64],
) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2, checked above.
        return unsafe { backward_batch_avx2(arch, layers, theta, batch, dlogit, grad) };
    }
    backward_batch_impl(arch, layers, theta, batch, dlogit, grad)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn backward_batch_avx2(
    arch: &Architecture,
    layers: &[(usize, usize, usize, usize)],
    theta: &[f64],
    batch: &Batch,
    dlogit: Vec<f64>,
    grad: &mut [f64],
) {
    backward_batch_impl(arch, layers, theta, batch, dlogit, grad)
}

#[inline(always)]
fn backward_batch_impl(
    arch: &Architecture,
    layers: &[(usize, usize, usize, usize)],
    theta: &[f64],
    batch: &Batch,
    dlogit: Vec<f64>,
    grad: &mut [f64],
) {
    let n = batch.n;
    let masked = !batch.raw.is_empty();
    let mut delta = dlogit;
    for l in (0..layers.len()).rev() {
        let (fi, fo, wo, bo) = layers[l];
        let input = &batch.acts[l];
        for j in 0..fo {
            let d = &delta[j * n..(j + 1) * n];
            grad[bo + j] += sum8(d);
            for k in 0..fi {
                grad[wo + j * fi + k] += dot(d, &input[k * n..(k + 1) * n]);
            }
        }
        if l == 0 {
            break;
        }
        let mut below = vec![0.0; fi * n];
        for k in 0..fi {
            let b = &mut below[k * n..(k + 1) * n];
            for j in 0..fo {
                let w = theta[wo + j * fi + k];
                for (v, &d) in b.iter_mut().zip(&delta[j * n..(j + 1) * n]) {
                    *v += w * d;
                }
            }
            if masked {
                let r = &batch.raw[l - 1][k * n..(k + 1) * n];
                let s = &batch.scale[l - 1][k * n..(k + 1) * n];
                for ((v, &a), &m) in b.iter_mut().zip(r).zip(s) {
                    *v *= m * activation_slope(arch.activation, a);
                }
            } else {
                for (v, &a) in b.iter_mut().zip(input[k * n..(k + 1) * n].iter()) {
                    *v *= activation_slope(arch.activation, a);
                }
            }
        }
        delta = below;
    }
}

/// Class-1 logits for each row of `x`.
pub fn forward_logits(arch: &Architecture, params: &NetworkParams, x: &[Point]) -> Result<Vec<f64>> {
    params.check(arch)?;
    Ok(logits_unchecked(arch, &params.theta, x, None))
}

fn logits_unchecked(arch: &Architecture, theta: &[f64], x: &[Point], mut dropout: Option<Dropout<'_>>) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    forward_batch(arch, &arch.layers(), theta, x, &mut dropout).logits
}

/// Class-1 probabilities, clamped into `[1e-12, 1 - 1e-12]`.
pub fn forward(arch: &Architecture, params: &NetworkParams, x: &[Point]) -> Result<Vec<f64>> {
    Ok(forward_logits(arch, params, x)?
        .into_iter()
        .map(|a| clamp_prob(logistic(a)))
        .collect())
}

/// One stochastic forward pass with fresh dropout masks per point and unit.
pub fn forward_dropout(
    arch: &Architecture,
    params: &NetworkParams,
    x: &[Point],
    rate: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    params.check(arch)?;
    check_rate(rate)?;
    let dropout = (rate > 0.0).then_some(Dropout { rate, rng });
    Ok(logits_unchecked(arch, &params.theta, x, dropout)
        .into_iter()
        .map(|a| clamp_prob(logistic(a)))
        .collect())
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::Precondition(format!("dropout rate must lie in [0, 1), got {rate}")))
    }
}

/// Sum of `terms` after sorting, so the result does not depend on their order.
fn order_free_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(f64::total_cmp);
    pairwise_sum(terms)
}

fn labels_as_f64(data: &Dataset) -> Result<Vec<f64>> {
    data.labels
        .iter()
        .enumerate()
        .map(|(i, &y)| match y {
            0 => Ok(0.0),
            1 => Ok(1.0),
            _ => Err(Error::Data(format!("label {y} at row {i} is not binary"))),
        })
        .collect()
}

/// Bernoulli log-likelihood of the labels under the network. Summation is
/// independent of row order.
pub fn log_likelihood(arch: &Architecture, params: &NetworkParams, data: &Dataset) -> Result<f64> {
    let ys = labels_as_f64(data)?;
    let logits = forward_logits(arch, params, &data.features)?;
    let mut terms: Vec<f64> = ys
        .iter()
        .zip(&logits)
        .map(|(&y, &a)| bernoulli_logit_logpmf(y, a))
        .collect();
    Ok(order_free_sum(&mut terms))
}

/// Per-point log-likelihood terms of `(xs, ys)`; the gradient of their sum is
/// added into `grad`.
fn log_likelihood_terms(
    arch: &Architecture,
    theta: &[f64],
    xs: &[Point],
    ys: &[f64],
    grad: &mut [f64],
    mut dropout: Option<Dropout<'_>>,
) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let layers = arch.layers();
    let batch = forward_batch(arch, &layers, theta, xs, &mut dropout);
    let terms = ys.iter().zip(&batch.logits).map(|(&y, &a)| bernoulli_logit_logpmf(y, a)).collect();
    let dlogit = ys.iter().zip(&batch.logits).map(|(&y, &a)| y - logistic(a)).collect();
    backward_batch(arch, &layers, theta, &batch, dlogit, grad);
    terms
}

fn log_likelihood_accumulate(
    arch: &Architecture,
    theta: &[f64],
    xs: &[Point],
    ys: &[f64],
    grad: &mut [f64],
    dropout: Option<Dropout<'_>>,
) -> f64 {
    pairwise_sum(&log_likelihood_terms(arch, theta, xs, ys, grad, dropout))
}

/// Log posterior (up to a constant) and its exact gradient.
pub fn log_posterior_and_grad(
    arch: &Architecture,
    params: &NetworkParams,
    prior: &PriorSpec,
    data: &Dataset,
) -> Result<(f64, Vec<f64>)> {
    params.check(arch)?;
    prior.validate()?;
    let ys = labels_as_f64(data)?;
    let mut grad = vec![0.0; params.theta.len()];
    let mut terms = log_likelihood_terms(arch, &params.theta, &data.features, &ys, &mut grad, None);
    let ll = order_free_sum(&mut terms);
    let lp = prior.log_density_accumulate(&params.theta, &mut grad);
    Ok((ll + lp, grad))
}

/// Log posterior of a network as an HMC target.
pub struct BnnPosterior<'a> {
    arch: &'a Architecture,
    prior: PriorSpec,
    xs: &'a [Point],
    ys: Vec<f64>,
}

impl<'a> BnnPosterior<'a> {
    pub fn new(arch: &'a Architecture, prior: PriorSpec, data: &'a Dataset) -> Result<Self> {
        arch.validate()?;
        prior.validate()?;
        Ok(BnnPosterior { arch, prior, xs: &data.features, ys: labels_as_f64(data)? })
    }

    /// Log-likelihood only, gradient added into `grad`.
    pub fn log_likelihood_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        log_likelihood_accumulate(self.arch, theta, self.xs, &self.ys, grad, None)
    }
}

impl crate::hmc::LogDensity for BnnPosterior<'_> {
    fn dim(&self) -> usize {
        self.arch.num_params()
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let ll = self.log_likelihood_and_grad(x, grad);
        ll + self.prior.log_density_accumulate(x, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "scheme")]
pub enum InitScheme {
    GlorotUniform,
    PriorDraw { std: f64 },
}

pub fn init_params(arch: &Architecture, scheme: InitScheme, rng: &mut Rng) -> NetworkParams {
    let mut theta = vec![0.0; arch.num_params()];
    match scheme {
        InitScheme::GlorotUniform => {
            for (fi, fo, wo, _) in arch.layers() {
                let limit = (6.0 / (fi + fo) as f64).sqrt();
                for w in &mut theta[wo..wo + fi * fo] {
                    *w = rng.gen_range(-limit..limit);
                }
            }
        }
        InitScheme::PriorDraw { std } => {
            for t in &mut theta {
                *t = std * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    NetworkParams { theta }
}

/// Adam first-order optimizer state. `step` performs gradient *descent*.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { lr, beta1, beta2, eps, m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    /// Mini-batch size; `None` means full batch.
    pub batch_size: Option<usize>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 2000,
            batch_size: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedNetwork {
    pub params: NetworkParams,
    /// Negative log posterior per epoch, summed over its mini-batches.
    pub loss_trace: Vec<f64>,
    pub retries: usize,
}

pub const MAX_TRAIN_RETRIES: usize = 3;

/// MAP training: minimizes the negative log posterior with Adam.
pub fn train_map(
    arch: &Architecture,
    data: &Dataset,
    prior: &PriorSpec,
    opt: &OptimizerConfig,
    rng: &mut Rng,
    dropout_rate: f64,
) -> Result<TrainedNetwork> {
    arch.validate()?;
    prior.validate()?;
    check_rate(dropout_rate)?;
    if opt.epochs == 0 {
        return Err(Error::Precondition("training needs at least one epoch".into()));
    }
    if data.is_empty() {
        return Err(Error::Precondition("training data is empty".into()));
    }
    if !(opt.learning_rate > 0.0) {
        return Err(Error::Config("learning rate must be positive".into()));
    }
    let ys = labels_as_f64(data)?;
    let mut last_reason = String::new();
    for attempt in 0..=MAX_TRAIN_RETRIES {
        let init = init_params(arch, InitScheme::GlorotUniform, rng);
        match train_once(arch, &data.features, &ys, prior, opt, rng, dropout_rate, init) {
            Ok((params, loss_trace)) => {
                return Ok(TrainedNetwork { params, loss_trace, retries: attempt })
            }
            Err(reason) => last_reason = reason,
        }
    }
    Err(Error::Diverged { retries: MAX_TRAIN_RETRIES, reason: last_reason })
}

#[allow(clippy::too_many_arguments)]
fn train_once(
    arch: &Architecture,
    xs: &[Point],
    ys: &[f64],
    prior: &PriorSpec,
    opt: &OptimizerConfig,
    rng: &mut Rng,
    dropout_rate: f64,
    init: NetworkParams,
) -> std::result::Result<(NetworkParams, Vec<f64>), String> {
    let n = xs.len();
    let batch = opt.batch_size.unwrap_or(n).clamp(1, n);
    let mut theta = init.theta;
    let mut adam = Adam::new(theta.len(), opt.learning_rate, opt.beta1, opt.beta2, opt.eps);
    let mut grad = vec![0.0; theta.len()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut bx = Vec::with_capacity(batch);
    let mut by = Vec::with_capacity(batch);
    let mut trace = Vec::with_capacity(opt.epochs);
    for epoch in 0..opt.epochs {
        if batch < n {
            order.shuffle(rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let (cx, cy): (&[Point], &[f64]) = if batch == n {
                (xs, ys)
            } else {
                bx.clear();
                by.clear();
                bx.extend(chunk.iter().map(|&i| xs[i]));
                by.extend(chunk.iter().map(|&i| ys[i]));
                (&bx, &by)
            };
            grad.iter_mut().for_each(|g| *g = 0.0);
            let dropout = (dropout_rate > 0.0).then_some(Dropout { rate: dropout_rate, rng: &mut *rng });
            let ll = log_likelihood_accumulate(arch, &theta, cx, cy, &mut grad, dropout);
            // Mini-batch likelihood is rescaled so the prior keeps its full-data weight.
            let scale = n as f64 / cx.len() as f64;
            let frac = cx.len() as f64 / n as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            let lp = prior.log_density_accumulate(&theta, &mut grad);
            let loss = -(ll + lp * frac);
            if !loss.is_finite() || !grad.iter().all(|g| g.is_finite()) {
                return Err(format!("non-finite loss at epoch {epoch}"));
            }
            grad.iter_mut().for_each(|g| *g = -*g);
            adam.step(&mut theta, &grad);
            epoch_loss += loss;
        }
        trace.push(epoch_loss);
    }
    Ok((NetworkParams { theta }, trace))
}

//! Memorization in a secret subspace.
//!
//! The trainable vector θ^d starts at zero; the model runs with parameters
//! `θ^D_0 + V θ^d` where `V` is the key-derived Fastfood projection. The loss
//! gradient is pulled back through `Vᵀ`, the regularizer gradient is added,
//! the sum is clipped and fed to AdamW (no weight decay) with a linearly
//! decaying learning rate. Training stops as soon as greedy decoding from
//! every prompt reproduces its chunk.
//!
//! The model is always evaluated at θ^d rounded to `f32`, which is exactly
//! what a ciphertext carries, so a converged result decrypts bit-for-bit.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::math::{fabs, l2_norm, normal_cdf, normal_pdf, signum0};
use crate::model::{forward_loss, ModelConfig, ModelParams, TrainingExample};
use crate::optim::{clip_l2, AdamW, AdamWConfig};
use crate::projection::ProjectionSpec;

/// Penalty added to the memorization loss to shape the ciphertext distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    None,
    /// `λ · | ‖θ^d‖₂ − α |`
    L2Target { alpha: f64, lambda_max: f64, warmup_epochs: usize },
    /// `λ · Ω(θ^d; σ)`, the trapezoidal area between the empirical CDF of θ^d and the N(0, σ²) CDF.
    Wasserstein { sigma: f64, lambda_max: f64, warmup_epochs: usize },
}

impl Regularizer {
    /// Wire tag: 0 none, 1 L2 target, 2 Wasserstein.
    pub fn tag(&self) -> u8 {
        match self {
            Regularizer::None => 0,
            Regularizer::L2Target { .. } => 1,
            Regularizer::Wasserstein { .. } => 2,
        }
    }

    /// Penalty value and gradient at `theta` for `epoch`.
    pub fn penalty(&self, theta: &[f64], epoch: usize) -> Result<(f64, Vec<f64>)> {
        match *self {
            Regularizer::None => Ok((0.0, vec![0.0; theta.len()])),
            Regularizer::L2Target { alpha, lambda_max, warmup_epochs } => {
                let lambda = lambda_schedule(epoch, lambda_max, warmup_epochs);
                Ok(l2_target_penalty(theta, alpha, lambda))
            }
            Regularizer::Wasserstein { sigma, lambda_max, warmup_epochs } => {
                let lambda = lambda_schedule(epoch, lambda_max, warmup_epochs);
                wasserstein_penalty(theta, sigma, lambda)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        match *self {
            Regularizer::None => Ok(()),
            Regularizer::L2Target { alpha, lambda_max, warmup_epochs } => {
                if !(alpha >= 0.0) || !(lambda_max >= 0.0) || warmup_epochs == 0 {
                    return bad("l2 target needs alpha >= 0, lambda_max >= 0, warmup_epochs >= 1");
                }
                Ok(())
            }
            Regularizer::Wasserstein { sigma, lambda_max, warmup_epochs } => {
                if !(sigma > 0.0) || !(lambda_max >= 0.0) || warmup_epochs == 0 {
                    return bad("wasserstein needs sigma > 0, lambda_max >= 0, warmup_epochs >= 1");
                }
                Ok(())
            }
        }
    }
}

/// Subspace training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub d: usize,
    pub lr0: f64,
    /// Learning rate reaches zero after this many epochs.
    pub lr_decay_epochs: usize,
    pub grad_clip_l2: f64,
    pub max_epochs: usize,
    /// Greedy verification runs every this many epochs.
    pub verify_every: usize,
    pub regularizer: Regularizer,
    /// Master seed for callers that draw nonces and prompts reproducibly;
    /// the optimization itself consumes no randomness.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d: 1024,
            lr0: DEFAULT_LR0,
            lr_decay_epochs: 2000,
            grad_clip_l2: 1e5,
            max_epochs: 10_000,
            verify_every: 1,
            regularizer: Regularizer::None,
            seed: 0,
        }
    }
}

/// Default peak learning rate for the default model and `d = 1024`.
///
/// The projection is unnormalized, so one unit of θ^d moves the full
/// parameter vector by roughly `block_size · sqrt(D / block_size)` in norm;
/// rates above about 5e-5 stall for the default model.
pub const DEFAULT_LR0: f64 = 2e-5;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("d must be >= 1".into()));
        }
        if !(self.lr0 > 0.0) {
            return Err(Error::Config("lr0 must be > 0".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        if self.verify_every == 0 {
            return Err(Error::Config("verify_every must be >= 1".into()));
        }
        if self.lr_decay_epochs == 0 {
            return Err(Error::Config("lr_decay_epochs must be >= 1".into()));
        }
        if !(self.grad_clip_l2 > 0.0) {
            return Err(Error::Config("grad_clip_l2 must be > 0".into()));
        }
        self.regularizer.validate()
    }

    /// Linearly decayed learning rate, floored at zero.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let frac = epoch as f64 / self.lr_decay_epochs as f64;
        self.lr0 * (1.0 - frac).max(0.0)
    }
}

/// `λ(e) = λ_max · min(1, e / warmup_epochs)`
pub fn lambda_schedule(epoch: usize, lambda_max: f64, warmup_epochs: usize) -> f64 {
    let warmup = warmup_epochs.max(1) as f64;
    lambda_max * (epoch as f64 / warmup).min(1.0)
}

/// `λ · | ‖θ‖₂ − α |` and its (sub)gradient; the gradient is zero at θ = 0.
pub fn l2_target_penalty(theta: &[f64], alpha: f64, lambda: f64) -> (f64, Vec<f64>) {
    let norm = l2_norm(theta);
    let value = lambda * fabs(norm - alpha);
    if norm == 0.0 {
        return (value, vec![0.0; theta.len()]);
    }
    let s = lambda * signum0(norm - alpha) / norm;
    (value, theta.iter().map(|&t| s * t).collect())
}

/// Trapezoidal area between the empirical CDF of `theta` and the N(0, σ²) CDF.
///
/// Sorted values `x_0 ≤ … ≤ x_{d−1}` carry ECDF heights `i/d`; the integrand
/// `|i/d − Φ(x_i/σ)|` is integrated with the trapezoid rule over the sorted
/// abscissae. The gradient treats the sort order and ECDF heights as fixed
/// (ties broken by original index) and is scattered back to the original
/// coordinates.
pub fn wasserstein_penalty(theta: &[f64], sigma: f64, lambda: f64) -> Result<(f64, Vec<f64>)> {
    let d = theta.len();
    if d < 2 {
        return Err(Error::Precondition("wasserstein penalty needs d >= 2".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::Precondition("sigma must be > 0".into()));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| theta[a].total_cmp(&theta[b]).then(a.cmp(&b)));
    let x: Vec<f64> = order.iter().map(|&i| theta[i]).collect();

    let inv_d = 1.0 / d as f64;
    let mut gap = vec![0.0; d];
    let mut dgap = vec![0.0; d];
    for i in 0..d {
        let diff = i as f64 * inv_d - normal_cdf(x[i] / sigma);
        gap[i] = fabs(diff);
        // d|e - Φ(x/σ)|/dx = -sign(e - Φ) φ(x/σ)/σ
        dgap[i] = -signum0(diff) * normal_pdf(x[i] / sigma) / sigma;
    }

    let mut omega = 0.0;
    for i in 0..d - 1 {
        omega += 0.5 * (x[i + 1] - x[i]) * (gap[i] + gap[i + 1]);
    }

    let mut grad = vec![0.0; d];
    for k in 0..d {
        let mut g = 0.0;
        let mut width = 0.0;
        if k > 0 {
            g += 0.5 * (gap[k - 1] + gap[k]);
            width += 0.5 * (x[k] - x[k - 1]);
        }
        if k + 1 < d {
            g -= 0.5 * (gap[k] + gap[k + 1]);
            width += 0.5 * (x[k + 1] - x[k]);
        }
        g += dgap[k] * width;
        grad[order[k]] = lambda * g;
    }
    Ok((lambda * omega, grad))
}

/// `θ^D_0 + V θ^d`, evaluated in the same order by training and decryption.
pub fn subspace_params(theta0: &ModelParams, projection: &ProjectionSpec, theta_d: &[f64]) -> Result<Vec<f64>> {
    check_len(projection.full_dim(), theta0.len())?;
    let mut full = projection.project(theta_d)?;
    for (f, t0) in full.iter_mut().zip(&theta0.flat) {
        *f += t0;
    }
    Ok(full)
}

/// Value and gradient of the full subspace objective at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub penalty: f64,
    /// d (loss + penalty) / d θ^d, before clipping.
    pub grad: Vec<f64>,
    pub all_correct: bool,
}

/// The memorization objective as a function of θ^d.
pub struct SubspaceObjective<'a> {
    pub model: &'a ModelConfig,
    pub theta0: &'a ModelParams,
    pub projection: &'a ProjectionSpec,
    pub examples: &'a [TrainingExample],
    pub regularizer: Regularizer,
}

impl SubspaceObjective<'_> {
    /// Parameters `θ^D_0 + V θ^d`.
    pub fn full_params(&self, theta_d: &[f64]) -> Result<Vec<f64>> {
        subspace_params(self.theta0, self.projection, theta_d)
    }

    pub fn evaluate(&self, theta_d: &[f64], epoch: usize) -> Result<Evaluation> {
        let full = self.full_params(theta_d)?;
        let out = forward_loss(self.model, &full, self.examples)?;
        let mut grad = self.projection.project_adjoint(&out.grad)?;
        let (penalty, reg_grad) = self.regularizer.penalty(theta_d, epoch)?;
        for (g, r) in grad.iter_mut().zip(&reg_grad) {
            *g += r;
        }
        Ok(Evaluation { loss: out.loss, penalty, grad, all_correct: out.all_correct })
    }
}

/// Outcome of a memorization run.
#[derive(Debug, Clone, PartialEq)]
pub struct MemorizationResult {
    /// θ^d_*, every entry exactly representable as `f32`.
    pub theta_d_star: Vec<f64>,
    pub epochs_used: usize,
    pub converged: bool,
    pub final_loss: f64,
}

/// Trains θ^d from zero until every example greedily decodes to its chunk
/// or the epoch budget runs out.
///
/// One epoch is one full-batch step over all examples. The check after
/// epoch `e` reuses the forward pass that starts epoch `e + 1`; a check at
/// epoch 0 accepts a model that already reproduces the message.
pub fn memorize(
    config: &TrainConfig,
    model: &ModelConfig,
    theta0: &ModelParams,
    projection: &ProjectionSpec,
    examples: &[TrainingExample],
) -> Result<MemorizationResult> {
    config.validate()?;
    model.validate()?;
    check_len(config.d, projection.d())?;
    check_len(model.param_count(), theta0.len())?;
    check_len(theta0.len(), projection.full_dim())?;
    if examples.is_empty() {
        return Err(Error::Precondition("no training examples".into()));
    }

    let objective = SubspaceObjective {
        model,
        theta0,
        projection,
        examples,
        regularizer: config.regularizer,
    };
    let mut theta = vec![0.0f64; config.d];
    let mut opt = AdamW::new(config.d, AdamWConfig::default());
    let mut epoch = 0;
    loop {
        let point: Vec<f64> = theta.iter().map(|&t| t as f32 as f64).collect();
        let mut eval = objective.evaluate(&point, epoch)?;
        let verify = epoch % config.verify_every == 0;
        log::debug!(
            "epoch {epoch}: loss {:.5} penalty {:.5e} memorized {}",
            eval.loss,
            eval.penalty,
            eval.all_correct
        );
        if verify && eval.all_correct {
            return Ok(MemorizationResult {
                theta_d_star: point,
                epochs_used: epoch,
                converged: true,
                final_loss: eval.loss,
            });
        }
        if epoch >= config.max_epochs {
            return Ok(MemorizationResult {
                theta_d_star: point,
                epochs_used: epoch,
                converged: false,
                final_loss: eval.loss,
            });
        }
        clip_l2(&mut eval.grad, config.grad_clip_l2);
        opt.step(&mut theta, &eval.grad, config.lr_at(epoch));
        epoch += 1;
    }
}

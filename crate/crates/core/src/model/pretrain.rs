use alloc::vec::Vec;

use rand_core::RngCore;

use super::{forward_loss, tokenize, ModelConfig, ModelParams, TrainingExample};
use crate::error::{Error, Result};
use crate::optim::{clip_l2, AdamW, AdamWConfig};
use crate::rng;

/// Hyperparameters for next-token pre-training on a byte corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    /// Windows per optimization step.
    pub batch_size: usize,
    /// Peak learning rate, decayed linearly to zero over the run.
    pub lr: f64,
    pub grad_clip_l2: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { batch_size: 4, lr: 2e-3, grad_clip_l2: 1.0 }
    }
}

/// Seeded random initialization followed by `steps` AdamW steps of
/// next-token training on random windows of `corpus`.
///
/// With `steps == 0` this is exactly [`ModelParams::init`]. The result is
/// rounded to `f32`, matching what a checkpoint stores.
pub fn pretrain(config: &ModelConfig, corpus: &[u8], steps: usize, seed: u64) -> Result<ModelParams> {
    pretrain_with(config, &PretrainConfig::default(), corpus, steps, seed)
}

pub fn pretrain_with(
    config: &ModelConfig,
    hp: &PretrainConfig,
    corpus: &[u8],
    steps: usize,
    seed: u64,
) -> Result<ModelParams> {
    config.validate()?;
    if corpus.len() < 2 {
        return Err(Error::EmptyInput("pre-training corpus needs at least 2 bytes".into()));
    }
    let mut params = ModelParams::init(config, seed);
    if steps == 0 {
        return Ok(params);
    }
    let mut opt = AdamW::new(params.len(), AdamWConfig::default());
    let mut rng = rng::seeded_stream(rng::child_seed(seed, 0x5052_4554, 0));
    for step in 0..steps {
        let batch = sample_windows(config, corpus, hp.batch_size, &mut rng);
        let mut out = forward_loss(config, &params.flat, &batch)?;
        clip_l2(&mut out.grad, hp.grad_clip_l2);
        let lr = hp.lr * (1.0 - step as f64 / steps as f64);
        opt.step(&mut params.flat, &out.grad, lr);
        if step % 100 == 0 {
            log::debug!("pretrain step {step}: loss {:.4}", out.loss);
        }
    }
    params.round_to_f32();
    Ok(params)
}

/// Mean next-token loss over `n_windows` random corpus windows.
pub fn corpus_loss(
    config: &ModelConfig,
    params: &ModelParams,
    corpus: &[u8],
    n_windows: usize,
    seed: u64,
) -> Result<f64> {
    if corpus.len() < 2 {
        return Err(Error::EmptyInput("corpus needs at least 2 bytes".into()));
    }
    let mut rng = rng::seeded_stream(seed);
    let batch = sample_windows(config, corpus, n_windows.max(1), &mut rng);
    Ok(forward_loss(config, &params.flat, &batch)?.loss)
}

fn sample_windows<R: RngCore>(
    config: &ModelConfig,
    corpus: &[u8],
    n: usize,
    rng: &mut R,
) -> Vec<TrainingExample> {
    let len = config.context_len.min(corpus.len());
    (0..n)
        .map(|_| {
            let start = rng::below(rng, (corpus.len() - len + 1) as u64) as usize;
            let tokens = tokenize(&corpus[start..start + len]);
            let mut loss_mask = alloc::vec![true; len];
            loss_mask[0] = false;
            TrainingExample { tokens, loss_mask }
        })
        .collect()
}

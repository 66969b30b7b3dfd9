//! Byte-level decoder-only transformer with hand-written backpropagation.
//!
//! Architecture (pre-LayerNorm, GPT-2 style): token + learned positional
//! embeddings, `n_layers` blocks of causal multi-head self-attention and a
//! GELU MLP, a final LayerNorm, and an output head tied to the token
//! embedding.
//!
//! Flat parameter layout, in order (matrices row-major, input index major):
//!
//! | tensor            | shape                  |
//! |-------------------|------------------------|
//! | `wte`             | vocab × d_model        |
//! | `wpe`             | context_len × d_model  |
//! | per layer:        |                        |
//! | `ln1.gain/bias`   | d_model, d_model       |
//! | `attn.w_qkv`      | d_model × 3·d_model    |
//! | `attn.b_qkv`      | 3·d_model              |
//! | `attn.w_out`      | d_model × d_model      |
//! | `attn.b_out`      | d_model                |
//! | `ln2.gain/bias`   | d_model, d_model       |
//! | `mlp.w_fc`        | d_model × d_ff         |
//! | `mlp.b_fc`        | d_ff                   |
//! | `mlp.w_out`       | d_ff × d_model         |
//! | `mlp.b_out`       | d_model                |
//! | `lnf.gain/bias`   | d_model, d_model       |
//!
//! All arithmetic is `f64` with a fixed evaluation order: dot products use
//! eight interleaved partial sums combined pairwise, everything else is
//! sequential. Each position's activations depend only on the tokens at or
//! before it and are computed by the same code regardless of sequence length,
//! so a teacher-forced pass and step-by-step greedy decoding produce
//! bit-identical logits.

mod layout;
mod pretrain;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::math::{exp, log, sqrt, tanh};

pub use layout::{LayerOffsets, Layout};
pub use pretrain::{corpus_loss, pretrain, pretrain_with, PretrainConfig};

/// Byte-level vocabulary size.
pub const VOCAB_SIZE: usize = 256;

const LN_EPS: f64 = 1e-5;

pub type Token = u32;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub context_len: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: VOCAB_SIZE,
            context_len: 128,
            n_layers: 2,
            n_heads: 4,
            d_model: 64,
            d_ff: 256,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size != VOCAB_SIZE {
            return Err(Error::Config("vocab_size must be 256".into()));
        }
        if self.context_len < 2 {
            return Err(Error::Config("context_len must be >= 2".into()));
        }
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return Err(Error::Config("layer, head and width counts must be >= 1".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config("d_model must be divisible by n_heads".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Number of scalar parameters D.
    pub fn param_count(&self) -> usize {
        Layout::new(self).total
    }
}

/// Flat parameter vector θ^D.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub flat: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        Self { flat: vec![0.0; config.param_count()] }
    }

    /// Documented random initialization: N(0, 0.02²) for embeddings and
    /// input projections, N(0, (0.02/√(2·n_layers))²) for the two residual
    /// output projections, zero biases, unit LayerNorm gains. Values are
    /// rounded to `f32` so the result equals its own checkpoint.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let layout = Layout::new(config);
        let mut rng = crate::rng::seeded_stream(seed);
        let mut gauss = crate::rng::Gaussian::new();
        let mut flat = vec![0.0; layout.total];
        let resid_std = 0.02 / sqrt(2.0 * config.n_layers as f64);

        let mut fill = |flat: &mut [f64], std: f64| {
            for v in flat.iter_mut() {
                *v = std * gauss.sample(&mut rng);
            }
        };
        fill(&mut flat[layout.wte.clone()], 0.02);
        fill(&mut flat[layout.wpe.clone()], 0.02);
        for l in &layout.layers {
            flat[l.ln1_gain.clone()].fill(1.0);
            fill(&mut flat[l.w_qkv.clone()], 0.02);
            fill(&mut flat[l.w_attn_out.clone()], resid_std);
            flat[l.ln2_gain.clone()].fill(1.0);
            fill(&mut flat[l.w_fc.clone()], 0.02);
            fill(&mut flat[l.w_mlp_out.clone()], resid_std);
        }
        flat[layout.lnf_gain.clone()].fill(1.0);
        let mut params = Self { flat };
        params.round_to_f32();
        params
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn round_to_f32(&mut self) {
        for v in &mut self.flat {
            *v = *v as f32 as f64;
        }
    }
}

/// Converts bytes to token ids (the identity on byte values).
pub fn tokenize(bytes: &[u8]) -> Vec<Token> {
    bytes.iter().map(|&b| Token::from(b)).collect()
}

/// Converts token ids back to bytes; ids above 255 are rejected.
pub fn detokenize(tokens: &[Token]) -> Result<Vec<u8>> {
    tokens
        .iter()
        .map(|&t| u8::try_from(t).map_err(|_| Error::InvalidToken(t)))
        .collect()
}

/// One training sequence: prompt tokens followed by message tokens, with the
/// loss applied only where `loss_mask` is true.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub tokens: Vec<Token>,
    pub loss_mask: Vec<bool>,
}

impl TrainingExample {
    /// `prompt ++ chunk`, masking exactly the chunk positions.
    pub fn new(prompt: &[Token], chunk: &[Token]) -> Self {
        let mut tokens = Vec::with_capacity(prompt.len() + chunk.len());
        tokens.extend_from_slice(prompt);
        tokens.extend_from_slice(chunk);
        let mut loss_mask = vec![false; prompt.len()];
        loss_mask.resize(tokens.len(), true);
        Self { tokens, loss_mask }
    }

    fn validate(&self, config: &ModelConfig) -> Result<()> {
        check_len(self.tokens.len(), self.loss_mask.len())?;
        if self.tokens.len() > config.context_len {
            return Err(Error::Precondition("example longer than context_len".into()));
        }
        if self.tokens.iter().any(|&t| t as usize >= config.vocab_size) {
            let bad = self.tokens.iter().copied().find(|&t| t as usize >= config.vocab_size);
            return Err(Error::InvalidToken(bad.unwrap_or_default()));
        }
        if self.loss_mask.first() == Some(&true) {
            return Err(Error::Precondition("first position has no context to predict it".into()));
        }
        Ok(())
    }

    fn n_targets(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }
}

/// Result of a forward/backward pass over a batch.
#[derive(Debug, Clone)]
pub struct LossOutput {
    /// Mean cross-entropy over all masked positions of the batch (nats).
    pub loss: f64,
    /// d loss / d θ^D.
    pub grad: Vec<f64>,
    /// True when every masked target is the argmax of its logits, i.e. greedy
    /// decoding from each prompt reproduces its chunk.
    pub all_correct: bool,
    pub n_targets: usize,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean masked cross-entropy and its gradient with respect to the flat parameters.
pub fn forward_loss(
    config: &ModelConfig,
    params: &[f64],
    batch: &[TrainingExample],
) -> Result<LossOutput> {
    config.validate()?;
    let layout = Layout::new(config);
    check_len(layout.total, params.len())?;
    if batch.is_empty() {
        return Err(Error::Precondition("empty batch".into()));
    }
    let mut n_targets = 0;
    for ex in batch {
        ex.validate(config)?;
        n_targets += ex.n_targets();
    }
    if n_targets == 0 {
        return Err(Error::Precondition("loss mask selects no positions".into()));
    }

    let scale = 1.0 / n_targets as f64;
    let mut grad = vec![0.0; layout.total];
    let mut total = 0.0;
    let mut all_correct = true;
    for ex in batch {
        let inputs = &ex.tokens[..ex.tokens.len() - 1];
        let cache = forward(config, &layout, params, inputs);
        let mut dlogits_rows: Vec<(usize, Vec<f64>)> = Vec::new();
        for (pos, (&target, &masked)) in ex.tokens[1..].iter().zip(&ex.loss_mask[1..]).enumerate() {
            if !masked {
                continue;
            }
            let logits = head_logits(config, &layout, params, cache.final_row(pos));
            if argmax_lowest(&logits) != target as usize {
                all_correct = false;
            }
            let (nll, mut dl) = softmax_xent(&logits, target as usize);
            total += nll;
            for v in &mut dl {
                *v *= scale;
            }
            dlogits_rows.push((pos, dl));
        }
        backward(config, &layout, params, inputs, &cache, &dlogits_rows, &mut grad);
    }
    Ok(LossOutput { loss: total * scale, grad, all_correct, n_targets })
}

/// Full logits matrix (positions × vocab) for a token sequence.
pub fn logits(config: &ModelConfig, params: &[f64], tokens: &[Token]) -> Result<Vec<f64>> {
    config.validate()?;
    let layout = Layout::new(config);
    check_len(layout.total, params.len())?;
    validate_tokens(config, tokens)?;
    if tokens.is_empty() {
        return Ok(Vec::new());
    }
    let cache = forward(config, &layout, params, tokens);
    let mut out = Vec::with_capacity(tokens.len() * config.vocab_size);
    for pos in 0..tokens.len() {
        out.extend(head_logits(config, &layout, params, cache.final_row(pos)));
    }
    Ok(out)
}

/// Greedy autoregressive decoding of `n_tokens` tokens after `prompt`.
pub fn greedy_decode(
    config: &ModelConfig,
    params: &[f64],
    prompt: &[Token],
    n_tokens: usize,
) -> Result<Vec<Token>> {
    config.validate()?;
    let layout = Layout::new(config);
    check_len(layout.total, params.len())?;
    validate_tokens(config, prompt)?;
    if prompt.len() + n_tokens > config.context_len {
        return Err(Error::Precondition("prompt plus generated tokens exceed context_len".into()));
    }
    if n_tokens == 0 {
        return Ok(Vec::new());
    }
    if prompt.is_empty() {
        return Err(Error::Precondition("greedy decoding needs a non-empty prompt".into()));
    }
    let mut seq = prompt.to_vec();
    for _ in 0..n_tokens {
        let cache = forward(config, &layout, params, &seq);
        let logits = head_logits(config, &layout, params, cache.final_row(seq.len() - 1));
        seq.push(argmax_lowest(&logits) as Token);
    }
    Ok(seq.split_off(prompt.len()))
}

fn validate_tokens(config: &ModelConfig, tokens: &[Token]) -> Result<()> {
    if tokens.len() > config.context_len {
        return Err(Error::Precondition("sequence longer than context_len".into()));
    }
    match tokens.iter().find(|&&t| t as usize >= config.vocab_size) {
        Some(&t) => Err(Error::InvalidToken(t)),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// kernels

/// Dot product with eight interleaved accumulators combined pairwise.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7])) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out[t] = bias + x[t] · W` for each row, W is `n_in × n_out`.
fn linear(x: &[f64], w: &[f64], bias: &[f64], n_in: usize, n_out: usize, out: &mut [f64]) {
    for (xrow, orow) in x.chunks_exact(n_in).zip(out.chunks_exact_mut(n_out)) {
        orow.copy_from_slice(bias);
        for (c, &xc) in xrow.iter().enumerate() {
            axpy(xc, &w[c * n_out..(c + 1) * n_out], orow);
        }
    }
}

/// Backward of [`linear`]: accumulates dW, db and (optionally) dx.
#[allow(clippy::too_many_arguments)]
fn linear_backward(
    x: &[f64],
    w: &[f64],
    dout: &[f64],
    n_in: usize,
    n_out: usize,
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    for (xrow, drow) in x.chunks_exact(n_in).zip(dout.chunks_exact(n_out)) {
        axpy(1.0, drow, db);
        for (c, &xc) in xrow.iter().enumerate() {
            if xc != 0.0 {
                axpy(xc, drow, &mut dw[c * n_out..(c + 1) * n_out]);
            }
        }
    }
    if let Some(dx) = dx {
        for (dxrow, drow) in dx.chunks_exact_mut(n_in).zip(dout.chunks_exact(n_out)) {
            for (c, v) in dxrow.iter_mut().enumerate() {
                *v += dot(drow, &w[c * n_out..(c + 1) * n_out]);
            }
        }
    }
}

/// Row-wise LayerNorm; returns normalized output and stores (mean, rstd) per row.
fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], out: &mut [f64], stats: &mut [(f64, f64)]) {
    let c = gain.len();
    for ((xrow, orow), st) in x.chunks_exact(c).zip(out.chunks_exact_mut(c)).zip(stats.iter_mut()) {
        let mut mean = 0.0;
        for &v in xrow {
            mean += v;
        }
        mean /= c as f64;
        let mut var = 0.0;
        for &v in xrow {
            let d = v - mean;
            var += d * d;
        }
        var /= c as f64;
        let rstd = 1.0 / sqrt(var + LN_EPS);
        for i in 0..c {
            orow[i] = (xrow[i] - mean) * rstd * gain[i] + bias[i];
        }
        *st = (mean, rstd);
    }
}

fn layer_norm_backward(
    x: &[f64],
    gain: &[f64],
    stats: &[(f64, f64)],
    dout: &[f64],
    dgain: &mut [f64],
    dbias: &mut [f64],
    dx: &mut [f64],
) {
    let c = gain.len();
    let mut dxhat = vec![0.0; c];
    for (((xrow, drow), dxrow), &(mean, rstd)) in x
        .chunks_exact(c)
        .zip(dout.chunks_exact(c))
        .zip(dx.chunks_exact_mut(c))
        .zip(stats)
    {
        let mut mean_d = 0.0;
        let mut mean_dx = 0.0;
        for i in 0..c {
            let xhat = (xrow[i] - mean) * rstd;
            dgain[i] += drow[i] * xhat;
            dbias[i] += drow[i];
            dxhat[i] = drow[i] * gain[i];
            mean_d += dxhat[i];
            mean_dx += dxhat[i] * xhat;
        }
        mean_d /= c as f64;
        mean_dx /= c as f64;
        for i in 0..c {
            let xhat = (xrow[i] - mean) * rstd;
            dxrow[i] += rstd * (dxhat[i] - mean_d - xhat * mean_dx);
        }
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

#[inline]
fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + tanh(GELU_K * (x + GELU_C * x * x * x)))
}

#[inline]
fn gelu_grad(x: f64) -> f64 {
    let t = tanh(GELU_K * (x + GELU_C * x * x * x));
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * x * x)
}

/// Negative log-likelihood of `target` and d nll / d logits.
fn softmax_xent(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&l| exp(l - max)).collect();
    let mut sum = 0.0;
    for &p in &probs {
        sum += p;
    }
    let nll = log(sum) - (logits[target] - max);
    for p in &mut probs {
        *p /= sum;
    }
    probs[target] -= 1.0;
    (nll, probs)
}

fn head_logits(config: &ModelConfig, layout: &Layout, params: &[f64], row: &[f64]) -> Vec<f64> {
    let c = config.d_model;
    let wte = &params[layout.wte.clone()];
    (0..config.vocab_size).map(|v| dot(row, &wte[v * c..(v + 1) * c])).collect()
}

// ---------------------------------------------------------------------------
// forward / backward

struct LayerCache {
    x_in: Vec<f64>,
    ln1: Vec<f64>,
    ln1_stats: Vec<(f64, f64)>,
    qkv: Vec<f64>,
    /// per head, row i holds softmax weights over keys 0..=i (rest zero)
    probs: Vec<f64>,
    att: Vec<f64>,
    x_mid: Vec<f64>,
    ln2: Vec<f64>,
    ln2_stats: Vec<(f64, f64)>,
    fc_pre: Vec<f64>,
    fc_act: Vec<f64>,
}

struct Cache {
    d_model: usize,
    layers: Vec<LayerCache>,
    x_final: Vec<f64>,
    lnf: Vec<f64>,
    lnf_stats: Vec<(f64, f64)>,
}

impl Cache {
    fn final_row(&self, pos: usize) -> &[f64] {
        &self.lnf[pos * self.d_model..(pos + 1) * self.d_model]
    }
}

fn forward(config: &ModelConfig, layout: &Layout, params: &[f64], tokens: &[Token]) -> Cache {
    let t_len = tokens.len();
    let c = config.d_model;
    let f = config.d_ff;
    let n_heads = config.n_heads;
    let hd = config.head_dim();
    let att_scale = 1.0 / sqrt(hd as f64);

    let wte = &params[layout.wte.clone()];
    let wpe = &params[layout.wpe.clone()];
    let mut x = vec![0.0; t_len * c];
    for (pos, (&tok, row)) in tokens.iter().zip(x.chunks_exact_mut(c)).enumerate() {
        let tok = tok as usize;
        for i in 0..c {
            row[i] = wte[tok * c + i] + wpe[pos * c + i];
        }
    }

    let mut layers = Vec::with_capacity(config.n_layers);
    for lo in &layout.layers {
        let p = |r: &core::ops::Range<usize>| &params[r.clone()];
        let x_in = x.clone();

        let mut ln1 = vec![0.0; t_len * c];
        let mut ln1_stats = vec![(0.0, 0.0); t_len];
        layer_norm(&x_in, p(&lo.ln1_gain), p(&lo.ln1_bias), &mut ln1, &mut ln1_stats);

        let mut qkv = vec![0.0; t_len * 3 * c];
        linear(&ln1, p(&lo.w_qkv), p(&lo.b_qkv), c, 3 * c, &mut qkv);

        let mut probs = vec![0.0; n_heads * t_len * t_len];
        let mut att = vec![0.0; t_len * c];
        for h in 0..n_heads {
            for i in 0..t_len {
                let q = &qkv[i * 3 * c + h * hd..i * 3 * c + (h + 1) * hd];
                let prow = &mut probs[(h * t_len + i) * t_len..(h * t_len + i + 1) * t_len];
                let mut max = f64::NEG_INFINITY;
                for j in 0..=i {
                    let k = &qkv[j * 3 * c + c + h * hd..j * 3 * c + c + (h + 1) * hd];
                    let s = dot(q, k) * att_scale;
                    prow[j] = s;
                    if s > max {
                        max = s;
                    }
                }
                let mut sum = 0.0;
                for pj in &mut prow[..=i] {
                    *pj = exp(*pj - max);
                    sum += *pj;
                }
                let inv = 1.0 / sum;
                for pj in &mut prow[..=i] {
                    *pj *= inv;
                }
                let out = &mut att[i * c + h * hd..i * c + (h + 1) * hd];
                for j in 0..=i {
                    let v = &qkv[j * 3 * c + 2 * c + h * hd..j * 3 * c + 2 * c + (h + 1) * hd];
                    axpy(prow[j], v, out);
                }
            }
        }

        let mut proj = vec![0.0; t_len * c];
        linear(&att, p(&lo.w_attn_out), p(&lo.b_attn_out), c, c, &mut proj);
        let mut x_mid = x_in.clone();
        axpy(1.0, &proj, &mut x_mid);

        let mut ln2 = vec![0.0; t_len * c];
        let mut ln2_stats = vec![(0.0, 0.0); t_len];
        layer_norm(&x_mid, p(&lo.ln2_gain), p(&lo.ln2_bias), &mut ln2, &mut ln2_stats);

        let mut fc_pre = vec![0.0; t_len * f];
        linear(&ln2, p(&lo.w_fc), p(&lo.b_fc), c, f, &mut fc_pre);
        let fc_act: Vec<f64> = fc_pre.iter().map(|&v| gelu(v)).collect();
        let mut mlp = vec![0.0; t_len * c];
        linear(&fc_act, p(&lo.w_mlp_out), p(&lo.b_mlp_out), f, c, &mut mlp);
        x = x_mid.clone();
        axpy(1.0, &mlp, &mut x);

        layers.push(LayerCache {
            x_in,
            ln1,
            ln1_stats,
            qkv,
            probs,
            att,
            x_mid,
            ln2,
            ln2_stats,
            fc_pre,
            fc_act,
        });
    }

    let mut lnf = vec![0.0; t_len * c];
    let mut lnf_stats = vec![(0.0, 0.0); t_len];
    layer_norm(
        &x,
        &params[layout.lnf_gain.clone()],
        &params[layout.lnf_bias.clone()],
        &mut lnf,
        &mut lnf_stats,
    );
    Cache { d_model: c, layers, x_final: x, lnf, lnf_stats }
}

fn backward(
    config: &ModelConfig,
    layout: &Layout,
    params: &[f64],
    tokens: &[Token],
    cache: &Cache,
    dlogits_rows: &[(usize, Vec<f64>)],
    grad: &mut [f64],
) {
    let t_len = tokens.len();
    let c = config.d_model;
    let f = config.d_ff;
    let n_heads = config.n_heads;
    let hd = config.head_dim();
    let att_scale = 1.0 / sqrt(hd as f64);

    // tied head: logits[v] = lnf_row · wte[v]
    let mut dlnf = vec![0.0; t_len * c];
    {
        let wte = &params[layout.wte.clone()];
        let wte_start = layout.wte.start;
        for (pos, dl) in dlogits_rows {
            let row = cache.final_row(*pos);
            let drow = &mut dlnf[pos * c..(pos + 1) * c];
            for (v, &g) in dl.iter().enumerate() {
                axpy(g, &wte[v * c..(v + 1) * c], drow);
                let off = wte_start + v * c;
                axpy(g, row, &mut grad[off..off + c]);
            }
        }
    }

    let mut dx = vec![0.0; t_len * c];
    {
        let (dg, db) = split_pair(grad, &layout.lnf_gain, &layout.lnf_bias);
        layer_norm_backward(
            &cache.x_final,
            &params[layout.lnf_gain.clone()],
            &cache.lnf_stats,
            &dlnf,
            dg,
            db,
            &mut dx,
        );
    }

    for (lo, lc) in layout.layers.iter().zip(&cache.layers).rev() {
        let p = |r: &core::ops::Range<usize>| &params[r.clone()];

        // MLP branch: x = x_mid + mlp(ln2(x_mid))
        let dmlp = &dx;
        let mut dfc_act = vec![0.0; t_len * f];
        {
            let (dw, db) = split_pair(grad, &lo.w_mlp_out, &lo.b_mlp_out);
            linear_backward(&lc.fc_act, p(&lo.w_mlp_out), dmlp, f, c, dw, db, Some(&mut dfc_act));
        }
        for (d, &pre) in dfc_act.iter_mut().zip(&lc.fc_pre) {
            *d *= gelu_grad(pre);
        }
        let mut dln2 = vec![0.0; t_len * c];
        {
            let (dw, db) = split_pair(grad, &lo.w_fc, &lo.b_fc);
            linear_backward(&lc.ln2, p(&lo.w_fc), &dfc_act, c, f, dw, db, Some(&mut dln2));
        }
        let mut dx_mid = dx.clone();
        {
            let (dg, db) = split_pair(grad, &lo.ln2_gain, &lo.ln2_bias);
            layer_norm_backward(&lc.x_mid, p(&lo.ln2_gain), &lc.ln2_stats, &dln2, dg, db, &mut dx_mid);
        }

        // attention branch: x_mid = x_in + proj(attn(ln1(x_in)))
        let mut datt = vec![0.0; t_len * c];
        {
            let (dw, db) = split_pair(grad, &lo.w_attn_out, &lo.b_attn_out);
            linear_backward(&lc.att, p(&lo.w_attn_out), &dx_mid, c, c, dw, db, Some(&mut datt));
        }
        let mut dqkv = vec![0.0; t_len * 3 * c];
        let mut dp = vec![0.0; t_len];
        for h in 0..n_heads {
            for i in 0..t_len {
                let prow = &lc.probs[(h * t_len + i) * t_len..(h * t_len + i + 1) * t_len];
                let dout = &datt[i * c + h * hd..i * c + (h + 1) * hd];
                let mut weighted = 0.0;
                for j in 0..=i {
                    let voff = j * 3 * c + 2 * c + h * hd;
                    dp[j] = dot(dout, &lc.qkv[voff..voff + hd]);
                    weighted += prow[j] * dp[j];
                    axpy(prow[j], dout, &mut dqkv[voff..voff + hd]);
                }
                let qoff = i * 3 * c + h * hd;
                for j in 0..=i {
                    let ds = prow[j] * (dp[j] - weighted) * att_scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let koff = j * 3 * c + c + h * hd;
                    let (qpart, kpart) = if qoff < koff {
                        let (a, b) = dqkv.split_at_mut(koff);
                        (&mut a[qoff..qoff + hd], &mut b[..hd])
                    } else {
                        let (a, b) = dqkv.split_at_mut(qoff);
                        (&mut b[..hd], &mut a[koff..koff + hd])
                    };
                    axpy(ds, &lc.qkv[koff..koff + hd], qpart);
                    axpy(ds, &lc.qkv[qoff..qoff + hd], kpart);
                }
            }
        }
        let mut dln1 = vec![0.0; t_len * c];
        {
            let (dw, db) = split_pair(grad, &lo.w_qkv, &lo.b_qkv);
            linear_backward(&lc.ln1, p(&lo.w_qkv), &dqkv, c, 3 * c, dw, db, Some(&mut dln1));
        }
        dx = dx_mid.clone();
        {
            let (dg, db) = split_pair(grad, &lo.ln1_gain, &lo.ln1_bias);
            layer_norm_backward(&lc.x_in, p(&lo.ln1_gain), &lc.ln1_stats, &dln1, dg, db, &mut dx);
        }
    }

    for (pos, (&tok, drow)) in tokens.iter().zip(dx.chunks_exact(c)).enumerate() {
        let te = layout.wte.start + tok as usize * c;
        axpy(1.0, drow, &mut grad[te..te + c]);
        let pe = layout.wpe.start + pos * c;
        axpy(1.0, drow, &mut grad[pe..pe + c]);
    }
}

/// Two disjoint mutable views into `grad`; `first` must precede `second`.
fn split_pair<'a>(
    grad: &'a mut [f64],
    first: &core::ops::Range<usize>,
    second: &core::ops::Range<usize>,
) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert!(first.end <= second.start);
    let (a, b) = grad.split_at_mut(second.start);
    (&mut a[first.clone()], &mut b[..second.len()])
}

//! Key handling, prompts, chunking and the encrypt/decrypt pipeline.
//!
//! A message is tokenized, split into chunks that fit the context window
//! behind a fresh UUID prompt, and memorized in the subspace selected by
//! `k′ = HMAC-SHA256(k, x)` for a random 64-bit nonce `x`. The ciphertext is
//! the converged θ^d together with the cleartext prompts, per-chunk token
//! counts and the nonce. There is no integrity protection: decrypting with
//! the wrong key silently yields unrelated bytes.

use alloc::vec::Vec;
use core::fmt;

use hmac::{KeyInit, Mac};
use rand_core::{CryptoRng, RngCore};
use sha2::Sha256;

use crate::error::{Error, Result};
use crate::model::{detokenize, greedy_decode, tokenize, ModelConfig, ModelParams, Token, TrainingExample};
use crate::projection::ProjectionSpec;
use crate::training::{memorize, subspace_params, TrainConfig};

pub const KEY_LEN: usize = 32;

/// Length of a canonical UUID string.
pub const PROMPT_LEN: usize = 36;

/// A 32-byte symmetric key.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey([u8; KEY_LEN]);

impl SecretKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let arr: [u8; KEY_LEN] = bytes
            .try_into()
            .map_err(|_| Error::Dimension { expected: KEY_LEN, actual: bytes.len() })?;
        Ok(Self(arr))
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut bytes = [0u8; KEY_LEN];
        rng.fill_bytes(&mut bytes);
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

/// `k′ = HMAC-SHA256(k, x as 8 little-endian bytes)`.
pub fn derive_key(key: &SecretKey, nonce: u64) -> [u8; 32] {
    hmac_sha256(key.as_bytes(), &nonce.to_le_bytes())
}

fn hmac_sha256(key: &[u8], data: &[u8]) -> [u8; 32] {
    let mut mac = <hmac::Hmac<Sha256> as KeyInit>::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(data);
    mac.finalize().into_bytes().into()
}

/// A random version-4 UUID in canonical lowercase form.
pub fn make_prompt<R: RngCore + ?Sized>(rng: &mut R) -> [u8; PROMPT_LEN] {
    const HEX: &[u8; 16] = b"0123456789abcdef";
    let mut raw = [0u8; 16];
    rng.fill_bytes(&mut raw);
    raw[6] = (raw[6] & 0x0f) | 0x40;
    raw[8] = (raw[8] & 0x3f) | 0x80;
    let mut out = [0u8; PROMPT_LEN];
    let mut pos = 0;
    for (i, byte) in raw.iter().enumerate() {
        if matches!(i, 4 | 6 | 8 | 10) {
            out[pos] = b'-';
            pos += 1;
        }
        out[pos] = HEX[(byte >> 4) as usize];
        out[pos + 1] = HEX[(byte & 0x0f) as usize];
        pos += 2;
    }
    out
}

/// `n` pairwise-distinct prompts.
pub fn make_prompts<R: RngCore + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<Vec<u8>>> {
    if n == 0 {
        return Err(Error::Precondition("need at least one prompt".into()));
    }
    let mut prompts: Vec<Vec<u8>> = Vec::with_capacity(n);
    while prompts.len() < n {
        let p = make_prompt(rng).to_vec();
        if !prompts.contains(&p) {
            prompts.push(p);
        }
    }
    Ok(prompts)
}

/// Greedy left-to-right split into pieces of at most `context_len − prompt_len` tokens.
pub fn chunk(tokens: &[Token], context_len: usize, prompt_len: usize) -> Result<Vec<Vec<Token>>> {
    if context_len <= prompt_len {
        return Err(Error::Precondition("context_len must exceed prompt_len".into()));
    }
    Ok(tokens.chunks(context_len - prompt_len).map(<[Token]>::to_vec).collect())
}

/// A public base model: architecture, θ^D_0 and the hash that identifies it.
#[derive(Debug, Clone, Copy)]
pub struct BaseModel<'a> {
    pub config: &'a ModelConfig,
    pub params: &'a ModelParams,
    pub id: [u8; 32],
}

/// One chunk's cleartext framing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkHeader {
    pub prompt: Vec<u8>,
    pub token_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ciphertext {
    pub model_id: [u8; 32],
    /// Regularizer tag used during encryption.
    pub flags: u8,
    pub nonce: u64,
    pub chunks: Vec<ChunkHeader>,
    pub theta: Vec<f32>,
}

impl Ciphertext {
    pub fn d(&self) -> usize {
        self.theta.len()
    }

    pub fn token_count(&self) -> usize {
        self.chunks.iter().map(|c| c.token_count as usize).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.is_empty() {
            return Err(Error::Precondition("ciphertext has d = 0".into()));
        }
        if self.chunks.is_empty() || self.chunks.len() > u16::MAX as usize {
            return Err(Error::Precondition("chunk count must be in 1..=65535".into()));
        }
        for c in &self.chunks {
            if c.token_count == 0 || c.prompt.is_empty() || c.prompt.len() > u16::MAX as usize {
                return Err(Error::Precondition("malformed chunk header".into()));
            }
        }
        Ok(())
    }
}

/// Encrypts with a fresh nonce and fresh prompts drawn from `rng`.
pub fn encrypt<R: RngCore + ?Sized>(
    key: &SecretKey,
    message: &[u8],
    model: &BaseModel<'_>,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Ciphertext> {
    let nonce = rng.next_u64();
    let tokens = tokenize(message);
    let n_chunks = chunk(&tokens, model.config.context_len, PROMPT_LEN)?.len();
    let prompts = make_prompts(n_chunks.max(1), rng)?;
    encrypt_with(key, nonce, &prompts, message, model, config)
}

/// Deterministic core of [`encrypt`] for a given nonce and prompt list.
pub fn encrypt_with(
    key: &SecretKey,
    nonce: u64,
    prompts: &[Vec<u8>],
    message: &[u8],
    model: &BaseModel<'_>,
    config: &TrainConfig,
) -> Result<Ciphertext> {
    if message.is_empty() {
        return Err(Error::EmptyInput("message is empty".into()));
    }
    check_model(model)?;
    let tokens = tokenize(message);
    let max_prompt = prompts.iter().map(Vec::len).max().unwrap_or(0);
    let chunks = chunk(&tokens, model.config.context_len, max_prompt)?;
    if chunks.len() != prompts.len() {
        return Err(Error::Dimension { expected: chunks.len(), actual: prompts.len() });
    }
    if chunks.len() > u16::MAX as usize {
        return Err(Error::Precondition("message needs more than 65535 chunks".into()));
    }
    if prompts.iter().any(Vec::is_empty) {
        return Err(Error::Precondition("prompts must be non-empty".into()));
    }
    let examples: Vec<TrainingExample> = prompts
        .iter()
        .zip(&chunks)
        .map(|(p, c)| TrainingExample::new(&tokenize(p), c))
        .collect();

    let projection = ProjectionSpec::build(&derive_key(key, nonce), config.d, model.params.len())?;
    let result = memorize(config, model.config, model.params, &projection, &examples)?;
    if !result.converged {
        return Err(Error::BudgetExceeded { epochs: result.epochs_used });
    }
    log::debug!("memorized {} tokens in {} epochs", tokens.len(), result.epochs_used);
    Ok(Ciphertext {
        model_id: model.id,
        flags: config.regularizer.tag(),
        nonce,
        chunks: prompts
            .iter()
            .zip(&chunks)
            .map(|(p, c)| ChunkHeader { prompt: p.clone(), token_count: c.len() as u32 })
            .collect(),
        theta: result.theta_d_star.iter().map(|&t| t as f32).collect(),
    })
}

/// Regenerates the subspace from `(key, nonce)` and greedily decodes every chunk.
pub fn decrypt(key: &SecretKey, ciphertext: &Ciphertext, model: &BaseModel<'_>) -> Result<Vec<u8>> {
    if ciphertext.model_id != model.id {
        return Err(Error::ModelMismatch);
    }
    ciphertext.validate()?;
    check_model(model)?;
    let theta: Vec<f64> = ciphertext.theta.iter().map(|&t| t as f64).collect();
    let projection = ProjectionSpec::build(&derive_key(key, ciphertext.nonce), theta.len(), model.params.len())?;
    let full = subspace_params(model.params, &projection, &theta)?;
    let mut tokens = Vec::with_capacity(ciphertext.token_count());
    for c in &ciphertext.chunks {
        tokens.extend(greedy_decode(model.config, &full, &tokenize(&c.prompt), c.token_count as usize)?);
    }
    detokenize(&tokens)
}

fn check_model(model: &BaseModel<'_>) -> Result<()> {
    model.config.validate()?;
    crate::error::check_len(model.config.param_count(), model.params.len())
}

#[cfg(test)]
mod tests;

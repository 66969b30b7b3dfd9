//! Key-seeded Fastfood projection from R^d into R^D.
//!
//! Each block computes `H G Π H B x` on `x` zero-padded to the block size,
//! where `H` is the unnormalized ±1 Walsh–Hadamard matrix, `B` a random sign
//! diagonal, `Π` a random permutation and `G` a diagonal of standard normal
//! draws. No scaling diagonal and no normalization are applied. Enough
//! independent blocks are stacked to cover D outputs; the last block is
//! truncated.
//!
//! All randomness comes from the ChaCha20 keystream keyed by the derived key.
//! Per block the stream is consumed in this order: sign bits (64 per word,
//! least significant bit first, a set bit meaning -1), Gaussian draws
//! (Box–Muller pairs), then Fisher–Yates draws for the permutation.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{check_len, Error, Result};
use crate::rng::{self, Gaussian};

/// In-place unnormalized fast Walsh–Hadamard transform. `data.len()` must be a power of two.
pub fn fwht(data: &mut [f64]) {
    let n = data.len();
    debug_assert!(n.is_power_of_two());
    let mut half = 1;
    while half < n {
        for start in (0..n).step_by(half * 2) {
            let (lo, hi) = data[start..start + 2 * half].split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        half *= 2;
    }
}

/// The Fastfood operator regenerated from a 32-byte derived key.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSpec {
    d: usize,
    full_dim: usize,
    block_size: usize,
    signs: Vec<f64>,
    gaussians: Vec<f64>,
    permutation: Vec<u32>,
    seed_material: [u8; 32],
}

impl ProjectionSpec {
    /// Builds the projection for `d -> full_dim` from the derived key `key_prime`.
    pub fn build(key_prime: &[u8; 32], d: usize, full_dim: usize) -> Result<Self> {
        if d == 0 || full_dim == 0 {
            return Err(Error::Precondition("projection dimensions must be >= 1".into()));
        }
        let block_size = d.next_power_of_two();
        let n_blocks = full_dim.div_ceil(block_size);
        let total = n_blocks * block_size;

        let mut stream = rng::keyed_stream(key_prime);
        let mut signs = Vec::with_capacity(total);
        let mut gaussians = Vec::with_capacity(total);
        let mut permutation = Vec::with_capacity(total);

        for _ in 0..n_blocks {
            let mut word = 0u64;
            for i in 0..block_size {
                if i % 64 == 0 {
                    word = stream.next_u64();
                }
                let bit = (word >> (i % 64)) & 1;
                signs.push(if bit == 1 { -1.0 } else { 1.0 });
            }

            // fresh sampler per block so no spare value crosses a block boundary
            let mut gauss = Gaussian::new();
            for _ in 0..block_size {
                gaussians.push(gauss.sample(&mut stream));
            }

            let mut perm: Vec<u32> = (0..block_size as u32).collect();
            rng::shuffle(&mut stream, &mut perm);
            permutation.extend_from_slice(&perm);
        }

        Ok(Self {
            d,
            full_dim,
            block_size,
            signs,
            gaussians,
            permutation,
            seed_material: *key_prime,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn full_dim(&self) -> usize {
        self.full_dim
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn n_blocks(&self) -> usize {
        self.signs.len() / self.block_size
    }

    /// Diagonal of `B`, block after block.
    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    /// Diagonal of `G`, block after block.
    pub fn gaussians(&self) -> &[f64] {
        &self.gaussians
    }

    /// Rows of `Π` per block: `(Π y)[i] = y[permutation[i]]`.
    pub fn permutation(&self) -> &[u32] {
        &self.permutation
    }

    pub fn seed_material(&self) -> &[u8; 32] {
        &self.seed_material
    }

    /// Computes `V x` (length D).
    pub fn project(&self, theta_d: &[f64]) -> Result<Vec<f64>> {
        check_len(self.d, theta_d.len())?;
        let n = self.block_size;
        let mut out = vec![0.0; self.full_dim];
        let mut buf = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        for (b, chunk) in out.chunks_mut(n).enumerate() {
            let signs = &self.signs[b * n..(b + 1) * n];
            let gauss = &self.gaussians[b * n..(b + 1) * n];
            let perm = &self.permutation[b * n..(b + 1) * n];

            for i in 0..n {
                buf[i] = if i < self.d { theta_d[i] * signs[i] } else { 0.0 };
            }
            fwht(&mut buf);
            for i in 0..n {
                tmp[i] = gauss[i] * buf[perm[i] as usize];
            }
            fwht(&mut tmp);
            chunk.copy_from_slice(&tmp[..chunk.len()]);
        }
        Ok(out)
    }

    /// Computes `Vᵀ y = Σ_blocks B H Πᵀ G H y_block` (length d).
    pub fn project_adjoint(&self, grad_full: &[f64]) -> Result<Vec<f64>> {
        check_len(self.full_dim, grad_full.len())?;
        let n = self.block_size;
        let mut out = vec![0.0; self.d];
        let mut buf = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        for (b, chunk) in grad_full.chunks(n).enumerate() {
            let signs = &self.signs[b * n..(b + 1) * n];
            let gauss = &self.gaussians[b * n..(b + 1) * n];
            let perm = &self.permutation[b * n..(b + 1) * n];

            buf[..chunk.len()].copy_from_slice(chunk);
            buf[chunk.len()..].fill(0.0);
            fwht(&mut buf);
            for i in 0..n {
                tmp[perm[i] as usize] = gauss[i] * buf[i];
            }
            fwht(&mut tmp);
            for (o, (t, s)) in out.iter_mut().zip(tmp.iter().zip(signs)) {
                *o += s * t;
            }
        }
        Ok(out)
    }
}

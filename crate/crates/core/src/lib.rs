//! Symmetric encryption by memorization in a secret random subspace.
//!
//! A message is encrypted by training a small autoregressive transformer,
//! restricted to a key-derived low-dimensional subspace of its parameters,
//! until greedy decoding from random UUID prompts reproduces the message.
//! The ciphertext is the subspace coordinate vector plus the prompts; the
//! holder of the key regenerates the subspace and decodes.
//!
//! This crate is `no_std` (it needs `alloc`). File formats, OS entropy and
//! the command line live in the `selm` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod attack;
pub mod cipher;
pub mod corpus;
mod error;
pub mod math;
pub mod model;
pub mod optim;
pub mod projection;
pub mod rng;
pub mod training;

pub use error::{Error, Result};

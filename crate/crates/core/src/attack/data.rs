//! Labeled sample matrices, ciphertext features and standardization.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::sqrt;

/// Row-major samples with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<u8>,
}

impl Samples {
    pub fn new(dim: usize) -> Self {
        Self { dim, x: Vec::new(), y: Vec::new() }
    }

    pub fn push(&mut self, row: &[f64], label: u8) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, actual: row.len() });
        }
        self.x.extend_from_slice(row);
        self.y.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn subset(&self, idx: &[usize]) -> Samples {
        let mut out = Samples::new(self.dim);
        for &i in idx {
            out.x.extend_from_slice(self.row(i));
            out.y.push(self.y[i]);
        }
        out
    }

    pub fn class_count(&self, label: u8) -> usize {
        self.y.iter().filter(|&&l| l == label).count()
    }
}

pub const FEATURE_NAMES: [&str; 6] = ["mean", "std", "max", "min", "l1", "l2"];

/// `(mean, population std, max, min, L1, L2)` of a ciphertext vector.
pub fn extract_features(theta: &[f64]) -> Result<[f64; 6]> {
    if theta.is_empty() {
        return Err(Error::EmptyInput("cannot featurize an empty vector".into()));
    }
    let n = theta.len() as f64;
    let mean = theta.iter().sum::<f64>() / n;
    let var = theta.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    let max = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = theta.iter().copied().fold(f64::INFINITY, f64::min);
    let l1 = theta.iter().map(|t| t.abs()).sum();
    let l2 = sqrt(theta.iter().map(|t| t * t).sum());
    Ok([mean, sqrt(var), max, min, l1, l2])
}

/// Per-column affine map to zero mean and unit variance, fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Columns with zero spread keep scale 1.
    pub fn fit(train: &Samples) -> Self {
        let p = train.dim;
        let n = train.len().max(1) as f64;
        let mut mean = vec![0.0; p];
        for i in 0..train.len() {
            for (m, v) in mean.iter_mut().zip(train.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for i in 0..train.len() {
            for ((s, v), m) in var.iter_mut().zip(train.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var.iter().map(|&s| if s > 0.0 { sqrt(s / n) } else { 1.0 }).collect();
        Self { mean, scale }
    }

    pub fn apply(&self, samples: &Samples) -> Samples {
        let mut out = samples.clone();
        for row in out.x.chunks_mut(samples.dim.max(1)) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

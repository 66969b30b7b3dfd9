//! Two-class linear discriminant analysis on standardized inputs.
//!
//! The pooled within-class covariance `Σ` (divisor `n − 2`) is shrunk to
//! `Σ + ε·tr(Σ)/p·I` and inverted through a Cholesky factorization. A row is
//! labeled 1 when `w·x > c` with `w = Σ⁻¹(μ₁ − μ₀)` and
//! `c = w·(μ₀ + μ₁)/2 − ln(π₁/π₀)`.

use alloc::vec;
use alloc::vec::Vec;

use super::data::{Samples, Standardizer};
use crate::error::{Error, Result};
use crate::math::{dot, log, sqrt};

pub const DEFAULT_SHRINKAGE: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct LdaModel {
    pub standardizer: Standardizer,
    pub w: Vec<f64>,
    pub threshold: f64,
}

impl LdaModel {
    pub fn fit(train: &Samples, shrinkage: f64) -> Result<Self> {
        let (n0, n1) = (train.class_count(0), train.class_count(1));
        if n0 < 2 || n1 < 2 || n0 + n1 != train.len() {
            return Err(Error::Precondition("LDA needs labels in {0,1} with at least 2 rows each".into()));
        }
        let standardizer = Standardizer::fit(train);
        let z = standardizer.apply(train);
        let p = z.dim;

        let mut mu = [vec![0.0; p], vec![0.0; p]];
        for i in 0..z.len() {
            for (m, v) in mu[z.y[i] as usize].iter_mut().zip(z.row(i)) {
                *m += v;
            }
        }
        mu[0].iter_mut().for_each(|m| *m /= n0 as f64);
        mu[1].iter_mut().for_each(|m| *m /= n1 as f64);

        let mut cov = vec![0.0; p * p];
        let mut centered = vec![0.0; p];
        for i in 0..z.len() {
            let m = &mu[z.y[i] as usize];
            for ((c, v), mm) in centered.iter_mut().zip(z.row(i)).zip(m) {
                *c = v - mm;
            }
            for a in 0..p {
                let ca = centered[a];
                if ca != 0.0 {
                    for (slot, cb) in cov[a * p..a * p + a + 1].iter_mut().zip(&centered[..=a]) {
                        *slot += ca * cb;
                    }
                }
            }
        }
        let denom = (z.len() - 2) as f64;
        let trace: f64 = (0..p).map(|a| cov[a * p + a]).sum::<f64>() / denom;
        let ridge = if trace > 0.0 { shrinkage * trace / p as f64 } else { shrinkage };
        for a in 0..p {
            for b in 0..=a {
                cov[a * p + b] /= denom;
            }
            cov[a * p + a] += ridge;
        }

        let diff: Vec<f64> = mu[1].iter().zip(&mu[0]).map(|(a, b)| a - b).collect();
        let w = cholesky_solve(&mut cov, p, &diff)?;
        let mid: Vec<f64> = mu[0].iter().zip(&mu[1]).map(|(a, b)| 0.5 * (a + b)).collect();
        let threshold = dot(&w, &mid) - log(n1 as f64 / n0 as f64);
        Ok(Self { standardizer, w, threshold })
    }

    pub fn predict(&self, samples: &Samples) -> Vec<u8> {
        let z = self.standardizer.apply(samples);
        (0..z.len()).map(|i| (dot(&self.w, z.row(i)) > self.threshold) as u8).collect()
    }
}

/// Solves `A x = b` for symmetric positive-definite `A`, given by its lower
/// triangle in row-major `a` (overwritten with the Cholesky factor).
pub fn cholesky_solve(a: &mut [f64], p: usize, b: &[f64]) -> Result<Vec<f64>> {
    for j in 0..p {
        let mut diag = a[j * p + j];
        for k in 0..j {
            diag -= a[j * p + k] * a[j * p + k];
        }
        if !(diag > 0.0) {
            return Err(Error::Precondition("matrix is not positive definite".into()));
        }
        let ljj = sqrt(diag);
        a[j * p + j] = ljj;
        for i in j + 1..p {
            let (upper, lower) = a.split_at_mut(i * p);
            let row_j = &upper[j * p..j * p + j];
            let row_i = &mut lower[..p];
            let s = row_i[j] - dot(&row_i[..j], row_j);
            row_i[j] = s / ljj;
        }
    }
    let mut y = vec![0.0; p];
    for i in 0..p {
        y[i] = (b[i] - dot(&a[i * p..i * p + i], &y[..i])) / a[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in i + 1..p {
            s -= a[k * p + i] * x[k];
        }
        x[i] = s / a[i * p + i];
    }
    Ok(x)
}

pub fn lda_classify(train: &Samples, test: &Samples) -> Result<Vec<u8>> {
    Ok(LdaModel::fit(train, DEFAULT_SHRINKAGE)?.predict(test))
}

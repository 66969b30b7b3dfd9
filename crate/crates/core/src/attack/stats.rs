//! Exact binomial test and binned mutual information.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{exp, log};

/// Significance level for rejecting the random-guessing hypothesis.
pub const SIGNIFICANCE: f64 = 0.05;

/// One-sided exact binomial p-value `P(X ≥ successes)` for `X ~ Bin(n, p0)`,
/// summed in log space.
pub fn binomial_test(successes: u64, n: u64, p0: f64) -> Result<f64> {
    if n == 0 || successes > n {
        return Err(Error::Precondition("binomial test needs 0 <= successes <= n, n >= 1".into()));
    }
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::Precondition("p0 must lie in (0, 1)".into()));
    }
    if successes == 0 {
        return Ok(1.0);
    }
    let (lp, lq) = (log(p0), log(1.0 - p0));
    let log_terms: Vec<f64> = (successes..=n)
        .map(|i| ln_choose(n, i) + i as f64 * lp + (n - i) as f64 * lq)
        .collect();
    let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = log_terms.iter().map(|&t| exp(t - max)).sum();
    Ok(exp(max + log(sum)).min(1.0))
}

fn ln_choose(n: u64, k: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// Default number of equal-frequency bins.
pub const MI_BINS: usize = 16;

/// Plug-in mutual information (nats) between a real feature and a discrete
/// label, after equal-frequency binning of the feature. Equal values always
/// share a bin. Clipped at zero.
pub fn mutual_information(values: &[f64], labels: &[u8], bins: usize) -> Result<f64> {
    let n = values.len();
    if n != labels.len() {
        return Err(Error::Dimension { expected: n, actual: labels.len() });
    }
    if n == 0 || bins == 0 {
        return Err(Error::EmptyInput("mutual information needs samples and bins".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut bin_of = vec![0usize; n];
    let mut first_rank = 0;
    for (rank, &i) in order.iter().enumerate() {
        if rank > 0 && values[i] != values[order[rank - 1]] {
            first_rank = rank;
        }
        bin_of[i] = first_rank * bins / n;
    }

    let mut joint = vec![[0usize; 256]; bins];
    let mut label_count = [0usize; 256];
    for i in 0..n {
        joint[bin_of[i]][labels[i] as usize] += 1;
        label_count[labels[i] as usize] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for row in &joint {
        let bin_total: usize = row.iter().sum();
        for (y, &c) in row.iter().enumerate() {
            if c > 0 {
                let pxy = c as f64 / nf;
                mi += pxy * log(pxy * nf * nf / (bin_total as f64 * label_count[y] as f64));
            }
        }
    }
    Ok(mi.max(0.0))
}

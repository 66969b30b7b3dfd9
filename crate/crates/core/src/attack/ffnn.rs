//! Two-layer ReLU network attacker trained with AdamW on standardized inputs.
//!
//! `input → Linear → ReLU → Dropout → Linear → 2 logits`, softmax
//! cross-entropy, minibatches of 32. A class-balanced tenth of the training
//! set is held out for early stopping: training ends after `patience` epochs
//! without a lower held-out loss, and the best weights are kept.

use alloc::vec;
use alloc::vec::Vec;

use super::data::{Samples, Standardizer};
use crate::error::{Error, Result};
use crate::math::{exp, log, sqrt};
use crate::optim::{AdamW, AdamWConfig};
use crate::rng::{seeded_stream, shuffle, unit_open};
use rand_core::RngCore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FfnnConfig {
    pub hidden: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl FfnnConfig {
    /// Hidden width 1000, for full ciphertext vectors.
    pub fn full() -> Self {
        Self { hidden: 1000, ..Self::features() }
    }

    /// Hidden width 256, for the six summary features.
    pub fn features() -> Self {
        Self {
            hidden: 256,
            lr: 3e-4,
            weight_decay: 0.1,
            batch_size: 32,
            dropout: 0.1,
            patience: 5,
            max_epochs: 300,
            seed: 0,
        }
    }
}

struct Net {
    p: usize,
    h: usize,
    /// `w1 (p×h) | b1 (h) | w2 (h×2) | b2 (2)`
    params: Vec<f64>,
}

impl Net {
    fn new(p: usize, h: usize, rng: &mut impl RngCore) -> Self {
        let mut params = Vec::with_capacity(p * h + h + 2 * h + 2);
        let mut uniform = |n: usize, bound: f64, out: &mut Vec<f64>| {
            for _ in 0..n {
                out.push(bound * (2.0 * unit_open(rng.next_u64()) - 1.0));
            }
        };
        let b_in = 1.0 / sqrt(p as f64);
        let b_hid = 1.0 / sqrt(h as f64);
        uniform(p * h + h, b_in, &mut params);
        uniform(2 * h + 2, b_hid, &mut params);
        Self { p, h, params }
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.p * self.h;
        let w2 = b1 + self.h;
        (b1, w2, w2 + 2 * self.h)
    }

    /// Hidden activations (after ReLU and the dropout mask) and logits.
    fn forward(&self, x: &[f64], mask: Option<&[f64]>, hidden: &mut [f64]) -> [f64; 2] {
        let (b1, w2, b2) = self.offsets();
        hidden.copy_from_slice(&self.params[b1..b1 + self.h]);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let row = &self.params[i * self.h..(i + 1) * self.h];
                for (hv, w) in hidden.iter_mut().zip(row) {
                    *hv += xi * w;
                }
            }
        }
        for (j, hv) in hidden.iter_mut().enumerate() {
            *hv = hv.max(0.0) * mask.map_or(1.0, |m| m[j]);
        }
        let mut logits = [self.params[b2], self.params[b2 + 1]];
        for (j, &hv) in hidden.iter().enumerate() {
            logits[0] += hv * self.params[w2 + 2 * j];
            logits[1] += hv * self.params[w2 + 2 * j + 1];
        }
        logits
    }

    /// Adds `scale ·` d loss / d params for one row under a dropout mask.
    /// `hidden` is scratch space.
    fn accumulate_grad(&self, x: &[f64], label: u8, mask: &[f64], scale: f64, hidden: &mut [f64], grad: &mut [f64]) {
        let (b1, w2, b2) = self.offsets();
        let logits = self.forward(x, Some(mask), hidden);
        let (_, dl) = xent(logits, label);
        grad[b2] += scale * dl[0];
        grad[b2 + 1] += scale * dl[1];
        // hidden[j] becomes d loss / d pre-activation j
        for j in 0..self.h {
            let hv = hidden[j];
            if hv == 0.0 {
                continue;
            }
            grad[w2 + 2 * j] += scale * dl[0] * hv;
            grad[w2 + 2 * j + 1] += scale * dl[1] * hv;
            hidden[j] = scale * (dl[0] * self.params[w2 + 2 * j] + dl[1] * self.params[w2 + 2 * j + 1]) * mask[j];
        }
        for (g, &dh) in grad[b1..b1 + self.h].iter_mut().zip(hidden.iter()) {
            *g += dh;
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (g, &dh) in grad[i * self.h..(i + 1) * self.h].iter_mut().zip(hidden.iter()) {
                    *g += xi * dh;
                }
            }
        }
    }

    fn mean_loss(&self, data: &Samples) -> f64 {
        let mut hidden = vec![0.0; self.h];
        let total: f64 = (0..data.len())
            .map(|i| xent(self.forward(data.row(i), None, &mut hidden), data.y[i]).0)
            .sum();
        total / data.len() as f64
    }

    fn predict(&self, data: &Samples) -> Vec<u8> {
        let mut hidden = vec![0.0; self.h];
        (0..data.len())
            .map(|i| {
                let l = self.forward(data.row(i), None, &mut hidden);
                (l[1] > l[0]) as u8
            })
            .collect()
    }
}

/// Loss and d loss / d logits.
fn xent(logits: [f64; 2], label: u8) -> (f64, [f64; 2]) {
    let m = logits[0].max(logits[1]);
    let e = [exp(logits[0] - m), exp(logits[1] - m)];
    let z = e[0] + e[1];
    let probs = [e[0] / z, e[1] / z];
    let y = label as usize;
    let mut grad = probs;
    grad[y] -= 1.0;
    (-(log(probs[y].max(f64::MIN_POSITIVE))), grad)
}

/// Class-balanced hold-out: every tenth row of each class (at least one per class).
fn holdout_split(train: &Samples) -> (Vec<usize>, Vec<usize>) {
    let mut seen = [0usize; 256];
    let mut counts = [0usize; 256];
    for &y in &train.y {
        counts[y as usize] += 1;
    }
    let (mut fit, mut held) = (Vec::new(), Vec::new());
    for (i, &y) in train.y.iter().enumerate() {
        let k = seen[y as usize];
        seen[y as usize] += 1;
        let c = counts[y as usize];
        let hold = if c >= 10 { k % 10 == 9 } else { c >= 2 && k == c - 1 };
        if hold {
            held.push(i);
        } else {
            fit.push(i);
        }
    }
    (fit, held)
}

/// Trains on `train` and predicts `test`.
pub fn ffnn_classify(train: &Samples, test: &Samples, config: &FfnnConfig) -> Result<Vec<u8>> {
    if train.is_empty() {
        return Err(Error::EmptyInput("no training rows".into()));
    }
    if test.dim != train.dim {
        return Err(Error::Dimension { expected: train.dim, actual: test.dim });
    }
    if train.y.iter().any(|&y| y > 1) {
        return Err(Error::Precondition("labels must be 0 or 1".into()));
    }
    let standardizer = Standardizer::fit(train);
    let z = standardizer.apply(train);
    let (fit_idx, held_idx) = holdout_split(&z);
    let (fit, held) = (z.subset(&fit_idx), z.subset(&held_idx));
    let monitor = if held.is_empty() { &fit } else { &held };

    let mut rng = seeded_stream(config.seed);
    let mut net = Net::new(z.dim, config.hidden, &mut rng);
    let mut opt = AdamW::new(net.params.len(), AdamWConfig { weight_decay: config.weight_decay, ..Default::default() });
    let keep = 1.0 - config.dropout;

    let mut best = (net.mean_loss(monitor), net.params.clone());
    let mut stale = 0;
    let mut order: Vec<usize> = (0..fit.len()).collect();
    let mut grad = vec![0.0; net.params.len()];
    let mut hidden = vec![0.0; net.h];
    let mut mask = vec![0.0; net.h];
    for _epoch in 0..config.max_epochs {
        shuffle(&mut rng, &mut order);
        for batch in order.chunks(config.batch_size.max(1)) {
            grad.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                for m in mask.iter_mut() {
                    *m = if unit_open(rng.next_u64()) < config.dropout { 0.0 } else { 1.0 / keep };
                }
                net.accumulate_grad(fit.row(i), fit.y[i], &mask, scale, &mut hidden, &mut grad);
            }
            opt.step(&mut net.params, &grad, config.lr);
        }
        let loss = net.mean_loss(monitor);
        if loss < best.0 {
            best = (loss, net.params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    net.params = best.1;
    Ok(net.predict(&standardizer.apply(test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Gaussian;

    fn clusters(seed: u64, n: usize, gap: f64) -> Samples {
        let mut rng = seeded_stream(seed);
        let mut g = Gaussian::new();
        let mut s = Samples::new(2);
        for i in 0..2 * n {
            let label = (i % 2) as u8;
            let c = if label == 0 { -gap } else { gap };
            s.push(&[c + g.sample(&mut rng), c + g.sample(&mut rng)], label).unwrap();
        }
        s
    }

    #[test]
    fn overfits_separable_points() {
        let mut train = Samples::new(2);
        for i in 0..16 {
            let x = i as f64 - 7.5;
            train.push(&[x, 0.3 * x], (x > 0.0) as u8).unwrap();
        }
        let cfg = FfnnConfig { lr: 1e-2, patience: 50, ..FfnnConfig::features() };
        assert_eq!(ffnn_classify(&train, &train, &cfg).unwrap(), train.y);
    }

    #[test]
    fn separable_clusters_generalize_and_are_deterministic() {
        let (train, test) = (clusters(1, 20, 50.0), clusters(2, 20, 50.0));
        let cfg = FfnnConfig::features();
        let a = ffnn_classify(&train, &test, &cfg).unwrap();
        let correct = a.iter().zip(&test.y).filter(|(p, y)| p == y).count();
        assert!(correct as f64 / test.len() as f64 >= 0.95, "{correct}");
        assert_eq!(a, ffnn_classify(&train, &test, &cfg).unwrap());
    }

    #[test]
    fn holdout_is_class_balanced_and_disjoint() {
        let s = clusters(3, 40, 1.0);
        let (fit, held) = holdout_split(&s);
        assert_eq!(fit.len() + held.len(), 80);
        assert_eq!(held.len(), 8);
        assert_eq!(held.iter().filter(|&&i| s.y[i] == 1).count(), 4);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seeded_stream(4);
        let net = Net::new(3, 5, &mut rng);
        let x = [0.3, -1.2, 0.8];
        let mask = [1.0, 0.0, 1.0 / 0.9, 1.0 / 0.9, 1.0];
        let loss = |params: &[f64]| {
            let n = Net { p: 3, h: 5, params: params.to_vec() };
            let mut h = vec![0.0; 5];
            xent(n.forward(&x, Some(&mask), &mut h), 1).0
        };
        let mut h = vec![0.0; 5];
        let mut g = vec![0.0; net.params.len()];
        net.accumulate_grad(&x, 1, &mask, 1.0, &mut h, &mut g);
        for k in 0..net.params.len() {
            let mut p = net.params.clone();
            p[k] += 1e-6;
            let up = loss(&p);
            p[k] -= 2e-6;
            let down = loss(&p);
            let fd = (up - down) / 2e-6;
            assert!((fd - g[k]).abs() < 1e-6, "param {k}: {fd} vs {}", g[k]);
        }
    }
}

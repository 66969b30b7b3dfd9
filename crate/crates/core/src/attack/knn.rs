//! k-nearest neighbours on raw inputs with k chosen by 5-fold cross-validation.
//!
//! Neighbours are ranked by (squared Euclidean distance, training index);
//! a vote tie goes to the lower label.

use alloc::vec::Vec;

use super::data::Samples;
use crate::error::{Error, Result};

pub const DEFAULT_KS: [usize; 3] = [5, 25, 100];
const FOLDS: usize = 5;

/// Predicted labels for every query row.
pub fn knn_predict(train: &Samples, queries: &Samples, k: usize) -> Result<Vec<u8>> {
    if k == 0 || k > train.len() {
        return Err(Error::Precondition("k must lie in 1..=|train|".into()));
    }
    if queries.dim != train.dim {
        return Err(Error::Dimension { expected: train.dim, actual: queries.dim });
    }
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(train.len());
    let mut out = Vec::with_capacity(queries.len());
    for q in 0..queries.len() {
        let query = queries.row(q);
        dist.clear();
        for i in 0..train.len() {
            let d: f64 = train.row(i).iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            dist.push((d, i));
        }
        dist.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = [0usize; 256];
        for &(_, i) in &dist[..k] {
            votes[train.y[i] as usize] += 1;
        }
        let mut best = 0;
        for label in 1..256 {
            if votes[label] > votes[best] {
                best = label;
            }
        }
        out.push(best as u8);
    }
    Ok(out)
}

/// k with the best cross-validated accuracy (ties go to the smaller k).
/// Candidates larger than a fold's training part are skipped.
pub fn select_k(train: &Samples, ks: &[usize]) -> Result<usize> {
    let n = train.len();
    if n < FOLDS {
        return Err(Error::Precondition("cross-validation needs at least 5 training rows".into()));
    }
    let fold_train = n - n.div_ceil(FOLDS);
    let mut candidates: Vec<usize> = ks.iter().copied().filter(|&k| k >= 1 && k <= fold_train).collect();
    candidates.sort_unstable();
    candidates.dedup();
    if candidates.is_empty() {
        return Err(Error::Precondition("no candidate k fits the training set".into()));
    }
    let mut best = (0usize, candidates[0]);
    for &k in &candidates {
        let mut correct = 0;
        for fold in 0..FOLDS {
            let (fit, held): (Vec<usize>, Vec<usize>) = (0..n).partition(|i| i % FOLDS != fold);
            let pred = knn_predict(&train.subset(&fit), &train.subset(&held), k)?;
            correct += pred.iter().zip(&held).filter(|(p, &i)| **p == train.y[i]).count();
        }
        if correct > best.0 {
            best = (correct, k);
        }
    }
    Ok(best.1)
}

/// Chooses k on `train`, then predicts `test`.
pub fn knn_classify(train: &Samples, test: &Samples, ks: &[usize]) -> Result<(usize, Vec<u8>)> {
    let k = select_k(train, ks)?;
    Ok((k, knn_predict(train, test, k)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded_stream, Gaussian};
    use std::vec;

    fn clusters(seed: u64, n: usize) -> Samples {
        let mut rng = seeded_stream(seed);
        let mut g = Gaussian::new();
        let mut s = Samples::new(2);
        for i in 0..2 * n {
            let label = (i % 2) as u8;
            let c = if label == 0 { -50.0 } else { 50.0 };
            s.push(&[c + g.sample(&mut rng), c + g.sample(&mut rng)], label).unwrap();
        }
        s
    }

    #[test]
    fn separated_clusters_are_perfect() {
        let (train, test) = (clusters(1, 20), clusters(2, 20));
        let (_, pred) = knn_classify(&train, &test, &DEFAULT_KS).unwrap();
        assert_eq!(pred, test.y);
    }

    #[test]
    fn single_label_training_set() {
        let mut train = clusters(3, 10);
        train.y.iter_mut().for_each(|y| *y = 1);
        let pred = knn_predict(&train, &clusters(4, 5), 5).unwrap();
        assert!(pred.iter().all(|&p| p == 1));
    }

    #[test]
    fn agrees_with_brute_force_oracle() {
        let mut rng = seeded_stream(5);
        let mut g = Gaussian::new();
        let mut train = Samples::new(3);
        for i in 0..50 {
            let row: Vec<f64> = (0..3).map(|_| g.sample(&mut rng)).collect();
            train.push(&row, (i % 3 == 0) as u8).unwrap();
        }
        let queries = train.clone();
        for k in [1, 3, 7] {
            let pred = knn_predict(&train, &queries, k).unwrap();
            for q in 0..50 {
                // all-pairs distances, selection by repeated minimum
                let mut used = vec![false; 50];
                let mut ones = 0;
                for _ in 0..k {
                    let mut best = usize::MAX;
                    let mut best_d = f64::INFINITY;
                    for i in 0..50 {
                        let d: f64 = (0..3).map(|j| (train.row(i)[j] - queries.row(q)[j]).powi(2)).sum();
                        if !used[i] && d < best_d {
                            best_d = d;
                            best = i;
                        }
                    }
                    used[best] = true;
                    ones += train.y[best] as usize;
                }
                let expected = (2 * ones > k) as u8;
                assert_eq!(pred[q], expected, "k {k} q {q}");
            }
        }
    }

    #[test]
    fn ties_prefer_lower_index_and_lower_label() {
        let mut train = Samples::new(1);
        train.push(&[1.0], 1).unwrap();
        train.push(&[-1.0], 0).unwrap();
        let mut q = Samples::new(1);
        q.push(&[0.0], 0).unwrap();
        assert_eq!(knn_predict(&train, &q, 1).unwrap(), vec![1]);
        assert_eq!(knn_predict(&train, &q, 2).unwrap(), vec![0]);
    }

    #[test]
    fn cross_validation_skips_oversized_k() {
        let train = clusters(6, 10);
        assert_eq!(select_k(&train, &DEFAULT_KS).unwrap(), 5);
        assert!(select_k(&train, &[100]).is_err());
        assert!(knn_predict(&train, &train, 0).is_err());
    }
}

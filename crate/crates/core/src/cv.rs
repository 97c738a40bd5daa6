//! Stratified k-fold splitting.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::seeded;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    /// Sorted.
    pub train: Vec<usize>,
    /// Sorted.
    pub test: Vec<usize>,
}

/// Splits row indices into `k` folds preserving class proportions: each
/// class is shuffled and dealt round-robin, so every fold holds `⌊c/k⌋` or
/// `⌈c/k⌉` members of a class of size `c`.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Config(format!("k_folds must be at least 2, got {k}")));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Input("labels must be 0 or 1".into()));
    }
    let mut rng = seeded(seed);
    let mut assignment = vec![0usize; labels.len()];
    let mut offset = 0usize;
    for class in [1u8, 0u8] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::Stratification(format!(
                "class {class} has {} members, fewer than k = {k}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (pos, &i) in members.iter().enumerate() {
            assignment[i] = (offset + pos) % k;
        }
        // continue dealing where this class stopped so fold sizes stay even
        offset = (offset + members.len()) % k;
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| assignment[i] == f);
            Fold { train, test }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(pos: usize, neg: usize) -> Vec<u8> {
        let mut v = vec![1u8; pos];
        v.extend(vec![0u8; neg]);
        v
    }

    #[test]
    fn exact_divisibility() {
        let y = labels(10, 90);
        for f in stratified_kfold(&y, 10, 3).unwrap() {
            let pos = f.test.iter().filter(|&&i| y[i] == 1).count();
            assert_eq!((pos, f.test.len() - pos), (1, 9));
        }
    }

    #[test]
    fn haberman_counts() {
        let y = labels(81, 225);
        let folds = stratified_kfold(&y, 10, 1).unwrap();
        let mut counts: Vec<usize> = folds.iter().map(|f| f.test.iter().filter(|&&i| y[i] == 1).count()).collect();
        counts.sort();
        assert!(counts.iter().all(|c| *c == 8 || *c == 9));
        assert_eq!(counts.iter().sum::<usize>(), 81);
    }

    #[test]
    fn small_class_rejected() {
        assert!(matches!(stratified_kfold(&labels(3, 50), 5, 0), Err(Error::Stratification(_))));
        assert!(stratified_kfold(&labels(3, 50), 1, 0).is_err());
    }

    #[test]
    fn seeded_determinism() {
        let y = labels(20, 60);
        assert_eq!(stratified_kfold(&y, 5, 9).unwrap(), stratified_kfold(&y, 5, 9).unwrap());
        assert_ne!(stratified_kfold(&y, 5, 9).unwrap(), stratified_kfold(&y, 5, 10).unwrap());
    }

    proptest! {
        #[test]
        fn partition_and_stratification(pos in 2usize..60, neg in 2usize..200, k in 2usize..11, seed in any::<u64>()) {
            prop_assume!(pos >= k && neg >= k);
            let y = labels(pos, neg);
            let folds = stratified_kfold(&y, k, seed).unwrap();
            let mut seen = vec![0usize; y.len()];
            for f in &folds {
                for &i in &f.test {
                    seen[i] += 1;
                }
                prop_assert_eq!(f.train.len() + f.test.len(), y.len());
                prop_assert!(f.train.iter().all(|i| !f.test.contains(i)));
                let p = f.test.iter().filter(|&&i| y[i] == 1).count();
                let expected = pos as f64 / k as f64;
                prop_assert!((p as f64 - expected).abs() < 1.0);
                let q = f.test.len() - p;
                prop_assert!((q as f64 - neg as f64 / k as f64).abs() < 1.0);
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }
    }
}

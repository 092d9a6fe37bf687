//! Cross-validation fold splitting keyed on case ids.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Result, SegQcError};

/// Partitions case ids into `k` folds (sizes differ by at most one).
/// Deterministic in `(ids, k, seed)` and independent of input order.
pub fn split_folds(case_ids: &[String], k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if k == 0 || case_ids.len() < k {
        return Err(SegQcError::InvalidConfig(format!(
            "cannot split {} cases into {k} folds",
            case_ids.len()
        )));
    }
    let mut ids: Vec<String> = case_ids.to_vec();
    ids.sort();
    ids.dedup();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (i, id) in ids.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    for f in &mut folds {
        f.sort();
    }
    Ok(folds)
}

/// Train/validation/test case ids for fold `i`: the fold itself is the test
/// split, the next fold is validation, the rest train.
pub fn fold_assignments(folds: &[Vec<String>], i: usize) -> (Vec<String>, Vec<String>, Vec<String>) {
    let k = folds.len();
    let test = folds[i].clone();
    let val = folds[(i + 1) % k].clone();
    let mut train = Vec::new();
    for (j, f) in folds.iter().enumerate() {
        if j != i && j != (i + 1) % k {
            train.extend(f.iter().cloned());
        }
    }
    (train, val, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_cases() {
        let ids: Vec<String> = (0..10).map(|i| format!("case{i:03}")).collect();
        let folds = split_folds(&ids, 3, 7).unwrap();
        assert_eq!(folds.len(), 3);
        let mut all: Vec<String> = folds.iter().flatten().cloned().collect();
        all.sort();
        let mut want = ids.clone();
        want.sort();
        assert_eq!(all, want);
        let sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn deterministic_and_order_independent() {
        let ids: Vec<String> = (0..9).map(|i| format!("c{i}")).collect();
        let a = split_folds(&ids, 3, 1).unwrap();
        let mut rev = ids.clone();
        rev.reverse();
        let b = split_folds(&rev, 3, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, split_folds(&ids, 3, 2).unwrap());
    }

    #[test]
    fn assignments_are_disjoint_and_cover() {
        let ids: Vec<String> = (0..12).map(|i| format!("c{i:02}")).collect();
        let folds = split_folds(&ids, 3, 3).unwrap();
        for i in 0..3 {
            let (train, val, test) = fold_assignments(&folds, i);
            let mut all: Vec<&String> = train.iter().chain(val.iter()).chain(test.iter()).collect();
            all.sort();
            all.dedup();
            assert_eq!(all.len(), 12);
        }
    }
}

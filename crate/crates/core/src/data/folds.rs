use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::DataError;
use crate::rng::KtRng;

/// Assignment of students to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold_count: usize,
    /// student index -> fold index in `[0, fold_count)`
    pub assignment: BTreeMap<usize, usize>,
}

impl FoldPlan {
    /// Students of fold `fold`, ascending.
    pub fn fold(&self, fold: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(&s, _)| s)
            .collect()
    }

    /// Students of every fold except `fold`, ascending.
    pub fn complement(&self, fold: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f != fold)
            .map(|(&s, _)| s)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.fold_count];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles students with `seed`, then deals them round-robin into `k`
/// folds, so fold sizes differ by at most one.
pub fn make_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    if k < 2 {
        return Err(DataError::Config(format!("fold count must be at least 2, got {k}")));
    }
    let mut students = dataset.students();
    if students.len() < k {
        return Err(DataError::Config(format!(
            "{} students cannot fill {k} folds",
            students.len()
        )));
    }
    students.sort_unstable();
    KtRng::new(seed).shuffle(&mut students);
    let assignment = students
        .into_iter()
        .enumerate()
        .map(|(pos, s)| (s, pos % k))
        .collect();
    Ok(FoldPlan {
        fold_count: k,
        assignment,
    })
}

/// Moves `ceil(fraction * N)` students into a validation set after a seeded
/// shuffle. Returns `(train, validation)`, each ascending.
pub fn split_validation(
    students: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::Config(format!(
            "validation fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n = students.len();
    // The epsilon keeps e.g. 0.1 * 100 from rounding up to 11.
    let n_val = (fraction * n as f64 - 1e-9).ceil().max(0.0) as usize;
    if n_val == 0 || n_val >= n {
        return Err(DataError::Config(format!(
            "validation fraction {fraction} of {n} students leaves an empty split"
        )));
    }
    let mut shuffled = students.to_vec();
    shuffled.sort_unstable();
    KtRng::new(seed).shuffle(&mut shuffled);
    let mut validation = shuffled[..n_val].to_vec();
    let mut train = shuffled[n_val..].to_vec();
    validation.sort_unstable();
    train.sort_unstable();
    Ok((train, validation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::toy_dataset;
    use proptest::prelude::*;

    #[test]
    fn even_division() {
        let ds = toy_dataset(&[3; 10], 3);
        let plan = make_folds(&ds, 5, 1).unwrap();
        assert_eq!(plan.fold_sizes(), vec![2; 5]);
    }

    #[test]
    fn remainder_rule() {
        let ds = toy_dataset(&[3; 11], 3);
        let plan = make_folds(&ds, 5, 1).unwrap();
        assert_eq!(plan.fold_sizes(), vec![3, 2, 2, 2, 2]);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let ds = toy_dataset(&[3; 40], 3);
        assert_eq!(make_folds(&ds, 5, 9).unwrap(), make_folds(&ds, 5, 9).unwrap());
        assert_ne!(make_folds(&ds, 5, 9).unwrap(), make_folds(&ds, 5, 10).unwrap());
    }

    #[test]
    fn too_few_students() {
        let ds = toy_dataset(&[3; 4], 3);
        assert!(matches!(make_folds(&ds, 5, 1), Err(DataError::Config(_))));
        assert!(make_folds(&ds, 1, 1).is_err());
    }

    #[test]
    fn validation_sizes() {
        let students: Vec<usize> = (0..100).collect();
        let (train, val) = split_validation(&students, 0.1, 3).unwrap();
        assert_eq!((train.len(), val.len()), (90, 10));
        let five: Vec<usize> = (0..5).collect();
        let (train, val) = split_validation(&five, 0.1, 3).unwrap();
        assert_eq!((train.len(), val.len()), (4, 1));
    }

    #[test]
    fn validation_rejects_degenerate() {
        assert!(split_validation(&[1], 0.1, 0).is_err());
        assert!(split_validation(&[1, 2, 3], 0.0, 0).is_err());
        assert!(split_validation(&[1, 2, 3], 1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_students(n in 5usize..60, k in 2usize..6, seed: u64) {
            prop_assume!(n >= k);
            let ds = toy_dataset(&vec![2; n], 2);
            let plan = make_folds(&ds, k, seed).unwrap();
            let mut all: Vec<usize> = (0..k).flat_map(|f| plan.fold(f)).collect();
            all.sort_unstable();
            prop_assert_eq!(all, ds.students());
            let sizes = plan.fold_sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn validation_split_is_disjoint(n in 2usize..80, seed: u64) {
            let students: Vec<usize> = (0..n).map(|s| s * 3).collect();
            let (train, val) = split_validation(&students, 0.1, seed).unwrap();
            prop_assert!(train.iter().all(|s| !val.contains(s)));
            let mut all = [train, val].concat();
            all.sort_unstable();
            prop_assert_eq!(all, students);
        }
    }
}

//! Deterministic stratified splitting: k-fold assignments, holdout
//! partitions, and validation carve-outs, all per-class shuffled by seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

fn class_indices(labels: &[usize], num_classes: usize) -> Result<Vec<Vec<usize>>> {
    let mut by_class = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::Validation(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        by_class[l].push(i);
    }
    Ok(by_class)
}

/// Stratified k-fold assignment: within each class the indices are shuffled
/// by seed and dealt round-robin to folds, so per-fold per-class counts
/// differ by at most one. Returns the fold id of every sample.
pub fn stratified_kfold(
    labels: &[usize],
    num_classes: usize,
    num_folds: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if num_folds < 2 {
        return Err(Error::Validation("need at least 2 folds".into()));
    }
    let by_class = class_indices(labels, num_classes)?;
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < num_folds {
            return Err(Error::Validation(format!(
                "class {c} has {} samples, fewer than {num_folds} folds",
                members.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; labels.len()];
    for mut members in by_class {
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            assignment[i] = j % num_folds;
        }
    }
    Ok(assignment)
}

/// Stratified holdout: per class, round(fraction * class size) samples go to
/// the test partition, clamped so both partitions keep at least one sample
/// of every class. Returns (train indices, test indices), each ascending.
pub fn stratified_holdout(
    labels: &[usize],
    num_classes: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction <= 0.0 {
        return Err(Error::Validation(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let by_class = class_indices(labels, num_classes)?;
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::Validation(format!(
                "class {c} has {} samples, need at least 2 for a holdout split",
                members.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut members in by_class {
        members.shuffle(&mut rng);
        let m = members.len();
        let want = (test_fraction * m as f64).round() as usize;
        let take = want.clamp(1, m - 1);
        test.extend_from_slice(&members[..take]);
        train.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Carve a stratified validation subset out of `pool` (indices into
/// `labels`). Per class, round(fraction * class size) samples are held out,
/// capped to leave at least one training sample per class; the total must
/// come out non-empty. Returns (train indices, validation indices).
pub fn stratified_validation_split(
    labels: &[usize],
    num_classes: usize,
    pool: &[usize],
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&val_fraction) || val_fraction <= 0.0 {
        return Err(Error::Validation(format!(
            "validation fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let mut by_class = vec![Vec::new(); num_classes];
    for &i in pool {
        let l = labels
            .get(i)
            .copied()
            .ok_or_else(|| Error::Validation(format!("pool index {i} out of range")))?;
        if l >= num_classes {
            return Err(Error::Validation(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for mut members in by_class {
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let m = members.len();
        let want = (val_fraction * m as f64).round() as usize;
        let take = want.min(m - 1);
        val.extend_from_slice(&members[..take]);
        train.extend_from_slice(&members[take..]);
    }
    if val.is_empty() {
        return Err(Error::Validation(
            "validation split came out empty; provide more samples per class".into(),
        ));
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fold_class_counts(
        assignment: &[usize],
        labels: &[usize],
        num_classes: usize,
        num_folds: usize,
    ) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0usize; num_classes]; num_folds];
        for (i, &f) in assignment.iter().enumerate() {
            counts[f][labels[i]] += 1;
        }
        counts
    }

    #[test]
    fn balanced_100_sample_case_is_exact() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let assignment = stratified_kfold(&labels, 2, 5, 42).unwrap();
        for fold in fold_class_counts(&assignment, &labels, 2, 5) {
            assert_eq!(fold, vec![10, 10]);
        }
    }

    #[test]
    fn unbalanced_52_48_is_within_one() {
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i >= 52)).collect();
        let assignment = stratified_kfold(&labels, 2, 5, 7).unwrap();
        for fold in fold_class_counts(&assignment, &labels, 2, 5) {
            // 52/5 and 48/5 round to {10, 11} and {9, 10}
            assert!(fold[0] == 10 || fold[0] == 11, "{fold:?}");
            assert!(fold[1] == 9 || fold[1] == 10, "{fold:?}");
        }
    }

    #[test]
    fn same_seed_reproduces_the_assignment() {
        let labels: Vec<usize> = (0..33).map(|i| i % 3).collect();
        let a = stratified_kfold(&labels, 3, 5, 9).unwrap();
        let b = stratified_kfold(&labels, 3, 5, 9).unwrap();
        assert_eq!(a, b);
        let c = stratified_kfold(&labels, 3, 5, 10).unwrap();
        assert_ne!(a, c); // overwhelmingly likely for 33 samples
    }

    #[test]
    fn small_class_is_named_in_the_error() {
        let labels = vec![0, 0, 0, 0, 0, 1, 1];
        let err = stratified_kfold(&labels, 2, 5, 1).unwrap_err();
        assert!(err.to_string().contains("class 1"), "{err}");
    }

    #[test]
    fn holdout_is_a_partition_with_both_classes() {
        let labels: Vec<usize> = (0..50).map(|i| i % 2).collect();
        let (train, test) = stratified_holdout(&labels, 2, 0.2, 3).unwrap();
        assert_eq!(train.len() + test.len(), 50);
        assert_eq!(test.len(), 10);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        for part in [&train, &test] {
            assert!(part.iter().any(|&i| labels[i] == 0));
            assert!(part.iter().any(|&i| labels[i] == 1));
        }
    }

    #[test]
    fn holdout_keeps_at_least_one_per_class_each_side() {
        // rounding would take 0 from a class of 2 at fraction 0.2
        let labels = vec![0, 0, 1, 1, 1, 1, 1, 1, 1, 1];
        let (train, test) = stratified_holdout(&labels, 2, 0.2, 1).unwrap();
        assert!(test.iter().any(|&i| labels[i] == 0));
        assert!(train.iter().any(|&i| labels[i] == 0));
    }

    #[test]
    fn validation_split_carves_from_the_pool_only() {
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let pool: Vec<usize> = (0..30).collect();
        let (train, val) = stratified_validation_split(&labels, 2, &pool, 0.1, 5).unwrap();
        assert_eq!(train.len() + val.len(), 30);
        assert!(val.iter().all(|i| pool.contains(i)));
        assert!(!val.is_empty());
        // 15 per class in the pool -> round(1.5) = 2 held out per class
        assert_eq!(val.len(), 4);
    }

    #[test]
    fn validation_split_errors_when_nothing_can_be_held_out() {
        let labels = vec![0, 1, 0, 1];
        let pool = vec![0, 1];
        // one sample per class: the cap leaves nothing for validation
        assert!(stratified_validation_split(&labels, 2, &pool, 0.1, 5).is_err());
    }

    proptest! {
        #[test]
        fn kfold_is_always_a_stratified_partition(
            seed in 0u64..100,
            class_sizes in proptest::collection::vec(5usize..40, 2..4),
        ) {
            let mut labels = Vec::new();
            for (c, &size) in class_sizes.iter().enumerate() {
                labels.extend(std::iter::repeat_n(c, size));
            }
            let k = 5;
            let assignment = stratified_kfold(&labels, class_sizes.len(), k, seed).unwrap();
            prop_assert_eq!(assignment.len(), labels.len());
            let counts = fold_class_counts(&assignment, &labels, class_sizes.len(), k);
            for c in 0..class_sizes.len() {
                let per_fold: Vec<usize> = counts.iter().map(|f| f[c]).collect();
                let lo = *per_fold.iter().min().unwrap();
                let hi = *per_fold.iter().max().unwrap();
                prop_assert!(hi - lo <= 1, "class {} counts {:?}", c, per_fold);
                prop_assert_eq!(per_fold.iter().sum::<usize>(), class_sizes[c]);
            }
        }
    }
}

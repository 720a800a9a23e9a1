use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Table, TableError, Target};

/// One train/validation pair of a k-fold partition.
#[derive(Clone, Debug)]
pub struct Fold {
    pub train: Table,
    pub valid: Table,
}

fn target_of(t: &Table) -> Result<&Target, TableError> {
    t.target().ok_or(TableError::NoTarget)
}

/// Row indices of each class, shuffled with `rng`.
fn shuffled_class_rows(target: &Target, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); target.n_classes()];
    for (row, &label) in target.labels().iter().enumerate() {
        by_class[label as usize].push(row);
    }
    for rows in &mut by_class {
        rows.shuffle(rng);
    }
    by_class
}

fn check_class_sizes(target: &Target, needed: usize) -> Result<(), TableError> {
    for (class, count) in target.class_counts().into_iter().enumerate() {
        if count > 0 && count < needed {
            return Err(TableError::ClassTooSmall {
                class: target.classes()[class].clone(),
                count,
                needed,
            });
        }
    }
    Ok(())
}

/// Stratified train/test split. The test set holds
/// `floor(n * (1 - ratio))` rows, distributed over classes by largest
/// remainder (ties to the lower class index).
pub fn split_train_test(t: &Table, ratio: f64, seed: u64) -> Result<(Table, Table), TableError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(TableError::InvalidRatio(ratio));
    }
    let target = target_of(t)?;
    check_class_sizes(target, 2)?;
    let n = t.n_rows();
    let n_test = ((n as f64) * (1.0 - ratio) + 1e-9).floor() as usize;

    let counts = target.class_counts();
    let mut quota: Vec<usize> = Vec::with_capacity(counts.len());
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(counts.len());
    for (class, &count) in counts.iter().enumerate() {
        let exact = count as f64 * n_test as f64 / n as f64;
        let floor = (exact + 1e-9).floor() as usize;
        quota.push(floor.min(count));
        remainders.push((exact - floor as f64, class));
    }
    let mut missing = n_test - quota.iter().sum::<usize>();
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, class) in remainders.iter().cycle() {
        if missing == 0 {
            break;
        }
        if quota[class] < counts[class] {
            quota[class] += 1;
            missing -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let by_class = shuffled_class_rows(target, &mut rng);
    let mut train_rows = Vec::with_capacity(n - n_test);
    let mut test_rows = Vec::with_capacity(n_test);
    for (class, rows) in by_class.iter().enumerate() {
        test_rows.extend_from_slice(&rows[..quota[class]]);
        train_rows.extend_from_slice(&rows[quota[class]..]);
    }
    train_rows.sort_unstable();
    test_rows.sort_unstable();
    Ok((t.take_rows(&train_rows), t.take_rows(&test_rows)))
}

/// Validation row indices of each stratified fold. Rows are grouped by
/// class, shuffled within class, and dealt round-robin, so fold sizes
/// differ by at most one and earlier folds receive the extra rows.
pub fn kfold_indices(target: &Target, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, TableError> {
    if k < 2 {
        return Err(TableError::InvalidFoldCount(k));
    }
    check_class_sizes(target, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let by_class = shuffled_class_rows(target, &mut rng);
    let mut folds = vec![Vec::new(); k];
    for (pos, row) in by_class.into_iter().flatten().enumerate() {
        folds[pos % k].push(row);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

pub fn kfold_split(t: &Table, k: usize, seed: u64) -> Result<Vec<Fold>, TableError> {
    let target = target_of(t)?;
    let valid_sets = kfold_indices(target, k, seed)?;
    let mut in_valid = vec![usize::MAX; t.n_rows()];
    for (fold, rows) in valid_sets.iter().enumerate() {
        for &r in rows {
            in_valid[r] = fold;
        }
    }
    Ok(valid_sets
        .iter()
        .enumerate()
        .map(|(fold, valid_rows)| {
            let train_rows: Vec<usize> = (0..t.n_rows()).filter(|&r| in_valid[r] != fold).collect();
            Fold {
                train: t.take_rows(&train_rows),
                valid: t.take_rows(valid_rows),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{Column, Lineage};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn table_with_labels(labels: Vec<u32>, n_classes: usize) -> Table {
        let n = labels.len();
        let classes = Arc::new((0..n_classes).map(|c| format!("c{c}")).collect());
        let x = Column::numeric("row", Lineage::raw("row"), (0..n).map(|i| i as f64).collect());
        Table::from_columns(vec![x], n, Some(Target::new("y", classes, labels))).unwrap()
    }

    fn row_ids(t: &Table) -> Vec<usize> {
        t.column(0).as_numeric().unwrap().iter().map(|v| *v as usize).collect()
    }

    #[test]
    fn hundred_rows_split_eighty_twenty() {
        let labels = (0..100).map(|i| (i % 3 == 0) as u32).collect();
        let t = table_with_labels(labels, 2);
        let (train, test) = split_train_test(&t, 0.8, 7).unwrap();
        assert_eq!((train.n_rows(), test.n_rows()), (80, 20));
    }

    #[test]
    fn balanced_binary_split_is_forty_ten_per_class() {
        // 50 rows of each class; ratio 0.8 puts floor(50 * 0.2) = 10 of each in test.
        let labels = (0..100).map(|i| (i % 2) as u32).collect();
        let t = table_with_labels(labels, 2);
        let (train, test) = split_train_test(&t, 0.8, 3).unwrap();
        assert_eq!(train.target().unwrap().class_counts(), vec![40, 40]);
        assert_eq!(test.target().unwrap().class_counts(), vec![10, 10]);
    }

    #[test]
    fn split_is_deterministic() {
        let labels = (0..57).map(|i| (i % 3) as u32).collect();
        let t = table_with_labels(labels, 3);
        let a = split_train_test(&t, 0.8, 11).unwrap();
        let b = split_train_test(&t, 0.8, 11).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = split_train_test(&t, 0.8, 12).unwrap();
        assert_ne!(row_ids(&a.1), row_ids(&c.1));
    }

    #[test]
    fn singleton_class_cannot_be_stratified() {
        let t = table_with_labels(vec![0, 0, 0, 1], 2);
        assert!(matches!(
            split_train_test(&t, 0.8, 0),
            Err(TableError::ClassTooSmall { .. })
        ));
        assert!(matches!(
            split_train_test(&t, 1.0, 0),
            Err(TableError::InvalidRatio(_))
        ));
    }

    #[test]
    fn ninety_rows_three_folds_of_thirty() {
        let t = table_with_labels((0..90).map(|i| (i % 2) as u32).collect(), 2);
        let folds = kfold_split(&t, 3, 1).unwrap();
        let sizes: Vec<usize> = folds.iter().map(|f| f.valid.n_rows()).collect();
        assert_eq!(sizes, vec![30, 30, 30]);
        for f in &folds {
            assert_eq!(f.train.n_rows(), 60);
        }
    }

    #[test]
    fn ninety_one_rows_give_extra_row_to_first_fold() {
        let t = table_with_labels((0..91).map(|i| (i % 2) as u32).collect(), 2);
        let folds = kfold_split(&t, 3, 1).unwrap();
        let sizes: Vec<usize> = folds.iter().map(|f| f.valid.n_rows()).collect();
        assert_eq!(sizes, vec![31, 30, 30]);
    }

    #[test]
    fn class_smaller_than_k_is_rejected() {
        let t = table_with_labels(vec![0, 0, 0, 0, 1, 1], 2);
        assert!(matches!(
            kfold_split(&t, 3, 0),
            Err(TableError::ClassTooSmall { .. })
        ));
        assert!(matches!(
            kfold_split(&t, 1, 0),
            Err(TableError::InvalidFoldCount(1))
        ));
    }

    proptest! {
        #[test]
        fn validation_folds_partition_rows(
            labels in prop::collection::vec(0u32..3, 12..200),
            k in 2usize..5,
            seed in any::<u64>(),
        ) {
            let t = table_with_labels(labels, 3);
            prop_assume!(t.target().unwrap().class_counts().iter().all(|&c| c == 0 || c >= k));
            let folds = kfold_split(&t, k, seed).unwrap();
            let mut seen = vec![0usize; t.n_rows()];
            for f in &folds {
                for r in row_ids(&f.valid) { seen[r] += 1; }
                prop_assert_eq!(f.train.n_rows() + f.valid.n_rows(), t.n_rows());
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let sizes: Vec<usize> = folds.iter().map(|f| f.valid.n_rows()).collect();
            prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1] && w[0] - w[1] <= 1));
        }

        #[test]
        fn split_keeps_class_proportions(
            labels in prop::collection::vec(0u32..3, 10..200),
            ratio in 0.5f64..0.95,
            seed in any::<u64>(),
        ) {
            let t = table_with_labels(labels, 3);
            let counts = t.target().unwrap().class_counts();
            prop_assume!(counts.iter().all(|&c| c == 0 || c >= 2));
            let (train, test) = split_train_test(&t, ratio, seed).unwrap();
            let n = t.n_rows() as f64;
            let n_test = test.n_rows() as f64;
            prop_assert_eq!(test.n_rows(), (n * (1.0 - ratio) + 1e-9).floor() as usize);
            prop_assert_eq!(train.n_rows() + test.n_rows(), t.n_rows());
            let test_counts = test.target().unwrap().class_counts();
            for (c, &tc) in counts.iter().zip(&test_counts) {
                let expected = *c as f64 * n_test / n;
                prop_assert!((tc as f64 - expected).abs() <= 1.0);
            }
            let mut ids: Vec<usize> = row_ids(&train);
            ids.extend(row_ids(&test));
            ids.sort_unstable();
            prop_assert_eq!(ids, (0..t.n_rows()).collect::<Vec<_>>());
        }
    }
}

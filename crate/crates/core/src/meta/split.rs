use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::MetaError;

/// Sample indices grouped by label, each group shuffled under `seed`.
fn shuffled_groups(labels: &[usize], seed: u64) -> BTreeMap<usize, Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        groups.entry(c).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for idx in groups.values_mut() {
        idx.shuffle(&mut rng);
    }
    groups
}

/// Splits indices into (train, test), class by class. Each class contributes
/// `round(n_c * train_fraction)` samples to train, clamped so both sides get
/// at least one. Both index lists are sorted.
pub fn stratified_split(
    labels: &[usize],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), MetaError> {
    if labels.is_empty() {
        return Err(MetaError::EmptyInput);
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(MetaError::InvalidArgument(format!(
            "train_fraction {train_fraction} outside (0, 1)"
        )));
    }
    let groups = shuffled_groups(labels, seed);
    if let Some((&class, idx)) = groups.iter().find(|(_, idx)| idx.len() < 2) {
        return Err(MetaError::TooFewPerClass {
            class,
            count: idx.len(),
            needed: 2,
        });
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for idx in groups.values() {
        let n = idx.len();
        let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Partitions indices into `k` folds (returned as sorted test-index lists).
///
/// Each class is dealt round-robin, continuing from where the previous class
/// stopped, so per-class counts differ by at most one between folds and fold
/// sizes stay balanced. Classes smaller than `k` are logged.
pub fn stratified_kfold(
    labels: &[usize],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, MetaError> {
    if k < 2 || labels.len() < k {
        return Err(MetaError::InvalidArgument(format!(
            "cannot make {k} folds from {} samples",
            labels.len()
        )));
    }
    let groups = shuffled_groups(labels, seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for (class, idx) in &groups {
        if idx.len() < k {
            log::warn!(
                "class {class} has {} samples, fewer than {k} folds",
                idx.len()
            );
        }
        for &i in idx {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(counts: &[usize]) -> Vec<usize> {
        counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect()
    }

    fn count(idx: &[usize], y: &[usize], class: usize) -> usize {
        idx.iter().filter(|&&i| y[i] == class).count()
    }

    #[test]
    fn eighty_twenty() {
        let y = labels(&[80, 20]);
        let (train, test) = stratified_split(&y, 0.8, 1).unwrap();
        assert_eq!((count(&train, &y, 0), count(&train, &y, 1)), (64, 16));
        assert_eq!((count(&test, &y, 0), count(&test, &y, 1)), (16, 4));
        assert_eq!(stratified_split(&y, 0.8, 1).unwrap(), (train, test));
    }

    #[test]
    fn seeds_change_the_split() {
        let y = labels(&[50, 50]);
        assert_ne!(
            stratified_split(&y, 0.8, 1).unwrap(),
            stratified_split(&y, 0.8, 2).unwrap()
        );
    }

    #[test]
    fn singleton_class_is_rejected() {
        let y = labels(&[10, 1]);
        assert!(matches!(
            stratified_split(&y, 0.8, 0),
            Err(MetaError::TooFewPerClass {
                class: 1,
                count: 1,
                ..
            })
        ));
    }

    #[test]
    fn balanced_folds() {
        let y = labels(&[25, 25]);
        let folds = stratified_kfold(&y, 5, 9).unwrap();
        for f in &folds {
            assert_eq!((count(f, &y, 0), count(f, &y, 1)), (5, 5));
        }
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn small_classes_still_partition() {
        let y = labels(&[12, 3, 1]);
        let folds = stratified_kfold(&y, 5, 0).unwrap();
        assert_eq!(folds.iter().map(Vec::len).sum::<usize>(), 16);
        assert!(folds.iter().all(|f| f.len() >= 3));
        assert!(stratified_kfold(&y, 1, 0).is_err());
        assert!(stratified_kfold(&y[..3], 5, 0).is_err());
    }
}

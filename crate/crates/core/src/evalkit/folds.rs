use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

/// Assignment of every instance to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignments: BTreeMap<String, usize>,
}

/// Stratified `k`-fold assignment of `(id, class)` pairs.
///
/// Within each class (ascending class order) the ids are shuffled with a
/// ChaCha8 stream seeded by `seed`, then dealt round-robin. The dealing
/// offset carries over between classes so fold sizes stay balanced overall.
/// Each fold receives ⌊n_c/k⌋ or ⌈n_c/k⌉ instances of every class `c`.
pub fn make_folds<S: AsRef<str>>(instances: &[(S, usize)], k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidFoldCount(k));
    }
    let mut by_class: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for (id, class) in instances {
        let id = id.as_ref();
        if !seen.insert(id) {
            return Err(EvalError::DuplicateInstance(id.to_string()));
        }
        by_class.entry(*class).or_default().push(id);
    }
    if let Some((&class, ids)) = by_class.iter().find(|(_, ids)| ids.len() < k) {
        return Err(EvalError::ClassTooSmall {
            class,
            count: ids.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = BTreeMap::new();
    let mut offset = 0usize;
    for ids in by_class.values_mut() {
        ids.shuffle(&mut rng);
        for (p, id) in ids.iter().enumerate() {
            assignments.insert(id.to_string(), (offset + p) % k);
        }
        offset = (offset + ids.len()) % k;
    }
    Ok(FoldPlan { k, seed, assignments })
}

impl FoldPlan {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignments.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Splits `items` into (train, test) for `fold`, keeping input order.
    /// Items whose id is not in the plan go to neither side.
    pub fn split<'a, T>(&self, fold: usize, items: &'a [T], id: impl Fn(&T) -> &str) -> (Vec<&'a T>, Vec<&'a T>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for item in items {
            match self.fold_of(id(item)) {
                Some(f) if f == fold => test.push(item),
                Some(_) => train.push(item),
                None => {}
            }
        }
        (train, test)
    }

    /// Ids in `fold`, in id order.
    pub fn members(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn instances(counts: &[usize]) -> Vec<(String, usize)> {
        counts
            .iter()
            .enumerate()
            .flat_map(|(class, &n)| (0..n).map(move |i| (format!("c{class}-{i}"), class)))
            .collect()
    }

    fn per_fold_class_counts(plan: &FoldPlan, items: &[(String, usize)], classes: usize) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0; classes]; plan.k];
        for (id, class) in items {
            counts[plan.fold_of(id).unwrap()][*class] += 1;
        }
        counts
    }

    #[test]
    fn balanced_two_classes() {
        let items = instances(&[50, 50]);
        let plan = make_folds(&items, 5, 7).unwrap();
        for fold in per_fold_class_counts(&plan, &items, 2) {
            assert_eq!(fold, vec![10, 10]);
        }
    }

    #[test]
    fn eleven_of_one_class() {
        let items = instances(&[11]);
        let plan = make_folds(&items, 5, 1).unwrap();
        let sizes: Vec<usize> = per_fold_class_counts(&plan, &items, 1).iter().map(|f| f[0]).collect();
        assert!(sizes.iter().all(|&s| s == 2 || s == 3));
        assert_eq!(sizes.iter().sum::<usize>(), 11);
    }

    #[test]
    fn small_classes_rejected() {
        let items = instances(&[10, 3]);
        assert_eq!(
            make_folds(&items, 5, 0),
            Err(EvalError::ClassTooSmall { class: 1, count: 3 })
        );
        assert_eq!(make_folds(&items, 1, 0), Err(EvalError::InvalidFoldCount(1)));
        let dup = vec![("a", 0), ("a", 0)];
        assert!(matches!(make_folds(&dup, 2, 0), Err(EvalError::DuplicateInstance(_))));
    }

    #[test]
    fn seeded_determinism() {
        let items = instances(&[23, 17, 9]);
        assert_eq!(make_folds(&items, 5, 42).unwrap(), make_folds(&items, 5, 42).unwrap());
        assert_ne!(make_folds(&items, 5, 42).unwrap(), make_folds(&items, 5, 43).unwrap());
    }

    #[test]
    fn split_keeps_order() {
        let items = instances(&[5, 5]);
        let plan = make_folds(&items, 5, 3).unwrap();
        let (train, test) = plan.split(0, &items, |(id, _)| id.as_str());
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);
        let pos = |x: &(String, usize)| items.iter().position(|y| y == x).unwrap();
        assert!(train.windows(2).all(|w| pos(w[0]) < pos(w[1])));
        assert_eq!(plan.members(0).len(), 2);
    }

    proptest! {
        #[test]
        fn partition_and_stratification(counts in proptest::collection::vec(5usize..40, 1..5), k in 2usize..6, seed in any::<u64>()) {
            let items = instances(&counts);
            let plan = make_folds(&items, k, seed).unwrap();
            prop_assert_eq!(plan.len(), items.len());
            let mut union: Vec<&str> = (0..k).flat_map(|f| plan.members(f)).collect();
            union.sort_unstable();
            union.dedup();
            prop_assert_eq!(union.len(), items.len());
            for fold in per_fold_class_counts(&plan, &items, counts.len()) {
                for (class, &n) in counts.iter().enumerate() {
                    prop_assert!(fold[class] == n / k || fold[class] == n.div_ceil(k));
                }
            }
            let totals: Vec<usize> = per_fold_class_counts(&plan, &items, counts.len())
                .iter().map(|f| f.iter().sum()).collect();
            let (lo, hi) = (totals.iter().min().unwrap(), totals.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }
    }
}

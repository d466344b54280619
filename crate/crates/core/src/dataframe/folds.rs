use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Assignment of `n` rows to `k` validation blocks (ids `0..k`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub seed: u64,
    pub stratified: bool,
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.assignment {
            s[f] += 1;
        }
        s
    }

    /// Order-sensitive FNV-1a digest of the assignment, used to show that
    /// several models shared the same folds.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &f in &self.assignment {
            for b in (f as u64).to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("{k} folds requested for {n} rows")));
    }
    Ok(())
}

/// Uniformly random balanced partition of `0..n` into `k` folds.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    check_k(n, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut assignment = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = pos % k;
    }
    Ok(FoldPlan { k, assignment, seed, stratified: false })
}

/// Balanced partition in which each class is spread evenly over the folds.
/// Classes are dealt in turn with a running offset, so overall fold sizes
/// still differ by at most one.
pub fn make_stratified_folds(labels: &[f64], k: usize, seed: u64) -> Result<FoldPlan> {
    let n = labels.len();
    check_k(n, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        classes.entry(l.to_bits()).or_default().push(i);
    }
    let mut assignment = vec![0; n];
    let mut pos = 0;
    for rows in classes.values_mut() {
        rows.shuffle(&mut rng);
        for &row in rows.iter() {
            assignment[row] = pos % k;
            pos += 1;
        }
    }
    Ok(FoldPlan { k, assignment, seed, stratified: true })
}

/// Rows drawn with replacement and the rows never drawn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapSample {
    pub in_bag: Vec<usize>,
    pub out_of_bag: Vec<usize>,
    pub seed: u64,
}

impl BootstrapSample {
    pub fn oob_fraction(&self) -> f64 {
        self.out_of_bag.len() as f64 / self.in_bag.len() as f64
    }
}

pub fn bootstrap(n: usize, seed: u64) -> BootstrapSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    bootstrap_with(n, &mut rng, seed)
}

pub(crate) fn bootstrap_with<R: Rng>(n: usize, rng: &mut R, seed: u64) -> BootstrapSample {
    let mut seen = vec![false; n];
    let in_bag: Vec<usize> = (0..n)
        .map(|_| {
            let i = rng.random_range(0..n);
            seen[i] = true;
            i
        })
        .collect();
    let out_of_bag = (0..n).filter(|&i| !seen[i]).collect();
    BootstrapSample { in_bag, out_of_bag, seed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn leave_one_out_when_k_equals_n() {
        let plan = make_folds(10, 10, 3).unwrap();
        assert!(plan.sizes().iter().all(|&s| s == 1));
    }

    #[test]
    fn boston_sized_folds() {
        let mut sizes = make_folds(506, 10, 1).unwrap().sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![50, 50, 50, 50, 51, 51, 51, 51, 51, 51]);
    }

    #[test]
    fn deterministic_under_seed() {
        assert_eq!(make_folds(100, 7, 9).unwrap(), make_folds(100, 7, 9).unwrap());
        assert_ne!(make_folds(100, 7, 9).unwrap(), make_folds(100, 7, 10).unwrap());
        assert_eq!(bootstrap(50, 4), bootstrap(50, 4));
    }

    #[test]
    fn too_many_folds() {
        assert!(make_folds(3, 4, 0).is_err());
        assert!(make_folds(3, 1, 0).is_err());
    }

    #[test]
    fn single_row_bootstrap() {
        let b = bootstrap(1, 0);
        assert_eq!(b.in_bag, vec![0]);
        assert!(b.out_of_bag.is_empty());
    }

    #[test]
    fn stratified_balances_classes() {
        let labels: Vec<f64> = (0..100).map(|i| f64::from(u8::from(i % 10 == 0))).collect();
        let plan = make_stratified_folds(&labels, 10, 5).unwrap();
        for f in 0..10 {
            let pos = plan.test_rows(f).iter().filter(|&&i| labels[i] == 1.0).count();
            assert_eq!(pos, 1);
        }
        let sizes = plan.sizes();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn oob_fraction_near_inverse_e() {
        let mean: f64 = (0..200).map(|s| bootstrap(10_000, s).oob_fraction()).sum::<f64>() / 200.0;
        assert!((mean - 0.367).abs() < 0.01, "{mean}");
    }

    proptest! {
        #[test]
        fn folds_partition_rows(n in 2usize..300, k in 2usize..20, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let plan = make_folds(n, k, seed).unwrap();
            let sizes = plan.sizes();
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn oob_is_complement(n in 1usize..200, seed in any::<u64>()) {
            let b = bootstrap(n, seed);
            prop_assert_eq!(b.in_bag.len(), n);
            for i in 0..n {
                prop_assert_eq!(b.in_bag.contains(&i), !b.out_of_bag.contains(&i));
            }
        }
    }
}

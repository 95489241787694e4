use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Independent child seed for work item `index` under `root`.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = root.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold id per item. Each class is shuffled with its own seeded stream and
/// dealt round-robin, so every fold receives every class.
pub fn stratified_folds(labels: &[u8], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {folds}")));
    }
    let mut assignment = vec![usize::MAX; labels.len()];
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < folds {
            return Err(Error::Stratification(format!(
                "class {class} has {} members, fewer than {folds} folds",
                members.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::from(class)));
        members.shuffle(&mut rng);
        for (pos, &i) in members.iter().enumerate() {
            assignment[i] = pos % folds;
        }
    }
    if assignment.contains(&usize::MAX) {
        return Err(Error::InvalidParameter("labels must be 0 or 1".into()));
    }
    Ok(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_fold_gets_both_classes() {
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i % 7 == 0)).collect();
        let folds = stratified_folds(&labels, 5, 3).unwrap();
        for f in 0..5 {
            let in_fold: Vec<u8> = (0..40).filter(|&i| folds[i] == f).map(|i| labels[i]).collect();
            assert!(in_fold.contains(&0) && in_fold.contains(&1));
        }
        assert_eq!(folds, stratified_folds(&labels, 5, 3).unwrap());
    }

    #[test]
    fn too_few_members() {
        assert!(matches!(stratified_folds(&[0, 0, 0, 1], 2, 0), Err(Error::Stratification(_))));
        assert!(stratified_folds(&[0, 1], 1, 0).is_err());
    }
}

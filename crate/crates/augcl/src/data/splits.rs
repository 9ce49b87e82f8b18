//! Stratified k-fold index splitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use std::collections::BTreeMap;

use crate::seed::{derive, tag};

use super::{DataError, Result};

/// Split `0..labels.len()` into `k` disjoint folds.
///
/// Each class is shuffled and dealt out so its per-fold counts differ by at
/// most one; larger per-class chunks go to the currently smallest folds, which
/// keeps overall fold sizes within one of each other as well.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > labels.len() {
        return Err(DataError::BadFoldCount {
            k,
            n: labels.len(),
        });
    }

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        by_class.entry(label).or_default().push(i);
    }

    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (&label, indices) in by_class.iter_mut() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[tag("folds"), label as u64]));
        indices.shuffle(&mut rng);

        let q = indices.len() / k;
        let r = indices.len() % k;
        // chunk sizes q+1 × r then q × (k-r): descending by construction
        let mut chunks = Vec::with_capacity(k);
        let mut start = 0;
        for j in 0..k {
            let size = if j < r { q + 1 } else { q };
            chunks.push(&indices[start..start + size]);
            start += size;
        }

        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&f| (folds[f].len(), f));
        for (chunk, &fold) in chunks.iter().zip(&order) {
            folds[fold].extend_from_slice(chunk);
        }
    }

    for fold in folds.iter_mut() {
        fold.sort_unstable();
    }
    Ok(folds)
}

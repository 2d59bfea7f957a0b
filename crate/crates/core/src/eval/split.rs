//! Stratified hold-out split and stratified K-fold plans.

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitPlan {
    /// Sorted row indices.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits rows so each class contributes `round(n_c × fraction)` test rows,
/// corrected by largest remainder so the test total is `round(n × fraction)`.
///
/// Remainder ties go to class 0 first. Both classes need at least two rows.
pub fn stratified_split(labels: &[u8], test_fraction: f64, seed: u64) -> Result<SplitPlan> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidInput(format!(
            "test fraction must lie in [0, 1), got {test_fraction}"
        )));
    }
    let mut classes: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        classes[l as usize].push(i);
    }
    if classes.iter().any(|c| c.len() < 2) {
        return Err(Error::InvalidInput(format!(
            "class too small to stratify ({} negatives, {} positives)",
            classes[0].len(),
            classes[1].len()
        )));
    }

    let exact: Vec<f64> = classes.iter().map(|c| c.len() as f64 * test_fraction).collect();
    let mut counts: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let target = (labels.len() as f64 * test_fraction).round() as usize;
    let mut by_remainder = [0usize, 1];
    // Stable sort keeps class 0 ahead on equal remainders.
    by_remainder.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.total_cmp(&ra)
    });
    let mut short = target.saturating_sub(counts.iter().sum());
    for &c in by_remainder.iter().cycle().take(4) {
        if short == 0 {
            break;
        }
        if counts[c] < classes[c].len() {
            counts[c] += 1;
            short -= 1;
        }
    }

    let mut rng = stream_rng(seed, 0);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (members, &k) in classes.iter_mut().zip(&counts) {
        members.shuffle(&mut rng);
        test.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan { train, test })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    /// Sorted validation indices per fold.
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Every index outside fold `fold`, sorted.
    pub fn training_indices(&self, fold: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(f, _)| f != fold)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

/// Partitions `indices` into `k` folds: positives are dealt round-robin
/// after a seeded shuffle, negatives continue from where positives stopped.
///
/// `labels` is indexed by the values in `indices`. A class with fewer than
/// `k` members simply leaves some folds without it.
pub fn stratified_kfold(indices: &[usize], labels: &[u8], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("K must be at least 2, got {k}")));
    }
    if k > indices.len() {
        return Err(Error::InvalidInput(format!(
            "K = {k} exceeds the {} available rows",
            indices.len()
        )));
    }
    let mut rng = stream_rng(seed, 0);
    let mut folds = vec![Vec::new(); k];
    let mut slot = 0;
    for class in [1u8, 0] {
        let mut members: Vec<usize> = indices.iter().copied().filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[slot % k].push(i);
            slot += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(FoldPlan { folds })
}

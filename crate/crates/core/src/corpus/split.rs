//! Stratified, seeded partitioning: k-fold plans, holdout splits and
//! row-limited subsampling.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Label, LabeledExample};
use crate::error::{Error, Result};

/// Indices of `examples` grouped by label, in label order.
fn by_label(examples: &[&LabeledExample]) -> BTreeMap<Label, Vec<usize>> {
    let mut groups: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, e) in examples.iter().enumerate() {
        groups.entry(e.label).or_default().push(i);
    }
    groups
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignments: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignments.get(id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// (training rows, validation rows) for one fold, preserving input order.
    pub fn split<'a>(
        &self,
        examples: &[&'a LabeledExample],
        fold: usize,
    ) -> (Vec<&'a LabeledExample>, Vec<&'a LabeledExample>) {
        examples
            .iter()
            .partition(|e| self.fold_of(&e.id) != Some(fold))
    }
}

/// Stratified k-fold assignment. Each label group is shuffled and dealt
/// round-robin, with the dealing position carried across groups so both
/// per-label and total fold sizes differ by at most one.
pub fn make_cv_folds(examples: &[&LabeledExample], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    if examples.is_empty() {
        return Err(Error::Empty("fold input"));
    }
    let groups = by_label(examples);
    if let Some((label, members)) = groups.iter().find(|(_, m)| m.len() < k) {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {} examples of class {label}",
            members.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = BTreeMap::new();
    let mut position = 0usize;
    for mut members in groups.into_values() {
        members.shuffle(&mut rng);
        for i in members {
            assignments.insert(examples[i].id.clone(), position % k);
            position += 1;
        }
    }
    Ok(FoldPlan { k, seed, assignments })
}

/// Stratified train/validation split. Each class contributes
/// `round(n_c * train_fraction)` rows to training, clamped so that a class
/// with at least two rows lands on both sides.
pub fn holdout_split<'a>(
    examples: &[&'a LabeledExample],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<&'a LabeledExample>, Vec<&'a LabeledExample>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; examples.len()];
    for mut members in by_label(examples).into_values() {
        members.shuffle(&mut rng);
        let n = members.len();
        let mut n_train = (n as f64 * train_fraction).round() as usize;
        if n >= 2 {
            n_train = n_train.clamp(1, n - 1);
        }
        for &i in &members[..n_train.min(n)] {
            in_train[i] = true;
        }
    }
    let (train, validation): (Vec<_>, Vec<_>) = examples
        .iter()
        .zip(&in_train)
        .partition(|(_, &t)| t);
    Ok((
        train.into_iter().map(|(e, _)| *e).collect(),
        validation.into_iter().map(|(e, _)| *e).collect(),
    ))
}

/// Integer quotas proportional to `counts` summing to `total`
/// (largest-remainder; ties go to the earlier class).
pub(crate) fn proportional_quotas(counts: &[usize], total: usize) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return vec![0; counts.len()];
    }
    let total = total.min(n);
    let mut quotas: Vec<usize> = counts.iter().map(|&c| c * total / n).collect();
    let mut rest: Vec<(usize, usize)> = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (i, (c * total) % n))
        .collect();
    rest.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut missing = total - quotas.iter().sum::<usize>();
    for (i, _) in rest {
        if missing == 0 {
            break;
        }
        if quotas[i] < counts[i] {
            quotas[i] += 1;
            missing -= 1;
        }
    }
    quotas
}

/// Keeps at most `max_rows` rows using one reservoir per label, sized by
/// proportional quotas. Surviving rows keep their original order.
pub fn stratified_subsample(
    examples: Vec<LabeledExample>,
    max_rows: usize,
    seed: u64,
) -> Vec<LabeledExample> {
    if examples.len() <= max_rows {
        return examples;
    }
    let refs: Vec<&LabeledExample> = examples.iter().collect();
    let groups = by_label(&refs);
    let labels: Vec<Label> = groups.keys().copied().collect();
    let counts: Vec<usize> = groups.values().map(Vec::len).collect();
    let quotas = proportional_quotas(&counts, max_rows);
    let slot: BTreeMap<Label, usize> = labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reservoirs: Vec<Vec<usize>> = quotas.iter().map(|&q| Vec::with_capacity(q)).collect();
    let mut seen = vec![0usize; labels.len()];
    for (i, e) in examples.iter().enumerate() {
        let s = slot[&e.label];
        seen[s] += 1;
        let quota = quotas[s];
        if reservoirs[s].len() < quota {
            reservoirs[s].push(i);
        } else if quota > 0 {
            let j = rng.random_range(0..seen[s]);
            if j < quota {
                reservoirs[s][j] = i;
            }
        }
    }
    let mut keep = vec![false; examples.len()];
    for i in reservoirs.into_iter().flatten() {
        keep[i] = true;
    }
    examples
        .into_iter()
        .zip(keep)
        .filter_map(|(e, k)| k.then_some(e))
        .collect()
}

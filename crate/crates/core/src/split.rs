//! Deterministic data splitting: the diverse holdout used for imputer
//! evaluation and grid search, and item-level k-folds for downstream
//! training.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::AnnotationMatrix;

/// A train matrix plus the withheld cells it was carved from.
#[derive(Debug, Clone)]
pub struct HoldoutSplit {
    pub train: AnnotationMatrix,
    pub heldout_cells: Vec<(usize, usize, i32)>,
    pub seed: u64,
}

/// Item-to-fold assignment for k-fold validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of_item: Vec<usize>,
}

impl FoldAssignment {
    pub fn items_in_fold(&self, fold: usize) -> Vec<usize> {
        self.fold_of_item
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Withholds `round(fraction * n_cells)` cells while spreading the selection
/// across items and annotators.
///
/// Cells are visited in a seeded random order. A cell is accepted only while
/// its item and annotator each appear in the holdout fewer times than a cap
/// (`ceil(target / distinct items)` and `ceil(target / distinct annotators)`
/// on the first pass). If a pass over all cells leaves the holdout short,
/// both caps relax by one and the pass repeats. A cell whose removal would
/// empty its row is never taken.
pub fn make_holdout(
    matrix: &AnnotationMatrix,
    fraction: f64,
    seed: u64,
) -> Result<HoldoutSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction must be in (0, 1), got {fraction}"
        )));
    }
    let total = matrix.n_cells();
    let target = (fraction * total as f64).round() as usize;

    let mut order: Vec<(usize, usize, i32)> = matrix.cells().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut row_remaining = vec![0usize; matrix.n_items()];
    let mut annotators_seen = vec![false; matrix.n_annotators()];
    for (i, j, _) in matrix.cells() {
        row_remaining[i] += 1;
        annotators_seen[j] = true;
    }
    let distinct_items = matrix.n_items().max(1);
    let distinct_annotators = annotators_seen.iter().filter(|&&s| s).count().max(1);

    let mut item_cap = div_ceil(target, distinct_items).max(1);
    let mut annot_cap = div_ceil(target, distinct_annotators).max(1);
    let mut item_taken = vec![0usize; matrix.n_items()];
    let mut annot_taken = vec![0usize; matrix.n_annotators()];
    let mut held = BTreeMap::new();

    while held.len() < target {
        let before = held.len();
        for &(i, j, label) in &order {
            if held.len() >= target {
                break;
            }
            if held.contains_key(&(i, j)) {
                continue;
            }
            if item_taken[i] >= item_cap || annot_taken[j] >= annot_cap {
                continue;
            }
            if row_remaining[i] <= 1 {
                continue;
            }
            held.insert((i, j), label);
            item_taken[i] += 1;
            annot_taken[j] += 1;
            row_remaining[i] -= 1;
        }
        if held.len() == before {
            // Caps at or above the target can no longer bind, so the only
            // remaining rejections are row-emptying ones: infeasible.
            if item_cap >= target && annot_cap >= target {
                return Err(Error::InfeasibleHoldout {
                    fraction,
                    reason: format!(
                        "only {} of {} cells can be withheld without emptying a row",
                        held.len(),
                        target
                    ),
                });
            }
            item_cap += 1;
            annot_cap += 1;
        }
    }

    let heldout_cells: Vec<(usize, usize, i32)> =
        held.iter().map(|(&(i, j), &l)| (i, j, l)).collect();
    let train_entries = matrix
        .cells()
        .filter(|&(i, j, _)| !held.contains_key(&(i, j)));
    let train = AnnotationMatrix::new(
        matrix.n_items(),
        matrix.n_annotators(),
        train_entries,
        matrix.schema().clone(),
    )?;
    Ok(HoldoutSplit {
        train,
        heldout_cells,
        seed,
    })
}

fn div_ceil(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Seeded shuffle of item indices followed by round-robin fold assignment,
/// so fold sizes differ by at most one.
pub fn make_kfolds(n_items: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k == 0 || k > n_items {
        return Err(Error::InvalidArgument(format!(
            "fold count {k} must be in [1, {n_items}]"
        )));
    }
    let mut items: Vec<usize> = (0..n_items).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items.shuffle(&mut rng);
    let mut fold_of_item = vec![0usize; n_items];
    for (pos, &item) in items.iter().enumerate() {
        fold_of_item[item] = pos % k;
    }
    Ok(FoldAssignment { k, fold_of_item })
}

#[derive(Debug, Serialize, Deserialize)]
struct HeldoutRecord {
    item: usize,
    annotator: usize,
    label: i32,
}

#[derive(Debug, Serialize, Deserialize)]
struct FoldRecord {
    item: usize,
    fold: usize,
}

/// Writes the heldout cells as NDJSON, one `{item, annotator, label}` per line.
pub fn save_holdout_manifest(split: &HoldoutSplit, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    for &(item, annotator, label) in &split.heldout_cells {
        let record = HeldoutRecord {
            item,
            annotator,
            label,
        };
        writeln!(out, "{}", serde_json::to_string(&record)?)?;
    }
    Ok(())
}

/// Reads a holdout manifest back as `(item, annotator, label)` tuples.
pub fn load_holdout_manifest(path: impl AsRef<Path>) -> Result<Vec<(usize, usize, i32)>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut cells = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: HeldoutRecord = serde_json::from_str(&line)?;
        cells.push((record.item, record.annotator, record.label));
    }
    Ok(cells)
}

/// Writes a fold assignment as NDJSON, one `{item, fold}` per line.
pub fn save_fold_manifest(folds: &FoldAssignment, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    for (item, &fold) in folds.fold_of_item.iter().enumerate() {
        writeln!(out, "{}", serde_json::to_string(&FoldRecord { item, fold })?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::LabelSchema;

    fn full_matrix(n: usize, m: usize) -> AnnotationMatrix {
        let schema = LabelSchema::new(0, 4).unwrap();
        let entries = (0..n).flat_map(|i| (0..m).map(move |j| (i, j, ((i + j) % 5) as i32)));
        AnnotationMatrix::new(n, m, entries, schema).unwrap()
    }

    #[test]
    fn holdout_takes_target_count_with_first_pass_caps() {
        let matrix = full_matrix(10, 10);
        let split = make_holdout(&matrix, 0.05, 7).unwrap();
        assert_eq!(split.heldout_cells.len(), 5);
        // target 5 over 10 annotators: cap 1 per annotator on the first pass
        let mut per_annotator = vec![0usize; 10];
        for &(_, j, _) in &split.heldout_cells {
            per_annotator[j] += 1;
        }
        assert!(per_annotator.iter().all(|&c| c <= 1));
    }

    #[test]
    fn holdout_is_deterministic() {
        let matrix = full_matrix(8, 6);
        let a = make_holdout(&matrix, 0.1, 42).unwrap();
        let b = make_holdout(&matrix, 0.1, 42).unwrap();
        assert_eq!(a.heldout_cells, b.heldout_cells);
        assert_eq!(a.train, b.train);
        let c = make_holdout(&matrix, 0.1, 43).unwrap();
        assert!(c.heldout_cells != a.heldout_cells || c.seed != a.seed);
    }

    #[test]
    fn holdout_partitions_cells() {
        let matrix = full_matrix(9, 7);
        let split = make_holdout(&matrix, 0.2, 3).unwrap();
        let total = split.train.n_cells() + split.heldout_cells.len();
        assert_eq!(total, matrix.n_cells());
        for &(i, j, label) in &split.heldout_cells {
            assert_eq!(split.train.get(i, j), None);
            assert_eq!(matrix.get(i, j), Some(label));
        }
    }

    #[test]
    fn holdout_rejects_row_emptying_fraction() {
        let schema = LabelSchema::new(0, 4).unwrap();
        let matrix = AnnotationMatrix::new(2, 1, [(0, 0, 1), (1, 0, 2)], schema).unwrap();
        let err = make_holdout(&matrix, 0.5, 1).unwrap_err();
        assert!(matches!(err, Error::InfeasibleHoldout { .. }));
    }

    #[test]
    fn kfolds_balanced_sizes() {
        let folds = make_kfolds(10, 5, 11).unwrap();
        for fold in 0..5 {
            assert_eq!(folds.items_in_fold(fold).len(), 2);
        }
        let folds = make_kfolds(7, 5, 11).unwrap();
        let mut sizes: Vec<usize> = (0..5).map(|f| folds.items_in_fold(f).len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![1, 1, 1, 2, 2]);
    }

    #[test]
    fn kfolds_deterministic_and_bounded() {
        let a = make_kfolds(20, 4, 5).unwrap();
        let b = make_kfolds(20, 4, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.fold_of_item.iter().all(|&f| f < 4));
        assert!(make_kfolds(3, 5, 0).is_err());
    }
}

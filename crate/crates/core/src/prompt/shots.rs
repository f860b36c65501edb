//! Low-response annotator selection and few-shot assembly under the three
//! data conditions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imputer::CompletedMatrix;
use crate::matrix::{AnnotationMatrix, Dataset};

/// Cap on shots of each kind per prompt.
pub const MAX_SHOTS: usize = 30;

/// Which data a prompt may contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Combined,
    OriginalOnly,
    ImputedOnly,
}

impl Condition {
    pub const ALL: [Condition; 3] = [
        Condition::Combined,
        Condition::OriginalOnly,
        Condition::ImputedOnly,
    ];
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Condition::Combined => "combined",
            Condition::OriginalOnly => "original_only",
            Condition::ImputedOnly => "imputed_only",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combined" => Ok(Condition::Combined),
            "original_only" => Ok(Condition::OriginalOnly),
            "imputed_only" => Ok(Condition::ImputedOnly),
            other => Err(Error::InvalidArgument(format!(
                "unknown condition {other:?} (expected combined, original_only, imputed_only)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shot {
    pub text: String,
    pub label: i32,
}

/// The shots for one annotator's prompt plus the held-out target.
///
/// Original and imputed shots stay in separate blocks so a prompt can never
/// silently mix sources: a condition's unused block is empty by
/// construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotSet {
    pub annotator: usize,
    pub condition: Condition,
    pub original_shots: Vec<Shot>,
    pub imputed_shots: Vec<Shot>,
    pub held_out: Shot,
}

/// The `n` annotators with the fewest annotations; ties break toward the
/// smaller annotator index.
pub fn select_low_response_annotators(
    matrix: &AnnotationMatrix,
    n: usize,
) -> Result<Vec<usize>> {
    if n > matrix.n_annotators() {
        return Err(Error::InvalidArgument(format!(
            "asked for {n} low-response annotators, matrix has {}",
            matrix.n_annotators()
        )));
    }
    let counts = matrix.annotation_counts();
    let mut order: Vec<usize> = (0..matrix.n_annotators()).collect();
    order.sort_by_key(|&j| (counts[j], j));
    order.truncate(n);
    Ok(order)
}

/// Assembles the shots for one annotator.
///
/// One of the annotator's original `(text, label)` pairs is held out as the
/// target; up to [`MAX_SHOTS`] of the rest become original shots. Imputed
/// shots are drawn from items this annotator never labeled (so an
/// imputed-only prompt can never leak a real annotation) whose texts also
/// differ from every original-shot text and the target text. Selection is
/// seeded and deterministic; the held-out pair depends only on the seed,
/// not the condition.
pub fn assemble_shots(
    annotator: usize,
    dataset: &Dataset,
    imputed: &CompletedMatrix,
    condition: Condition,
    seed: u64,
) -> Result<ShotSet> {
    let matrix = &dataset.matrix;
    if annotator >= matrix.n_annotators() {
        return Err(Error::IndexOutOfRange(format!(
            "annotator {annotator} >= {}",
            matrix.n_annotators()
        )));
    }
    if imputed.n_items() != matrix.n_items() || imputed.n_annotators() != matrix.n_annotators() {
        return Err(Error::DimensionMismatch(format!(
            "imputed matrix is {}x{}, dataset is {}x{}",
            imputed.n_items(),
            imputed.n_annotators(),
            matrix.n_items(),
            matrix.n_annotators()
        )));
    }

    let mut original_items: Vec<usize> = (0..matrix.n_items())
        .filter(|&i| matrix.get(i, annotator).is_some())
        .collect();
    if original_items.is_empty() {
        return Err(Error::EmptyInput(format!(
            "annotator {annotator} has no annotations to hold out"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    original_items.shuffle(&mut rng);
    let target_item = original_items[0];
    let held_out = Shot {
        text: dataset.texts[target_item].clone(),
        label: matrix.get(target_item, annotator).expect("present by filter"),
    };

    let original_shots: Vec<Shot> = original_items[1..]
        .iter()
        .take(MAX_SHOTS)
        .map(|&i| Shot {
            text: dataset.texts[i].clone(),
            label: matrix.get(i, annotator).expect("present by filter"),
        })
        .collect();

    let imputed_shots = if condition == Condition::OriginalOnly {
        Vec::new()
    } else {
        let mut used_texts: Vec<&str> =
            original_shots.iter().map(|s| s.text.as_str()).collect();
        used_texts.push(&held_out.text);
        let mut candidates: Vec<usize> = (0..matrix.n_items())
            .filter(|&i| {
                matrix.get(i, annotator).is_none()
                    && !used_texts.contains(&dataset.texts[i].as_str())
            })
            .collect();
        candidates.shuffle(&mut rng);
        candidates
            .into_iter()
            .take(MAX_SHOTS)
            .map(|i| Shot {
                text: dataset.texts[i].clone(),
                label: imputed.labels[i][annotator],
            })
            .collect()
    };

    let original_shots = if condition == Condition::ImputedOnly {
        Vec::new()
    } else {
        original_shots
    };

    Ok(ShotSet {
        annotator,
        condition,
        original_shots,
        imputed_shots,
        held_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::LabelSchema;

    fn dataset_with_counts(counts: &[usize]) -> Dataset {
        // annotator j annotates the first counts[j] items; the longest
        // column sets the item count so every row stays non-empty
        let n = counts.iter().copied().max().unwrap_or(1);
        let schema = LabelSchema::new(0, 4).unwrap();
        let mut entries = Vec::new();
        for (j, &count) in counts.iter().enumerate() {
            for i in 0..count {
                entries.push((i, j, ((i + j) % 5) as i32));
            }
        }
        let matrix = AnnotationMatrix::new(n, counts.len(), entries, schema).unwrap();
        let texts = (0..n).map(|i| format!("text number {i}")).collect();
        Dataset::new(texts, matrix).unwrap()
    }

    fn trivial_completion(dataset: &Dataset) -> CompletedMatrix {
        let schema = dataset.matrix.schema().clone();
        let labels: Vec<Vec<i32>> = (0..dataset.n_items())
            .map(|i| {
                (0..dataset.matrix.n_annotators())
                    .map(|j| dataset.matrix.get(i, j).unwrap_or(2))
                    .collect()
            })
            .collect();
        let raw = labels
            .iter()
            .map(|row| row.iter().map(|&l| f64::from(l)).collect())
            .collect();
        CompletedMatrix { labels, raw, schema }
    }

    #[test]
    fn low_response_selection_sorts_by_count_then_index() {
        let dataset = dataset_with_counts(&[5, 1, 3]);
        let picked = select_low_response_annotators(&dataset.matrix, 2).unwrap();
        assert_eq!(picked, vec![1, 2]);

        let equal = dataset_with_counts(&[2, 2, 2]);
        let picked = select_low_response_annotators(&equal.matrix, 2).unwrap();
        assert_eq!(picked, vec![0, 1]);

        let all = select_low_response_annotators(&dataset.matrix, 3).unwrap();
        assert_eq!(all.len(), 3);
        assert!(select_low_response_annotators(&dataset.matrix, 4).is_err());
    }

    #[test]
    fn two_annotations_leave_one_shot_plus_target() {
        let dataset = dataset_with_counts(&[12, 2]);
        let imputed = trivial_completion(&dataset);
        let shots =
            assemble_shots(1, &dataset, &imputed, Condition::OriginalOnly, 5).unwrap();
        assert_eq!(shots.original_shots.len(), 1);
        assert!(shots.imputed_shots.is_empty());
        assert_ne!(shots.original_shots[0].text, shots.held_out.text);
    }

    #[test]
    fn extras_beyond_cap_are_discarded() {
        // 40 annotations for annotator 0
        let n = 40usize;
        let schema = LabelSchema::new(0, 4).unwrap();
        let entries: Vec<(usize, usize, i32)> =
            (0..n).map(|i| (i, 0usize, (i % 5) as i32)).collect();
        let matrix = AnnotationMatrix::new(n, 2, entries, schema).unwrap();
        let texts = (0..n).map(|i| format!("t{i}")).collect();
        let dataset = Dataset::new(texts, matrix).unwrap();
        let imputed = trivial_completion(&dataset);
        let shots =
            assemble_shots(0, &dataset, &imputed, Condition::OriginalOnly, 1).unwrap();
        assert_eq!(shots.original_shots.len(), MAX_SHOTS);
    }

    #[test]
    fn imputed_shots_never_overlap_original_or_target() {
        let dataset = dataset_with_counts(&[12, 4]);
        let imputed = trivial_completion(&dataset);
        for seed in 0..20 {
            let shots =
                assemble_shots(1, &dataset, &imputed, Condition::Combined, seed).unwrap();
            for imp in &shots.imputed_shots {
                assert_ne!(imp.text, shots.held_out.text);
                for orig in &shots.original_shots {
                    assert_ne!(imp.text, orig.text);
                }
                // imputed shots come from cells without an original annotation
                let item = dataset.texts.iter().position(|t| *t == imp.text).unwrap();
                assert_eq!(dataset.matrix.get(item, 1), None);
            }
        }
    }

    #[test]
    fn condition_blocks_are_exclusive() {
        let dataset = dataset_with_counts(&[12, 4]);
        let imputed = trivial_completion(&dataset);
        let orig_only =
            assemble_shots(1, &dataset, &imputed, Condition::OriginalOnly, 3).unwrap();
        assert!(orig_only.imputed_shots.is_empty());
        assert!(!orig_only.original_shots.is_empty());

        let imp_only =
            assemble_shots(1, &dataset, &imputed, Condition::ImputedOnly, 3).unwrap();
        assert!(imp_only.original_shots.is_empty());
        assert!(!imp_only.imputed_shots.is_empty());

        let combined = assemble_shots(1, &dataset, &imputed, Condition::Combined, 3).unwrap();
        assert!(!combined.original_shots.is_empty());
        assert!(!combined.imputed_shots.is_empty());

        // same seed: same held-out target across conditions
        assert_eq!(orig_only.held_out, imp_only.held_out);
        assert_eq!(orig_only.held_out, combined.held_out);
    }

    #[test]
    fn determinism_per_seed() {
        let dataset = dataset_with_counts(&[12, 4]);
        let imputed = trivial_completion(&dataset);
        let a = assemble_shots(1, &dataset, &imputed, Condition::Combined, 9).unwrap();
        let b = assemble_shots(1, &dataset, &imputed, Condition::Combined, 9).unwrap();
        assert_eq!(a, b);
    }
}

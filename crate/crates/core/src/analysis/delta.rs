//! Per-item variance and disagreement-rate changes between an original
//! sparse matrix and an imputed completion of it.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imputer::CompletedMatrix;
use crate::matrix::{stats_from_labels, AnnotationMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemDelta {
    pub item: usize,
    pub variance_before: f64,
    pub variance_after: f64,
    pub disagreement_before: f64,
    pub disagreement_after: f64,
}

impl ItemDelta {
    pub fn variance_change(&self) -> f64 {
        self.variance_after - self.variance_before
    }

    pub fn disagreement_change(&self) -> f64 {
        self.disagreement_after - self.disagreement_before
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionDelta {
    pub per_item: Vec<ItemDelta>,
    pub avg_variance_change: f64,
    pub avg_disagreement_change: f64,
}

/// Compares per-item statistics before and after imputation.
///
/// Before-stats use only the observed cells. After-stats run over all M
/// labels of the completed row, with the majority label recomputed on the
/// imputed data.
pub fn distribution_delta(
    original: &AnnotationMatrix,
    imputed: &CompletedMatrix,
) -> Result<DistributionDelta> {
    if imputed.n_items() != original.n_items() || imputed.n_annotators() != original.n_annotators()
    {
        return Err(Error::DimensionMismatch(format!(
            "imputed matrix is {}x{}, original is {}x{}",
            imputed.n_items(),
            imputed.n_annotators(),
            original.n_items(),
            original.n_annotators()
        )));
    }
    let schema = original.schema();
    let mut per_item = Vec::with_capacity(original.n_items());
    for item in 0..original.n_items() {
        let before = original.row_stats(item)?;
        let after = stats_from_labels(&imputed.labels[item], schema);
        per_item.push(ItemDelta {
            item,
            variance_before: before.variance,
            variance_after: after.variance,
            disagreement_before: before.disagreement_rate,
            disagreement_after: after.disagreement_rate,
        });
    }
    let n = per_item.len() as f64;
    let avg_variance_change = per_item.iter().map(ItemDelta::variance_change).sum::<f64>() / n;
    let avg_disagreement_change = per_item
        .iter()
        .map(ItemDelta::disagreement_change)
        .sum::<f64>()
        / n;
    Ok(DistributionDelta {
        per_item,
        avg_variance_change,
        avg_disagreement_change,
    })
}

/// Writes per-item deltas as NDJSON, one record per line.
pub fn save_delta_ndjson(delta: &DistributionDelta, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    for record in &delta.per_item {
        writeln!(out, "{}", serde_json::to_string(record)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::LabelSchema;

    fn schema(max: i32) -> LabelSchema {
        LabelSchema::new(0, max).unwrap()
    }

    #[test]
    fn identical_complete_matrices_give_zero_deltas() {
        let s = schema(4);
        let entries: Vec<(usize, usize, i32)> = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j, ((i * j) % 5) as i32)))
            .collect();
        let matrix =
            crate::matrix::AnnotationMatrix::new(3, 3, entries, s.clone()).unwrap();
        let completed = CompletedMatrix {
            labels: (0..3)
                .map(|i| (0..3).map(|j| matrix.get(i, j).unwrap()).collect())
                .collect(),
            raw: matrix.densify(0.0),
            schema: s,
        };
        let delta = distribution_delta(&matrix, &completed).unwrap();
        assert_eq!(delta.avg_variance_change, 0.0);
        assert_eq!(delta.avg_disagreement_change, 0.0);
        for item in &delta.per_item {
            assert_eq!(item.variance_change(), 0.0);
            assert_eq!(item.disagreement_change(), 0.0);
        }
    }

    #[test]
    fn averages_match_per_item_means() {
        let s = schema(4);
        let matrix = crate::matrix::AnnotationMatrix::new(
            2,
            3,
            [(0, 0, 0), (0, 1, 4), (1, 2, 2)],
            s.clone(),
        )
        .unwrap();
        let completed = CompletedMatrix {
            labels: vec![vec![0, 4, 2], vec![2, 2, 2]],
            raw: vec![vec![0.0, 4.0, 2.0], vec![2.0, 2.0, 2.0]],
            schema: s,
        };
        let delta = distribution_delta(&matrix, &completed).unwrap();
        let mean_var: f64 = delta
            .per_item
            .iter()
            .map(ItemDelta::variance_change)
            .sum::<f64>()
            / 2.0;
        assert!((delta.avg_variance_change - mean_var).abs() < 1e-12);
    }

    /// Completing each row with its own majority label never raises that
    /// row's variance: exhaustive check over every 5-slot row with K=3 and
    /// at least one observed cell.
    #[test]
    fn majority_completion_never_raises_variance() {
        let s = schema(2);
        // each slot: 0=missing, 1..=3 => label value slot-1
        for pattern in 0..4u32.pow(5) {
            let slots: Vec<Option<i32>> = (0..5)
                .map(|pos| {
                    let code = (pattern / 4u32.pow(pos)) % 4;
                    (code > 0).then(|| code as i32 - 1)
                })
                .collect();
            let present: Vec<i32> = slots.iter().flatten().copied().collect();
            if present.is_empty() {
                continue;
            }
            let before = stats_from_labels(&present, &s);
            let completed: Vec<i32> = slots
                .iter()
                .map(|slot| slot.unwrap_or(before.majority_label))
                .collect();
            let after = stats_from_labels(&completed, &s);
            assert!(
                after.variance <= before.variance + 1e-12,
                "variance rose for {slots:?}: {} -> {}",
                before.variance,
                after.variance
            );
        }
    }
}

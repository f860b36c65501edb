//! The contract shared by all imputation engines: observed cells pass
//! through untouched, missing cells receive a raw real-valued prediction
//! and an integer label.

use crate::error::{Error, Result};
use crate::matrix::{AnnotationMatrix, Dataset};
use crate::schema::LabelSchema;

/// A fully imputed N×M matrix: integer labels plus the raw predictions they
/// came from. Observed cells hold their original label in both views.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedMatrix {
    pub labels: Vec<Vec<i32>>,
    pub raw: Vec<Vec<f64>>,
    pub schema: LabelSchema,
}

impl CompletedMatrix {
    pub fn n_items(&self) -> usize {
        self.labels.len()
    }

    pub fn n_annotators(&self) -> usize {
        self.labels.first().map_or(0, |row| row.len())
    }

    /// Reads a complete integer matrix from the annotations CSV format.
    /// Raw values are taken to equal the labels.
    pub fn from_labels_csv(
        path: impl AsRef<std::path::Path>,
        schema: LabelSchema,
    ) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)?;
        let mut labels: Vec<Vec<i32>> = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let mut out = Vec::with_capacity(record.len());
            for (col, cell) in record.iter().enumerate() {
                let label: i32 =
                    cell.trim()
                        .parse()
                        .map_err(|_| Error::NonIntegerCell {
                            row,
                            col,
                            value: cell.to_string(),
                        })?;
                if !schema.contains(label) {
                    return Err(Error::LabelOutOfRange {
                        row,
                        col,
                        label,
                        min: schema.min_label,
                        max: schema.max_label,
                    });
                }
                out.push(label);
            }
            labels.push(out);
        }
        let raw = labels
            .iter()
            .map(|row| row.iter().map(|&l| f64::from(l)).collect())
            .collect();
        Ok(CompletedMatrix { labels, raw, schema })
    }
}

/// Rounds half away from zero, then clamps into the schema range.
pub fn round_to_label(raw: f64, schema: &LabelSchema) -> i32 {
    let rounded = raw.round();
    let clamped = rounded.clamp(f64::from(schema.min_label), f64::from(schema.max_label));
    clamped as i32
}

/// Completes a sparse matrix: observed cells are copied verbatim, missing
/// cells come from `predict`, which returns `(raw, label)` for a cell.
pub(crate) fn complete_with(
    train: &AnnotationMatrix,
    mut predict: impl FnMut(usize, usize) -> (f64, i32),
) -> CompletedMatrix {
    let n = train.n_items();
    let m = train.n_annotators();
    let mut labels = vec![vec![0i32; m]; n];
    let mut raw = vec![vec![0f64; m]; n];
    for i in 0..n {
        for j in 0..m {
            match train.get(i, j) {
                Some(label) => {
                    labels[i][j] = label;
                    raw[i][j] = f64::from(label);
                }
                None => {
                    let (r, l) = predict(i, j);
                    raw[i][j] = r;
                    labels[i][j] = l;
                }
            }
        }
    }
    CompletedMatrix {
        labels,
        raw,
        schema: train.schema().clone(),
    }
}

pub(crate) fn check_dimensions(
    train: &AnnotationMatrix,
    n_items: usize,
    n_annotators: usize,
    what: &str,
) -> Result<()> {
    if train.n_items() != n_items || train.n_annotators() != n_annotators {
        return Err(Error::DimensionMismatch(format!(
            "{what} was trained on {n_items}x{n_annotators}, matrix is {}x{}",
            train.n_items(),
            train.n_annotators()
        )));
    }
    Ok(())
}

/// A trained model that can fill in every missing cell of a dataset.
pub trait Imputer {
    fn name(&self) -> &'static str;
    fn complete(&self, dataset: &Dataset) -> Result<CompletedMatrix>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_half_away_from_zero_then_clamp() {
        let schema = LabelSchema::new(0, 4).unwrap();
        assert_eq!(round_to_label(2.49, &schema), 2);
        assert_eq!(round_to_label(3.5, &schema), 4);
        assert_eq!(round_to_label(4.7, &schema), 4);
        assert_eq!(round_to_label(-0.6, &schema), 0);
        let signed = LabelSchema::new(-2, 2).unwrap();
        assert_eq!(round_to_label(-1.5, &signed), -2);
        assert_eq!(round_to_label(-0.5, &signed), -1);
    }

    #[test]
    fn complete_preserves_observed_cells() {
        let schema = LabelSchema::new(0, 4).unwrap();
        let matrix =
            AnnotationMatrix::new(2, 2, [(0, 0, 3), (1, 1, 1)], schema.clone()).unwrap();
        let completed = complete_with(&matrix, |_, _| (2.4, 2));
        assert_eq!(completed.labels, vec![vec![3, 2], vec![2, 1]]);
        assert_eq!(completed.raw, vec![vec![3.0, 2.4], vec![2.4, 1.0]]);
    }
}

//! The dataset model: texts, the sparse annotation matrix, and per-item
//! descriptive statistics.
//!
//! A dataset is two files. The texts file holds one record per line with an
//! optional leading `id<TAB>` column. The annotations file is an N×M CSV grid
//! where the empty string marks a missing annotation and every other cell is
//! an integer label. Missing cells are never stored; they only materialize
//! when [`AnnotationMatrix::densify`] substitutes a sentinel value.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::LabelSchema;

/// A probability vector over a schema's labels, indexed by class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabel(pub Vec<f64>);

impl SoftLabel {
    /// Builds a soft label from annotation counts per class.
    pub fn from_counts(counts: &[usize]) -> SoftLabel {
        let total: usize = counts.iter().sum();
        let total = total.max(1) as f64;
        SoftLabel(counts.iter().map(|&c| c as f64 / total).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-item descriptive statistics over one row of annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowStats {
    pub majority_label: i32,
    pub soft_label: SoftLabel,
    /// Population variance of the row's labels.
    pub variance: f64,
    /// Fraction of annotations that differ from the majority label.
    pub disagreement_rate: f64,
    pub n_annotations: usize,
}

/// Sparse N×M integer label matrix with an explicit missing-cell
/// representation: absent keys are missing annotations.
///
/// Immutable after construction and safe to share read-only across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationMatrix {
    n_items: usize,
    n_annotators: usize,
    cells: BTreeMap<(usize, usize), i32>,
    schema: LabelSchema,
}

impl AnnotationMatrix {
    /// Validates labels against the schema, rejects duplicate keys and items
    /// with zero annotations.
    pub fn new(
        n_items: usize,
        n_annotators: usize,
        entries: impl IntoIterator<Item = (usize, usize, i32)>,
        schema: LabelSchema,
    ) -> Result<Self> {
        schema.validate()?;
        let mut cells = BTreeMap::new();
        for (item, annotator, label) in entries {
            if item >= n_items || annotator >= n_annotators {
                return Err(Error::IndexOutOfRange(format!(
                    "cell ({item}, {annotator}) outside {n_items}x{n_annotators} matrix"
                )));
            }
            if !schema.contains(label) {
                return Err(Error::LabelOutOfRange {
                    row: item,
                    col: annotator,
                    label,
                    min: schema.min_label,
                    max: schema.max_label,
                });
            }
            if cells.insert((item, annotator), label).is_some() {
                return Err(Error::DuplicateCell { item, annotator });
            }
        }
        let matrix = AnnotationMatrix {
            n_items,
            n_annotators,
            cells,
            schema,
        };
        for item in 0..n_items {
            if matrix.row(item).next().is_none() {
                return Err(Error::EmptyRow { item });
            }
        }
        Ok(matrix)
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_annotators(&self) -> usize {
        self.n_annotators
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn schema(&self) -> &LabelSchema {
        &self.schema
    }

    pub fn get(&self, item: usize, annotator: usize) -> Option<i32> {
        self.cells.get(&(item, annotator)).copied()
    }

    /// All observed cells as `(item, annotator, label)` in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, i32)> + '_ {
        self.cells.iter().map(|(&(i, j), &label)| (i, j, label))
    }

    /// Observed cells of one row as `(annotator, label)`.
    pub fn row(&self, item: usize) -> impl Iterator<Item = (usize, i32)> + '_ {
        self.cells
            .range((item, 0)..=(item, usize::MAX))
            .map(|(&(_, j), &label)| (j, label))
    }

    /// Number of annotations per annotator (columns may be empty).
    pub fn annotation_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_annotators];
        for &(_, j) in self.cells.keys() {
            counts[j] += 1;
        }
        counts
    }

    /// Mean of all observed labels.
    pub fn global_mean(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.cells.values().map(|&l| f64::from(l)).sum();
        sum / self.cells.len() as f64
    }

    /// Dense N×M copy with missing cells replaced by `sentinel`.
    ///
    /// The sentinel may lie outside the schema range (the conventional
    /// choice of 10 deliberately does, so that missingness separates
    /// cleanly in projections).
    pub fn densify(&self, sentinel: f64) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![sentinel; self.n_annotators]; self.n_items];
        for (&(i, j), &label) in &self.cells {
            dense[i][j] = f64::from(label);
        }
        dense
    }

    /// Descriptive statistics for one item's annotations.
    ///
    /// The majority label is the mode with ties broken toward the smallest
    /// label value, which makes the result deterministic under any
    /// permutation of annotator columns.
    pub fn row_stats(&self, item: usize) -> Result<RowStats> {
        if item >= self.n_items {
            return Err(Error::IndexOutOfRange(format!(
                "item {item} >= {}",
                self.n_items
            )));
        }
        let labels: Vec<i32> = self.row(item).map(|(_, l)| l).collect();
        Ok(stats_from_labels(&labels, &self.schema))
    }

    /// Row statistics for every item.
    pub fn all_row_stats(&self) -> Vec<RowStats> {
        (0..self.n_items)
            .map(|i| self.row_stats(i).expect("item index in range"))
            .collect()
    }
}

/// Statistics over a list of labels, all assumed schema-valid and non-empty.
pub(crate) fn stats_from_labels(labels: &[i32], schema: &LabelSchema) -> RowStats {
    assert!(!labels.is_empty(), "rows are never empty after load");
    let mut counts = vec![0usize; schema.n_labels()];
    for &label in labels {
        counts[schema.index_of(label).expect("label validated on entry")] += 1;
    }
    let majority_idx = counts
        .iter()
        .enumerate()
        .max_by(|(ia, ca), (ib, cb)| ca.cmp(cb).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .expect("at least one class");
    let majority_label = schema.label_at(majority_idx);
    let n = labels.len() as f64;
    let mean = labels.iter().map(|&l| f64::from(l)).sum::<f64>() / n;
    let variance = labels
        .iter()
        .map(|&l| (f64::from(l) - mean).powi(2))
        .sum::<f64>()
        / n;
    let disagreeing = labels.iter().filter(|&&l| l != majority_label).count();
    RowStats {
        majority_label,
        soft_label: SoftLabel::from_counts(&counts),
        variance,
        disagreement_rate: disagreeing as f64 / n,
        n_annotations: labels.len(),
    }
}

/// Texts plus the annotation matrix for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub texts: Vec<String>,
    pub matrix: AnnotationMatrix,
}

impl Dataset {
    pub fn new(texts: Vec<String>, matrix: AnnotationMatrix) -> Result<Self> {
        if texts.len() != matrix.n_items() {
            return Err(Error::RowCountMismatch {
                texts: texts.len(),
                annotations: matrix.n_items(),
            });
        }
        Ok(Dataset { texts, matrix })
    }

    pub fn n_items(&self) -> usize {
        self.matrix.n_items()
    }
}

/// Loads the two-file dataset format.
///
/// Out-of-range labels are rejected, never clamped. When the schema has a
/// non-unit `scale`, raw cell values are multiplied by it and must land on
/// integers.
pub fn load_dataset(
    texts_path: impl AsRef<Path>,
    annotations_path: impl AsRef<Path>,
    schema: LabelSchema,
) -> Result<Dataset> {
    let texts = read_texts(texts_path.as_ref())?;
    let (n_annotators, entries, n_rows) = read_annotations(annotations_path.as_ref(), &schema)?;
    if texts.len() != n_rows {
        return Err(Error::RowCountMismatch {
            texts: texts.len(),
            annotations: n_rows,
        });
    }
    let matrix = AnnotationMatrix::new(n_rows, n_annotators, entries, schema)?;
    Dataset::new(texts, matrix)
}

/// Writes a dataset back to the two-file format; the inverse of
/// [`load_dataset`] on `(cells, schema)`.
pub fn save_dataset(
    dataset: &Dataset,
    texts_path: impl AsRef<Path>,
    annotations_path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = std::fs::File::create(texts_path)?;
    for text in &dataset.texts {
        writeln!(out, "{}", text)?;
    }
    save_annotations_csv(&dataset.matrix, annotations_path)
}

/// Writes the sparse matrix in the annotations CSV format, empty cell = missing.
pub fn save_annotations_csv(
    matrix: &AnnotationMatrix,
    path: impl AsRef<Path>,
) -> Result<()> {
    let scale = matrix.schema().scale;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for i in 0..matrix.n_items() {
        let mut record: Vec<String> = vec![String::new(); matrix.n_annotators()];
        for (j, label) in matrix.row(i) {
            record[j] = if scale == 1.0 {
                label.to_string()
            } else {
                format_scaled(label, scale)
            };
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes a complete integer matrix in the same CSV format (no empty cells).
pub fn save_dense_csv(rows: &[Vec<i32>], path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for row in rows {
        let record: Vec<String> = row.iter().map(|l| l.to_string()).collect();
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes a complete real-valued matrix as CSV.
pub fn save_dense_raw_csv(rows: &[Vec<f64>], path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for row in rows {
        let record: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

fn format_scaled(label: i32, scale: f64) -> String {
    let value = f64::from(label) / scale;
    if value.fract() == 0.0 {
        format!("{}", value as i64)
    } else {
        format!("{value}")
    }
}

fn read_texts(path: &Path) -> Result<Vec<String>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
    // An id column is assumed only when every line has one: a tab-separated
    // prefix that parses as an integer.
    let has_id_column = !lines.is_empty()
        && lines.iter().all(|line| {
            line.split_once('\t')
                .is_some_and(|(id, _)| id.trim().parse::<i64>().is_ok())
        });
    Ok(lines
        .into_iter()
        .map(|line| {
            if has_id_column {
                line.split_once('\t').map(|(_, t)| t.to_string()).unwrap()
            } else {
                line
            }
        })
        .collect())
}

type CellEntries = Vec<(usize, usize, i32)>;

fn read_annotations(
    path: &Path,
    schema: &LabelSchema,
) -> Result<(usize, CellEntries, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut entries = Vec::new();
    let mut n_annotators = 0usize;
    let mut n_rows = 0usize;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        n_annotators = n_annotators.max(record.len());
        for (col, raw) in record.iter().enumerate() {
            let cell = raw.trim();
            if cell.is_empty() {
                continue;
            }
            let label = parse_label(cell, schema.scale).ok_or_else(|| Error::NonIntegerCell {
                row,
                col,
                value: raw.to_string(),
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
            entries.push((row, col, label));
        }
        n_rows += 1;
    }
    Ok((n_annotators, entries, n_rows))
}

fn parse_label(cell: &str, scale: f64) -> Option<i32> {
    if scale == 1.0 {
        if let Ok(v) = cell.parse::<i32>() {
            return Some(v);
        }
    }
    // Scaled datasets (and unscaled files written as "3.0") come through the
    // float path; the scaled value must land on an integer.
    let value: f64 = cell.parse().ok()?;
    let scaled = value * scale;
    let rounded = scaled.round();
    ((scaled - rounded).abs() < 1e-9).then_some(rounded as i32)
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The valid integer label range for one dataset, with optional display names.
///
/// Labels are always integers. Datasets whose raw files carry fractional
/// labels on a regular grid (e.g. `{0, 0.5, 1}`) set [`LabelSchema::scale`]
/// so that cells are multiplied onto an integer grid at load time
/// (`scale = 2` maps `{0, 0.5, 1}` to `{0, 1, 2}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub min_label: i32,
    pub max_label: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_names: Option<Vec<String>>,
    /// Multiplier applied to raw cell values before integer validation.
    #[serde(default = "default_scale", skip_serializing_if = "is_unit_scale")]
    pub scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

fn is_unit_scale(s: &f64) -> bool {
    *s == 1.0
}

impl LabelSchema {
    pub fn new(min_label: i32, max_label: i32) -> Result<Self> {
        Self::with_names(min_label, max_label, None)
    }

    pub fn with_names(
        min_label: i32,
        max_label: i32,
        label_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let schema = LabelSchema {
            min_label,
            max_label,
            label_names,
            scale: 1.0,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_label >= self.max_label {
            return Err(Error::InvalidSchema(format!(
                "min_label {} must be < max_label {}",
                self.min_label, self.max_label
            )));
        }
        if let Some(names) = &self.label_names {
            if names.len() != self.n_labels() {
                return Err(Error::InvalidSchema(format!(
                    "label_names has {} entries, expected {}",
                    names.len(),
                    self.n_labels()
                )));
            }
        }
        if !self.scale.is_finite() || self.scale <= 0.0 {
            return Err(Error::InvalidSchema(format!(
                "scale must be finite and positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    /// Number of valid labels `K = max_label - min_label + 1`.
    pub fn n_labels(&self) -> usize {
        (self.max_label - self.min_label + 1) as usize
    }

    pub fn contains(&self, label: i32) -> bool {
        label >= self.min_label && label <= self.max_label
    }

    /// Index of a label within `[0, K)`, or `None` if out of range.
    pub fn index_of(&self, label: i32) -> Option<usize> {
        self.contains(label)
            .then(|| (label - self.min_label) as usize)
    }

    /// Label value at class index `idx`.
    pub fn label_at(&self, idx: usize) -> i32 {
        self.min_label + idx as i32
    }

    /// All valid labels in ascending order.
    pub fn labels(&self) -> impl Iterator<Item = i32> + '_ {
        self.min_label..=self.max_label
    }

    pub fn span(&self) -> f64 {
        f64::from(self.max_label - self.min_label)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let schema: LabelSchema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inverted_range() {
        assert!(LabelSchema::new(4, 0).is_err());
        assert!(LabelSchema::new(2, 2).is_err());
    }

    #[test]
    fn label_indexing_round_trips() {
        let schema = LabelSchema::new(-2, 2).unwrap();
        assert_eq!(schema.n_labels(), 5);
        assert_eq!(schema.index_of(-2), Some(0));
        assert_eq!(schema.index_of(2), Some(4));
        assert_eq!(schema.index_of(3), None);
        assert_eq!(schema.label_at(0), -2);
        assert_eq!(schema.label_at(4), 2);
    }

    #[test]
    fn name_count_must_match() {
        let names = Some(vec!["a".into(), "b".into()]);
        assert!(LabelSchema::with_names(0, 2, names).is_err());
        let names = Some(vec!["a".into(), "b".into(), "c".into()]);
        assert!(LabelSchema::with_names(0, 2, names).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let schema = LabelSchema::new(1, 25).unwrap();
        let json = serde_json::to_string(&schema).unwrap();
        let back: LabelSchema = serde_json::from_str(&json).unwrap();
        assert_eq!(schema, back);
        // scale defaults to 1 when absent
        let parsed: LabelSchema =
            serde_json::from_str(r#"{"min_label":0,"max_label":4}"#).unwrap();
        assert_eq!(parsed.scale, 1.0);
    }
}

//! Soft-label comparison between original and imputed data: per-item KL
//! divergence, aggregates, and NDJSON records.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imputer::CompletedMatrix;
use crate::matrix::{stats_from_labels, AnnotationMatrix, SoftLabel};

pub const DEFAULT_ALPHA: f64 = 1e-6;

/// Kullback-Leibler divergence `KL(p || q)` in nats after additive
/// smoothing of both distributions: `p' = (p + alpha) / (1 + K * alpha)`.
///
/// With `alpha = 0` the divergence may be `+inf` when q assigns zero mass
/// where p does not; the infinity is returned explicitly.
pub fn kl_divergence(p: &SoftLabel, q: &SoftLabel, alpha: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "KL over distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    let k = p.len() as f64;
    let mut total = 0.0;
    for (&pc, &qc) in p.probs().iter().zip(q.probs()) {
        let ps = (pc + alpha) / (1.0 + k * alpha);
        let qs = (qc + alpha) / (1.0 + k * alpha);
        if ps == 0.0 {
            continue;
        }
        if qs == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += ps * (ps / qs).ln();
    }
    Ok(total.max(0.0))
}

/// Jensen-Shannon divergence, the symmetrized KL against the midpoint
/// distribution.
pub fn js_divergence(p: &SoftLabel, q: &SoftLabel, alpha: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "JS over distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    let mid = SoftLabel(
        p.probs()
            .iter()
            .zip(q.probs())
            .map(|(&a, &b)| 0.5 * (a + b))
            .collect(),
    );
    Ok(0.5 * kl_divergence(p, &mid, alpha)? + 0.5 * kl_divergence(q, &mid, alpha)?)
}

/// One item's soft labels across every imputation method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabelRecord {
    pub item: usize,
    pub original: SoftLabel,
    pub imputed_by_method: BTreeMap<String, SoftLabel>,
    pub kl_by_method: BTreeMap<String, f64>,
    /// Method with the lowest KL for this item (first name on ties).
    pub best_method: String,
}

/// Mean and population standard deviation of a method's per-item KL scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlAggregate {
    pub mean: f64,
    pub std: f64,
}

/// Per-item KL(original || imputed) for every method, plus per-method
/// aggregates.
pub fn softlabel_report(
    original: &AnnotationMatrix,
    imputed_sets: &BTreeMap<String, &CompletedMatrix>,
    alpha: f64,
) -> Result<(Vec<SoftLabelRecord>, BTreeMap<String, KlAggregate>)> {
    for (name, completed) in imputed_sets {
        if completed.n_items() != original.n_items()
            || completed.n_annotators() != original.n_annotators()
        {
            return Err(Error::DimensionMismatch(format!(
                "imputed set {name:?} is {}x{}, original is {}x{}",
                completed.n_items(),
                completed.n_annotators(),
                original.n_items(),
                original.n_annotators()
            )));
        }
    }
    let schema = original.schema();
    let mut records = Vec::with_capacity(original.n_items());
    for item in 0..original.n_items() {
        let orig_soft = original.row_stats(item)?.soft_label;
        let mut imputed_by_method = BTreeMap::new();
        let mut kl_by_method = BTreeMap::new();
        for (name, completed) in imputed_sets {
            let soft = stats_from_labels(&completed.labels[item], schema).soft_label;
            let kl = kl_divergence(&orig_soft, &soft, alpha)?;
            imputed_by_method.insert(name.clone(), soft);
            kl_by_method.insert(name.clone(), kl);
        }
        let best_method = kl_by_method
            .iter()
            .min_by(|(_, a), (_, b)| a.partial_cmp(b).expect("KL values are comparable"))
            .map(|(name, _)| name.clone())
            .unwrap_or_default();
        records.push(SoftLabelRecord {
            item,
            original: orig_soft,
            imputed_by_method,
            kl_by_method,
            best_method,
        });
    }

    let mut aggregates = BTreeMap::new();
    for name in imputed_sets.keys() {
        let values: Vec<f64> = records
            .iter()
            .map(|r| r.kl_by_method[name])
            .collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        aggregates.insert(name.clone(), KlAggregate { mean, std });
    }
    Ok((records, aggregates))
}

/// Writes soft-label records as NDJSON, one per line.
pub fn save_softlabel_ndjson(records: &[SoftLabelRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    for record in records {
        writeln!(out, "{}", serde_json::to_string(record)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::LabelSchema;

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let p = SoftLabel(vec![0.2, 0.3, 0.5]);
        assert!(kl_divergence(&p, &p, DEFAULT_ALPHA).unwrap().abs() < 1e-12);
        assert!(kl_divergence(&p, &p, 0.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn kl_hand_computed_case() {
        let p = SoftLabel(vec![0.5, 0.5]);
        let q = SoftLabel(vec![0.25, 0.75]);
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0 / 3.0_f64).ln();
        let kl = kl_divergence(&p, &q, 0.0).unwrap();
        assert!((kl - expected).abs() < 1e-12);
        assert!((kl - 0.14384).abs() < 1e-4);
    }

    #[test]
    fn kl_zero_mass_without_smoothing_is_infinite() {
        let p = SoftLabel(vec![0.5, 0.5]);
        let q = SoftLabel(vec![1.0, 0.0]);
        assert_eq!(kl_divergence(&p, &q, 0.0).unwrap(), f64::INFINITY);
        assert!(kl_divergence(&p, &q, DEFAULT_ALPHA).unwrap().is_finite());
    }

    #[test]
    fn js_is_symmetric_and_finite() {
        let p = SoftLabel(vec![0.9, 0.1, 0.0]);
        let q = SoftLabel(vec![0.0, 0.2, 0.8]);
        let ab = js_divergence(&p, &q, 0.0).unwrap();
        let ba = js_divergence(&q, &p, 0.0).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab.is_finite() && ab > 0.0);
    }

    fn toy_setup() -> (AnnotationMatrix, CompletedMatrix, CompletedMatrix) {
        let schema = LabelSchema::new(0, 2).unwrap();
        let matrix = AnnotationMatrix::new(
            2,
            3,
            [(0, 0, 0), (0, 1, 0), (0, 2, 2), (1, 0, 1), (1, 1, 1), (1, 2, 1)],
            schema.clone(),
        )
        .unwrap();
        let identical = CompletedMatrix {
            labels: vec![vec![0, 0, 2], vec![1, 1, 1]],
            raw: vec![vec![0.0, 0.0, 2.0], vec![1.0, 1.0, 1.0]],
            schema: schema.clone(),
        };
        let uniform = CompletedMatrix {
            labels: vec![vec![0, 1, 2], vec![0, 1, 2]],
            raw: vec![vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 2.0]],
            schema,
        };
        (matrix, identical, uniform)
    }

    #[test]
    fn identity_method_has_zero_kl_and_wins() {
        let (matrix, identical, uniform) = toy_setup();
        let mut sets = BTreeMap::new();
        sets.insert("same".to_string(), &identical);
        sets.insert("uniform".to_string(), &uniform);
        let (records, aggregates) = softlabel_report(&matrix, &sets, DEFAULT_ALPHA).unwrap();
        for record in &records {
            assert!(record.kl_by_method["same"].abs() < 1e-9);
            assert_eq!(record.best_method, "same");
            for soft in record.imputed_by_method.values() {
                let sum: f64 = soft.probs().iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
        assert!(aggregates["same"].mean < aggregates["uniform"].mean);
        assert!(aggregates["same"].mean.abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (matrix, identical, _) = toy_setup();
        let schema = LabelSchema::new(0, 2).unwrap();
        let wrong = CompletedMatrix {
            labels: vec![vec![0, 0]],
            raw: vec![vec![0.0, 0.0]],
            schema,
        };
        let mut sets = BTreeMap::new();
        sets.insert("same".to_string(), &identical);
        sets.insert("wrong".to_string(), &wrong);
        assert!(softlabel_report(&matrix, &sets, DEFAULT_ALPHA).is_err());
    }
}

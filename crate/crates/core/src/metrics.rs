//! Evaluation metrics: RMSE for imputer quality, weighted F1 for label
//! prediction, and the three-way disagreement-level assignment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::LabelSchema;

/// Root mean squared error between two equal-length real vectors.
pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("rmse over empty input".into()));
    }
    if predictions.len() != truths.len() {
        return Err(Error::DimensionMismatch(format!(
            "rmse: {} predictions vs {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let mse = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / predictions.len() as f64;
    Ok(mse.sqrt())
}

/// Weighted F1: per-class F1 averaged with weights proportional to class
/// support in `truths`.
///
/// Truth labels must be schema-valid. Predictions may fall outside the
/// schema (scoring reserves an out-of-schema class for unparseable model
/// outputs); such predictions can never be true positives, so they count
/// against whichever class was expected. A class with no true or predicted
/// members has F1 zero, and classes absent from the truths carry zero
/// weight.
pub fn weighted_f1(predictions: &[i32], truths: &[i32], schema: &LabelSchema) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("weighted_f1 over empty input".into()));
    }
    if predictions.len() != truths.len() {
        return Err(Error::DimensionMismatch(format!(
            "weighted_f1: {} predictions vs {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    for &t in truths {
        if !schema.contains(t) {
            return Err(Error::LabelOutOfRange {
                row: 0,
                col: 0,
                label: t,
                min: schema.min_label,
                max: schema.max_label,
            });
        }
    }
    let mut tp: BTreeMap<i32, usize> = BTreeMap::new();
    let mut fp: BTreeMap<i32, usize> = BTreeMap::new();
    let mut fne: BTreeMap<i32, usize> = BTreeMap::new();
    let mut support: BTreeMap<i32, usize> = BTreeMap::new();
    for (&p, &t) in predictions.iter().zip(truths) {
        *support.entry(t).or_default() += 1;
        if p == t {
            *tp.entry(t).or_default() += 1;
        } else {
            *fp.entry(p).or_default() += 1;
            *fne.entry(t).or_default() += 1;
        }
    }
    let total = truths.len() as f64;
    let mut score = 0.0;
    for (&class, &count) in &support {
        let tp_c = *tp.get(&class).unwrap_or(&0) as f64;
        let fp_c = *fp.get(&class).unwrap_or(&0) as f64;
        let fn_c = *fne.get(&class).unwrap_or(&0) as f64;
        let denom = 2.0 * tp_c + fp_c + fn_c;
        let f1 = if denom == 0.0 { 0.0 } else { 2.0 * tp_c / denom };
        score += (count as f64 / total) * f1;
    }
    Ok(score)
}

/// A disagreement category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DisagreementLevel {
    Low,
    Medium,
    High,
}

impl std::fmt::Display for DisagreementLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            DisagreementLevel::Low => "Low",
            DisagreementLevel::Medium => "Medium",
            DisagreementLevel::High => "High",
        };
        f.write_str(name)
    }
}

/// The chosen thresholds and the per-item level assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementLevels {
    pub low_threshold: f64,
    pub high_threshold: f64,
    pub level_of_item: Vec<DisagreementLevel>,
}

impl DisagreementLevels {
    pub fn count(&self, level: DisagreementLevel) -> usize {
        self.level_of_item.iter().filter(|&&l| l == level).count()
    }
}

fn classify(rate: f64, low: f64, high: f64) -> DisagreementLevel {
    if rate <= low {
        DisagreementLevel::Low
    } else if rate >= high {
        DisagreementLevel::High
    } else {
        DisagreementLevel::Medium
    }
}

/// Splits items into Low / Medium / High disagreement by picking the
/// threshold pair that keeps all three categories non-empty while
/// minimizing the variance of the category sizes.
///
/// Items at or below the low threshold are Low; items at or above the high
/// threshold are High. Candidate thresholds are the distinct observed
/// rates, so items with identical rates always land in the same category.
/// Ties in size variance resolve to the smaller low threshold, then the
/// smaller high threshold.
pub fn assign_disagreement_levels(rates: &[f64]) -> Result<DisagreementLevels> {
    if rates.is_empty() {
        return Err(Error::EmptyInput(
            "assign_disagreement_levels over empty input".into(),
        ));
    }
    let mut distinct: Vec<f64> = rates.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("rates are finite"));
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::TooFewDistinctRates(distinct.len()));
    }

    let mut best: Option<(f64, f64, f64)> = None; // (variance, low, high)
    for (li, &low) in distinct.iter().enumerate() {
        for &high in &distinct[li + 1..] {
            let mut counts = [0usize; 3];
            for &rate in rates {
                counts[classify(rate, low, high) as usize] += 1;
            }
            if counts.iter().any(|&c| c == 0) {
                continue;
            }
            let mean = counts.iter().sum::<usize>() as f64 / 3.0;
            let variance = counts
                .iter()
                .map(|&c| (c as f64 - mean).powi(2))
                .sum::<f64>()
                / 3.0;
            let candidate = (variance, low, high);
            let better = match best {
                None => true,
                Some((bv, bl, bh)) => {
                    (variance, low, high) < (bv, bl, bh)
                }
            };
            if better {
                best = Some(candidate);
            }
        }
    }
    let (_, low, high) = best.ok_or_else(|| {
        Error::InvalidArgument("no threshold pair yields three non-empty categories".into())
    })?;
    Ok(DisagreementLevels {
        low_threshold: low,
        high_threshold: high,
        level_of_item: rates.iter().map(|&r| classify(r, low, high)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema05() -> LabelSchema {
        LabelSchema::new(0, 4).unwrap()
    }

    #[test]
    fn rmse_basic_cases() {
        let r = rmse(&[1.0, 2.0], &[1.0, 4.0]).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(rmse(&[3.0, 1.0], &[3.0, 1.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn rmse_symmetric() {
        let p = [0.5, 2.0, 3.5];
        let t = [1.0, 1.0, 4.0];
        assert_eq!(rmse(&p, &t).unwrap(), rmse(&t, &p).unwrap());
    }

    #[test]
    fn weighted_f1_hand_case() {
        let f1 = weighted_f1(&[0, 1, 1], &[0, 0, 1], &schema05()).unwrap();
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_f1_perfect_and_total_miss() {
        let schema = schema05();
        assert_eq!(weighted_f1(&[2, 3, 2], &[2, 3, 2], &schema).unwrap(), 1.0);
        assert_eq!(weighted_f1(&[1, 1], &[0, 0], &schema).unwrap(), 0.0);
        assert!(weighted_f1(&[], &[], &schema).is_err());
    }

    #[test]
    fn weighted_f1_tolerates_out_of_schema_predictions() {
        // Reserved "invalid" class: predictions outside the schema count as
        // wrong for their expected class.
        let f1 = weighted_f1(&[-1, -1], &[0, 0], &schema05()).unwrap();
        assert_eq!(f1, 0.0);
        let err = weighted_f1(&[0, 0], &[-1, 0], &schema05());
        assert!(err.is_err());
    }

    #[test]
    fn levels_three_equal_groups() {
        let rates = [0.0, 0.0, 0.5, 0.5, 1.0, 1.0];
        let levels = assign_disagreement_levels(&rates).unwrap();
        assert_eq!(levels.low_threshold, 0.0);
        assert_eq!(levels.high_threshold, 1.0);
        assert_eq!(levels.count(DisagreementLevel::Low), 2);
        assert_eq!(levels.count(DisagreementLevel::Medium), 2);
        assert_eq!(levels.count(DisagreementLevel::High), 2);
    }

    #[test]
    fn levels_singleton_groups() {
        let levels = assign_disagreement_levels(&[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(
            levels.level_of_item,
            vec![
                DisagreementLevel::Low,
                DisagreementLevel::Medium,
                DisagreementLevel::High
            ]
        );
    }

    #[test]
    fn levels_need_three_distinct_rates() {
        assert!(matches!(
            assign_disagreement_levels(&[0.0, 0.0]).unwrap_err(),
            Error::TooFewDistinctRates(1)
        ));
        assert!(assign_disagreement_levels(&[]).is_err());
    }

    #[test]
    fn identical_rates_share_a_level() {
        let rates = [0.0, 0.1, 0.1, 0.1, 0.4, 0.4, 0.9];
        let levels = assign_disagreement_levels(&rates).unwrap();
        for (a, &ra) in rates.iter().enumerate() {
            for (b, &rb) in rates.iter().enumerate() {
                if ra == rb {
                    assert_eq!(levels.level_of_item[a], levels.level_of_item[b]);
                }
            }
        }
        assert!(levels.count(DisagreementLevel::Low) > 0);
        assert!(levels.count(DisagreementLevel::Medium) > 0);
        assert!(levels.count(DisagreementLevel::High) > 0);
    }
}

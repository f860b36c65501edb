//! Response parsing and condition-level scoring.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::weighted_f1;
use crate::prompt::shots::Condition;
use crate::schema::LabelSchema;

/// Strict response parse: after removing all whitespace, the remainder must
/// be exactly the decimal representation of a schema label. Anything else
/// is invalid (`None`), which scoring treats as a wrong prediction.
pub fn parse_response(raw: &str, schema: &LabelSchema) -> Option<i32> {
    let stripped: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
    schema
        .labels()
        .find(|label| stripped == label.to_string())
}

/// Identifies one evaluated prompt variant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VariantKey {
    pub condition: Condition,
    pub skeleton: String,
    pub version: String,
}

/// The winning prompt variant for one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionScore {
    pub best_f1: f64,
    pub best_skeleton: String,
    pub best_version: String,
}

/// Weighted F1 per (skeleton, version), reduced to the best variant per
/// condition.
///
/// Invalid (unparseable) responses score as a reserved class below the
/// schema minimum, so they always count as wrong rather than being dropped.
/// Ties resolve to the lexicographically first skeleton id, then version.
pub fn score_conditions(
    results: &BTreeMap<VariantKey, Vec<(Option<i32>, i32)>>,
    schema: &LabelSchema,
) -> Result<BTreeMap<Condition, ConditionScore>> {
    if results.is_empty() {
        return Err(Error::EmptyInput("no prompt results to score".into()));
    }
    let reserved_invalid = schema.min_label - 1;
    let mut best: BTreeMap<Condition, ConditionScore> = BTreeMap::new();
    for (key, outcomes) in results {
        if outcomes.is_empty() {
            return Err(Error::EmptyInput(format!(
                "no results for condition {} skeleton {} version {}",
                key.condition, key.skeleton, key.version
            )));
        }
        let predictions: Vec<i32> = outcomes
            .iter()
            .map(|(parsed, _)| parsed.unwrap_or(reserved_invalid))
            .collect();
        let truths: Vec<i32> = outcomes.iter().map(|&(_, truth)| truth).collect();
        let f1 = weighted_f1(&predictions, &truths, schema)?;
        // BTreeMap iteration is sorted, so a strict > keeps the first
        // (skeleton, version) among ties.
        match best.get(&key.condition) {
            Some(current) if f1 <= current.best_f1 => {}
            _ => {
                best.insert(
                    key.condition,
                    ConditionScore {
                        best_f1: f1,
                        best_skeleton: key.skeleton.clone(),
                        best_version: key.version.clone(),
                    },
                );
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema05() -> LabelSchema {
        LabelSchema::new(0, 4).unwrap()
    }

    #[test]
    fn parse_rules() {
        let schema = schema05();
        assert_eq!(parse_response(" 3 \n", &schema), Some(3));
        assert_eq!(parse_response("3.", &schema), None);
        assert_eq!(parse_response("The answer is 3", &schema), None);
        assert_eq!(parse_response("7", &schema), None);
        assert_eq!(parse_response("03", &schema), None);
        assert_eq!(parse_response("", &schema), None);
        // interior whitespace is removed before the exact match
        assert_eq!(parse_response("\t4\r\n", &schema), Some(4));

        let signed = LabelSchema::new(-2, 2).unwrap();
        assert_eq!(parse_response(" -2 ", &signed), Some(-2));
    }

    fn key(condition: Condition, skeleton: &str, version: &str) -> VariantKey {
        VariantKey {
            condition,
            skeleton: skeleton.into(),
            version: version.into(),
        }
    }

    #[test]
    fn perfect_parses_score_one() {
        let mut results = BTreeMap::new();
        results.insert(
            key(Condition::OriginalOnly, "s1", "v0"),
            vec![(Some(1), 1), (Some(2), 2), (Some(0), 0)],
        );
        let scores = score_conditions(&results, &schema05()).unwrap();
        assert_eq!(scores[&Condition::OriginalOnly].best_f1, 1.0);
    }

    #[test]
    fn best_variant_wins_per_condition() {
        let mut results = BTreeMap::new();
        // s1 gets 1 of 2 right within each class, s2 gets both
        results.insert(
            key(Condition::ImputedOnly, "s1", "v0"),
            vec![(Some(1), 1), (Some(0), 1)],
        );
        results.insert(
            key(Condition::ImputedOnly, "s2", "v0"),
            vec![(Some(1), 1), (Some(1), 1)],
        );
        let scores = score_conditions(&results, &schema05()).unwrap();
        let best = &scores[&Condition::ImputedOnly];
        assert_eq!(best.best_skeleton, "s2");
        assert_eq!(best.best_f1, 1.0);
    }

    #[test]
    fn all_invalid_scores_zero() {
        let mut results = BTreeMap::new();
        results.insert(
            key(Condition::Combined, "s1", "v0"),
            vec![(None, 1), (None, 2)],
        );
        let scores = score_conditions(&results, &schema05()).unwrap();
        assert_eq!(scores[&Condition::Combined].best_f1, 0.0);
    }

    #[test]
    fn ties_break_by_skeleton_then_version() {
        let mut results = BTreeMap::new();
        let outcomes = vec![(Some(1), 1), (Some(2), 2)];
        results.insert(key(Condition::Combined, "s2", "v0"), outcomes.clone());
        results.insert(key(Condition::Combined, "s1", "v1"), outcomes.clone());
        results.insert(key(Condition::Combined, "s1", "v0"), outcomes);
        let scores = score_conditions(&results, &schema05()).unwrap();
        let best = &scores[&Condition::Combined];
        assert_eq!(best.best_skeleton, "s1");
        assert_eq!(best.best_version, "v0");
    }

    #[test]
    fn empty_results_error() {
        let results: BTreeMap<VariantKey, Vec<(Option<i32>, i32)>> = BTreeMap::new();
        assert!(score_conditions(&results, &schema05()).is_err());
        let mut results = BTreeMap::new();
        results.insert(key(Condition::Combined, "s1", "v0"), vec![]);
        assert!(score_conditions(&results, &schema05()).is_err());
    }
}

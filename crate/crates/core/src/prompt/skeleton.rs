//! Prompt skeletons and their versioned filler options.
//!
//! A skeleton is a template whose `{placeholder}` slots are either filler
//! slots (header lines, instructions, closing words — addressed by a
//! version string) or data slots (example blocks, the target example, the
//! dataset description). A version string like `v4.-1.0.-1.1` selects one
//! option per filler slot in catalog order, 0-based; `-1` drops the slot
//! and the newline that followed it.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::shots::{Condition, Shot, ShotSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSkeleton {
    pub id: String,
    pub template: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillerSlot {
    pub name: String,
    pub options: Vec<String>,
}

/// The ordered filler slots a version string addresses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillerCatalog {
    pub slots: Vec<FillerSlot>,
}

impl FillerCatalog {
    pub fn slot(&self, name: &str) -> Option<&FillerSlot> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Parsed version string: one selection per filler slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptVersion(pub Vec<i32>);

impl PromptVersion {
    /// Parses `v<i>.<i>...` with one dot-separated integer per slot, each
    /// in `[-1, slot length)`.
    pub fn parse(version: &str, catalog: &FillerCatalog) -> Result<Self> {
        let body = version.strip_prefix('v').ok_or_else(|| Error::MalformedVersion {
            version: version.to_string(),
            reason: "missing leading 'v'".into(),
        })?;
        let parts: Vec<&str> = body.split('.').collect();
        if parts.len() != catalog.slots.len() {
            return Err(Error::MalformedVersion {
                version: version.to_string(),
                reason: format!(
                    "{} indices for {} filler slots",
                    parts.len(),
                    catalog.slots.len()
                ),
            });
        }
        let mut indices = Vec::with_capacity(parts.len());
        for (part, slot) in parts.iter().zip(&catalog.slots) {
            let idx: i32 = part.parse().map_err(|_| Error::MalformedVersion {
                version: version.to_string(),
                reason: format!("{part:?} is not an integer"),
            })?;
            if idx < -1 || idx >= slot.options.len() as i32 {
                return Err(Error::MalformedVersion {
                    version: version.to_string(),
                    reason: format!(
                        "index {idx} out of range for slot {:?} with {} options",
                        slot.name,
                        slot.options.len()
                    ),
                });
            }
            indices.push(idx);
        }
        Ok(PromptVersion(indices))
    }
}

enum Resolved {
    Text(String),
    Omit,
}

/// Fills a skeleton with selected fillers and data values.
///
/// Unknown placeholders are an error. Substituted values are inserted
/// verbatim; braces inside them are never re-expanded.
fn render(
    skeleton: &PromptSkeleton,
    resolve: impl Fn(&str) -> Option<Resolved>,
) -> Result<String> {
    let template = &skeleton.template;
    let mut out = String::with_capacity(template.len());
    let mut rest = template.as_str();
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or_else(|| {
            Error::UnknownPlaceholder("unclosed brace".into(), skeleton.id.clone())
        })?;
        let token = &after[..close];
        match resolve(token) {
            Some(Resolved::Text(text)) => {
                out.push_str(&text);
                rest = &after[close + 1..];
            }
            Some(Resolved::Omit) => {
                let tail = &after[close + 1..];
                rest = tail.strip_prefix('\n').unwrap_or(tail);
            }
            None => {
                return Err(Error::UnknownPlaceholder(
                    token.to_string(),
                    skeleton.id.clone(),
                ))
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Builds the prompt for a shot set: fillers come from `catalog[version]`,
/// data slots from the shots and the dataset description.
pub fn build_prompt(
    skeleton: &PromptSkeleton,
    catalog: &FillerCatalog,
    version: &str,
    shots: &ShotSet,
    dataset_description: &str,
) -> Result<String> {
    let mut data = BTreeMap::new();
    data.insert(
        "dataset_description".to_string(),
        dataset_description.to_string(),
    );
    data.insert(
        "orig_examples".to_string(),
        format_example_block(&shots.original_shots),
    );
    data.insert(
        "imputed_examples".to_string(),
        format_example_block(&shots.imputed_shots),
    );
    data.insert(
        "target_example".to_string(),
        format_target(&shots.held_out.text),
    );
    build_prompt_with_data(skeleton, catalog, version, &data)
}

/// [`build_prompt`] with caller-provided data slots, used by the templates
/// whose data is not a plain shot set (distributional labels, multiple
/// annotators, soft-label blocks).
pub fn build_prompt_with_data(
    skeleton: &PromptSkeleton,
    catalog: &FillerCatalog,
    version: &str,
    data: &BTreeMap<String, String>,
) -> Result<String> {
    let version = PromptVersion::parse(version, catalog)?;
    render(skeleton, |token| {
        if let Some(pos) = catalog.slots.iter().position(|s| s.name == token) {
            let idx = version.0[pos];
            if idx < 0 {
                return Some(Resolved::Omit);
            }
            return Some(Resolved::Text(
                catalog.slots[pos].options[idx as usize].clone(),
            ));
        }
        data.get(token).cloned().map(Resolved::Text)
    })
}

/// `Example k:` blocks, numbered from 1, separated by blank lines.
pub fn format_example_block(shots: &[Shot]) -> String {
    shots
        .iter()
        .enumerate()
        .map(|(idx, shot)| {
            format!(
                "Example {}:\nText: {}\nAnnotation from annotator: {}",
                idx + 1,
                shot.text,
                shot.label
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// The target block: text plus a trailing annotation line for the model to
/// complete.
pub fn format_target(text: &str) -> String {
    format!("Text: {text}\nAnnotation from annotator:")
}

/// Numbered `EXAMPLE:` / `ANSWER:` shot block used by the completion-style
/// templates.
pub fn format_numbered_block(shots: &[Shot]) -> String {
    shots
        .iter()
        .enumerate()
        .map(|(idx, shot)| format!("{}.\nEXAMPLE: {}\nANSWER: {}", idx + 1, shot.text, shot.label))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Target line for the completion-style templates.
pub fn format_target_line(text: &str) -> String {
    format!("EXAMPLE: {text}\nANSWER:")
}

/// Percentage-per-line rendering of a soft label, two decimals.
pub fn format_distribution_lines(probs: &[f64]) -> String {
    probs
        .iter()
        .map(|p| format!("{:.2}", p * 100.0))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The built-in filler catalog. The five slots are addressed by version
/// strings in this order.
pub fn builtin_fillers() -> FillerCatalog {
    let slot = |name: &str, options: &[&str]| FillerSlot {
        name: name.to_string(),
        options: options.iter().map(|o| o.to_string()).collect(),
    };
    FillerCatalog {
        slots: vec![
            slot(
                "orig_examples_header",
                &[
                    "Examples:",
                    "Human-rated Examples:",
                    "Original Examples:",
                    "Here are examples the annotator has labeled:",
                    "Examples from the dataset (there may not be any):",
                ],
            ),
            slot("imputed_examples_header", &["Estimated Examples:"]),
            slot("target_example_header", &["Target Example:"]),
            slot(
                "instructions",
                &[
                    "Make your best prediction for the target example.",
                    "Now you will make your prediction (if you are unsure, just give your best estimate.) Your output should be an integer label:",
                ],
            ),
            slot(
                "final_words",
                &[
                    "Your output should be a single integer corresponding to the label.",
                    "Your output should be a single integer and nothing else.",
                    "The only valid output is a single integer.",
                    "If you output anything other than a single integer, your output will be considered invalid.",
                    "If you output anything other than a single integer, your output will harm the integrity of our dataset.",
                    "If you output anything other than a single integer (and absolutely nothing else, including explanatory text), your output will invalidate the dataset.",
                    "If you output anything other than a single integer (and absolutely nothing else, including explanatory text), your output will invalidate the dataset. So, please only output a single integer.",
                ],
            ),
        ],
    }
}

/// The built-in skeleton set.
pub fn builtin_skeletons() -> Vec<PromptSkeleton> {
    let skel = |id: &str, template: &str| PromptSkeleton {
        id: id.to_string(),
        template: template.to_string(),
    };
    vec![
        skel(
            "chatgpt_original_1",
            "{dataset_description}\n\n{orig_examples_header}\n{orig_examples}\n\n{target_example_header}\n{target_example}\n{final_words}",
        ),
        skel(
            "chatgpt_original_2",
            "{dataset_description}\n\n{target_example_header}\n{target_example}\n{final_words}",
        ),
        skel(
            "chatgpt_original_3",
            "{dataset_description}\n\n{instructions}\n{target_example_header}\n{target_example}\n{final_words}",
        ),
        skel(
            "chatgpt_combined",
            "{imputed_examples_header}\n{imputed_examples}\n\n{orig_examples_header}\n{orig_examples}\n\n{target_example_header}\n{target_example}",
        ),
        skel("chatgpt_imputed_1", "{imputed_examples}\n\n{target_example}"),
        skel(
            "chatgpt_imputed_2",
            "{imputed_examples_header}\n{imputed_examples}\n\n{target_example_header}\n{target_example}",
        ),
        skel(
            "gpt3_distributional",
            "Here's a description of a dataset:\n{dataset_description}\n\nGiven the previous dataset description, your goal is to predict how one of the annotators of the previous dataset would annotate an example from that dataset. You will be given {n_shots} samples of how that particular annotator has responded to other examples and be shown the distributional label of how all annotators have annotated the target example, and will then complete the prediction for the target example as that annotator would.\n\nHere's the samples of how the particular annotator has responded to other examples:\n{shots}\n\nHere's how the distributional label of how all annotators have annotated the target example:\n{other_shots}\n\nHow would the particular annotator annotate the target example?\n{target_example_line}\nANSWER:",
        ),
        skel(
            "gpt3_individual",
            "Here's a description of a dataset:\n{dataset_description}\n\nGiven the previous dataset description, your goal is to predict how one of the annotators of the previous dataset would annotate an example from that dataset. You will be given {n_shots} samples of how that particular annotator has responded to other examples and {k_shots} sample of how others have annotated the target example, and will then complete the prediction for the target example as that annotator would.\n\nHere's the samples of how the particular annotator has responded to other examples:\n{shots}\n\nHere's the samples of how others have annotated the target example:\n{other_shots}\n\nHow would the particular annotator annotate the target example?\n{target_example_line}\nANSWER:",
        ),
        skel(
            "gpt3_majority",
            "Here's a description of a dataset:\n{dataset_description}\n\nGiven the previous dataset description, your goal is to predict how one of the annotators of the previous dataset would annotate an example from that dataset. You will be given {n_shots} samples of how that particular annotator has responded to other examples and be shown what the plurality of annotators gave as a label, and will then complete the prediction for the target example as that annotator would.\n\nHere's the samples of how the particular annotator has responded to other examples:\n{shots}\n\nHere's how the plurality of annotators labeled the target example:\n{other_shots}\n\nHow would the particular annotator annotate the target example?\n{target_example_line}\nANSWER:",
        ),
        skel("chatgpt_softlabel", "{soft_label_examples}\n{prediction_text}"),
        skel(
            "chatgpt_contextual_softlabel",
            "Here is a description of a dataset:\n{dataset_description}\n\nYour goal is to predict the soft label given by the raters on a particular text.\n\nHere are a few examples of texts and their soft label:\n{soft_label_examples}\n\nNow, you will make your prediction (if you are unsure, just give your best estimate):\n{prediction_text}",
        ),
        skel(
            "chatgpt_one_of_three",
            "Description of the dataset:\n{dataset_description}\n\nHow annotator A has labeled some examples:\n{annotator_A_examples}\n\nHow annotator B has labeled some examples:\n{annotator_B_examples}\n\nHow annotator C has labeled some examples:\n{annotator_C_examples}\n\nHow might annotator {target_annotator} label this example? Output the annotation that seems most likely.\n{target_example}",
        ),
    ]
}

/// The skeletons appropriate for each low-response prompting condition.
pub fn builtin_skeletons_for(condition: Condition) -> Vec<PromptSkeleton> {
    let ids: &[&str] = match condition {
        Condition::Combined => &["chatgpt_combined"],
        Condition::OriginalOnly => &[
            "chatgpt_original_1",
            "chatgpt_original_2",
            "chatgpt_original_3",
        ],
        Condition::ImputedOnly => &["chatgpt_imputed_1", "chatgpt_imputed_2"],
    };
    builtin_skeletons()
        .into_iter()
        .filter(|s| ids.contains(&s.id.as_str()))
        .collect()
}

/// Writes the skeleton list as a JSON file.
pub fn save_skeletons_json(skeletons: &[PromptSkeleton], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(skeletons)?)?;
    Ok(())
}

pub fn load_skeletons_json(path: impl AsRef<Path>) -> Result<Vec<PromptSkeleton>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

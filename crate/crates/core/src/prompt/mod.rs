//! Few-shot prompting apparatus: skeleton templates with versioned filler
//! options, low-response-annotator shot assembly, a replayable completion
//! client, strict response parsing, and condition scoring.

mod client;
mod score;
mod shots;
mod skeleton;

pub use client::{
    append_cache_records, prompt_hash, CompletionClient, CompletionMode, CompletionRecord,
    EndpointConfig,
};
pub use score::{parse_response, score_conditions, ConditionScore, VariantKey};
pub use shots::{
    assemble_shots, select_low_response_annotators, Condition, Shot, ShotSet, MAX_SHOTS,
};
pub use skeleton::{
    build_prompt, build_prompt_with_data, builtin_fillers, builtin_skeletons,
    builtin_skeletons_for, format_distribution_lines, format_example_block,
    format_numbered_block, format_target, format_target_line, load_skeletons_json,
    save_skeletons_json, FillerCatalog, FillerSlot, PromptSkeleton, PromptVersion,
};

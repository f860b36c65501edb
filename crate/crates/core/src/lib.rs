//! Imputation of missing annotations in sparse annotator x item label
//! matrices, analyses of how imputation changes the data, and few-shot
//! prompt generation for individualized annotation prediction.
//!
//! The crate is organized around [`matrix::AnnotationMatrix`], a sparse
//! N x M integer label matrix. Three engines fill in its missing cells:
//!
//! * [`kernel_mf`] — kernel matrix factorization trained by SGD,
//! * [`ncf`] — neural collaborative filtering (embeddings + MLP, Adam),
//! * [`multitask`] — per-annotator linear heads over a frozen text encoder
//!   trained with a masked cross-entropy loss.
//!
//! [`split`] and [`metrics`] provide the evaluation protocol (diverse
//! holdouts, k-folds, RMSE, weighted F1, disagreement levels); [`analysis`]
//! quantifies what imputation did to the data (PCA structure, variance and
//! disagreement deltas, soft-label KL divergence) and renders an HTML
//! report; [`prompt`] builds few-shot prompts for low-response annotators
//! and scores model completions against a replayable cache; [`synth`]
//! generates datasets with known low-rank ground truth for desk-scale
//! validation.

pub mod analysis;
pub mod error;
pub mod imputer;
pub mod kernel_mf;
pub mod matrix;
pub mod metrics;
pub mod multitask;
pub mod ncf;
pub mod prompt;
pub mod schema;
pub mod split;
pub mod synth;

pub use error::{Error, Result};
pub use imputer::{round_to_label, CompletedMatrix, Imputer};
pub use matrix::{load_dataset, save_dataset, AnnotationMatrix, Dataset, RowStats, SoftLabel};
pub use schema::LabelSchema;

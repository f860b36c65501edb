//! Synthetic annotator populations with known low-rank structure.
//!
//! The generator draws integer item factors in {0, 1} and annotator factors
//! in {0..span/rank}, so the noise-free label surface `shift + W H^T` is
//! exactly rank-`rank`, lands on integers, and stays inside the schema
//! range without clamping. Optional Gaussian noise is added before
//! rounding. The complete ground truth is kept alongside the sparse
//! observed matrix, which gives oracle targets for recovery experiments.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imputer::round_to_label;
use crate::matrix::{AnnotationMatrix, Dataset};
use crate::schema::LabelSchema;

const VOCAB: [&str; 48] = [
    "people", "should", "always", "never", "trust", "help", "friends", "family", "work",
    "money", "kind", "honest", "wrong", "good", "expect", "respect", "share", "keep",
    "promise", "time", "rude", "fair", "care", "about", "others", "their", "your", "life",
    "choices", "okay", "to", "be", "not", "want", "give", "take", "blame", "neighbors",
    "children", "partner", "advice", "secret", "apologize", "listen", "learn", "grow",
    "home", "together",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_items: usize,
    pub n_annotators: usize,
    pub rank: usize,
    /// Standard deviation of Gaussian label noise added before rounding.
    pub noise: f64,
    /// Probability that a cell is observed; empty rows get one forced cell.
    pub observed_fraction: f64,
    pub schema: LabelSchema,
    pub seed: u64,
}

/// A generated dataset plus its complete ground truth and the factors that
/// produced it.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub dataset: Dataset,
    /// Complete noisy integer labels; observed cells are a subset.
    pub truth_labels: Vec<Vec<i32>>,
    /// Noise-free real surface `shift + W H^T`, exactly rank `rank`.
    pub truth_raw: Vec<Vec<f64>>,
    pub item_factors: Vec<Vec<f64>>,
    pub annotator_factors: Vec<Vec<f64>>,
    pub shift: f64,
    pub config: SynthConfig,
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.schema.validate()?;
    if config.n_items == 0 || config.n_annotators == 0 {
        return Err(Error::InvalidArgument("empty synthetic matrix".into()));
    }
    if config.rank == 0 {
        return Err(Error::InvalidArgument("rank must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&config.observed_fraction) || config.observed_fraction == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "observed_fraction must be in (0, 1], got {}",
            config.observed_fraction
        )));
    }
    let span = config.schema.span() as i64;
    let factor_max = span / config.rank as i64;
    if factor_max == 0 {
        return Err(Error::InvalidArgument(format!(
            "rank {} exceeds the schema span {span}; labels would be constant",
            config.rank
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let item_factors: Vec<Vec<f64>> = (0..config.n_items)
        .map(|_| (0..config.rank).map(|_| f64::from(rng.gen_range(0..=1))).collect())
        .collect();
    let annotator_factors: Vec<Vec<f64>> = (0..config.n_annotators)
        .map(|_| {
            (0..config.rank)
                .map(|_| rng.gen_range(0..=factor_max) as f64)
                .collect()
        })
        .collect();
    let shift = f64::from(config.schema.min_label);

    let truth_raw: Vec<Vec<f64>> = item_factors
        .iter()
        .map(|w| {
            annotator_factors
                .iter()
                .map(|h| shift + w.iter().zip(h).map(|(a, b)| a * b).sum::<f64>())
                .collect()
        })
        .collect();

    let noise_dist = if config.noise > 0.0 {
        Some(Normal::new(0.0, config.noise).expect("valid noise sigma"))
    } else {
        None
    };
    let truth_labels: Vec<Vec<i32>> = truth_raw
        .iter()
        .map(|row| {
            row.iter()
                .map(|&raw| {
                    let noisy = match &noise_dist {
                        Some(dist) => raw + dist.sample(&mut rng),
                        None => raw,
                    };
                    round_to_label(noisy, &config.schema)
                })
                .collect()
        })
        .collect();

    let mut entries = Vec::new();
    for (i, row) in truth_labels.iter().enumerate() {
        let mut any = false;
        for (j, &label) in row.iter().enumerate() {
            if rng.gen_bool(config.observed_fraction) {
                entries.push((i, j, label));
                any = true;
            }
        }
        if !any {
            let j = rng.gen_range(0..config.n_annotators);
            entries.push((i, j, truth_labels[i][j]));
        }
    }

    let matrix = AnnotationMatrix::new(
        config.n_items,
        config.n_annotators,
        entries,
        config.schema.clone(),
    )?;
    let texts = (0..config.n_items)
        .map(|_| {
            let n_words = rng.gen_range(4..=9);
            (0..n_words)
                .map(|_| VOCAB[rng.gen_range(0..VOCAB.len())])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let dataset = Dataset::new(texts, matrix)?;

    Ok(SynthData {
        dataset,
        truth_labels,
        truth_raw,
        item_factors,
        annotator_factors,
        shift,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> SynthConfig {
        SynthConfig {
            n_items: 30,
            n_annotators: 10,
            rank: 2,
            noise: 0.0,
            observed_fraction: 0.4,
            schema: LabelSchema::new(0, 4).unwrap(),
            seed: 42,
        }
    }

    #[test]
    fn ground_truth_is_exactly_the_factor_product() {
        let data = generate(&config()).unwrap();
        for i in 0..30 {
            for j in 0..10 {
                let product: f64 = data.item_factors[i]
                    .iter()
                    .zip(&data.annotator_factors[j])
                    .map(|(a, b)| a * b)
                    .sum();
                assert_eq!(data.truth_raw[i][j], data.shift + product);
                // zero noise: labels equal the raw surface exactly
                assert_eq!(f64::from(data.truth_labels[i][j]), data.truth_raw[i][j]);
            }
        }
    }

    #[test]
    fn observed_cells_match_ground_truth() {
        let data = generate(&config()).unwrap();
        for (i, j, label) in data.dataset.matrix.cells() {
            assert_eq!(label, data.truth_labels[i][j]);
        }
        // every row kept at least one annotation
        for i in 0..30 {
            assert!(data.dataset.matrix.row(i).next().is_some());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&config()).unwrap();
        let b = generate(&config()).unwrap();
        assert_eq!(a.dataset.matrix, b.dataset.matrix);
        assert_eq!(a.dataset.texts, b.dataset.texts);
        assert_eq!(a.truth_labels, b.truth_labels);
    }

    #[test]
    fn labels_stay_in_schema_with_noise() {
        let mut cfg = config();
        cfg.noise = 1.5;
        let data = generate(&cfg).unwrap();
        for row in &data.truth_labels {
            for &label in row {
                assert!(cfg.schema.contains(label));
            }
        }
    }

    #[test]
    fn oversized_rank_is_rejected() {
        let mut cfg = config();
        cfg.rank = 5;
        assert!(generate(&cfg).is_err());
    }
}

//! Kernel matrix factorization: latent vectors per item and per annotator
//! combined through a kernel, trained by SGD on the observed cells.
//!
//! The prediction for cell (i, j) is `a + c * K(w_i, h_j)`. For the linear
//! kernel, `a` and `c` are trainable scalars (initialized to the global mean
//! label and 1). For the bounded rbf and sigmoid kernels they are fixed at
//! `min_label` and `max_label - min_label`, so the kernel's [0, 1] output
//! spans the label range.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imputer::{check_dimensions, complete_with, round_to_label, CompletedMatrix, Imputer};
use crate::matrix::{AnnotationMatrix, Dataset};
use crate::schema::LabelSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
    Sigmoid,
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            KernelKind::Linear => "linear",
            KernelKind::Rbf => "rbf",
            KernelKind::Sigmoid => "sigmoid",
        };
        f.write_str(name)
    }
}

/// Kernel width setting; `Auto` resolves to `1 / factors`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaSetting {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMFHyper {
    pub factors: usize,
    pub epochs: usize,
    pub kernel: KernelKind,
    pub gamma: GammaSetting,
    pub regularization: f64,
    pub learning_rate: f64,
    pub init_mean: f64,
    pub init_std: f64,
    pub seed: u64,
}

impl KernelMFHyper {
    pub fn new(factors: usize, epochs: usize, kernel: KernelKind) -> Self {
        KernelMFHyper {
            factors,
            epochs,
            kernel,
            gamma: GammaSetting::Auto,
            regularization: 0.01,
            learning_rate: 0.01,
            init_mean: 0.0,
            init_std: 0.1,
            seed: 42,
        }
    }

    pub fn gamma_value(&self) -> f64 {
        match self.gamma {
            GammaSetting::Auto => 1.0 / self.factors as f64,
            GammaSetting::Fixed(g) => g,
        }
    }

    /// The full search grid: factors x epochs x kernels x regularization x
    /// learning rate x two seeds.
    pub fn full_grid() -> Vec<KernelMFHyper> {
        let mut grid = Vec::new();
        for &factors in &[1, 2, 4, 8, 16, 32] {
            for &epochs in &[1, 2, 4, 8, 16, 32, 64, 128, 256] {
                for &kernel in &[KernelKind::Linear, KernelKind::Rbf, KernelKind::Sigmoid] {
                    for &regularization in &[0.1, 0.01, 0.001] {
                        for &learning_rate in &[0.01, 0.001, 0.0001] {
                            for &seed in &[42u64, 85] {
                                grid.push(KernelMFHyper {
                                    factors,
                                    epochs,
                                    kernel,
                                    gamma: GammaSetting::Auto,
                                    regularization,
                                    learning_rate,
                                    init_mean: 0.0,
                                    init_std: 0.1,
                                    seed,
                                });
                            }
                        }
                    }
                }
            }
        }
        grid
    }

    /// A desk-scale grid for quick runs: two factor counts, linear kernel.
    pub fn small_grid() -> Vec<KernelMFHyper> {
        [2, 8]
            .iter()
            .map(|&factors| KernelMFHyper {
                factors,
                epochs: 64,
                kernel: KernelKind::Linear,
                gamma: GammaSetting::Auto,
                regularization: 0.01,
                learning_rate: 0.01,
                init_mean: 0.0,
                init_std: 0.1,
                seed: 42,
            })
            .collect()
    }
}

/// Gradient of the per-cell objective with respect to the cell's parameters.
#[derive(Debug, Clone)]
pub struct CellGradient {
    pub d_item: Vec<f64>,
    pub d_annotator: Vec<f64>,
    pub d_bias: f64,
    pub d_scale: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn kernel_value(kernel: KernelKind, gamma: f64, w: &[f64], h: &[f64]) -> f64 {
    match kernel {
        KernelKind::Linear => dot(w, h),
        KernelKind::Rbf => {
            let sq_dist: f64 = w.iter().zip(h).map(|(x, y)| (x - y).powi(2)).sum();
            (-gamma * sq_dist).exp()
        }
        KernelKind::Sigmoid => {
            let z = gamma * dot(w, h);
            1.0 / (1.0 + (-z).exp())
        }
    }
}

/// Raw prediction `a + c * K(w, h)`.
pub fn cell_prediction(
    kernel: KernelKind,
    gamma: f64,
    w: &[f64],
    h: &[f64],
    bias: f64,
    scale: f64,
) -> f64 {
    bias + scale * kernel_value(kernel, gamma, w, h)
}

/// Per-cell training objective `(pred - label)^2 + reg * (|w|^2 + |h|^2)`.
pub fn cell_objective(
    kernel: KernelKind,
    gamma: f64,
    reg: f64,
    w: &[f64],
    h: &[f64],
    bias: f64,
    scale: f64,
    label: f64,
) -> f64 {
    let err = cell_prediction(kernel, gamma, w, h, bias, scale) - label;
    err * err + reg * (dot(w, w) + dot(h, h))
}

/// Analytic gradient of [`cell_objective`]. `d_bias` and `d_scale` are the
/// objective's derivatives whether or not the kernel trains them.
pub fn cell_gradient(
    kernel: KernelKind,
    gamma: f64,
    reg: f64,
    w: &[f64],
    h: &[f64],
    bias: f64,
    scale: f64,
    label: f64,
) -> CellGradient {
    let k = kernel_value(kernel, gamma, w, h);
    let err = bias + scale * k - label;
    let coeff = 2.0 * err * scale;
    let mut d_item = vec![0.0; w.len()];
    let mut d_annotator = vec![0.0; h.len()];
    match kernel {
        KernelKind::Linear => {
            for idx in 0..w.len() {
                d_item[idx] = coeff * h[idx] + 2.0 * reg * w[idx];
                d_annotator[idx] = coeff * w[idx] + 2.0 * reg * h[idx];
            }
        }
        KernelKind::Rbf => {
            for idx in 0..w.len() {
                let dk = -2.0 * gamma * (w[idx] - h[idx]) * k;
                d_item[idx] = coeff * dk + 2.0 * reg * w[idx];
                d_annotator[idx] = -coeff * dk + 2.0 * reg * h[idx];
            }
        }
        KernelKind::Sigmoid => {
            let sig_grad = k * (1.0 - k) * gamma;
            for idx in 0..w.len() {
                d_item[idx] = coeff * sig_grad * h[idx] + 2.0 * reg * w[idx];
                d_annotator[idx] = coeff * sig_grad * w[idx] + 2.0 * reg * h[idx];
            }
        }
    }
    CellGradient {
        d_item,
        d_annotator,
        d_bias: 2.0 * err,
        d_scale: 2.0 * err * k,
    }
}

/// Trained kernel matrix factorization parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelMFModel {
    pub n_items: usize,
    pub n_annotators: usize,
    /// N×k item factors, row-major.
    pub item_factors: Vec<f64>,
    /// M×k annotator factors, row-major.
    pub annotator_factors: Vec<f64>,
    pub bias: f64,
    pub scale: f64,
    pub hyper: KernelMFHyper,
    pub schema: LabelSchema,
    /// Mean squared training error recorded at each epoch.
    pub epoch_losses: Vec<f64>,
}

impl KernelMFModel {
    fn item_row(&self, item: usize) -> &[f64] {
        let k = self.hyper.factors;
        &self.item_factors[item * k..(item + 1) * k]
    }

    fn annotator_row(&self, annotator: usize) -> &[f64] {
        let k = self.hyper.factors;
        &self.annotator_factors[annotator * k..(annotator + 1) * k]
    }

    /// Raw unclamped prediction for one cell.
    pub fn predict(&self, item: usize, annotator: usize) -> Result<f64> {
        if item >= self.n_items || annotator >= self.n_annotators {
            return Err(Error::IndexOutOfRange(format!(
                "cell ({item}, {annotator}) outside {}x{} model",
                self.n_items, self.n_annotators
            )));
        }
        Ok(cell_prediction(
            self.hyper.kernel,
            self.hyper.gamma_value(),
            self.item_row(item),
            self.annotator_row(annotator),
            self.bias,
            self.scale,
        ))
    }

    /// Fills every missing cell; observed cells pass through.
    pub fn impute(&self, train: &AnnotationMatrix) -> Result<CompletedMatrix> {
        check_dimensions(train, self.n_items, self.n_annotators, "kernel MF model")?;
        let schema = train.schema().clone();
        Ok(complete_with(train, |i, j| {
            let raw = cell_prediction(
                self.hyper.kernel,
                self.hyper.gamma_value(),
                self.item_row(i),
                self.annotator_row(j),
                self.bias,
                self.scale,
            );
            (raw, round_to_label(raw, &schema))
        }))
    }

    pub fn save_json(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let envelope = serde_json::json!({
            "format_version": 1,
            "model": "kernel_mf",
            "data": self,
        });
        std::fs::write(path, serde_json::to_string(&envelope)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let envelope: serde_json::Value = serde_json::from_str(&text)?;
        Ok(serde_json::from_value(envelope["data"].clone())?)
    }
}

impl Imputer for KernelMFModel {
    fn name(&self) -> &'static str {
        "kernel"
    }

    fn complete(&self, dataset: &Dataset) -> Result<CompletedMatrix> {
        self.impute(&dataset.matrix)
    }
}

/// Trains one model by SGD over the observed cells.
///
/// Parameters are drawn from a seeded normal distribution, cells are visited
/// in a fresh seeded random order each epoch, and each visit applies the
/// exact gradient of the per-cell objective.
pub fn train(train: &AnnotationMatrix, hyper: &KernelMFHyper) -> Result<KernelMFModel> {
    if train.n_cells() == 0 {
        return Err(Error::EmptyInput("kernel MF training matrix is empty".into()));
    }
    if hyper.factors == 0 {
        return Err(Error::InvalidArgument("factors must be >= 1".into()));
    }
    let schema = train.schema().clone();
    let k = hyper.factors;
    let gamma = hyper.gamma_value();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let normal = Normal::new(hyper.init_mean, hyper.init_std.max(0.0))
        .map_err(|e| Error::InvalidArgument(format!("bad init distribution: {e}")))?;

    let mut item_factors: Vec<f64> = (0..train.n_items() * k)
        .map(|_| normal.sample(&mut rng))
        .collect();
    let mut annotator_factors: Vec<f64> = (0..train.n_annotators() * k)
        .map(|_| normal.sample(&mut rng))
        .collect();
    let (mut bias, mut scale, train_bias) = match hyper.kernel {
        KernelKind::Linear => (train.global_mean(), 1.0, true),
        _ => (f64::from(schema.min_label), schema.span(), false),
    };

    let mut cells: Vec<(usize, usize, f64)> = train
        .cells()
        .map(|(i, j, label)| (i, j, f64::from(label)))
        .collect();
    let lr = hyper.learning_rate;
    let reg = hyper.regularization;
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);

    for epoch in 0..hyper.epochs {
        use rand::seq::SliceRandom;
        cells.shuffle(&mut rng);
        let mut squared_error = 0.0;
        for &(i, j, label) in &cells {
            let (w_range, h_range) = (i * k..(i + 1) * k, j * k..(j + 1) * k);
            let grad = cell_gradient(
                hyper.kernel,
                gamma,
                reg,
                &item_factors[w_range.clone()],
                &annotator_factors[h_range.clone()],
                bias,
                scale,
                label,
            );
            let err = grad.d_bias / 2.0;
            squared_error += err * err;
            for (slot, d) in item_factors[w_range].iter_mut().zip(&grad.d_item) {
                *slot -= lr * d;
            }
            for (slot, d) in annotator_factors[h_range].iter_mut().zip(&grad.d_annotator) {
                *slot -= lr * d;
            }
            if train_bias {
                bias -= lr * grad.d_bias;
                scale -= lr * grad.d_scale;
            }
        }
        let epoch_loss = squared_error / cells.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                hyper: format!("{hyper:?}"),
            });
        }
        epoch_losses.push(epoch_loss);
    }

    let finite = item_factors.iter().all(|v| v.is_finite())
        && annotator_factors.iter().all(|v| v.is_finite())
        && bias.is_finite()
        && scale.is_finite();
    if !finite {
        return Err(Error::NonFiniteLoss {
            epoch: hyper.epochs,
            hyper: format!("{hyper:?}"),
        });
    }

    Ok(KernelMFModel {
        n_items: train.n_items(),
        n_annotators: train.n_annotators(),
        item_factors,
        annotator_factors,
        bias,
        scale,
        hyper: hyper.clone(),
        schema,
        epoch_losses,
    })
}

/// Trains every grid combination against a 5% diverse validation holdout
/// and returns the hyperparameters with the lowest validation RMSE.
///
/// Failed combinations are skipped with a warning; ties break by grid
/// order. Combinations train in parallel, but selection is deterministic.
pub fn grid_search(
    matrix: &AnnotationMatrix,
    grid: &[KernelMFHyper],
    seed: u64,
) -> Result<(KernelMFHyper, f64)> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("kernel MF grid is empty".into()));
    }
    let split = crate::split::make_holdout(matrix, 0.05, seed)?;
    let truths: Vec<f64> = split
        .heldout_cells
        .iter()
        .map(|&(_, _, label)| f64::from(label))
        .collect();

    let scored: Vec<Option<f64>> = grid
        .par_iter()
        .map(|hyper| match train(&split.train, hyper) {
            Ok(model) => {
                let preds: Vec<f64> = split
                    .heldout_cells
                    .iter()
                    .map(|&(i, j, _)| model.predict(i, j).expect("heldout cell in range"))
                    .collect();
                match crate::metrics::rmse(&preds, &truths) {
                    Ok(score) if score.is_finite() => Some(score),
                    _ => None,
                }
            }
            Err(e) => {
                log::warn!("kernel MF grid combination failed ({e}); skipping");
                None
            }
        })
        .collect();

    let best = scored
        .iter()
        .enumerate()
        .filter_map(|(idx, score)| score.map(|s| (idx, s)))
        .min_by(|(ia, sa), (ib, sb)| sa.partial_cmp(sb).unwrap().then(ia.cmp(ib)))
        .ok_or(Error::AllCombosFailed(grid.len()))?;
    Ok((grid[best.0].clone(), best.1))
}

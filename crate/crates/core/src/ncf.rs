//! Neural collaborative filtering: item and annotator embeddings fed
//! through a small MLP trained as a regressor on the observed cells.
//!
//! The network concatenates the two embeddings (length 2f), applies two
//! ReLU hidden layers of sizes f and f/2, and maps the scalar output into
//! the label range with `min + span * sigmoid(z)`, so predictions always
//! stay inside the schema. All parameters live in one flat vector, which
//! keeps the optimizer generic and gradient checks direct.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imputer::{check_dimensions, complete_with, round_to_label, CompletedMatrix, Imputer};
use crate::matrix::{AnnotationMatrix, Dataset};
use crate::schema::LabelSchema;

const BATCH_SIZE: usize = 256;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NCFHyper {
    pub factors: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl NCFHyper {
    pub fn new(factors: usize, learning_rate: f64, epochs: usize, seed: u64) -> Self {
        NCFHyper {
            factors,
            learning_rate,
            epochs,
            seed,
        }
    }

    /// The full search grid: six factor counts by four learning rates.
    /// Epochs are a fixed run setting, not a grid axis.
    pub fn full_grid(epochs: usize, seed: u64) -> Vec<NCFHyper> {
        let mut grid = Vec::new();
        for &factors in &[4, 8, 16, 32, 64, 128] {
            for &learning_rate in &[0.001, 0.0005, 0.0001, 0.00005] {
                grid.push(NCFHyper::new(factors, learning_rate, epochs, seed));
            }
        }
        grid
    }

    pub fn small_grid(epochs: usize, seed: u64) -> Vec<NCFHyper> {
        vec![
            NCFHyper::new(8, 0.001, epochs, seed),
            NCFHyper::new(16, 0.001, epochs, seed),
        ]
    }
}

/// Shapes of the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NCFDims {
    pub n_items: usize,
    pub n_annotators: usize,
    pub factors: usize,
}

impl NCFDims {
    fn h1(&self) -> usize {
        self.factors
    }

    fn h2(&self) -> usize {
        self.factors / 2
    }

    fn item_emb(&self) -> usize {
        0
    }

    fn annot_emb(&self) -> usize {
        self.item_emb() + self.n_items * self.factors
    }

    fn w1(&self) -> usize {
        self.annot_emb() + self.n_annotators * self.factors
    }

    fn b1(&self) -> usize {
        self.w1() + self.h1() * 2 * self.factors
    }

    fn w2(&self) -> usize {
        self.b1() + self.h1()
    }

    fn b2(&self) -> usize {
        self.w2() + self.h2() * self.h1()
    }

    fn w3(&self) -> usize {
        self.b2() + self.h2()
    }

    fn b3(&self) -> usize {
        self.w3() + self.h2()
    }

    pub fn n_params(&self) -> usize {
        self.b3() + 1
    }
}

/// The flat parameter vector plus everything needed to run the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NCFParams {
    pub dims: NCFDims,
    pub min_label: f64,
    pub span: f64,
    pub theta: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl NCFParams {
    /// Forward pass for one cell; returns the bounded prediction.
    pub fn forward(&self, item: usize, annotator: usize) -> f64 {
        self.forward_trace(item, annotator).pred
    }

    fn forward_trace(&self, item: usize, annotator: usize) -> ForwardTrace {
        let d = &self.dims;
        let f = d.factors;
        let t = &self.theta;
        let item_emb = &t[d.item_emb() + item * f..d.item_emb() + (item + 1) * f];
        let annot_emb = &t[d.annot_emb() + annotator * f..d.annot_emb() + (annotator + 1) * f];
        let mut x = Vec::with_capacity(2 * f);
        x.extend_from_slice(item_emb);
        x.extend_from_slice(annot_emb);

        let mut z1 = vec![0.0; d.h1()];
        for (row, z) in z1.iter_mut().enumerate() {
            let w = &t[d.w1() + row * 2 * f..d.w1() + (row + 1) * 2 * f];
            *z = dot(w, &x) + t[d.b1() + row];
        }
        let h1: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();

        let mut z2 = vec![0.0; d.h2()];
        for (row, z) in z2.iter_mut().enumerate() {
            let w = &t[d.w2() + row * d.h1()..d.w2() + (row + 1) * d.h1()];
            *z = dot(w, &h1) + t[d.b2() + row];
        }
        let h2: Vec<f64> = z2.iter().map(|&z| z.max(0.0)).collect();

        let z3 = dot(&t[d.w3()..d.w3() + d.h2()], &h2) + t[d.b3()];
        let pred = self.min_label + self.span * sigmoid(z3);
        ForwardTrace {
            x,
            z1,
            h1,
            z2,
            h2,
            z3,
            pred,
        }
    }
}

struct ForwardTrace {
    x: Vec<f64>,
    z1: Vec<f64>,
    h1: Vec<f64>,
    z2: Vec<f64>,
    h2: Vec<f64>,
    z3: f64,
    pred: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean squared error of the network over a set of labeled cells.
pub fn loss_on_cells(params: &NCFParams, cells: &[(usize, usize, f64)]) -> f64 {
    let sum: f64 = cells
        .iter()
        .map(|&(i, j, y)| {
            let err = params.forward(i, j) - y;
            err * err
        })
        .sum();
    sum / cells.len() as f64
}

/// Gradient of [`loss_on_cells`] with respect to every parameter,
/// accumulated by backpropagation.
pub fn gradient_on_cells(params: &NCFParams, cells: &[(usize, usize, f64)]) -> Vec<f64> {
    let d = &params.dims;
    let f = d.factors;
    let t = &params.theta;
    let mut grad = vec![0.0; d.n_params()];
    let scale = 2.0 / cells.len() as f64;

    for &(item, annotator, y) in cells {
        let trace = params.forward_trace(item, annotator);
        let dpred = scale * (trace.pred - y);
        let sig = sigmoid(trace.z3);
        let dz3 = dpred * params.span * sig * (1.0 - sig);

        grad[d.b3()] += dz3;
        let mut dh2 = vec![0.0; d.h2()];
        for idx in 0..d.h2() {
            grad[d.w3() + idx] += dz3 * trace.h2[idx];
            dh2[idx] = dz3 * t[d.w3() + idx];
        }

        let mut dh1 = vec![0.0; d.h1()];
        for row in 0..d.h2() {
            if trace.z2[row] <= 0.0 {
                continue;
            }
            let dz2 = dh2[row];
            grad[d.b2() + row] += dz2;
            let w_off = d.w2() + row * d.h1();
            for col in 0..d.h1() {
                grad[w_off + col] += dz2 * trace.h1[col];
                dh1[col] += dz2 * t[w_off + col];
            }
        }

        let mut dx = vec![0.0; 2 * f];
        for row in 0..d.h1() {
            if trace.z1[row] <= 0.0 {
                continue;
            }
            let dz1 = dh1[row];
            grad[d.b1() + row] += dz1;
            let w_off = d.w1() + row * 2 * f;
            for col in 0..2 * f {
                grad[w_off + col] += dz1 * trace.x[col];
                dx[col] += dz1 * t[w_off + col];
            }
        }

        let item_off = d.item_emb() + item * f;
        let annot_off = d.annot_emb() + annotator * f;
        for idx in 0..f {
            grad[item_off + idx] += dx[idx];
            grad[annot_off + idx] += dx[f + idx];
        }
    }
    grad
}

/// Trained NCF model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NCFModel {
    pub params: NCFParams,
    pub hyper: NCFHyper,
    pub schema: LabelSchema,
    pub epoch_losses: Vec<f64>,
}

impl NCFModel {
    /// Bounded prediction for one cell.
    pub fn predict(&self, item: usize, annotator: usize) -> Result<f64> {
        let d = &self.params.dims;
        if item >= d.n_items || annotator >= d.n_annotators {
            return Err(Error::IndexOutOfRange(format!(
                "cell ({item}, {annotator}) outside {}x{} model",
                d.n_items, d.n_annotators
            )));
        }
        Ok(self.params.forward(item, annotator))
    }

    pub fn impute(&self, train: &AnnotationMatrix) -> Result<CompletedMatrix> {
        let d = &self.params.dims;
        check_dimensions(train, d.n_items, d.n_annotators, "NCF model")?;
        let schema = train.schema().clone();
        Ok(complete_with(train, |i, j| {
            let raw = self.params.forward(i, j);
            (raw, round_to_label(raw, &schema))
        }))
    }

    pub fn save_json(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let envelope = serde_json::json!({
            "format_version": 1,
            "model": "ncf",
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

impl Imputer for NCFModel {
    fn name(&self) -> &'static str {
        "ncf"
    }

    fn complete(&self, dataset: &Dataset) -> Result<CompletedMatrix> {
        self.impute(&dataset.matrix)
    }
}

/// Trains embeddings and MLP jointly with Adam over mini-batches of 256
/// seeded-shuffled cells.
pub fn train(train: &AnnotationMatrix, hyper: &NCFHyper) -> Result<NCFModel> {
    if train.n_cells() == 0 {
        return Err(Error::EmptyInput("NCF training matrix is empty".into()));
    }
    if hyper.factors < 2 || hyper.factors % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "NCF factors must be even and >= 2, got {}",
            hyper.factors
        )));
    }
    let schema = train.schema().clone();
    let dims = NCFDims {
        n_items: train.n_items(),
        n_annotators: train.n_annotators(),
        factors: hyper.factors,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    // Embeddings start at N(0, 0.1). The MLP uses fan-in-scaled weights and
    // zero biases: at 0.1 the layer biases drown the input signal and whole
    // ReLU units die with exactly zero gradient, which stalls training on
    // plateaus no amount of epochs escapes.
    let f = hyper.factors;
    let emb = Normal::new(0.0, 0.1).expect("valid distribution");
    let w1 = Normal::new(0.0, (2.0 / (2 * f) as f64).sqrt()).expect("valid distribution");
    let w2 = Normal::new(0.0, (2.0 / f as f64).sqrt()).expect("valid distribution");
    let w3 = Normal::new(0.0, (2.0 / (f / 2) as f64).sqrt()).expect("valid distribution");
    let mut theta = Vec::with_capacity(dims.n_params());
    for _ in 0..(dims.n_items + dims.n_annotators) * f {
        theta.push(emb.sample(&mut rng));
    }
    theta.extend((0..f * 2 * f).map(|_| w1.sample(&mut rng)));
    theta.extend(std::iter::repeat(0.0).take(f));
    theta.extend((0..(f / 2) * f).map(|_| w2.sample(&mut rng)));
    theta.extend(std::iter::repeat(0.0).take(f / 2));
    theta.extend((0..f / 2).map(|_| w3.sample(&mut rng)));
    theta.push(0.0);
    let mut params = NCFParams {
        dims,
        min_label: f64::from(schema.min_label),
        span: schema.span(),
        theta,
    };

    let mut cells: Vec<(usize, usize, f64)> = train
        .cells()
        .map(|(i, j, label)| (i, j, f64::from(label)))
        .collect();

    let mut adam_m = vec![0.0; params.theta.len()];
    let mut adam_v = vec![0.0; params.theta.len()];
    let mut step = 0usize;
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);

    for epoch in 0..hyper.epochs {
        cells.shuffle(&mut rng);
        let mut weighted_loss = 0.0;
        for batch in cells.chunks(BATCH_SIZE) {
            let batch_loss = loss_on_cells(&params, batch);
            weighted_loss += batch_loss * batch.len() as f64;
            let grad = gradient_on_cells(&params, batch);
            step += 1;
            let bias1 = 1.0 - ADAM_BETA1.powi(step as i32);
            let bias2 = 1.0 - ADAM_BETA2.powi(step as i32);
            for idx in 0..params.theta.len() {
                adam_m[idx] = ADAM_BETA1 * adam_m[idx] + (1.0 - ADAM_BETA1) * grad[idx];
                adam_v[idx] = ADAM_BETA2 * adam_v[idx] + (1.0 - ADAM_BETA2) * grad[idx] * grad[idx];
                let m_hat = adam_m[idx] / bias1;
                let v_hat = adam_v[idx] / bias2;
                params.theta[idx] -= hyper.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
        let epoch_loss = weighted_loss / cells.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                hyper: format!("{hyper:?}"),
            });
        }
        epoch_losses.push(epoch_loss);
    }

    if !params.theta.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteLoss {
            epoch: hyper.epochs,
            hyper: format!("{hyper:?}"),
        });
    }

    Ok(NCFModel {
        params,
        hyper: hyper.clone(),
        schema,
        epoch_losses,
    })
}

/// Trains every combination on the full matrix and selects by the lowest
/// RMSE on the training cells themselves (no held-out validation split).
pub fn grid_search(
    matrix: &AnnotationMatrix,
    grid: &[NCFHyper],
) -> Result<(NCFHyper, f64)> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("NCF grid is empty".into()));
    }
    let cells: Vec<(usize, usize, f64)> = matrix
        .cells()
        .map(|(i, j, label)| (i, j, f64::from(label)))
        .collect();
    let truths: Vec<f64> = cells.iter().map(|&(_, _, y)| y).collect();

    let scored: Vec<Option<f64>> = grid
        .par_iter()
        .map(|hyper| match train(matrix, hyper) {
            Ok(model) => {
                let preds: Vec<f64> = cells
                    .iter()
                    .map(|&(i, j, _)| model.params.forward(i, j))
                    .collect();
                match crate::metrics::rmse(&preds, &truths) {
                    Ok(score) if score.is_finite() => Some(score),
                    _ => None,
                }
            }
            Err(e) => {
                log::warn!("NCF grid combination failed ({e}); skipping");
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

#[cfg(test)]
mod tests {
    use super::*;

    fn schema05() -> LabelSchema {
        LabelSchema::new(0, 4).unwrap()
    }

    fn toy_matrix() -> AnnotationMatrix {
        // 5x5 with 20 observed cells (diagonal left out)
        let entries = (0..5).flat_map(|i| {
            (0..5)
                .filter(move |&j| j != i)
                .map(move |j| (i, j, ((2 * i + 3 * j) % 5) as i32))
        });
        AnnotationMatrix::new(5, 5, entries, schema05()).unwrap()
    }

    #[test]
    fn memorizes_small_matrix() {
        let matrix = toy_matrix();
        let hyper = NCFHyper::new(8, 0.005, 4000, 7);
        let model = train(&matrix, &hyper).unwrap();
        let (preds, truths): (Vec<f64>, Vec<f64>) = matrix
            .cells()
            .map(|(i, j, label)| (model.predict(i, j).unwrap(), f64::from(label)))
            .unzip();
        let train_rmse = crate::metrics::rmse(&preds, &truths).unwrap();
        assert!(train_rmse < 0.05, "train RMSE {train_rmse} too high");
    }

    #[test]
    fn zero_epochs_stays_in_range() {
        let matrix = toy_matrix();
        let model = train(&matrix, &NCFHyper::new(4, 0.001, 0, 3)).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let pred = model.predict(i, j).unwrap();
                assert!((0.0..=4.0).contains(&pred));
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let matrix = toy_matrix();
        let hyper = NCFHyper::new(4, 0.001, 20, 11);
        let a = train(&matrix, &hyper).unwrap();
        let b = train(&matrix, &hyper).unwrap();
        assert_eq!(a.params.theta, b.params.theta);
    }

    #[test]
    fn zero_network_predicts_midpoint() {
        let dims = NCFDims {
            n_items: 2,
            n_annotators: 2,
            factors: 4,
        };
        let params = NCFParams {
            dims,
            min_label: 0.0,
            span: 4.0,
            theta: vec![0.0; dims.n_params()],
        };
        assert!((params.forward(0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unused_annotator_embedding_is_local() {
        let matrix = toy_matrix();
        let model = train(&matrix, &NCFHyper::new(4, 0.001, 5, 2)).unwrap();
        let mut perturbed = model.clone();
        let d = perturbed.params.dims;
        // annotator 4's embedding
        let off = d.annot_emb() + 4 * d.factors;
        for idx in 0..d.factors {
            perturbed.params.theta[off + idx] += 10.0;
        }
        for i in 0..5 {
            for j in 0..4 {
                assert_eq!(
                    model.predict(i, j).unwrap(),
                    perturbed.predict(i, j).unwrap()
                );
            }
        }
        let any_changed = (0..5).any(|i| {
            model.predict(i, 4).unwrap() != perturbed.predict(i, 4).unwrap()
        });
        assert!(any_changed);
    }

    #[test]
    fn rejects_odd_factors() {
        let matrix = toy_matrix();
        assert!(train(&matrix, &NCFHyper::new(5, 0.001, 1, 1)).is_err());
        assert!(train(&matrix, &NCFHyper::new(0, 0.001, 1, 1)).is_err());
    }

    #[test]
    fn grid_search_prefers_longer_training() {
        let matrix = toy_matrix();
        let long = NCFHyper::new(8, 0.01, 300, 5);
        let short = NCFHyper::new(8, 0.01, 1, 5);
        let (best, train_rmse) = grid_search(&matrix, &[short, long.clone()]).unwrap();
        assert_eq!(best, long);
        assert!(train_rmse < 0.5);

        let (again, _) = grid_search(&matrix, &[best.clone(), long.clone()]).unwrap();
        assert_eq!(again.factors, 8);
    }

    #[test]
    fn single_combo_grid() {
        let matrix = toy_matrix();
        let combo = NCFHyper::new(4, 0.001, 2, 1);
        let (best, _) = grid_search(&matrix, &[combo.clone()]).unwrap();
        assert_eq!(best, combo);
    }

    #[test]
    fn impute_contract() {
        let matrix = toy_matrix();
        let model = train(&matrix, &NCFHyper::new(4, 0.001, 10, 1)).unwrap();
        let completed = model.impute(&matrix).unwrap();
        for (i, j, label) in matrix.cells() {
            assert_eq!(completed.labels[i][j], label);
        }
        for row in &completed.raw {
            for &raw in row {
                assert!((0.0..=4.0).contains(&raw));
            }
        }
        // raw 3.5 rounds half away from zero
        let schema = schema05();
        assert_eq!(round_to_label(3.5, &schema), 4);
    }

    #[test]
    fn model_json_round_trip() {
        let matrix = toy_matrix();
        let model = train(&matrix, &NCFHyper::new(4, 0.001, 2, 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ncf.json");
        model.save_json(&path).unwrap();
        let back = NCFModel::load_json(&path).unwrap();
        assert_eq!(back.params, model.params);
    }
}

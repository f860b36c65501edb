//! Two-component PCA of annotation rows, with missing cells standing in as
//! a sentinel value far outside the label range.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::AnnotationMatrix;

pub const DEFAULT_SENTINEL: f64 = 10.0;

const CONVERGENCE_TOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 200_000;
// Eigenvalues below this fraction of the total variance count as zero.
const RANK_EPS: f64 = 1e-12;

/// Top-2 principal axes of the row vectors and the rows' coordinates along
/// them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PCAProjection {
    /// N rows of (first, second) coordinates.
    pub coordinates: Vec<[f64; 2]>,
    /// The two principal axes, each of length M.
    pub component_vectors: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
    pub sentinel: f64,
    /// Set when the data had (near-)zero variance and the projection is
    /// all zeros by construction.
    pub degenerate: bool,
}

/// Projects a sparse matrix after densifying with `sentinel`.
pub fn pca_project(matrix: &AnnotationMatrix, sentinel: f64) -> Result<PCAProjection> {
    pca_project_dense(&matrix.densify(sentinel), sentinel)
}

/// Projects an already-complete matrix. The sentinel is recorded but plays
/// no role (there are no missing cells).
///
/// Columns are centered by their mean; the axes are the top eigenvectors of
/// the M×M covariance, found by power iteration with deflation. The sign of
/// each axis is fixed so that its largest-magnitude entry is positive.
pub fn pca_project_dense(rows: &[Vec<f64>], sentinel: f64) -> Result<PCAProjection> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 2 rows, got {n}"
        )));
    }
    let m = rows[0].len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::DimensionMismatch("ragged rows in PCA input".into()));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("PCA input has zero columns".into()));
    }

    let mut means = vec![0.0; m];
    for row in rows {
        for (mean, &v) in means.iter_mut().zip(row) {
            *mean += v;
        }
    }
    for mean in &mut means {
        *mean /= n as f64;
    }
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|row| row.iter().zip(&means).map(|(&v, &mu)| v - mu).collect())
        .collect();

    // population covariance
    let mut cov = vec![vec![0.0; m]; m];
    for row in &centered {
        for a in 0..m {
            if row[a] == 0.0 {
                continue;
            }
            for b in a..m {
                cov[a][b] += row[a] * row[b];
            }
        }
    }
    for a in 0..m {
        for b in a..m {
            cov[a][b] /= n as f64;
            cov[b][a] = cov[a][b];
        }
    }
    let total_variance: f64 = (0..m).map(|a| cov[a][a]).sum();

    if total_variance <= RANK_EPS {
        return Ok(PCAProjection {
            coordinates: vec![[0.0, 0.0]; n],
            component_vectors: [basis_vector(m, 0), basis_vector(m, 1.min(m - 1))],
            explained_variance: [0.0, 0.0],
            sentinel,
            degenerate: true,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x70ca);
    let (v1, lambda1) = power_iteration(&cov, None, &mut rng, total_variance);
    let (v2, lambda2) = power_iteration(&cov, Some((&v1, lambda1)), &mut rng, total_variance);

    let v1 = fix_sign(v1);
    let v2 = fix_sign(v2);
    let coordinates = centered
        .iter()
        .map(|row| [dot(row, &v1), dot(row, &v2)])
        .collect();

    Ok(PCAProjection {
        coordinates,
        component_vectors: [v1, v2],
        explained_variance: [lambda1, lambda2],
        sentinel,
        degenerate: false,
    })
}

fn basis_vector(m: usize, idx: usize) -> Vec<f64> {
    let mut v = vec![0.0; m];
    v[idx] = 1.0;
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn mat_vec(cov: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    cov.iter().map(|row| dot(row, v)).collect()
}

/// Power iteration on the covariance; when `deflate` holds the first
/// eigenpair, the iteration runs on `C - lambda v v^T` and re-orthogonalizes
/// each step.
fn power_iteration(
    cov: &[Vec<f64>],
    deflate: Option<(&[f64], f64)>,
    rng: &mut ChaCha8Rng,
    total_variance: f64,
) -> (Vec<f64>, f64) {
    let m = cov.len();
    let mut v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    if let Some((prev, _)) = deflate {
        orthogonalize(&mut v, prev);
    }
    let mut v_norm = norm(&v);
    if v_norm == 0.0 {
        v = basis_vector(m, 0);
        v_norm = 1.0;
    }
    for slot in &mut v {
        *slot /= v_norm;
    }

    for _ in 0..MAX_ITERATIONS {
        let mut next = mat_vec(cov, &v);
        if let Some((prev, lambda)) = deflate {
            let along = dot(&next, prev);
            for (slot, &p) in next.iter_mut().zip(prev) {
                *slot -= along * p;
            }
            // guard against drift back toward the dominant eigenvector
            let _ = lambda;
            orthogonalize(&mut next, prev);
        }
        let next_norm = norm(&next);
        if next_norm <= total_variance * RANK_EPS {
            // residual is numerically zero: any orthogonal direction works
            let direction = orthonormal_fallback(m, deflate.map(|(p, _)| p));
            return (direction, 0.0);
        }
        for slot in &mut next {
            *slot /= next_norm;
        }
        let delta: f64 = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        v = next;
        if delta < CONVERGENCE_TOL {
            break;
        }
    }
    let cv = mat_vec(cov, &v);
    let lambda = dot(&v, &cv).max(0.0);
    (v, lambda)
}

fn orthogonalize(v: &mut [f64], against: &[f64]) {
    let along = dot(v, against);
    for (slot, &p) in v.iter_mut().zip(against) {
        *slot -= along * p;
    }
}

fn orthonormal_fallback(m: usize, against: Option<&[f64]>) -> Vec<f64> {
    for idx in 0..m {
        let mut candidate = basis_vector(m, idx);
        if let Some(prev) = against {
            orthogonalize(&mut candidate, prev);
        }
        let candidate_norm = norm(&candidate);
        if candidate_norm > 1e-6 {
            for slot in &mut candidate {
                *slot /= candidate_norm;
            }
            return candidate;
        }
    }
    basis_vector(m, 0)
}

/// Flips the vector so its largest-magnitude entry is positive; the first
/// such entry wins on exact magnitude ties.
fn fix_sign(mut v: Vec<f64>) -> Vec<f64> {
    let mut best = 0usize;
    for (idx, &value) in v.iter().enumerate() {
        if value.abs() > v[best].abs() {
            best = idx;
        }
    }
    if v[best] < 0.0 {
        for slot in &mut v {
            *slot = -*slot;
        }
    }
    v
}

/// Writes coordinates as `item,x,y` CSV.
pub fn save_pca_csv(pca: &PCAProjection, path: impl AsRef<std::path::Path>) -> Result<()> {
    let mut out = String::from("item,x,y\n");
    for (item, [x, y]) in pca.coordinates.iter().enumerate() {
        out.push_str(&format!("{item},{x},{y}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

//! Sample-similarity graphs: thresholded cosine adjacency plus symmetric
//! normalization with self-loops.
//!
//! The threshold is not configured directly; it is derived from a sparsity
//! target K (average retained entries per node, self-pairs included) as an
//! order statistic of the similarity matrix, so graph topology is a
//! deterministic function of the data.

use crate::error::{Error, Result};
use crate::numcore::Matrix;

#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    pub n: usize,
    pub epsilon: f64,
    pub k_target: f64,
    /// Thresholded cosine adjacency: symmetric, zero diagonal.
    pub adjacency: Matrix,
    /// D^(-1/2) (A + I) D^(-1/2) with D the degree matrix of A + I.
    pub normalized: Matrix,
}

impl SimilarityGraph {
    /// Graph over one feature block, with epsilon derived from that block.
    pub fn build(features: &Matrix, k_target: f64) -> Result<Self> {
        let sims = similarity_matrix(features)?;
        let epsilon = epsilon_from_k(&sims, k_target)?;
        let adjacency = adjacency_from_similarities(&sims, epsilon);
        let normalized = normalize_adjacency(&adjacency)?;
        Ok(Self {
            n: features.rows(),
            epsilon,
            k_target,
            adjacency,
            normalized,
        })
    }

    /// Graph over train ∪ test rows, with epsilon taken from the training
    /// block only. Test rows join message passing but never influence the
    /// threshold.
    pub fn build_transductive(
        train_features: &Matrix,
        test_features: &Matrix,
        epsilon: f64,
        k_target: f64,
    ) -> Result<Self> {
        if test_features.rows() > 0 && test_features.cols() != train_features.cols() {
            return Err(Error::Shape {
                op: "build_transductive",
                left: train_features.shape_str(),
                right: test_features.shape_str(),
            });
        }
        let all = if test_features.rows() == 0 {
            train_features.clone()
        } else {
            train_features.vstack(test_features)?
        };
        Self::from_features_with_epsilon(&all, epsilon, k_target)
    }

    /// Graph over an arbitrary feature matrix with a fixed epsilon.
    pub fn from_features_with_epsilon(
        features: &Matrix,
        epsilon: f64,
        k_target: f64,
    ) -> Result<Self> {
        let adjacency = build_adjacency(features, epsilon)?;
        let normalized = normalize_adjacency(&adjacency)?;
        Ok(Self {
            n: features.rows(),
            epsilon,
            k_target,
            adjacency,
            normalized,
        })
    }
}

/// Cosine similarity x·y / (‖x‖‖y‖). A zero-norm vector is a degenerate
/// sample and must be surfaced, not mapped to 0.
pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            op: "cosine_similarity",
            left: format!("{}", x.len()),
            right: format!("{}", y.len()),
        });
    }
    let (mut dot, mut nx, mut ny) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    if nx == 0.0 {
        return Err(Error::DegenerateSample { row: 0 });
    }
    if ny == 0.0 {
        return Err(Error::DegenerateSample { row: 1 });
    }
    let s = dot / (nx.sqrt() * ny.sqrt());
    if !s.is_finite() {
        return Err(Error::NonFinite {
            context: "cosine_similarity".to_string(),
        });
    }
    Ok(s)
}

/// Full n×n cosine similarity matrix with exact unit diagonal.
pub fn similarity_matrix(features: &Matrix) -> Result<Matrix> {
    let n = features.rows();
    let norms: Vec<f64> = (0..n)
        .map(|i| features.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(row) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::DegenerateSample { row });
    }
    let mut sims = Matrix::identity(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dot: f64 = features
                .row(i)
                .iter()
                .zip(features.row(j))
                .map(|(a, b)| a * b)
                .sum();
            let s = dot / (norms[i] * norms[j]);
            if !s.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("similarity of rows {i} and {j}"),
                });
            }
            sims.set(i, j, s);
            sims.set(j, i, s);
        }
    }
    Ok(sims)
}

/// Threshold that retains, on average, at least `k_target` entries per node
/// (self-pairs included): the m-th largest entry of the similarity matrix
/// with m = ⌈n·k_target⌉. Ties may retain more.
pub fn epsilon_from_k(similarities: &Matrix, k_target: f64) -> Result<f64> {
    let n = similarities.rows();
    if similarities.cols() != n {
        return Err(Error::Shape {
            op: "epsilon_from_k",
            left: similarities.shape_str(),
            right: "square matrix".to_string(),
        });
    }
    if !(1.0..=n as f64).contains(&k_target) {
        return Err(Error::Config(format!(
            "k_target {k_target} outside [1, {n}]"
        )));
    }
    let mut entries: Vec<f64> = similarities.data().to_vec();
    entries.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let m = (n as f64 * k_target - 1e-9).ceil() as usize;
    let m = m.clamp(1, entries.len());
    Ok(entries[m - 1])
}

/// Thresholded adjacency: A[i][j] = s(i, j) when i ≠ j and s ≥ epsilon,
/// else 0. Symmetric with a zero diagonal.
pub fn build_adjacency(features: &Matrix, epsilon: f64) -> Result<Matrix> {
    let sims = similarity_matrix(features)?;
    Ok(adjacency_from_similarities(&sims, epsilon))
}

fn adjacency_from_similarities(sims: &Matrix, epsilon: f64) -> Matrix {
    let n = sims.rows();
    let mut adj = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && sims.get(i, j) >= epsilon {
                adj.set(i, j, sims.get(i, j));
            }
        }
    }
    adj
}

/// Symmetric normalization with self-loops: D^(-1/2) (A + I) D^(-1/2),
/// where D is the degree matrix of A + I, so every degree is ≥ 1 and the
/// result is always defined. Negative edge weights (possible only when a
/// caller supplies epsilon ≤ 0) are clamped to zero first.
pub fn normalize_adjacency(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape {
            op: "normalize_adjacency",
            left: a.shape_str(),
            right: "square matrix".to_string(),
        });
    }
    let mut with_loops = a.map(|v| v.max(0.0));
    for i in 0..n {
        with_loops.set(i, i, with_loops.get(i, i) + 1.0);
    }
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| with_loops.row(i).iter().sum::<f64>().sqrt().recip())
        .collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.set(
                i,
                j,
                inv_sqrt_deg[i] * with_loops.get(i, j) * inv_sqrt_deg[j],
            );
        }
    }
    Ok(out)
}

//! Shared oracles for the integration suites: central finite differences,
//! independent brute-force re-implementations, and small random-input
//! helpers. Everything here is deliberately written from the definitions,
//! not by calling the library paths it checks.

#![allow(dead_code)]

use omicstage::numcore::{uniform, Matrix, SeededRng};
use omicstage::staging::{StageThresholds, SENTINEL_THRESHOLD};
use omicstage::uncertainty::EnsembleSummary;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_REL_TOL: f64 = 1e-4;

/// Central-difference gradient of a scalar function at `at`.
pub fn finite_diff_grad(mut f: impl FnMut(&Matrix) -> f64, at: &Matrix) -> Matrix {
    let mut grad = Matrix::zeros(at.rows(), at.cols());
    for i in 0..at.rows() {
        for j in 0..at.cols() {
            let mut plus = at.clone();
            plus.set(i, j, at.get(i, j) + FD_STEP);
            let mut minus = at.clone();
            minus.set(i, j, at.get(i, j) - FD_STEP);
            grad.set(i, j, (f(&plus) - f(&minus)) / (2.0 * FD_STEP));
        }
    }
    grad
}

/// Relative comparison suited to gradient checking: relative error below
/// `GRAD_REL_TOL` where the magnitudes are meaningful, absolute agreement
/// below 1e-7 where both sides are tiny.
pub fn assert_grads_close(analytic: &Matrix, numeric: &Matrix, context: &str) {
    assert_eq!(analytic.shape(), numeric.shape(), "{context}: shape");
    for i in 0..analytic.rows() {
        for j in 0..analytic.cols() {
            let (a, n) = (analytic.get(i, j), numeric.get(i, j));
            let scale = a.abs().max(n.abs());
            if scale > 1e-6 {
                let rel = (a - n).abs() / scale;
                assert!(
                    rel < GRAD_REL_TOL,
                    "{context}: entry ({i},{j}) analytic {a} vs numeric {n}, rel err {rel}"
                );
            } else {
                assert!(
                    (a - n).abs() < 1e-7,
                    "{context}: entry ({i},{j}) analytic {a} vs numeric {n}"
                );
            }
        }
    }
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| uniform(rng) * 2.0 - 1.0).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// Random matrix with entries bounded away from zero, to keep finite
/// differences off the ReLU kink.
pub fn random_matrix_off_kink(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| {
            let sign = if uniform(rng) < 0.5 { -1.0 } else { 1.0 };
            sign * (0.1 + uniform(rng))
        })
        .collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// Random row-stochastic matrix (each row a distribution).
pub fn random_distribution_rows(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let raw: Vec<f64> = (0..cols).map(|_| uniform(rng) + 1e-3).collect();
        let sum: f64 = raw.iter().sum();
        data.extend(raw.iter().map(|v| v / sum));
    }
    Matrix::new(rows, cols, data).unwrap()
}

/// Direct evaluation of D^(-1/2)(A+I)D^(-1/2) with explicit loops,
/// independent of the graph module.
pub fn normalize_reference(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut with_loops = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            with_loops[i][j] = a.get(i, j) + if i == j { 1.0 } else { 0.0 };
        }
    }
    let degrees: Vec<f64> = with_loops.iter().map(|row| row.iter().sum()).collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.set(
                i,
                j,
                with_loops[i][j] / (degrees[i].sqrt() * degrees[j].sqrt()),
            );
        }
    }
    out
}

/// Dominant-eigenvalue magnitude by power iteration.
pub fn spectral_radius(m: &Matrix, iterations: usize, rng: &mut SeededRng) -> f64 {
    let n = m.rows();
    let mut v: Vec<f64> = (0..n).map(|_| uniform(rng) + 0.1).collect();
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let mut next = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                next[i] += m.get(i, j) * v[j];
            }
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = next.iter().map(|x| x / norm).collect();
    }
    lambda
}

/// Brute-force ensemble statistics from raw per-trial disease
/// probabilities: mean, sample standard deviation (T−1), majority vote
/// with the documented tie rules.
pub fn ensemble_reference(ad_probs: &[f64]) -> (f64, f64, usize) {
    let t = ad_probs.len();
    let mean = ad_probs.iter().sum::<f64>() / t as f64;
    let sigma = if t == 1 {
        0.0
    } else {
        (ad_probs
            .iter()
            .map(|p| (p - mean) * (p - mean))
            .sum::<f64>()
            / (t - 1) as f64)
            .sqrt()
    };
    let positive_votes = ad_probs.iter().filter(|&&p| p >= 0.5).count();
    let negative_votes = t - positive_votes;
    let voted = if positive_votes > negative_votes {
        1
    } else if positive_votes < negative_votes {
        0
    } else {
        usize::from(mean >= 0.5)
    };
    (mean, sigma, voted)
}

/// Independent enumeration of the staged threshold search, following the
/// routing and tie rules literally.
pub fn threshold_search_reference(
    s1: &[EnsembleSummary],
    s2: &[EnsembleSummary],
    s3: &[EnsembleSummary],
    labels: &[usize],
    grid1: &[f64],
    grid2: &[f64],
) -> (StageThresholds, f64) {
    let mut best_acc = -1.0;
    let mut best = StageThresholds {
        t1: SENTINEL_THRESHOLD,
        t2: SENTINEL_THRESHOLD,
    };
    for &t1 in grid1 {
        for &t2 in grid2 {
            let mut hits = 0usize;
            for i in 0..labels.len() {
                let label = if s1[i].sigma <= t1 {
                    s1[i].voted_label
                } else if s2[i].sigma <= t2 {
                    s2[i].voted_label
                } else {
                    s3[i].voted_label
                };
                if label == labels[i] {
                    hits += 1;
                }
            }
            let acc = hits as f64 / labels.len() as f64;
            if acc > best_acc
                || (acc == best_acc && t1 > best.t1)
                || (acc == best_acc && t1 == best.t1 && t2 > best.t2)
            {
                best_acc = acc;
                best = StageThresholds { t1, t2 };
            }
        }
    }
    (best, best_acc)
}

/// Pair-counting AUC written from the Mann–Whitney definition.
pub fn auc_reference(scores: &[f64], truth: &[usize]) -> f64 {
    let mut credit = 0.0;
    let mut pairs = 0.0;
    for (i, &t_i) in truth.iter().enumerate() {
        if t_i != 1 {
            continue;
        }
        for (j, &t_j) in truth.iter().enumerate() {
            if t_j != 0 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                credit += 1.0;
            } else if scores[i] == scores[j] {
                credit += 0.5;
            }
        }
    }
    credit / pairs
}

/// Confusion-matrix evaluation of accuracy and F1.
pub fn confusion_reference(pred: &[usize], truth: &[usize]) -> (f64, f64) {
    let (mut tp, mut tn, mut fp, mut fne) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => tp += 1.0,
            (0, 0) => tn += 1.0,
            (1, 0) => fp += 1.0,
            (0, 1) => fne += 1.0,
            _ => unreachable!("binary labels"),
        }
    }
    let acc = (tp + tn) / (tp + tn + fp + fne);
    let f1 = if 2.0 * tp + fp + fne == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fne)
    };
    (acc, f1)
}

/// Synthetic summaries for staging oracles.
pub fn summary_of(
    sample_id: usize,
    sigma: f64,
    mean_prob: f64,
    voted_label: usize,
) -> EnsembleSummary {
    EnsembleSummary {
        sample_id,
        ad_probs: Vec::new(),
        mean_prob,
        sigma,
        voted_label,
        vote_counts: [0, 0],
    }
}

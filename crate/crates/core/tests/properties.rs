//! Property tests for the invariants that hold on arbitrary inputs.

mod common;

use proptest::prelude::*;

use omicstage::graph::{epsilon_from_k, normalize_adjacency, similarity_matrix};
use omicstage::metrics::{accuracy, auc, f1};
use omicstage::model::vcdn_tensor;
use omicstage::numcore::{matmul, softmax_rows, Matrix};
use omicstage::staging::StageThresholds;
use omicstage::train::TrialOutput;
use omicstage::uncertainty::summarize_trials;

fn matrix_strategy(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(lo..hi, rows * cols)
        .prop_map(move |data| Matrix::new(rows, cols, data).unwrap())
}

fn distribution_rows(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(1e-3..1.0f64, rows * cols).prop_map(move |raw| {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let chunk = &raw[r * cols..(r + 1) * cols];
            let sum: f64 = chunk.iter().sum();
            data.extend(chunk.iter().map(|v| v / sum));
        }
        Matrix::new(rows, cols, data).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(x in matrix_strategy(4, 5, -1000.0, 1000.0)) {
        let s = softmax_rows(&x);
        for i in 0..s.rows() {
            let sum: f64 = s.row(i).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9, "row {i} sums to {sum}");
        }
    }

    #[test]
    fn matmul_is_associative_within_tolerance(
        a in matrix_strategy(5, 5, -2.0, 2.0),
        b in matrix_strategy(5, 5, -2.0, 2.0),
        c in matrix_strategy(5, 5, -2.0, 2.0),
    ) {
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) < 1e-9);
    }

    #[test]
    fn vcdn_tensor_is_a_distribution(
        d1 in distribution_rows(3, 2),
        d2 in distribution_rows(3, 2),
        d3 in distribution_rows(3, 2),
    ) {
        for dists in [vec![d1.clone(), d2.clone()], vec![d1, d2, d3]] {
            let c = vcdn_tensor(&dists).unwrap();
            for i in 0..c.rows() {
                let sum: f64 = c.row(i).iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sigma_is_permutation_invariant_and_zero_iff_identical(
        probs in proptest::collection::vec(0.0..1.0f64, 2..8),
        perm_seed in 0u64..1000,
    ) {
        let make_trials = |order: &[f64]| -> Vec<TrialOutput> {
            order
                .iter()
                .enumerate()
                .map(|(t, &p)| TrialOutput {
                    trial: t,
                    rows: vec![0],
                    final_dists: Matrix::from_rows(&[vec![1.0 - p, p]]).unwrap(),
                    view_dists: vec![],
                })
                .collect()
        };
        let base = summarize_trials(&make_trials(&probs)).unwrap();

        // Deterministic pseudo-shuffle of the trial order.
        let mut shuffled = probs.clone();
        let n = shuffled.len();
        let mut state = perm_seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let j = (state >> 33) as usize % (i + 1);
            shuffled.swap(i, j);
        }
        let permuted = summarize_trials(&make_trials(&shuffled)).unwrap();
        prop_assert!((base[0].sigma - permuted[0].sigma).abs() < 1e-12);

        let identical = probs.iter().all(|p| (p - probs[0]).abs() < 1e-12);
        prop_assert_eq!(base[0].sigma == 0.0, identical);
    }

    #[test]
    fn duplicated_trial_has_zero_sigma(p in 0.0..1.0f64, t in 1usize..10) {
        let trials: Vec<TrialOutput> = (0..t)
            .map(|k| TrialOutput {
                trial: k,
                rows: vec![0],
                final_dists: Matrix::from_rows(&[vec![1.0 - p, p]]).unwrap(),
                view_dists: vec![],
            })
            .collect();
        let s = summarize_trials(&trials).unwrap();
        prop_assert_eq!(s[0].sigma, 0.0);
    }

    #[test]
    fn epsilon_retains_at_least_k_per_node(
        raw in proptest::collection::vec(-1.0..1.0f64, 6 * 6),
        k_scaled in 0.0..1.0f64,
    ) {
        // Symmetrize with a unit diagonal to make a plausible similarity
        // matrix.
        let n = 6;
        let mut sims = Matrix::identity(n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = raw[i * n + j];
                sims.set(i, j, v);
                sims.set(j, i, v);
            }
        }
        let k = 1.0 + k_scaled * (n as f64 - 1.0);
        let eps = epsilon_from_k(&sims, k).unwrap();
        let retained = sims.data().iter().filter(|&&v| v >= eps).count();
        prop_assert!(
            retained as f64 / n as f64 >= k - 1e-9,
            "k {k}, eps {eps}, retained {retained}"
        );
    }

    #[test]
    fn normalization_preserves_symmetry(
        raw in proptest::collection::vec(0.0..1.0f64, 5 * 5),
    ) {
        let n = 5;
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = if raw[i * n + j] > 0.5 { raw[i * n + j] } else { 0.0 };
                a.set(i, j, v);
                a.set(j, i, v);
            }
        }
        let norm = normalize_adjacency(&a).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((norm.get(i, j) - norm.get(j, i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn raising_t1_never_delays_an_exit(
        sigmas1 in proptest::collection::vec(0.0..1.0f64, 6),
        sigmas2 in proptest::collection::vec(0.0..1.0f64, 6),
        t1_lo in 0.0..0.5f64,
        dt in 0.0..0.5f64,
        t2 in 0.0..1.0f64,
    ) {
        let route = |t: StageThresholds, i: usize| -> usize {
            if sigmas1[i] <= t.t1 {
                1
            } else if sigmas2[i] <= t.t2 {
                2
            } else {
                3
            }
        };
        let lo = StageThresholds { t1: t1_lo, t2 };
        let hi = StageThresholds { t1: t1_lo + dt, t2 };
        for i in 0..6 {
            prop_assert!(route(hi, i) <= route(lo, i));
        }
    }

    #[test]
    fn auc_complement_identity(
        scores in proptest::collection::vec(0.0..1.0f64, 8),
        labels in proptest::collection::vec(0usize..2, 8),
    ) {
        prop_assume!(labels.iter().any(|&l| l == 1) && labels.iter().any(|&l| l == 0));
        let direct = auc(&scores, &labels).unwrap();
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        let inverse = auc(&negated, &labels).unwrap();
        prop_assert!((direct + inverse - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auc_invariant_under_increasing_transforms(
        raw in proptest::collection::vec(0usize..5, 8),
        labels in proptest::collection::vec(0usize..2, 8),
    ) {
        prop_assume!(labels.iter().any(|&l| l == 1) && labels.iter().any(|&l| l == 0));
        // Quantized scores so ties survive the transforms.
        let scores: Vec<f64> = raw.iter().map(|&r| r as f64 / 4.0).collect();
        let base = auc(&scores, &labels).unwrap();
        let affine: Vec<f64> = scores.iter().map(|s| 3.0 * s + 7.0).collect();
        let exped: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        prop_assert_eq!(base, auc(&affine, &labels).unwrap());
        prop_assert_eq!(base, auc(&exped, &labels).unwrap());
    }

    #[test]
    fn accuracy_and_f1_are_permutation_invariant(
        pred in proptest::collection::vec(0usize..2, 10),
        truth in proptest::collection::vec(0usize..2, 10),
        rotation in 0usize..10,
    ) {
        let rotate = |v: &[usize]| -> Vec<usize> {
            let mut out = v.to_vec();
            out.rotate_left(rotation);
            out
        };
        prop_assert_eq!(
            accuracy(&pred, &truth).unwrap(),
            accuracy(&rotate(&pred), &rotate(&truth)).unwrap()
        );
        prop_assert_eq!(
            f1(&pred, &truth).unwrap(),
            f1(&rotate(&pred), &rotate(&truth)).unwrap()
        );
    }

    #[test]
    fn similarity_matrix_is_symmetric_with_unit_diagonal(
        raw in proptest::collection::vec(0.1..1.0f64, 4 * 3),
    ) {
        let f = Matrix::new(4, 3, raw).unwrap();
        let s = similarity_matrix(&f).unwrap();
        for i in 0..4 {
            prop_assert!((s.get(i, i) - 1.0).abs() < 1e-12);
            for j in 0..4 {
                prop_assert!((s.get(i, j) - s.get(j, i)).abs() < 1e-12);
                prop_assert!(s.get(i, j) <= 1.0 + 1e-12 && s.get(i, j) >= -1.0 - 1e-12);
            }
        }
    }
}

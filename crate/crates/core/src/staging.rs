//! Early-exit staging: pick the stage ladder from tuning accuracies, search
//! the uncertainty-threshold grid, route samples, and account for costs.
//!
//! A sample exits at the first stage whose ensemble uncertainty clears that
//! stage's threshold (σ ≤ t); otherwise it pays for the next stage's extra
//! views. The threshold grid always contains a sentinel strictly below
//! every observed σ, so "skip this stage entirely" is a searchable
//! configuration and the best staged accuracy can never fall below the best
//! single-stage accuracy on the tuning set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uncertainty::EnsembleSummary;

/// Grid value strictly below any observable uncertainty (σ is a standard
/// deviation, hence ≥ 0). A threshold of `SENTINEL_THRESHOLD` admits no
/// samples at that stage.
pub const SENTINEL_THRESHOLD: f64 = -1.0;

/// Number of evenly spaced candidates between min(σ) and max(σ).
pub const GRID_STEPS: usize = 100;

/// Nested view ladder: each stage only adds views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stage1: usize,
    pub stage2: [usize; 2],
    pub stage3: [usize; 3],
}

impl StagePlan {
    pub fn stage_views(&self, stage: usize) -> Vec<usize> {
        match stage {
            1 => vec![self.stage1],
            2 => self.stage2.to_vec(),
            _ => self.stage3.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageThresholds {
    pub t1: f64,
    pub t2: f64,
}

/// Pick the ladder: best single view first, then the best pair that keeps
/// the stage-1 view, then all three. Accuracy ties break toward the lower
/// view id.
pub fn select_stage_plan(accuracies: &BTreeMap<Vec<usize>, f64>) -> Result<StagePlan> {
    let acc = |key: &[usize]| -> Result<f64> {
        accuracies.get(key).copied().ok_or_else(|| {
            Error::Config(format!("missing accuracy for view configuration {key:?}"))
        })
    };
    let mut stage1 = 0;
    let mut best = acc(&[0])?;
    for v in 1..3 {
        let a = acc(&[v])?;
        if a > best {
            best = a;
            stage1 = v;
        }
    }
    let candidate_pairs: Vec<[usize; 2]> = (0..3)
        .filter(|&v| v != stage1)
        .map(|v| {
            let mut pair = [stage1, v];
            pair.sort_unstable();
            pair
        })
        .collect();
    let mut stage2 = candidate_pairs[0];
    let mut best_pair = acc(&stage2)?;
    for pair in &candidate_pairs[1..] {
        let a = acc(pair)?;
        if a > best_pair {
            best_pair = a;
            stage2 = *pair;
        }
    }
    Ok(StagePlan {
        stage1,
        stage2,
        stage3: [0, 1, 2],
    })
}

/// Candidate thresholds: the sentinel plus `GRID_STEPS` evenly spaced
/// values spanning [min(σ), max(σ)]. A degenerate range collapses to
/// {sentinel, min}.
pub fn threshold_grid(sigmas: &[f64]) -> Vec<f64> {
    assert!(!sigmas.is_empty(), "threshold_grid needs observations");
    let min = sigmas.iter().copied().fold(f64::INFINITY, f64::min);
    let max = sigmas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut grid = vec![SENTINEL_THRESHOLD];
    if min == max {
        grid.push(min);
        return grid;
    }
    let step = (max - min) / (GRID_STEPS - 1) as f64;
    for i in 0..GRID_STEPS {
        grid.push(min + step * i as f64);
    }
    grid
}

fn check_alignment(
    s1: &[EnsembleSummary],
    s2: &[EnsembleSummary],
    s3: &[EnsembleSummary],
    labels: &[usize],
) -> Result<()> {
    if s1.len() != s2.len() || s1.len() != s3.len() || s1.len() != labels.len() {
        return Err(Error::Alignment(format!(
            "stage summaries cover {}, {}, {} samples with {} labels",
            s1.len(),
            s2.len(),
            s3.len(),
            labels.len()
        )));
    }
    if s1.is_empty() {
        return Err(Error::Alignment("no samples to stage".to_string()));
    }
    for i in 0..s1.len() {
        if s1[i].sample_id != s2[i].sample_id || s1[i].sample_id != s3[i].sample_id {
            return Err(Error::Alignment(format!(
                "sample order diverges at position {i}"
            )));
        }
    }
    Ok(())
}

/// Routing outcome for one (t1, t2): per-sample exit stage and the label
/// taken from the exit stage's vote.
fn route_all(
    s1: &[EnsembleSummary],
    s2: &[EnsembleSummary],
    s3: &[EnsembleSummary],
    t: StageThresholds,
) -> Vec<(usize, usize)> {
    (0..s1.len())
        .map(|i| {
            if s1[i].sigma <= t.t1 {
                (1, s1[i].voted_label)
            } else if s2[i].sigma <= t.t2 {
                (2, s2[i].voted_label)
            } else {
                (3, s3[i].voted_label)
            }
        })
        .collect()
}

fn routed_accuracy(routes: &[(usize, usize)], labels: &[usize]) -> f64 {
    let hits = routes
        .iter()
        .zip(labels)
        .filter(|((_, pred), truth)| pred == *truth)
        .count();
    hits as f64 / labels.len() as f64
}

/// Exhaustive search over the default grids (see [`threshold_grid`]).
pub fn optimize_thresholds(
    s1: &[EnsembleSummary],
    s2: &[EnsembleSummary],
    s3: &[EnsembleSummary],
    labels: &[usize],
) -> Result<(StageThresholds, f64)> {
    check_alignment(s1, s2, s3, labels)?;
    let grid1 = threshold_grid(&s1.iter().map(|s| s.sigma).collect::<Vec<_>>());
    let grid2 = threshold_grid(&s2.iter().map(|s| s.sigma).collect::<Vec<_>>());
    optimize_thresholds_over(s1, s2, s3, labels, &grid1, &grid2)
}

/// Exhaustive search over explicit candidate grids. Accuracy ties prefer
/// the larger t1, then the larger t2 (maximize early exits at equal
/// accuracy).
pub fn optimize_thresholds_over(
    s1: &[EnsembleSummary],
    s2: &[EnsembleSummary],
    s3: &[EnsembleSummary],
    labels: &[usize],
    grid1: &[f64],
    grid2: &[f64],
) -> Result<(StageThresholds, f64)> {
    check_alignment(s1, s2, s3, labels)?;
    if grid1.is_empty() || grid2.is_empty() {
        return Err(Error::Config("empty threshold grid".to_string()));
    }
    let mut best: Option<(StageThresholds, f64)> = None;
    for &t1 in grid1 {
        for &t2 in grid2 {
            let t = StageThresholds { t1, t2 };
            let acc = routed_accuracy(&route_all(s1, s2, s3, t), labels);
            let better = match &best {
                None => true,
                Some((bt, bacc)) => {
                    acc > *bacc
                        || (acc == *bacc && t.t1 > bt.t1)
                        || (acc == *bacc && t.t1 == bt.t1 && t.t2 > bt.t2)
                }
            };
            if better {
                best = Some((t, acc));
            }
        }
    }
    Ok(best.expect("grids are non-empty"))
}

/// Per-sample routing record: the stage where the sample exited, its final
/// label, and the uncertainty observed at every stage it visited.
#[derive(Debug, Clone, Serialize)]
pub struct SampleRoute {
    pub sample_id: usize,
    pub exit_stage: usize,
    pub label: usize,
    pub sigma1: f64,
    pub sigma2: Option<f64>,
    pub sigma3: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StagedResult {
    pub thresholds: StageThresholds,
    pub routes: Vec<SampleRoute>,
    pub accuracy: f64,
    /// Fractions of samples exiting at stages 1, 2, 3.
    pub stage_fractions: [f64; 3],
}

/// Route every sample with fixed thresholds and score against the labels.
pub fn staged_predict(
    s1: &[EnsembleSummary],
    s2: &[EnsembleSummary],
    s3: &[EnsembleSummary],
    thresholds: StageThresholds,
    labels: &[usize],
) -> Result<StagedResult> {
    check_alignment(s1, s2, s3, labels)?;
    let routed = route_all(s1, s2, s3, thresholds);
    let accuracy = routed_accuracy(&routed, labels);
    let mut counts = [0usize; 3];
    let routes: Vec<SampleRoute> = routed
        .iter()
        .enumerate()
        .map(|(i, &(stage, label))| {
            counts[stage - 1] += 1;
            SampleRoute {
                sample_id: s1[i].sample_id,
                exit_stage: stage,
                label,
                sigma1: s1[i].sigma,
                sigma2: (stage >= 2).then(|| s2[i].sigma),
                sigma3: (stage >= 3).then(|| s3[i].sigma),
            }
        })
        .collect();
    let n = labels.len() as f64;
    Ok(StagedResult {
        thresholds,
        routes,
        accuracy,
        stage_fractions: [
            counts[0] as f64 / n,
            counts[1] as f64 / n,
            counts[2] as f64 / n,
        ],
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    /// Total acquisition cost of the views held at each stage.
    pub cumulative_costs: [f64; 3],
    /// Σ stage_fraction × cumulative stage cost.
    pub expected_cost: f64,
}

/// Expected per-sample acquisition cost under the routing. Stage costs are
/// cumulative because the ladder is nested: later stages re-use every view
/// already acquired.
pub fn cost_report(
    result: &StagedResult,
    plan: &StagePlan,
    view_costs: &[f64; 3],
) -> Result<CostReport> {
    if view_costs.iter().any(|&c| c < 0.0) {
        return Err(Error::Config(format!(
            "view costs must be non-negative, got {view_costs:?}"
        )));
    }
    let stage_cost = |views: &[usize]| views.iter().map(|&v| view_costs[v]).sum::<f64>();
    let cumulative = [
        stage_cost(&plan.stage_views(1)),
        stage_cost(&plan.stage_views(2)),
        stage_cost(&plan.stage_views(3)),
    ];
    let expected = result
        .stage_fractions
        .iter()
        .zip(&cumulative)
        .map(|(f, c)| f * c)
        .sum();
    Ok(CostReport {
        cumulative_costs: cumulative,
        expected_cost: expected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(sample_id: usize, sigma: f64, voted: usize) -> EnsembleSummary {
        EnsembleSummary {
            sample_id,
            ad_probs: vec![],
            mean_prob: voted as f64,
            sigma,
            voted_label: voted,
            vote_counts: [0, 0],
        }
    }

    fn stage(data: &[(f64, usize)]) -> Vec<EnsembleSummary> {
        data.iter()
            .enumerate()
            .map(|(i, &(sigma, voted))| summary(i, sigma, voted))
            .collect()
    }

    #[test]
    fn plan_from_reference_accuracies() {
        // Single: 0.8018 / 0.6320 / 0.6981; pairs: 0.8396 / 0.8301 / 0.7169.
        let mut acc = BTreeMap::new();
        acc.insert(vec![0], 0.8018);
        acc.insert(vec![1], 0.6320);
        acc.insert(vec![2], 0.6981);
        acc.insert(vec![0, 1], 0.8396);
        acc.insert(vec![0, 2], 0.8301);
        acc.insert(vec![1, 2], 0.7169);
        let plan = select_stage_plan(&acc).unwrap();
        assert_eq!(plan.stage1, 0);
        assert_eq!(plan.stage2, [0, 1]);
        assert_eq!(plan.stage3, [0, 1, 2]);
    }

    #[test]
    fn plan_tie_breaks_to_lower_view_id() {
        let mut acc = BTreeMap::new();
        for key in [vec![0], vec![1], vec![2]] {
            acc.insert(key, 0.7);
        }
        for key in [vec![0, 1], vec![0, 2], vec![1, 2]] {
            acc.insert(key, 0.8);
        }
        let plan = select_stage_plan(&acc).unwrap();
        assert_eq!(plan.stage1, 0);
        assert_eq!(plan.stage2, [0, 1]);
    }

    #[test]
    fn plan_follows_best_chain() {
        let mut acc = BTreeMap::new();
        acc.insert(vec![0], 0.5);
        acc.insert(vec![1], 0.9);
        acc.insert(vec![2], 0.6);
        acc.insert(vec![0, 1], 0.91);
        acc.insert(vec![1, 2], 0.95);
        acc.insert(vec![0, 2], 0.99); // does not contain stage-1 view; ignored
        let plan = select_stage_plan(&acc).unwrap();
        assert_eq!(plan.stage1, 1);
        assert_eq!(plan.stage2, [1, 2]);
    }

    #[test]
    fn plan_missing_configuration() {
        let mut acc = BTreeMap::new();
        acc.insert(vec![0], 0.5);
        assert!(select_stage_plan(&acc).is_err());
    }

    #[test]
    fn grid_spacing_and_sentinel() {
        let sigmas: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let grid = threshold_grid(&sigmas);
        assert_eq!(grid.len(), 101);
        assert_eq!(grid[0], SENTINEL_THRESHOLD);
        assert!((grid[1] - 0.0).abs() < 1e-12);
        assert!((grid[100] - 0.99).abs() < 1e-12);
        assert!((grid[2] - 0.01).abs() < 1e-12);
        // Sentinel admits nothing.
        assert!(sigmas.iter().all(|&s| s > SENTINEL_THRESHOLD));
    }

    #[test]
    fn grid_degenerate_range() {
        assert_eq!(threshold_grid(&[0.3, 0.3]), vec![SENTINEL_THRESHOLD, 0.3]);
    }

    #[test]
    fn perfect_stage1_takes_max_threshold() {
        let labels = vec![1, 0, 1];
        let s1 = stage(&[(0.0, 1), (0.0, 0), (0.0, 1)]);
        let s2 = stage(&[(0.2, 0), (0.2, 1), (0.2, 0)]);
        let s3 = stage(&[(0.3, 0), (0.3, 1), (0.3, 0)]);
        let (t, acc) = optimize_thresholds(&s1, &s2, &s3, &labels).unwrap();
        assert_eq!(acc, 1.0);
        // Ties prefer the largest t1: everyone exits at stage 1.
        assert_eq!(t.t1, 0.0);
        let result = staged_predict(&s1, &s2, &s3, t, &labels).unwrap();
        assert_eq!(result.stage_fractions, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn sentinel_pair_is_pure_stage3() {
        let labels = vec![1, 0];
        let s1 = stage(&[(0.1, 0), (0.1, 1)]);
        let s2 = stage(&[(0.1, 0), (0.1, 1)]);
        let s3 = stage(&[(0.2, 1), (0.2, 0)]);
        let t = StageThresholds {
            t1: SENTINEL_THRESHOLD,
            t2: SENTINEL_THRESHOLD,
        };
        let result = staged_predict(&s1, &s2, &s3, t, &labels).unwrap();
        assert_eq!(result.stage_fractions, [0.0, 0.0, 1.0]);
        assert_eq!(result.accuracy, 1.0);
        let labels_routed: Vec<usize> = result.routes.iter().map(|r| r.label).collect();
        assert_eq!(labels_routed, vec![1, 0]);
    }

    #[test]
    fn all_exit_stage1_at_max_sigma() {
        let labels = vec![0, 1];
        let s1 = stage(&[(0.4, 0), (0.9, 1)]);
        let s2 = stage(&[(0.1, 0), (0.1, 1)]);
        let s3 = stage(&[(0.1, 0), (0.1, 1)]);
        let t = StageThresholds { t1: 0.9, t2: 0.1 };
        let result = staged_predict(&s1, &s2, &s3, t, &labels).unwrap();
        assert_eq!(result.stage_fractions, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn routing_records_visited_sigmas_only() {
        let labels = vec![0, 0, 0];
        let s1 = stage(&[(0.0, 0), (0.5, 0), (0.5, 0)]);
        let s2 = stage(&[(0.0, 0), (0.1, 0), (0.9, 0)]);
        let s3 = stage(&[(0.0, 0), (0.0, 0), (0.0, 0)]);
        let t = StageThresholds { t1: 0.2, t2: 0.3 };
        let result = staged_predict(&s1, &s2, &s3, t, &labels).unwrap();
        assert_eq!(result.routes[0].exit_stage, 1);
        assert!(result.routes[0].sigma2.is_none());
        assert_eq!(result.routes[1].exit_stage, 2);
        assert_eq!(result.routes[1].sigma2, Some(0.1));
        assert!(result.routes[1].sigma3.is_none());
        assert_eq!(result.routes[2].exit_stage, 3);
        assert_eq!(result.routes[2].sigma3, Some(0.0));
    }

    #[test]
    fn cost_arithmetic() {
        let plan = StagePlan {
            stage1: 0,
            stage2: [0, 1],
            stage3: [0, 1, 2],
        };
        let costs = [1.0, 2.0, 3.0];
        let mk = |fractions: [f64; 3]| StagedResult {
            thresholds: StageThresholds { t1: 0.0, t2: 0.0 },
            routes: vec![],
            accuracy: 0.0,
            stage_fractions: fractions,
        };
        let r = cost_report(&mk([1.0, 0.0, 0.0]), &plan, &costs).unwrap();
        assert_eq!(r.expected_cost, 1.0);
        let r = cost_report(&mk([0.0, 0.0, 1.0]), &plan, &costs).unwrap();
        assert_eq!(r.expected_cost, 6.0);
        let r = cost_report(&mk([0.5, 0.25, 0.25]), &plan, &costs).unwrap();
        assert!((r.expected_cost - 2.75).abs() < 1e-12);
        assert_eq!(r.cumulative_costs, [1.0, 3.0, 6.0]);
    }

    #[test]
    fn negative_cost_rejected() {
        let plan = StagePlan {
            stage1: 0,
            stage2: [0, 1],
            stage3: [0, 1, 2],
        };
        let result = StagedResult {
            thresholds: StageThresholds { t1: 0.0, t2: 0.0 },
            routes: vec![],
            accuracy: 0.0,
            stage_fractions: [1.0, 0.0, 0.0],
        };
        assert!(cost_report(&result, &plan, &[1.0, -0.5, 1.0]).is_err());
    }

    #[test]
    fn misaligned_summaries_rejected() {
        let labels = vec![0, 1];
        let s1 = stage(&[(0.1, 0), (0.1, 1)]);
        let mut s2 = stage(&[(0.1, 0), (0.1, 1)]);
        s2[1].sample_id = 99;
        let s3 = stage(&[(0.1, 0), (0.1, 1)]);
        assert!(optimize_thresholds(&s1, &s2, &s3, &labels).is_err());
    }
}

//! End-to-end orchestration: train every view configuration, summarize
//! trial ensembles, pick the stage ladder, optimize thresholds, route the
//! held-out samples, and hand everything to the report writer.

use std::collections::BTreeMap;

use crate::config::{DataSource, RunConfig};
use crate::data::{carve_validation, generate_synthetic, load_dataset, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsReport};
use crate::numcore::derive_seed;
use crate::staging::{
    cost_report, optimize_thresholds, select_stage_plan, staged_predict, CostReport, StagePlan,
    StageThresholds, StagedResult,
};
use crate::train::{run_trials, TrialRun};
use crate::uncertainty::{average_uncertainty, summarize_trials, EnsembleSummary};

/// The seven view configurations, singles first, then pairs, then the
/// triple.
pub const ALL_CONFIGS: [&[usize]; 7] = [&[0], &[1], &[2], &[0, 1], &[0, 2], &[1, 2], &[0, 1, 2]];

/// Reserved stream id for the validation carve so it can never collide
/// with a trial index.
const CARVE_STREAM: u64 = u64::MAX;

/// Row roles for one run: models fit on `fit_rows`; the stage ladder and
/// thresholds are tuned on `tune_rows`; final numbers are reported on
/// `report_rows`. Trials evaluate on `eval_rows` = tune ∪ report.
#[derive(Debug, Clone)]
pub struct EvalPlan {
    pub fit_rows: Vec<usize>,
    pub tune_rows: Vec<usize>,
    pub report_rows: Vec<usize>,
    pub eval_rows: Vec<usize>,
    pub tune_on_test: bool,
}

impl EvalPlan {
    pub fn new(dataset: &Dataset, cfg: &RunConfig) -> Result<Self> {
        if cfg.tune_on_test {
            Ok(Self {
                fit_rows: dataset.train_index.clone(),
                tune_rows: dataset.test_index.clone(),
                report_rows: dataset.test_index.clone(),
                eval_rows: dataset.test_index.clone(),
                tune_on_test: true,
            })
        } else {
            let carve_seed = derive_seed(cfg.train.seed, CARVE_STREAM);
            let (fit, tune) = carve_validation(dataset, cfg.tune_fraction, carve_seed)?;
            let mut eval = tune.clone();
            eval.extend_from_slice(&dataset.test_index);
            eval.sort_unstable();
            Ok(Self {
                fit_rows: fit,
                tune_rows: tune,
                report_rows: dataset.test_index.clone(),
                eval_rows: eval,
                tune_on_test: false,
            })
        }
    }
}

/// Everything produced for one view configuration.
pub struct ConfigRun {
    pub views: Vec<usize>,
    pub name: String,
    pub tag: String,
    /// Summaries over the eval rows, in eval-row order.
    pub summaries: Vec<EnsembleSummary>,
    pub tune_accuracy: f64,
    pub report_metrics: MetricsReport,
    /// Mean σ over the report rows.
    pub avg_sigma: f64,
    pub trial_runs: Vec<TrialRun>,
}

impl ConfigRun {
    /// Summaries restricted to the given (sorted) rows, preserving order.
    pub fn summaries_for(&self, rows: &[usize]) -> Vec<EnsembleSummary> {
        crate::uncertainty::filter_summaries(&self.summaries, rows)
    }
}

pub struct PipelineOutcome {
    pub eval: EvalPlan,
    pub configs: Vec<ConfigRun>,
    pub plan: StagePlan,
    pub thresholds: StageThresholds,
    /// Best staged accuracy found on the tuning rows.
    pub tuning_best_accuracy: f64,
    /// Routing of the report rows under the chosen thresholds.
    pub staged: StagedResult,
    pub staged_metrics: MetricsReport,
    pub cost: CostReport,
}

impl PipelineOutcome {
    pub fn config_for(&self, views: &[usize]) -> &ConfigRun {
        self.configs
            .iter()
            .find(|c| c.views == views)
            .expect("all seven configurations present")
    }
}

pub fn config_name(dataset: &Dataset, views: &[usize]) -> String {
    views
        .iter()
        .map(|&v| dataset.views[v].name.as_str())
        .collect::<Vec<_>>()
        .join("+")
}

pub fn config_tag(views: &[usize]) -> String {
    let ids: Vec<String> = views.iter().map(|v| (v + 1).to_string()).collect();
    format!("v{}", ids.join(""))
}

pub fn load_source(cfg: &RunConfig) -> Result<Dataset> {
    let mut dataset = match &cfg.source {
        DataSource::Directory(dir) => load_dataset(dir)?,
        DataSource::Synthetic { n, d, snr } => generate_synthetic(*n, *d, *snr, cfg.train.seed)?,
    };
    for (view, &cost) in dataset.views.iter_mut().zip(&cfg.view_costs) {
        view.cost = cost;
    }
    Ok(dataset)
}

fn labels_for(dataset: &Dataset, summaries: &[EnsembleSummary]) -> Vec<usize> {
    summaries
        .iter()
        .map(|s| dataset.labels[s.sample_id])
        .collect()
}

fn voted(summaries: &[EnsembleSummary]) -> Vec<usize> {
    summaries.iter().map(|s| s.voted_label).collect()
}

fn mean_probs(summaries: &[EnsembleSummary]) -> Vec<f64> {
    summaries.iter().map(|s| s.mean_prob).collect()
}

/// Train one view configuration and fold its trials into summaries plus
/// tuning/report numbers.
fn run_configuration(
    dataset: &Dataset,
    eval: &EvalPlan,
    cfg: &RunConfig,
    views: &[usize],
) -> Result<ConfigRun> {
    let train_cfg = cfg.train.with_views(views.to_vec());
    let trial_runs = run_trials(
        &dataset.views,
        &dataset.labels,
        &eval.fit_rows,
        &eval.eval_rows,
        &train_cfg,
    )?;
    let outputs: Vec<_> = trial_runs.iter().map(|r| r.output.clone()).collect();
    let summaries = summarize_trials(&outputs)?;

    let config = ConfigRun {
        views: views.to_vec(),
        name: config_name(dataset, views),
        tag: config_tag(views),
        summaries,
        tune_accuracy: 0.0,
        report_metrics: MetricsReport {
            acc: 0.0,
            f1: 0.0,
            auc: 0.0,
            n: 0,
        },
        avg_sigma: 0.0,
        trial_runs,
    };

    let tune = config.summaries_for(&eval.tune_rows);
    let tune_accuracy = metrics::accuracy(&voted(&tune), &labels_for(dataset, &tune))?;
    let report = config.summaries_for(&eval.report_rows);
    let report_truth = labels_for(dataset, &report);
    let report_metrics = metrics::report(&voted(&report), &mean_probs(&report), &report_truth)?;
    let avg_sigma = average_uncertainty(&report)?;

    Ok(ConfigRun {
        tune_accuracy,
        report_metrics,
        avg_sigma,
        ..config
    })
}

/// Run the full pipeline in memory: all seven configurations, stage
/// selection, threshold optimization, routing, and cost accounting.
pub fn execute(cfg: &RunConfig, dataset: &Dataset) -> Result<PipelineOutcome> {
    dataset.validate()?;
    let eval = EvalPlan::new(dataset, cfg)?;

    let mut configs = Vec::with_capacity(ALL_CONFIGS.len());
    for views in ALL_CONFIGS {
        configs.push(run_configuration(dataset, &eval, cfg, views)?);
    }

    let mut tune_accuracies = BTreeMap::new();
    for c in &configs {
        tune_accuracies.insert(c.views.clone(), c.tune_accuracy);
    }
    let plan = select_stage_plan(&tune_accuracies)?;

    let stage_config = |stage: usize| -> &ConfigRun {
        let views = plan.stage_views(stage);
        configs
            .iter()
            .find(|c| c.views == views)
            .expect("stage configuration trained")
    };

    let tune_labels: Vec<usize> = eval.tune_rows.iter().map(|&i| dataset.labels[i]).collect();
    let s1_tune = stage_config(1).summaries_for(&eval.tune_rows);
    let s2_tune = stage_config(2).summaries_for(&eval.tune_rows);
    let s3_tune = stage_config(3).summaries_for(&eval.tune_rows);
    let (thresholds, tuning_best_accuracy) =
        optimize_thresholds(&s1_tune, &s2_tune, &s3_tune, &tune_labels)?;

    let report_labels: Vec<usize> = eval
        .report_rows
        .iter()
        .map(|&i| dataset.labels[i])
        .collect();
    let s1_report = stage_config(1).summaries_for(&eval.report_rows);
    let s2_report = stage_config(2).summaries_for(&eval.report_rows);
    let s3_report = stage_config(3).summaries_for(&eval.report_rows);
    let staged = staged_predict(
        &s1_report,
        &s2_report,
        &s3_report,
        thresholds,
        &report_labels,
    )?;

    // Staged scores: each sample's mean probability from its exit stage.
    let staged_scores: Vec<f64> = staged
        .routes
        .iter()
        .enumerate()
        .map(|(i, r)| match r.exit_stage {
            1 => s1_report[i].mean_prob,
            2 => s2_report[i].mean_prob,
            _ => s3_report[i].mean_prob,
        })
        .collect();
    let staged_pred: Vec<usize> = staged.routes.iter().map(|r| r.label).collect();
    let staged_metrics = metrics::report(&staged_pred, &staged_scores, &report_labels)?;

    let view_costs = [
        dataset.views[0].cost,
        dataset.views[1].cost,
        dataset.views[2].cost,
    ];
    let cost = cost_report(&staged, &plan, &view_costs)?;

    Ok(PipelineOutcome {
        eval,
        configs,
        plan,
        thresholds,
        tuning_best_accuracy,
        staged,
        staged_metrics,
        cost,
    })
}

/// Execute and write every artifact under the configured output directory.
/// Returns the in-memory outcome for callers that keep going.
pub fn run_pipeline(cfg: &RunConfig) -> Result<(Dataset, PipelineOutcome)> {
    let dataset = load_source(cfg)?;
    let outcome = execute(cfg, &dataset)?;
    crate::report::write_all(cfg, &dataset, &outcome)?;
    Ok((dataset, outcome))
}

/// Recompute staging from a finished run's stored ensembles, without
/// retraining. With `reoptimize` the stage plan and thresholds are searched
/// again (after a cost or tuning change); otherwise the stored ones are
/// reused and only the derived reports are regenerated.
pub fn stage_from_state(
    run_dir: &std::path::Path,
    reoptimize: bool,
    costs_override: Option<[f64; 3]>,
    bins_override: Option<usize>,
) -> Result<crate::report::RunState> {
    use crate::report::{self, RunState};
    use crate::uncertainty::filter_summaries;

    let mut state = RunState::load(run_dir)?;
    if let Some(costs) = costs_override {
        if costs.iter().any(|&c| c < 0.0 || !c.is_finite()) {
            return Err(Error::Config(format!(
                "view costs must be non-negative, got {costs:?}"
            )));
        }
        state.view_costs = costs;
    }
    if let Some(bins) = bins_override {
        if bins == 0 {
            return Err(Error::Config("histogram bins must be ≥ 1".to_string()));
        }
        state.histogram_bins = bins;
    }

    let doc_rows = report::config_doc_rows(
        &state.labels,
        &state.tune_rows,
        &state.report_rows,
        &state.configs,
    )?;

    if reoptimize {
        let mut tune_accuracies = BTreeMap::new();
        for row in &doc_rows {
            tune_accuracies.insert(row.views.clone(), row.tune_accuracy);
        }
        state.plan = select_stage_plan(&tune_accuracies)?;
    }

    let config_by_views = |views: &[usize]| -> Result<&crate::report::StoredConfig> {
        state
            .configs
            .iter()
            .find(|c| c.views == views)
            .ok_or_else(|| Error::Config(format!("run state lacks configuration {views:?}")))
    };
    let tune_labels: Vec<usize> = state.tune_rows.iter().map(|&i| state.labels[i]).collect();
    let s1_all = &config_by_views(&state.plan.stage_views(1))?.summaries;
    let s2_all = &config_by_views(&state.plan.stage_views(2))?.summaries;
    let s3_all = &config_by_views(&state.plan.stage_views(3))?.summaries;
    let s1_tune = filter_summaries(s1_all, &state.tune_rows);
    let s2_tune = filter_summaries(s2_all, &state.tune_rows);
    let s3_tune = filter_summaries(s3_all, &state.tune_rows);

    let tuning_best = if reoptimize {
        let (thresholds, best) = optimize_thresholds(&s1_tune, &s2_tune, &s3_tune, &tune_labels)?;
        state.thresholds = thresholds;
        best
    } else {
        staged_predict(&s1_tune, &s2_tune, &s3_tune, state.thresholds, &tune_labels)?.accuracy
    };

    let report_labels: Vec<usize> = state.report_rows.iter().map(|&i| state.labels[i]).collect();
    let s1_report = filter_summaries(s1_all, &state.report_rows);
    let s2_report = filter_summaries(s2_all, &state.report_rows);
    let s3_report = filter_summaries(s3_all, &state.report_rows);
    let staged = staged_predict(
        &s1_report,
        &s2_report,
        &s3_report,
        state.thresholds,
        &report_labels,
    )?;
    let staged_scores: Vec<f64> = staged
        .routes
        .iter()
        .enumerate()
        .map(|(i, r)| match r.exit_stage {
            1 => s1_report[i].mean_prob,
            2 => s2_report[i].mean_prob,
            _ => s3_report[i].mean_prob,
        })
        .collect();
    let staged_pred: Vec<usize> = staged.routes.iter().map(|r| r.label).collect();
    let staged_metrics = metrics::report(&staged_pred, &staged_scores, &report_labels)?;
    let cost = cost_report(&staged, &state.plan, &state.view_costs)?;

    state.save(run_dir)?;
    let stage_names = report::stage_display_names(&state);
    let doc = report::SummaryDoc {
        dataset: report::DatasetDoc {
            n_samples: state.labels.len(),
            n_train: state.n_train,
            n_report: state.report_rows.len(),
            view_names: state.view_names.clone(),
            view_costs: state.view_costs,
            tuning_mode: state.tuning_mode.clone(),
            seed: state.seed,
            trials: state.trials,
            k_target: state.k_target,
        },
        configs: doc_rows.clone(),
        stage_plan: state.plan.clone(),
        stage_names: stage_names.clone(),
        thresholds: state.thresholds,
        tuning_best_accuracy: tuning_best,
        staged: report::StagedDoc {
            accuracy: staged_metrics.acc,
            f1: staged_metrics.f1,
            auc: staged_metrics.auc,
            stage_fractions: staged.stage_fractions,
            cumulative_costs: cost.cumulative_costs,
            expected_cost: cost.expected_cost,
        },
    };
    report::write_summary_json(&run_dir.join("summary.json"), &doc)?;
    report::write_metrics_csv(&run_dir.join("metrics.csv"), &doc_rows)?;
    report::write_routing_csv(&run_dir.join("routing.csv"), &staged)?;
    report::write_staging_txt(
        &run_dir.join("staging_report.txt"),
        &state.tuning_mode,
        &stage_names,
        state.thresholds,
        tuning_best,
        &staged,
        &staged_metrics,
        &cost,
    )?;
    let mut hist_rows = Vec::new();
    for c in &state.configs {
        let report_summaries = filter_summaries(&c.summaries, &state.report_rows);
        hist_rows.extend(report::histogram_rows(
            &c.name,
            &report_summaries,
            &state.labels,
            state.histogram_bins,
        ));
    }
    report::write_histogram_csv(&run_dir.join("histogram.csv"), &hist_rows)?;
    Ok(state)
}

/// Inference-only staged prediction: load a finished run's checkpoints,
/// rebuild the transductive graphs over the given dataset (threshold from
/// its training block), forward every trial's networks, and route the test
/// rows with the stored thresholds. Writes `predictions.csv` under
/// `out_dir`.
pub fn predict_with_checkpoints(
    run_dir: &std::path::Path,
    data_dir: &std::path::Path,
    out_dir: &std::path::Path,
) -> Result<()> {
    use crate::model::checkpoint;
    use crate::report::RunState;
    use crate::train::{build_graphs, infer_all_rows, TrialOutput};

    let state = RunState::load(run_dir)?;
    let dataset = load_dataset(data_dir)?;
    std::fs::create_dir_all(out_dir)?;

    let ck_dir = run_dir.join("checkpoints");
    if !ck_dir.is_dir() {
        return Err(Error::Config(format!(
            "{} has no checkpoints directory (was the run saved with save_checkpoints = false?)",
            run_dir.display()
        )));
    }

    let mut stage_summaries = Vec::with_capacity(3);
    for stage in 1..=3usize {
        let views = state.plan.stage_views(stage);
        let subset: Vec<&crate::data::OmicsView> =
            views.iter().map(|&v| &dataset.views[v]).collect();
        let graphs = build_graphs(&subset, &dataset.train_index, state.k_target)?;

        let mut outputs = Vec::with_capacity(state.trials);
        for t in 0..state.trials {
            let path = ck_dir.join(format!("stage{stage}_trial{t}.ck"));
            let ck = checkpoint::load(&path)?;
            let ck_views: Vec<usize> = ck.views.iter().map(|(id, _)| *id).collect();
            if ck_views != views {
                return Err(Error::Checkpoint(format!(
                    "{} holds views {ck_views:?}, stage {stage} needs {views:?}",
                    path.display()
                )));
            }
            for ((_, clf), view) in ck.views.iter().zip(&subset) {
                if clf.dims().input != view.features.cols() {
                    return Err(Error::Checkpoint(format!(
                        "{} was trained on {}-feature '{}' data, dataset has {} features",
                        path.display(),
                        clf.dims().input,
                        view.name,
                        view.features.cols()
                    )));
                }
            }
            let classifiers: Vec<_> = ck.views.into_iter().map(|(_, clf)| clf).collect();
            let (final_all, _) =
                infer_all_rows(&subset, &graphs, &classifiers, ck.fusion.as_ref())?;
            outputs.push(TrialOutput {
                trial: t,
                rows: dataset.test_index.clone(),
                final_dists: final_all.select_rows(&dataset.test_index),
                view_dists: Vec::new(),
            });
        }
        stage_summaries.push(summarize_trials(&outputs)?);
    }

    let labels: Vec<usize> = dataset
        .test_index
        .iter()
        .map(|&i| dataset.labels[i])
        .collect();
    let staged = staged_predict(
        &stage_summaries[0],
        &stage_summaries[1],
        &stage_summaries[2],
        state.thresholds,
        &labels,
    )?;

    let mut w = std::io::BufWriter::new(std::fs::File::create(out_dir.join("predictions.csv"))?);
    use std::io::Write;
    writeln!(w, "sample_id,exit_stage,label,p_mean,sigma1,sigma2,sigma3")?;
    for (i, r) in staged.routes.iter().enumerate() {
        let p_mean = match r.exit_stage {
            1 => stage_summaries[0][i].mean_prob,
            2 => stage_summaries[1][i].mean_prob,
            _ => stage_summaries[2][i].mean_prob,
        };
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.sample_id,
            r.exit_stage,
            r.label,
            p_mean,
            r.sigma1,
            opt(r.sigma2),
            opt(r.sigma3)
        )?;
    }
    Ok(())
}

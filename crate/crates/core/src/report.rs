//! Artifact emission: delimited tables, the human-readable staging report,
//! histogram data, training logs, checkpoints, and the machine-readable
//! run summary. All writers are deterministic functions of their inputs
//! (no timestamps, no map iteration order), so identical runs produce
//! byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::checkpoint::{self, Fingerprint};
use crate::model::GcnClassifier;
use crate::pipeline::PipelineOutcome;
use crate::staging::{CostReport, StagePlan, StageThresholds, StagedResult};
use crate::uncertainty::EnsembleSummary;

/// One bin of the uncertainty histogram for one configuration and true
/// class.
#[derive(Debug, Clone, Serialize)]
pub struct HistogramRow {
    pub config: String,
    pub class: usize,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
}

/// Bin σ values over [0, max σ] separately per true class. A degenerate
/// range (all σ equal 0) puts every sample in bin 0.
pub fn histogram_rows(
    config: &str,
    summaries: &[EnsembleSummary],
    labels: &[usize],
    bins: usize,
) -> Vec<HistogramRow> {
    assert!(bins >= 1);
    let max_sigma = summaries.iter().map(|s| s.sigma).fold(0.0, f64::max);
    let width = max_sigma / bins as f64;
    let mut counts = vec![[0usize; 2]; bins];
    for s in summaries {
        let idx = if width == 0.0 {
            0
        } else {
            ((s.sigma / width) as usize).min(bins - 1)
        };
        counts[idx][labels[s.sample_id]] += 1;
    }
    let mut rows = Vec::with_capacity(bins * 2);
    for class in 0..2 {
        for (i, bucket) in counts.iter().enumerate() {
            rows.push(HistogramRow {
                config: config.to_string(),
                class,
                bin_lo: width * i as f64,
                bin_hi: if i + 1 == bins {
                    max_sigma
                } else {
                    width * (i + 1) as f64
                },
                count: bucket[class],
            });
        }
    }
    rows
}

/// Per-configuration ensemble state persisted for re-staging and
/// prediction without retraining.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredConfig {
    pub views: Vec<usize>,
    pub name: String,
    pub tag: String,
    pub summaries: Vec<EnsembleSummary>,
}

/// Everything a later `stage`, `report`, or `predict` invocation needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunState {
    pub tuning_mode: String,
    pub seed: u64,
    pub k_target: f64,
    pub trials: usize,
    pub view_names: Vec<String>,
    pub view_costs: [f64; 3],
    pub histogram_bins: usize,
    pub labels: Vec<usize>,
    pub n_train: usize,
    pub tune_rows: Vec<usize>,
    pub report_rows: Vec<usize>,
    pub configs: Vec<StoredConfig>,
    pub plan: StagePlan,
    pub thresholds: StageThresholds,
}

impl RunState {
    pub fn path(dir: &Path) -> std::path::PathBuf {
        dir.join("run_state.json")
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let file = BufWriter::new(File::create(Self::path(dir))?);
        serde_json::to_writer_pretty(file, self)
            .map_err(|e| Error::Config(format!("run_state serialization: {e}")))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = Self::path(dir);
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::Config(format!(
                "cannot read {} (is this a finished run directory?): {e}",
                path.display()
            ))
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigDocRow {
    pub name: String,
    pub tag: String,
    pub views: Vec<usize>,
    pub n: usize,
    pub tune_accuracy: f64,
    pub acc: f64,
    pub f1: f64,
    pub auc: f64,
    pub avg_sigma: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetDoc {
    pub n_samples: usize,
    pub n_train: usize,
    pub n_report: usize,
    pub view_names: Vec<String>,
    pub view_costs: [f64; 3],
    pub tuning_mode: String,
    pub seed: u64,
    pub trials: usize,
    pub k_target: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StagedDoc {
    pub accuracy: f64,
    pub f1: f64,
    pub auc: f64,
    pub stage_fractions: [f64; 3],
    pub cumulative_costs: [f64; 3],
    pub expected_cost: f64,
}

/// The machine-readable run summary (summary.json).
#[derive(Debug, Clone, Serialize)]
pub struct SummaryDoc {
    pub dataset: DatasetDoc,
    pub configs: Vec<ConfigDocRow>,
    pub stage_plan: StagePlan,
    pub stage_names: [String; 3],
    pub thresholds: StageThresholds,
    pub tuning_best_accuracy: f64,
    pub staged: StagedDoc,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_summary_json(path: &Path, doc: &SummaryDoc) -> Result<()> {
    let file = create(path)?;
    serde_json::to_writer_pretty(file, doc)
        .map_err(|e| Error::Config(format!("summary serialization: {e}")))?;
    Ok(())
}

pub fn write_metrics_csv(path: &Path, rows: &[ConfigDocRow]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "config,views,n,acc,f1,auc,avg_sigma,tune_accuracy")?;
    for r in rows {
        let views: Vec<String> = r.views.iter().map(|v| (v + 1).to_string()).collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.name,
            views.join("+"),
            r.n,
            r.acc,
            r.f1,
            r.auc,
            r.avg_sigma,
            r.tune_accuracy
        )?;
    }
    Ok(())
}

/// Summary table export: one file per configuration with the documented
/// columns.
pub fn write_summary_table(path: &Path, name: &str, summaries: &[EnsembleSummary]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "sample_id,stage_model,p_mean,sigma,voted_label")?;
    for s in summaries {
        writeln!(
            w,
            "{},{},{},{},{}",
            s.sample_id, name, s.mean_prob, s.sigma, s.voted_label
        )?;
    }
    Ok(())
}

pub fn write_routing_csv(path: &Path, staged: &StagedResult) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "sample_id,exit_stage,label,sigma1,sigma2,sigma3")?;
    for r in &staged.routes {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.sample_id,
            r.exit_stage,
            r.label,
            r.sigma1,
            opt(r.sigma2),
            opt(r.sigma3)
        )?;
    }
    Ok(())
}

pub fn write_histogram_csv(path: &Path, rows: &[HistogramRow]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "config,class,bin_lo,bin_hi,count")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.config, r.class, r.bin_lo, r.bin_hi, r.count
        )?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn write_staging_txt(
    path: &Path,
    tuning_mode: &str,
    stage_names: &[String; 3],
    thresholds: StageThresholds,
    tuning_best: f64,
    staged: &StagedResult,
    staged_metrics: &MetricsReport,
    cost: &CostReport,
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "staged classification report")?;
    writeln!(w, "============================")?;
    writeln!(w)?;
    writeln!(w, "tuning mode:       {tuning_mode}")?;
    writeln!(w, "stage 1 views:     {}", stage_names[0])?;
    writeln!(w, "stage 2 views:     {}", stage_names[1])?;
    writeln!(w, "stage 3 views:     {}", stage_names[2])?;
    writeln!(w, "threshold t1:      {:.6}", thresholds.t1)?;
    writeln!(w, "threshold t2:      {:.6}", thresholds.t2)?;
    writeln!(w, "tuning accuracy:   {tuning_best:.4}")?;
    writeln!(w)?;
    writeln!(w, "report-set results")?;
    writeln!(w, "------------------")?;
    writeln!(w, "samples:           {}", staged_metrics.n)?;
    writeln!(w, "staged accuracy:   {:.4}", staged_metrics.acc)?;
    writeln!(w, "staged F1:         {:.4}", staged_metrics.f1)?;
    writeln!(w, "staged AUC:        {:.4}", staged_metrics.auc)?;
    writeln!(
        w,
        "stage fractions:   {:.2}% / {:.2}% / {:.2}%",
        staged.stage_fractions[0] * 100.0,
        staged.stage_fractions[1] * 100.0,
        staged.stage_fractions[2] * 100.0
    )?;
    writeln!(
        w,
        "cumulative costs:  {:.4} / {:.4} / {:.4}",
        cost.cumulative_costs[0], cost.cumulative_costs[1], cost.cumulative_costs[2]
    )?;
    writeln!(w, "expected cost:     {:.4}", cost.expected_cost)?;
    writeln!(w)?;
    writeln!(w, "routing table")?;
    writeln!(w, "-------------")?;
    writeln!(
        w,
        "sample_id  exit_stage  label  sigma1    sigma2    sigma3"
    )?;
    for r in &staged.routes {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
        writeln!(
            w,
            "{:>9}  {:>10}  {:>5}  {:.6}  {:>8}  {:>8}",
            r.sample_id,
            r.exit_stage,
            r.label,
            r.sigma1,
            opt(r.sigma2),
            opt(r.sigma3)
        )?;
    }
    Ok(())
}

fn write_training_log(
    path: &Path,
    view_ids: &[usize],
    runs: &[crate::train::EpochLoss],
) -> Result<()> {
    let mut w = create(path)?;
    let headers: Vec<String> = view_ids
        .iter()
        .map(|v| format!("l_gcn_v{}", v + 1))
        .collect();
    writeln!(w, "phase,epoch,{},l_vcdn,total", headers.join(","))?;
    for row in runs {
        let mut cells = Vec::with_capacity(view_ids.len());
        for v in view_ids {
            let cell = row
                .gcn
                .iter()
                .find(|(id, _)| id == v)
                .map(|(_, loss)| loss.to_string())
                .unwrap_or_default();
            cells.push(cell);
        }
        let vcdn = row.vcdn.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{}",
            row.phase,
            row.epoch,
            cells.join(","),
            vcdn,
            row.total
        )?;
    }
    Ok(())
}

/// Tune/report metric rows shared by the train and re-stage flows.
pub fn config_doc_rows(
    labels: &[usize],
    tune_rows: &[usize],
    report_rows: &[usize],
    configs: &[StoredConfig],
) -> Result<Vec<ConfigDocRow>> {
    use crate::metrics;
    use crate::uncertainty::{average_uncertainty, filter_summaries};
    configs
        .iter()
        .map(|c| {
            let tune = filter_summaries(&c.summaries, tune_rows);
            let tune_truth: Vec<usize> = tune.iter().map(|s| labels[s.sample_id]).collect();
            let tune_pred: Vec<usize> = tune.iter().map(|s| s.voted_label).collect();
            let report = filter_summaries(&c.summaries, report_rows);
            let report_truth: Vec<usize> = report.iter().map(|s| labels[s.sample_id]).collect();
            let report_pred: Vec<usize> = report.iter().map(|s| s.voted_label).collect();
            let scores: Vec<f64> = report.iter().map(|s| s.mean_prob).collect();
            let m = metrics::report(&report_pred, &scores, &report_truth)?;
            Ok(ConfigDocRow {
                name: c.name.clone(),
                tag: c.tag.clone(),
                views: c.views.clone(),
                n: m.n,
                tune_accuracy: metrics::accuracy(&tune_pred, &tune_truth)?,
                acc: m.acc,
                f1: m.f1,
                auc: m.auc,
                avg_sigma: average_uncertainty(&report)?,
            })
        })
        .collect()
}

/// Write every artifact of a full pipeline run under `cfg.out_dir`.
pub fn write_all(cfg: &RunConfig, dataset: &Dataset, outcome: &PipelineOutcome) -> Result<()> {
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out.join("summaries"))?;
    std::fs::create_dir_all(out.join("logs"))?;

    let tuning_mode = if outcome.eval.tune_on_test {
        "test"
    } else {
        "validation"
    };

    let stored: Vec<StoredConfig> = outcome
        .configs
        .iter()
        .map(|c| StoredConfig {
            views: c.views.clone(),
            name: c.name.clone(),
            tag: c.tag.clone(),
            summaries: c.summaries.clone(),
        })
        .collect();

    let state = RunState {
        tuning_mode: tuning_mode.to_string(),
        seed: cfg.train.seed,
        k_target: cfg.train.k_target,
        trials: cfg.train.trials,
        view_names: dataset.views.iter().map(|v| v.name.clone()).collect(),
        view_costs: [
            dataset.views[0].cost,
            dataset.views[1].cost,
            dataset.views[2].cost,
        ],
        histogram_bins: cfg.histogram_bins,
        labels: dataset.labels.clone(),
        n_train: dataset.train_index.len(),
        tune_rows: outcome.eval.tune_rows.clone(),
        report_rows: outcome.eval.report_rows.clone(),
        configs: stored,
        plan: outcome.plan.clone(),
        thresholds: outcome.thresholds,
    };
    state.save(out)?;

    let doc_rows = config_doc_rows(
        &state.labels,
        &state.tune_rows,
        &state.report_rows,
        &state.configs,
    )?;
    let stage_names = stage_display_names(&state);
    let doc = SummaryDoc {
        dataset: DatasetDoc {
            n_samples: dataset.n_samples(),
            n_train: dataset.train_index.len(),
            n_report: outcome.eval.report_rows.len(),
            view_names: state.view_names.clone(),
            view_costs: state.view_costs,
            tuning_mode: tuning_mode.to_string(),
            seed: cfg.train.seed,
            trials: cfg.train.trials,
            k_target: cfg.train.k_target,
        },
        configs: doc_rows.clone(),
        stage_plan: outcome.plan.clone(),
        stage_names: stage_names.clone(),
        thresholds: outcome.thresholds,
        tuning_best_accuracy: outcome.tuning_best_accuracy,
        staged: StagedDoc {
            accuracy: outcome.staged_metrics.acc,
            f1: outcome.staged_metrics.f1,
            auc: outcome.staged_metrics.auc,
            stage_fractions: outcome.staged.stage_fractions,
            cumulative_costs: outcome.cost.cumulative_costs,
            expected_cost: outcome.cost.expected_cost,
        },
    };
    write_summary_json(&out.join("summary.json"), &doc)?;
    write_metrics_csv(&out.join("metrics.csv"), &doc_rows)?;

    for c in &outcome.configs {
        write_summary_table(
            &out.join("summaries").join(format!("{}.csv", c.tag)),
            &c.name,
            &c.summaries,
        )?;
    }

    write_routing_csv(&out.join("routing.csv"), &outcome.staged)?;
    write_staging_txt(
        &out.join("staging_report.txt"),
        tuning_mode,
        &stage_names,
        outcome.thresholds,
        outcome.tuning_best_accuracy,
        &outcome.staged,
        &outcome.staged_metrics,
        &outcome.cost,
    )?;

    let mut hist_rows = Vec::new();
    for c in &outcome.configs {
        let report = c.summaries_for(&outcome.eval.report_rows);
        hist_rows.extend(histogram_rows(
            &c.name,
            &report,
            &dataset.labels,
            cfg.histogram_bins,
        ));
    }
    write_histogram_csv(&out.join("histogram.csv"), &hist_rows)?;

    for c in &outcome.configs {
        for run in &c.trial_runs {
            let path = out
                .join("logs")
                .join(format!("{}_trial{}.csv", c.tag, run.output.trial));
            write_training_log(&path, &c.views, &run.losses)?;
        }
    }

    if cfg.save_checkpoints {
        let ck_dir = out.join("checkpoints");
        std::fs::create_dir_all(&ck_dir)?;
        let fingerprint = Fingerprint {
            seed: cfg.train.seed,
            k_target: cfg.train.k_target,
            trials: cfg.train.trials as u32,
        };
        for stage in 1..=3usize {
            let views = outcome.plan.stage_views(stage);
            let config = outcome.config_for(&views);
            for run in &config.trial_runs {
                let view_refs: Vec<(usize, &GcnClassifier)> = run
                    .models
                    .views
                    .iter()
                    .map(|(id, clf)| (*id, clf))
                    .collect();
                checkpoint::save(
                    &ck_dir.join(format!("stage{stage}_trial{}.ck", run.output.trial)),
                    &fingerprint,
                    &view_refs,
                    run.models.fusion.as_ref(),
                )?;
            }
        }
    }
    Ok(())
}

pub fn stage_display_names(state: &RunState) -> [String; 3] {
    let name_of = |views: Vec<usize>| {
        views
            .iter()
            .map(|&v| state.view_names[v].as_str())
            .collect::<Vec<_>>()
            .join("+")
    };
    [
        name_of(state.plan.stage_views(1)),
        name_of(state.plan.stage_views(2)),
        name_of(state.plan.stage_views(3)),
    ]
}

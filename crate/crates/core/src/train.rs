//! Training: per-view pretraining, alternating joint optimization with the
//! fusion head, and T independent seeded trials.
//!
//! Every trial re-initializes and fully retrains its networks from a seed
//! derived from the run seed and the trial index, so the ensemble captures
//! both initialization and dropout stochasticity while remaining exactly
//! reproducible. The loss is always evaluated on fit rows only; the
//! remaining rows participate in graph message passing but never in any
//! loss term.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::data::OmicsView;
use crate::error::{Error, Result};
use crate::graph::{epsilon_from_k, similarity_matrix, SimilarityGraph};
use crate::model::{init_classifier, init_vcdn, GcnClassifier, ModelDims, ParamBindings, VcdnHead};
use crate::numcore::tape::{NodeId, Tape};
use crate::numcore::{derive_seed, seeded_rng, Matrix, SeededRng};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub pretrain_epochs: usize,
    pub joint_epochs: usize,
    /// Ensemble size T.
    pub trials: usize,
    /// Average retained similarity-matrix entries per node.
    pub k_target: f64,
    pub dropout: f64,
    pub seed: u64,
    /// View ids participating in this configuration (sorted, non-empty).
    pub view_subset: Vec<usize>,
    pub gcn_hidden: Vec<usize>,
    pub head_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            pretrain_epochs: 500,
            joint_epochs: 2500,
            trials: 10,
            k_target: 2.0,
            dropout: 0.5,
            seed: 42,
            view_subset: vec![0, 1, 2],
            gcn_hidden: vec![200, 200, 100],
            head_hidden: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be ≥ 1".to_string()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.view_subset.is_empty() || self.view_subset.len() > 3 {
            return Err(Error::Config("view subset must name 1–3 views".to_string()));
        }
        let mut sorted = self.view_subset.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted != self.view_subset || self.view_subset.iter().any(|&v| v > 2) {
            return Err(Error::Config(format!(
                "view subset {:?} must be sorted unique ids in 0..3",
                self.view_subset
            )));
        }
        if self.gcn_hidden.is_empty() {
            return Err(Error::Config("need at least one GCN layer".to_string()));
        }
        Ok(())
    }

    pub fn with_views(&self, views: Vec<usize>) -> TrainConfig {
        TrainConfig {
            view_subset: views,
            ..self.clone()
        }
    }

    fn dims_for(&self, input: usize) -> ModelDims {
        ModelDims::with_hidden(input, self.gcn_hidden.clone(), self.head_hidden)
    }
}

/// One row of the training log.
#[derive(Debug, Clone)]
pub struct EpochLoss {
    pub phase: String,
    pub epoch: usize,
    /// (view id, cross-entropy) pairs for this step.
    pub gcn: Vec<(usize, f64)>,
    pub vcdn: Option<f64>,
    pub total: f64,
}

/// Final test-time distributions of one trial.
#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub trial: usize,
    /// Unified-ordering sample indices these rows describe.
    pub rows: Vec<usize>,
    /// Final-model distribution per row (fusion output when multi-view,
    /// the single GCN head otherwise).
    pub final_dists: Matrix,
    /// Per-view distributions, for diagnostics.
    pub view_dists: Vec<(usize, Matrix)>,
}

pub struct TrainedModels {
    pub views: Vec<(usize, GcnClassifier)>,
    pub fusion: Option<VcdnHead>,
}

pub struct TrialRun {
    pub output: TrialOutput,
    pub models: TrainedModels,
    pub losses: Vec<EpochLoss>,
}

fn fit_labels(labels: &[usize], fit_rows: &[usize]) -> Vec<usize> {
    fit_rows.iter().map(|&i| labels[i]).collect()
}

fn grads_by_name(
    tape: &Tape,
    grads: &mut crate::numcore::Gradients,
    bindings: &ParamBindings,
) -> BTreeMap<String, Matrix> {
    let mut out = BTreeMap::new();
    for (name, id) in bindings {
        let g = grads
            .take(*id)
            .unwrap_or_else(|| Matrix::zeros(tape.value(*id).rows(), tape.value(*id).cols()));
        out.insert(name.clone(), g);
    }
    out
}

fn divergence_guard(err: Error, epoch: usize) -> Error {
    match err {
        Error::NonFinite { context } => Error::Divergence {
            epoch,
            message: context,
        },
        other => other,
    }
}

/// Minimize the view's classification loss on the fit rows for
/// `pretrain_epochs` full-batch steps.
pub fn pretrain_view(
    view: &OmicsView,
    graph: &SimilarityGraph,
    labels: &[usize],
    fit_rows: &[usize],
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<(GcnClassifier, Vec<EpochLoss>)> {
    let dims = cfg.dims_for(view.features.cols());
    let mut clf = init_classifier(&dims, cfg.dropout, rng)?;
    let targets = fit_labels(labels, fit_rows);
    let mut log = Vec::with_capacity(cfg.pretrain_epochs);
    let phase = format!("pretrain_v{}", view.id + 1);

    for epoch in 0..cfg.pretrain_epochs {
        let step = (|| -> Result<f64> {
            let mut tape = Tape::new();
            let x = tape.leaf(view.features.clone());
            let a = tape.leaf(graph.normalized.clone());
            let (h, mut bindings) = clf.build_hidden(&mut tape, x, a, true, rng, true)?;
            let (p, head_bindings) = clf.build_probs(&mut tape, h, true)?;
            bindings.extend(head_bindings);
            let loss = tape.cross_entropy(p, fit_rows, &targets)?;
            let loss_value = tape.value(loss).get(0, 0);
            let mut grads = tape.backward(loss)?;
            let named = grads_by_name(&tape, &mut grads, &bindings);
            clf.params_mut().adam_step(&named, cfg.lr)?;
            Ok(loss_value)
        })()
        .map_err(|e| divergence_guard(e, epoch))?;
        log.push(EpochLoss {
            phase: phase.clone(),
            epoch,
            gcn: vec![(view.id, step)],
            vcdn: None,
            total: step,
        });
    }
    Ok((clf, log))
}

struct JointParts {
    gcn: Vec<f64>,
    vcdn: f64,
    total: f64,
}

/// Record the full multi-view loss on a tape: per-view cross-entropies plus
/// the fusion cross-entropy over the outer-product tensor. Returns the loss
/// node, per-part values, and the bindings of whichever networks were
/// entered as trainable.
#[allow(clippy::too_many_arguments)]
fn build_joint_loss(
    tape: &mut Tape,
    views: &[&OmicsView],
    graphs: &[SimilarityGraph],
    classifiers: &[GcnClassifier],
    head: &VcdnHead,
    fit_rows: &[usize],
    targets: &[usize],
    training: bool,
    rng: &mut SeededRng,
    gcns_trainable: bool,
    vcdn_trainable: bool,
) -> Result<(NodeId, JointParts, Vec<ParamBindings>, ParamBindings)> {
    let mut gcn_bindings = Vec::with_capacity(views.len());
    let mut gcn_losses = Vec::with_capacity(views.len());
    let mut prob_nodes = Vec::with_capacity(views.len());

    for ((view, graph), clf) in views.iter().zip(graphs).zip(classifiers) {
        let x = tape.leaf(view.features.clone());
        let a = tape.leaf(graph.normalized.clone());
        let (h, mut bindings) = clf.build_hidden(tape, x, a, training, rng, gcns_trainable)?;
        let (p, head_bindings) = clf.build_probs(tape, h, gcns_trainable)?;
        bindings.extend(head_bindings);
        let ce = tape.cross_entropy(p, fit_rows, targets)?;
        gcn_bindings.push(bindings);
        gcn_losses.push(ce);
        prob_nodes.push(p);
    }

    let mut tensor = tape.row_kron(prob_nodes[0], prob_nodes[1])?;
    if let Some(&third) = prob_nodes.get(2) {
        tensor = tape.row_kron(tensor, third)?;
    }
    let (fusion_probs, vcdn_bindings) = head.build_forward(tape, tensor, vcdn_trainable)?;
    let vcdn_loss = tape.cross_entropy(fusion_probs, fit_rows, targets)?;

    let mut total = gcn_losses[0];
    for &l in &gcn_losses[1..] {
        total = tape.add(total, l)?;
    }
    total = tape.add(total, vcdn_loss)?;

    let parts = JointParts {
        gcn: gcn_losses
            .iter()
            .map(|&l| tape.value(l).get(0, 0))
            .collect(),
        vcdn: tape.value(vcdn_loss).get(0, 0),
        total: tape.value(total).get(0, 0),
    };
    Ok((total, parts, gcn_bindings, vcdn_bindings))
}

/// One optimizer step on every GCN against the full loss, fusion frozen.
#[allow(clippy::too_many_arguments)]
fn joint_gcn_step(
    views: &[&OmicsView],
    graphs: &[SimilarityGraph],
    classifiers: &mut [GcnClassifier],
    head: &VcdnHead,
    fit_rows: &[usize],
    targets: &[usize],
    lr: f64,
    rng: &mut SeededRng,
) -> Result<JointParts> {
    let mut tape = Tape::new();
    let (total, parts, gcn_bindings, _) = build_joint_loss(
        &mut tape,
        views,
        graphs,
        classifiers,
        head,
        fit_rows,
        targets,
        true,
        rng,
        true,
        false,
    )?;
    let mut grads = tape.backward(total)?;
    for (clf, bindings) in classifiers.iter_mut().zip(&gcn_bindings) {
        let named = grads_by_name(&tape, &mut grads, bindings);
        clf.params_mut().adam_step(&named, lr)?;
    }
    Ok(parts)
}

/// One optimizer step on the fusion head against the full loss, GCNs
/// frozen.
#[allow(clippy::too_many_arguments)]
fn joint_vcdn_step(
    views: &[&OmicsView],
    graphs: &[SimilarityGraph],
    classifiers: &[GcnClassifier],
    head: &mut VcdnHead,
    fit_rows: &[usize],
    targets: &[usize],
    lr: f64,
    rng: &mut SeededRng,
) -> Result<JointParts> {
    let mut tape = Tape::new();
    let (total, parts, _, vcdn_bindings) = build_joint_loss(
        &mut tape,
        views,
        graphs,
        classifiers,
        head,
        fit_rows,
        targets,
        true,
        rng,
        false,
        true,
    )?;
    let mut grads = tape.backward(total)?;
    let named = grads_by_name(&tape, &mut grads, &vcdn_bindings);
    head.params_mut().adam_step(&named, lr)?;
    Ok(parts)
}

/// Alternating joint optimization: per epoch, one step on the GCNs with the
/// fusion head frozen, then one step on the fusion head with the GCNs
/// frozen. The classifiers should already be pretrained.
#[allow(clippy::too_many_arguments)]
pub fn train_joint(
    views: &[&OmicsView],
    graphs: &[SimilarityGraph],
    mut classifiers: Vec<GcnClassifier>,
    labels: &[usize],
    fit_rows: &[usize],
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<(Vec<GcnClassifier>, VcdnHead, Vec<EpochLoss>)> {
    let targets = fit_labels(labels, fit_rows);
    let mut head = init_vcdn(views.len(), 2, rng)?;
    let mut log = Vec::with_capacity(cfg.joint_epochs);

    for epoch in 0..cfg.joint_epochs {
        let parts = joint_gcn_step(
            views,
            graphs,
            &mut classifiers,
            &head,
            fit_rows,
            &targets,
            cfg.lr,
            rng,
        )
        .map_err(|e| divergence_guard(e, epoch))?;
        joint_vcdn_step(
            views,
            graphs,
            &classifiers,
            &mut head,
            fit_rows,
            &targets,
            cfg.lr,
            rng,
        )
        .map_err(|e| divergence_guard(e, epoch))?;

        log.push(EpochLoss {
            phase: "joint".to_string(),
            epoch,
            gcn: views
                .iter()
                .map(|v| v.id)
                .zip(parts.gcn.iter().copied())
                .collect(),
            vcdn: Some(parts.vcdn),
            total: parts.total,
        });
    }
    Ok((classifiers, head, log))
}

/// Deterministic inference for a trained configuration: per-view
/// distributions and the final distribution for every graph row.
pub fn infer_all_rows(
    views: &[&OmicsView],
    graphs: &[SimilarityGraph],
    classifiers: &[GcnClassifier],
    head: Option<&VcdnHead>,
) -> Result<(Matrix, Vec<Matrix>)> {
    let mut per_view = Vec::with_capacity(views.len());
    for ((view, graph), clf) in views.iter().zip(graphs).zip(classifiers) {
        per_view.push(clf.predict_probs(&view.features, &graph.normalized)?);
    }
    let final_dists = match head {
        Some(head) => {
            let tensor = crate::model::vcdn_tensor(&per_view)?;
            head.forward(&tensor)?
        }
        None => per_view[0].clone(),
    };
    Ok((final_dists, per_view))
}

/// Build each subset view's transductive graph: epsilon from the fit-row
/// block, adjacency over every row.
pub fn build_graphs(
    views: &[&OmicsView],
    fit_rows: &[usize],
    k_target: f64,
) -> Result<Vec<SimilarityGraph>> {
    views
        .iter()
        .map(|view| {
            let fit_block = view.features.select_rows(fit_rows);
            let sims = similarity_matrix(&fit_block)?;
            let epsilon = epsilon_from_k(&sims, k_target)?;
            SimilarityGraph::from_features_with_epsilon(&view.features, epsilon, k_target)
        })
        .collect()
}

/// Run T fully independent trials of the configured view subset. Trial t
/// derives its seed from (cfg.seed, t), rebuilds the graphs, re-initializes
/// every network, retrains (pretraining always; joint phase when the subset
/// has ≥ 2 views), and records distributions for `eval_rows`.
pub fn run_trials(
    views: &[OmicsView],
    labels: &[usize],
    fit_rows: &[usize],
    eval_rows: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<TrialRun>> {
    cfg.validate()?;
    let subset: Vec<&OmicsView> = cfg.view_subset.iter().map(|&v| &views[v]).collect();

    let runs: Vec<Result<TrialRun>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            run_single_trial(&subset, labels, fit_rows, eval_rows, cfg, t).map_err(|e| {
                Error::Trial {
                    trial: t,
                    source: Box::new(e),
                }
            })
        })
        .collect();

    runs.into_iter().collect()
}

fn run_single_trial(
    subset: &[&OmicsView],
    labels: &[usize],
    fit_rows: &[usize],
    eval_rows: &[usize],
    cfg: &TrainConfig,
    trial: usize,
) -> Result<TrialRun> {
    let mut rng = seeded_rng(derive_seed(cfg.seed, trial as u64));
    let graphs = build_graphs(subset, fit_rows, cfg.k_target)?;

    let mut classifiers = Vec::with_capacity(subset.len());
    let mut losses = Vec::new();
    for (view, graph) in subset.iter().zip(&graphs) {
        let (clf, log) = pretrain_view(view, graph, labels, fit_rows, cfg, &mut rng)?;
        classifiers.push(clf);
        losses.extend(log);
    }

    let fusion = if subset.len() >= 2 {
        let (trained, head, log) = train_joint(
            subset,
            &graphs,
            classifiers,
            labels,
            fit_rows,
            cfg,
            &mut rng,
        )?;
        classifiers = trained;
        losses.extend(log);
        Some(head)
    } else {
        None
    };

    let (final_all, view_all) = infer_all_rows(subset, &graphs, &classifiers, fusion.as_ref())?;
    let output = TrialOutput {
        trial,
        rows: eval_rows.to_vec(),
        final_dists: final_all.select_rows(eval_rows),
        view_dists: subset
            .iter()
            .map(|v| v.id)
            .zip(view_all.iter().map(|m| m.select_rows(eval_rows)))
            .collect(),
    };
    Ok(TrialRun {
        output,
        models: TrainedModels {
            views: subset.iter().map(|v| v.id).zip(classifiers).collect(),
            fusion,
        },
        losses,
    })
}

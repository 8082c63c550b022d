//! Collapse T trial outputs into per-sample voted labels and a standard
//! deviation that serves as the prediction's uncertainty score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::TrialOutput;

/// Ensemble view of one sample across T trials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub sample_id: usize,
    /// Positive-class (disease) probability per trial.
    pub ad_probs: Vec<f64>,
    /// Mean of `ad_probs`.
    pub mean_prob: f64,
    /// Sample standard deviation of `ad_probs` (T−1 denominator; 0 when
    /// T = 1).
    pub sigma: f64,
    pub voted_label: usize,
    pub vote_counts: [usize; 2],
}

/// Aggregate trial distributions per sample. Per-trial hard labels come
/// from argmax (a 0.5/0.5 tie counts as positive); an even vote split
/// resolves by the mean probability (p̄ ≥ 0.5 → positive).
pub fn summarize_trials(trials: &[TrialOutput]) -> Result<Vec<EnsembleSummary>> {
    let first = trials
        .first()
        .ok_or_else(|| Error::Config("summarize_trials needs at least one trial".to_string()))?;
    for t in trials {
        if t.rows != first.rows {
            return Err(Error::Alignment(format!(
                "trial {} covers different samples than trial {}",
                t.trial, first.trial
            )));
        }
    }
    let t_count = trials.len();
    let mut out = Vec::with_capacity(first.rows.len());
    for (i, &sample_id) in first.rows.iter().enumerate() {
        let ad_probs: Vec<f64> = trials.iter().map(|t| t.final_dists.get(i, 1)).collect();
        // Identical trials must yield exactly zero spread; the rounding in
        // a computed mean would otherwise leak in as a phantom σ.
        let all_identical = ad_probs.iter().all(|&p| p == ad_probs[0]);
        let mean_prob = if all_identical {
            ad_probs[0]
        } else {
            ad_probs.iter().sum::<f64>() / t_count as f64
        };
        let sigma = if t_count == 1 || all_identical {
            0.0
        } else {
            let ss: f64 = ad_probs
                .iter()
                .map(|p| (p - mean_prob) * (p - mean_prob))
                .sum();
            (ss / (t_count - 1) as f64).sqrt()
        };
        let mut vote_counts = [0usize; 2];
        for &p in &ad_probs {
            // argmax over [1-p, p]; exact tie goes to the positive class.
            let label = usize::from(p >= 0.5);
            vote_counts[label] += 1;
        }
        let voted_label = match vote_counts[1].cmp(&vote_counts[0]) {
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Less => 0,
            std::cmp::Ordering::Equal => usize::from(mean_prob >= 0.5),
        };
        out.push(EnsembleSummary {
            sample_id,
            ad_probs,
            mean_prob,
            sigma,
            voted_label,
            vote_counts,
        });
    }
    Ok(out)
}

/// Summaries restricted to the given sample ids, original order preserved.
pub fn filter_summaries(summaries: &[EnsembleSummary], rows: &[usize]) -> Vec<EnsembleSummary> {
    let wanted: std::collections::BTreeSet<usize> = rows.iter().copied().collect();
    summaries
        .iter()
        .filter(|s| wanted.contains(&s.sample_id))
        .cloned()
        .collect()
}

/// Arithmetic mean of the per-sample uncertainties.
pub fn average_uncertainty(summaries: &[EnsembleSummary]) -> Result<f64> {
    if summaries.is_empty() {
        return Err(Error::Config(
            "average_uncertainty over an empty summary list".to_string(),
        ));
    }
    Ok(summaries.iter().map(|s| s.sigma).sum::<f64>() / summaries.len() as f64)
}

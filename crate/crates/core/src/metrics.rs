//! Binary classification metrics: accuracy, F1 (positive class = 1), and
//! rank-based AUC.

use crate::error::{Error, Result};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub f1: f64,
    pub auc: f64,
    pub n: usize,
}

fn check_lengths(pred: usize, truth: usize) -> Result<()> {
    if pred != truth || pred == 0 {
        return Err(Error::Alignment(format!(
            "metrics need equal non-empty label vectors, got {pred} and {truth}"
        )));
    }
    Ok(())
}

/// Fraction of exact matches.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// 2TP / (2TP + FP + FN) with positive class 1; 0 when the denominator
/// vanishes (no true or predicted positives).
pub fn f1(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fne += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fne;
    if denom == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / denom as f64)
}

/// Probability that a random positive outscores a random negative, ties
/// counted half. Computed by direct pair counting over all
/// positive×negative pairs.
pub fn auc(scores: &[f64], truth: &[usize]) -> Result<f64> {
    check_lengths(scores.len(), truth.len())?;
    let positives: Vec<f64> = scores
        .iter()
        .zip(truth)
        .filter(|(_, &t)| t == 1)
        .map(|(&s, _)| s)
        .collect();
    let negatives: Vec<f64> = scores
        .iter()
        .zip(truth)
        .filter(|(_, &t)| t == 0)
        .map(|(&s, _)| s)
        .collect();
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::UndefinedMetric(
            "auc needs at least one positive and one negative sample".to_string(),
        ));
    }
    let mut credit = 0.0;
    for &p in &positives {
        for &n in &negatives {
            if p > n {
                credit += 1.0;
            } else if p == n {
                credit += 0.5;
            }
        }
    }
    Ok(credit / (positives.len() * negatives.len()) as f64)
}

pub fn report(pred: &[usize], scores: &[f64], truth: &[usize]) -> Result<MetricsReport> {
    Ok(MetricsReport {
        acc: accuracy(pred, truth)?,
        f1: f1(pred, truth)?,
        auc: auc(scores, truth)?,
        n: truth.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_basics() {
        assert_eq!(accuracy(&[0, 1, 1], &[0, 1, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0], &[0, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 1, 1]).unwrap(), 0.75);
    }

    #[test]
    fn accuracy_rejects_bad_input() {
        assert!(accuracy(&[0], &[0, 1]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn f1_basics() {
        assert_eq!(f1(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        // TP=1, FP=1, FN=1.
        assert_eq!(f1(&[1, 1, 0], &[1, 0, 1]).unwrap(), 0.5);
        // No positives anywhere.
        assert_eq!(f1(&[0, 0], &[0, 0]).unwrap(), 0.0);
    }

    #[test]
    fn auc_basics() {
        assert_eq!(auc(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.2, 0.9, 0.8], &[1, 1, 0, 0]).unwrap(), 0.0);
        // One tie (credit 0.5) and one win over 2 pairs.
        assert_eq!(auc(&[0.5, 0.5, 0.1], &[1, 0, 0]).unwrap(), 0.75);
    }

    #[test]
    fn auc_single_class_is_an_error() {
        assert!(matches!(
            auc(&[0.5, 0.6], &[1, 1]),
            Err(Error::UndefinedMetric(_))
        ));
    }
}
